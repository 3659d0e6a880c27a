#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dhan/config.hpp"
#include "dhan/data_pipeline.hpp"
#include "dhan/eval.hpp"
#include "dhan/trainer.hpp"

namespace dhan {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitData = 3, kExitRuntime = 4 };

// Builds the run configuration: file (if any), then DHAN_SEED, then
// key=value overrides in order.
RunConfig resolve_config(const std::string& config_path, const std::vector<std::string>& overrides);

void cmd_gen_synthetic(const SyntheticConfig& config, const std::string& out_dir, std::ostream& out);

TrainResult cmd_train(const RunConfig& config, std::ostream& out);

struct EvaluateRequest {
  std::string checkpoint;
  std::vector<std::string> overrides;  // applied on top of the stored config
  std::string split = "test";           // test | train
};
MetricsTable cmd_evaluate(const EvaluateRequest& request, std::ostream& out);

struct AblationVariant {
  TimeMode time_mode = TimeMode::kBoth;
  LayerSet layers;
  bool dns = true;

  std::string name() const;
};
// "time_mode:layers:dns|uniform", e.g. "none:S+E+N:dns".
AblationVariant parse_variant(const std::string& text);
// Named grids: time, layers, dns.
std::vector<AblationVariant> preset_grid(const std::string& name);

struct AblationRow {
  AblationVariant variant;
  std::size_t best_epoch = 0;
  MetricsTable best;
  MetricsTable final;
};
std::vector<AblationRow> cmd_ablate(const RunConfig& base, const std::vector<AblationVariant>& grid, std::ostream& out);

struct ExportRequest {
  std::string checkpoint;
  std::string selector = "0";  // instance index or random:<seed>
  std::string out_dir = "attention";
  std::string split = "test";
  std::vector<std::string> overrides;
};
std::vector<std::string> cmd_export_attention(const ExportRequest& request, std::ostream& out);

// Index chosen by an instance selector among `count` instances; bad
// selectors throw ConfigError naming the valid range.
std::size_t select_instance(const std::string& selector, std::size_t count);

// Parses argv, dispatches, and maps failures to exit codes with a one-line
// message on stderr.
int run_cli(int argc, char** argv);

}  // namespace dhan
