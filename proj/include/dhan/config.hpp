#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dhan/data_pipeline.hpp"
#include "dhan/model.hpp"

namespace dhan {

/// Flat key = value run configuration. Defaults are the reference
/// hyperparameters.
struct RunConfig {
  std::size_t d = 64;
  std::size_t d_prime = 256;
  std::size_t L = 10;
  std::size_t K = 20;
  double lr = 1e-3;
  std::size_t batch_size = 256;
  double weight_decay = 1e-4;
  double dropout = 0.2;
  std::size_t epochs = 30;
  std::uint64_t seed = 1;
  TimeMode time_mode = TimeMode::kBoth;
  LayerSet layers;
  std::size_t heads = 1;
  bool dns_enabled = true;
  std::size_t dns_pool_size = 128;
  std::size_t dns_k = 4;

  std::string interactions_path;
  std::string news_path;
  std::string data_format = "tsv";  // tsv | adressa
  std::size_t min_interactions = 15;

  std::size_t eval_negatives = 99;
  std::uint64_t eval_seed = 2024;
  bool eval_train = false;  // also report training-set metrics each epoch
  std::string best_by = "ndcg@10";

  int min_year = 1970;
  int max_year = 2037;
  std::size_t micro_batch = 32;  // instances per forward/backward inside a batch
  std::string out_dir = "runs/dhan";

  bool operator==(const RunConfig&) const = default;
};

// Keys accepted by set(), in serialization order.
const std::vector<std::string>& config_keys();

// Sets one key from its text value; unknown keys and bad values throw ConfigError.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
// "key=value" form used by command-line overrides.
void apply_override(RunConfig& config, const std::string& assignment);

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
// Canonical text; parse_config(to_text(c)) == c.
std::string to_text(const RunConfig& config);

// Cross-field checks (heads divide d, known metric, ...).
void validate(const RunConfig& config);

ModelConfig model_config(const RunConfig& config, const Dataset& dataset);

// Reads the configured interaction and news files and builds the dataset.
Dataset load_dataset(const RunConfig& config);

}  // namespace dhan
