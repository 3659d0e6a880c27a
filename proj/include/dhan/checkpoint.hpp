#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dhan/config.hpp"
#include "dhan/eval.hpp"
#include "dhan/param_store.hpp"

namespace dhan {

struct EpochRecord {
  std::size_t epoch = 0;         // 0 = before training
  double loss = 0.0;             // mean BCE per candidate term
  MetricsTable test;
  MetricsTable train;            // only filled with eval.train
  double dns_score_mean = 0.0;   // mean f of the DNS picks
  double uniform_score_mean = 0.0;  // mean f of uniform picks from the same pools
  std::size_t dns_draws = 0;

  bool operator==(const EpochRecord&) const = default;
};

struct Checkpoint {
  RunConfig config;
  std::size_t epoch = 0;
  std::vector<EpochRecord> history;
  ParamStore params;
};

// Deep copy of every tensor.
ParamStore snapshot(const ParamStore& store);

// Little-endian container: "DHANCKPT", u32 version, config text, epoch,
// history, then named tensors (flag, rank, dims, f64 values).
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::string& bytes);

// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dhan
