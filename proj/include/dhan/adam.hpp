#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dhan/param_store.hpp"

namespace dhan {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled: θ ← θ·(1 − lr·wd) before the moment step
};

struct AdamState {
  AdamOptions options;
  std::int64_t step = 0;
  std::map<std::string, std::vector<double>> first_moment;
  std::map<std::string, std::vector<double>> second_moment;
};

/// One AdamW update of every trainable parameter in `store`.
/// Throws std::invalid_argument if a trainable parameter has no entry in
/// `grads` or an entry of the wrong length; the store is untouched then.
void adam_step(ParamStore& store, const GradMap& grads, AdamState& state);

}  // namespace dhan
