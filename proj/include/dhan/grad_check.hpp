#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dhan/param_store.hpp"

namespace dhan {

struct GradCheckOptions {
  double eps = 1e-5;
  // Tensors larger than this are checked on a seeded random sample.
  std::size_t max_coords_per_tensor = 200;
  // Denominator floor of the relative error, so coordinates whose true
  // gradient is ~0 are judged by absolute error instead.
  double abs_floor = 1e-6;
  std::uint64_t seed = 0;
  // Restricts the check to these parameters when non-empty.
  std::vector<std::string> only;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;
};

/// Compares reverse-mode gradients of `loss` with central differences
/// (f(θ+ε) − f(θ−ε)) / 2ε. `loss` must be deterministic and return a scalar;
/// it is evaluated once under a tape and then repeatedly without one.
GradCheckReport grad_check(const std::function<Tensor()>& loss, ParamStore& store,
                           const GradCheckOptions& options = {});

}  // namespace dhan
