#include "dhan/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dhan/rng.hpp"

namespace dhan {

GradCheckReport grad_check(const std::function<Tensor()>& loss, ParamStore& store,
                           const GradCheckOptions& options) {
  store.zero_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor value = loss();
    tape.backward(value);
  }

  GradCheckReport report;
  Rng rng(options.seed);
  for (const std::string& name : store.names()) {
    Tensor& p = store.get(name);
    if (!p.requires_grad()) continue;
    if (!options.only.empty() && std::find(options.only.begin(), options.only.end(), name) == options.only.end()) {
      continue;
    }
    const std::vector<double> analytic(p.grad().begin(), p.grad().end());

    std::vector<std::size_t> coords(p.numel());
    std::iota(coords.begin(), coords.end(), 0);
    if (coords.size() > options.max_coords_per_tensor) {
      // Partial Fisher-Yates: first max_coords entries form the sample.
      for (std::size_t i = 0; i < options.max_coords_per_tensor; ++i) {
        std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
      }
      coords.resize(options.max_coords_per_tensor);
    }

    for (std::size_t idx : coords) {
      double& w = p.data()[idx];
      const double saved = w;
      w = saved + options.eps;
      const double up = loss().item();
      w = saved - options.eps;
      const double down = loss().item();
      w = saved;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double a = analytic[idx];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.coords_checked;
      if (report.worst_param.empty() || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = name;
        report.worst_index = idx;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  store.zero_grad();
  return report;
}

}  // namespace dhan
