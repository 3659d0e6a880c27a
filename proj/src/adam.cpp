#include "dhan/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace dhan {

void adam_step(ParamStore& store, const GradMap& grads, AdamState& state) {
  for (const std::string& name : store.names()) {
    const Tensor& p = store.get(name);
    if (!p.requires_grad()) continue;
    auto it = grads.find(name);
    if (it == grads.end()) throw std::invalid_argument("adam_step: missing gradient for " + name);
    if (it->second.size() != p.numel()) throw std::invalid_argument("adam_step: gradient size mismatch for " + name);
  }

  const AdamOptions& o = state.options;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(o.beta1, t);
  const double bc2 = 1.0 - std::pow(o.beta2, t);
  const double decay = 1.0 - o.lr * o.weight_decay;

  for (const std::string& name : store.names()) {
    Tensor& p = store.get(name);
    if (!p.requires_grad()) continue;
    const std::vector<double>& g = grads.at(name);
    auto& m = state.first_moment[name];
    auto& v = state.second_moment[name];
    if (m.empty()) {
      m.assign(p.numel(), 0.0);
      v.assign(p.numel(), 0.0);
    }
    double* w = p.ptr();
    for (std::size_t i = 0; i < p.numel(); ++i) {
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] = w[i] * decay - o.lr * mhat / (std::sqrt(vhat) + o.eps);
    }
  }
}

}  // namespace dhan
