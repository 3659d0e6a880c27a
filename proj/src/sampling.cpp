#include "dhan/sampling.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>

#include "dhan/errors.hpp"
#include "dhan/ops.hpp"
#include "dhan/rng.hpp"

namespace dhan {

Tensor dns_score(const Tensor& y, const Tensor& x, const DnsParams& params) {
  if (x.rank() != 2 || y.numel() != x.dim(0)) {
    throw ShapeError("dns_score: expected y[d] and X[d, N], got " + shape_str(y.shape()) + " and " +
                     shape_str(x.shape()));
  }
  const std::size_t n = x.dim(1);
  if (params.w.shape() != Shape{n, n} || params.b.numel() != n) {
    throw ShapeError("dns_score: W must be [N, N] and b [N] for a pool of " + std::to_string(n));
  }
  Tensor sims = matmul(transpose(x), reshape(y, {y.numel(), 1}));  // Xᵀ·y : [N, 1]
  return add(reshape(matmul(params.w, sims), {n}), reshape(params.b, {n}));
}

std::vector<std::size_t> dns_select(const Tensor& scores, std::size_t k, const std::vector<std::size_t>& excluded) {
  const std::size_t n = scores.numel();
  std::vector<bool> out_of_play(n, false);
  for (std::size_t e : excluded) {
    if (e < n) out_of_play[e] = true;
  }
  std::vector<std::size_t> open;
  for (std::size_t i = 0; i < n; ++i) {
    if (!out_of_play[i]) open.push_back(i);
  }
  if (k > open.size()) {
    throw std::invalid_argument("dns_select: k = " + std::to_string(k) + " exceeds the " +
                                std::to_string(open.size()) + " selectable pool entries");
  }
  const auto s = scores.data();
  std::partial_sort(open.begin(), open.begin() + static_cast<std::ptrdiff_t>(k), open.end(),
                    [&](std::size_t a, std::size_t b) { return s[a] > s[b] || (s[a] == s[b] && a < b); });
  open.resize(k);
  return open;
}

std::vector<std::size_t> uniform_sample(std::size_t corpus_size, const std::vector<std::size_t>& excluded,
                                        std::size_t k, std::uint64_t seed) {
  std::unordered_set<std::size_t> banned;
  for (std::size_t e : excluded) {
    if (e < corpus_size) banned.insert(e);
  }
  const std::size_t allowed = corpus_size - banned.size();
  if (k > allowed) {
    throw std::invalid_argument("uniform_sample: cannot draw " + std::to_string(k) + " items from the " +
                                std::to_string(allowed) + " that are not excluded");
  }
  Rng rng(seed);
  std::vector<std::size_t> out;
  out.reserve(k);
  if (k * 4 <= allowed) {
    std::unordered_set<std::size_t> taken;
    while (out.size() < k) {
      const std::size_t c = rng.below(corpus_size);
      if (banned.count(c) || !taken.insert(c).second) continue;
      out.push_back(c);
    }
    return out;
  }
  std::vector<std::size_t> pool;
  pool.reserve(allowed);
  for (std::size_t i = 0; i < corpus_size; ++i) {
    if (!banned.count(i)) pool.push_back(i);
  }
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    out.push_back(pool[i]);
  }
  return out;
}

}  // namespace dhan
