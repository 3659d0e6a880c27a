#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dhan/rng.hpp"
#include "dhan/tensor.hpp"

// Differentiable operations. Each op computes its result eagerly and, when a
// tape is active and some input requires a gradient, records its backward
// closure on that tape. Every op rejects non-finite results.
namespace dhan {

using IndexList = std::vector<std::size_t>;

// a[..., k] · b[k, n] -> [..., n]. Leading axes of `a` are treated as rows.
Tensor matmul(const Tensor& a, const Tensor& b);

// Batched product: a[B, m, k] · b[B, k, n] -> [B, m, n].
// With transpose_b, b is [B, n, k] and the product is a · bᵀ per batch.
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

Tensor transpose(const Tensor& a);  // 2-D only

Tensor add(const Tensor& a, const Tensor& b);  // identical shapes
// `b`'s shape must be a suffix of `a`'s; b is repeated over the leading axes.
Tensor add_broadcast(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor sum(const Tensor& a);  // -> shape (1,)

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, std::size_t start, std::size_t length);
Tensor reshape(const Tensor& a, Shape shape);

// Selects entries along axis 0: out[i] = a[index[i]].
Tensor gather_rows(const Tensor& a, const IndexList& index);

/// Weighted bags of table rows; bag b covers ids[offsets[b] .. offsets[b+1]).
struct Bags {
  IndexList offsets{0};
  IndexList ids;
  std::vector<double> weights;

  std::size_t size() const { return offsets.size() - 1; }
  // Mean of the listed rows; an empty list yields a zero row.
  void add_mean(std::span<const std::int32_t> words);
  void add_weighted(std::span<const std::int32_t> words, double weight);
  void close_bag() { offsets.push_back(ids.size()); }
  void add_empty() { close_bag(); }
};

// table[V, d] -> [bags.size(), d], out[b] = Σ weight · table[id].
Tensor embedding_bag(const Tensor& table, const Bags& bags);

Tensor mean(const Tensor& a, int axis);  // removes `axis`

Tensor softmax_last(const Tensor& a);
Tensor softmax_rows(const Tensor& m);  // 2-D form of softmax_last

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

// Inverted dropout. Returns `a` unchanged when rate == 0.
Tensor dropout(const Tensor& a, double rate, Rng& rng);

// Σ softplus(x) - y·x, i.e. the summed binary cross-entropy of sigmoid(x)
// against labels in {0, 1}, evaluated in log-sigmoid form.
Tensor bce_with_logits(const Tensor& logits, std::span<const double> labels);

}  // namespace dhan
