#pragma once

#include <array>
#include <span>

#include "dhan/rng.hpp"
#include "dhan/tensor.hpp"
#include "dhan/time_sequence.hpp"

namespace dhan {

struct PredictionHead {
  Tensor w1;  // [5d, 2d]
  Tensor b1;  // [2d]
  Tensor w2;  // [2d, 1]
  Tensor b2;  // [1]
};

struct SequenceRep {
  Tensor p;                          // [d] or [B, d]
  std::array<Tensor, 2> attention;  // per block, head-averaged
};

// Two transformer blocks with independent parameters, then the mean over L.
// E is [L, d] or [B, L, d].
SequenceRep summarize_history(const Tensor& e, const std::array<TransformerBlockParams, 2>& blocks,
                              double dropout_rate = 0.0, Rng* rng = nullptr, double ln_eps = 1e-6);

// relu([p x* u]·W1 + b1)·W2 + b2 as a raw logit. Single vectors give shape
// [1]; stacked rows ([B, d], [B, 3d], [B, d]) give [B].
Tensor predict_click(const Tensor& p, const Tensor& x_cand, const Tensor& u, const PredictionHead& head);

// Σ -[y log σ(ŷ) + (1-y) log(1-σ(ŷ))], evaluated in log-sigmoid form.
Tensor bce_loss(const Tensor& logits, std::span<const double> labels);

}  // namespace dhan
