#pragma once

#include <vector>

#include "dhan/tensor.hpp"

namespace dhan {

inline constexpr double kMaskedLogit = -1e9;

struct SentenceBlockInput {
  Tensor u;            // [d]
  Tensor sent_matrix;  // [K, d], padding rows zero
  Tensor cand_vec;     // [d]
  std::vector<bool> pad_mask;  // K entries, true = padding
};

struct SentenceWeights {
  Tensor beta;  // [(K+2), (K+2)], row-stochastic
};

struct SentenceAttention {
  Tensor attended;  // [(K+2), d]
  SentenceWeights weights;
};

// S = [u; sentences; candidate], softmax((S·W1)(W2·Sᵀ)/√d) · (S·W3).
// Padding sentence columns get a -1e9 logit.
SentenceAttention sentence_attend(const SentenceBlockInput& in, const Tensor& w1, const Tensor& w2,
                                  const Tensor& w3);

// Mean over the unmasked rows of `attended`; the u and candidate rows always count.
Tensor pool_news_content(const Tensor& attended, const std::vector<bool>& pad_mask);

// Additive logit mask, one row per query: [(K+2), (K+2)].
Tensor sentence_logit_mask(const std::vector<bool>& pad_mask);
// Row weights of pool_news_content as a [1, K+2] tensor.
Tensor sentence_pool_weights(const std::vector<bool>& pad_mask);

}  // namespace dhan
