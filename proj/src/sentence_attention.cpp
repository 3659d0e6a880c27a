#include "dhan/sentence_attention.hpp"

#include <cmath>

#include "dhan/errors.hpp"
#include "dhan/ops.hpp"

namespace dhan {

Tensor sentence_logit_mask(const std::vector<bool>& pad_mask) {
  const std::size_t n = pad_mask.size() + 2;
  Tensor m({n, n});
  for (std::size_t k = 0; k < pad_mask.size(); ++k) {
    if (!pad_mask[k]) continue;
    for (std::size_t r = 0; r < n; ++r) m.data()[r * n + k + 1] = kMaskedLogit;
  }
  return m;
}

Tensor sentence_pool_weights(const std::vector<bool>& pad_mask) {
  const std::size_t n = pad_mask.size() + 2;
  std::size_t valid = 2;
  for (bool p : pad_mask) valid += p ? 0 : 1;
  Tensor w({1, n});
  const double share = 1.0 / static_cast<double>(valid);
  w.data()[0] = share;
  w.data()[n - 1] = share;
  for (std::size_t k = 0; k < pad_mask.size(); ++k) w.data()[k + 1] = pad_mask[k] ? 0.0 : share;
  return w;
}

SentenceAttention sentence_attend(const SentenceBlockInput& in, const Tensor& w1, const Tensor& w2,
                                  const Tensor& w3) {
  const std::size_t d = in.u.numel();
  const std::size_t k = in.pad_mask.size();
  if (in.sent_matrix.rank() != 2 || in.sent_matrix.dim(0) != k || in.sent_matrix.dim(1) != d ||
      in.cand_vec.numel() != d) {
    throw ShapeError("sentence_attend: expected u[d], sentences[" + std::to_string(k) + ", d], candidate[d]; got " +
                     shape_str(in.u.shape()) + ", " + shape_str(in.sent_matrix.shape()) + ", " +
                     shape_str(in.cand_vec.shape()));
  }
  for (const Tensor* w : {&w1, &w2, &w3}) {
    if (w->shape() != Shape{d, d}) throw ShapeError("sentence_attend: weights must be [d, d]");
  }

  Tensor s = concat({reshape(in.u, {1, d}), in.sent_matrix, reshape(in.cand_vec, {1, d})}, 0);
  Tensor q = matmul(s, w1);
  Tensor keys_t = matmul(w2, transpose(s));  // W2 · Sᵀ : [d, K+2]
  Tensor raw = scale(matmul(q, keys_t), 1.0 / std::sqrt(static_cast<double>(d)));
  Tensor beta = softmax_rows(add(raw, sentence_logit_mask(in.pad_mask)));
  Tensor attended = matmul(beta, matmul(s, w3));
  return {attended, {beta}};
}

Tensor pool_news_content(const Tensor& attended, const std::vector<bool>& pad_mask) {
  if (attended.rank() != 2 || attended.dim(0) != pad_mask.size() + 2) {
    throw ShapeError("pool_news_content: attended rows must be K+2");
  }
  return reshape(matmul(sentence_pool_weights(pad_mask), attended), {attended.dim(1)});
}

}  // namespace dhan
