#include "dhan/element_attention.hpp"

#include <cmath>

#include "dhan/errors.hpp"
#include "dhan/ops.hpp"

namespace dhan {

ElementAttention element_attend(const ElementMatrix& hist, const ElementMatrix& cand, const Tensor& w4,
                                const Tensor& w5, const Tensor& w6, double dropout_rate, Rng* rng) {
  if (hist.rows.rank() != 2 || hist.rows.dim(0) != kNumElements || cand.rows.shape() != hist.rows.shape()) {
    throw ShapeError("element_attend: both element matrices must be [5, d], got " + shape_str(hist.rows.shape()) +
                     " and " + shape_str(cand.rows.shape()));
  }
  const std::size_t d = hist.rows.dim(1);
  for (const Tensor* w : {&w4, &w5, &w6}) {
    if (w->shape() != Shape{2 * d, d}) throw ShapeError("element_attend: weights must be [2d, d]");
  }
  Tensor p = concat({hist.rows, cand.rows}, 1);
  Tensor q = matmul(p, w4);
  Tensor k = matmul(p, w5);
  Tensor v = matmul(p, w6);
  Tensor gamma = softmax_rows(scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(d))));
  Tensor used = (rng != nullptr && dropout_rate > 0.0) ? dropout(gamma, dropout_rate, *rng) : gamma;
  return {matmul(used, v), {gamma}};
}

Tensor pool_elements(const Tensor& attended) {
  if (attended.rank() != 2 || attended.dim(0) != kNumElements) {
    throw ShapeError("pool_elements: expected [5, d], got " + shape_str(attended.shape()));
  }
  return mean(attended, 0);
}

}  // namespace dhan
