#include "dhan/ranker.hpp"

#include "dhan/errors.hpp"
#include "dhan/ops.hpp"

namespace dhan {

SequenceRep summarize_history(const Tensor& e, const std::array<TransformerBlockParams, 2>& blocks,
                              double dropout_rate, Rng* rng, double ln_eps) {
  if (!e.defined() || e.rank() < 2 || e.dim(-2) == 0) throw ShapeError("summarize_history: empty history");
  BlockOutput first = transformer_block(e, blocks[0], dropout_rate, rng, ln_eps);
  BlockOutput second = transformer_block(first.out, blocks[1], dropout_rate, rng, ln_eps);
  return {mean(second.out, -2), {first.attention, second.attention}};
}

Tensor predict_click(const Tensor& p, const Tensor& x_cand, const Tensor& u, const PredictionHead& head) {
  const bool single = p.rank() == 1;
  const std::size_t rows = single ? 1 : p.dim(0);
  auto as_rows = [&](const Tensor& t) { return single ? reshape(t, {1, t.numel()}) : t; };
  Tensor in = concat({as_rows(p), as_rows(x_cand), as_rows(u)}, 1);
  if (in.dim(1) != head.w1.dim(0)) {
    throw ShapeError("predict_click: concatenated input has width " + std::to_string(in.dim(1)) + ", W1 expects " +
                     std::to_string(head.w1.dim(0)));
  }
  Tensor hidden = relu(add_broadcast(matmul(in, head.w1), head.b1));
  Tensor out = add_broadcast(matmul(hidden, head.w2), head.b2);
  return reshape(out, {rows});
}

Tensor bce_loss(const Tensor& logits, std::span<const double> labels) { return bce_with_logits(logits, labels); }

}  // namespace dhan
