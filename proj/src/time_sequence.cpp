#include "dhan/time_sequence.hpp"

#include <cmath>
#include <vector>

#include "dhan/errors.hpp"
#include "dhan/ops.hpp"

namespace dhan {

TimeMode parse_time_mode(std::string_view name) {
  if (name == "none") return TimeMode::kNone;
  if (name == "relative") return TimeMode::kRelative;
  if (name == "absolute") return TimeMode::kAbsolute;
  if (name == "both") return TimeMode::kBoth;
  throw ConfigError("time_mode must be one of none, relative, absolute, both; got '" + std::string(name) + "'");
}

std::string time_mode_name(TimeMode mode) {
  switch (mode) {
    case TimeMode::kNone:
      return "none";
    case TimeMode::kRelative:
      return "relative";
    case TimeMode::kAbsolute:
      return "absolute";
    case TimeMode::kBoth:
      return "both";
  }
  return "none";
}

std::size_t z_dim(TimeMode mode, std::size_t d) {
  switch (mode) {
    case TimeMode::kNone:
      return 3 * d;
    case TimeMode::kRelative:
      return 7 * d;
    case TimeMode::kAbsolute:
      return 4 * d;
    case TimeMode::kBoth:
      return 5 * d;
  }
  return 3 * d;
}

std::size_t z_cand_dim(TimeMode mode, std::size_t d) { return uses_absolute(mode) ? 4 * d : 3 * d; }

namespace {

Tensor repeat_row(const Tensor& v, std::size_t times) {
  return gather_rows(reshape(v, {1, v.numel()}), IndexList(times, 0));
}

}  // namespace

FusedSequence fuse_time(const Tensor& x_prime_seq, const Tensor& abs_emb, const Tensor& rel_emb,
                        const Tensor& x_cand, TimeMode mode) {
  if (x_prime_seq.rank() != 2 || x_prime_seq.dim(1) % 3 != 0 || x_cand.numel() != x_prime_seq.dim(1)) {
    throw ShapeError("fuse_time: expected x'[L, 3d] and x*[3d], got " + shape_str(x_prime_seq.shape()) + " and " +
                     shape_str(x_cand.shape()));
  }
  const std::size_t l = x_prime_seq.dim(0);
  const std::size_t d = x_prime_seq.dim(1) / 3;
  if (uses_absolute(mode) && (!abs_emb.defined() || abs_emb.shape() != Shape{l + 1, d})) {
    throw ShapeError("fuse_time: absolute embedding must be [L+1, d]");
  }
  if (uses_relative(mode) && (!rel_emb.defined() || rel_emb.shape() != Shape{l, d})) {
    throw ShapeError("fuse_time: relative embedding must be [L, d]");
  }
  Tensor cand = reshape(x_cand, {3 * d});
  FusedSequence f;
  f.mode = mode;
  switch (mode) {
    case TimeMode::kNone:
      f.z_seq = x_prime_seq;
      f.z_cand = cand;
      break;
    case TimeMode::kRelative:
      f.z_seq = concat({x_prime_seq, rel_emb, repeat_row(cand, l)}, 1);
      f.z_cand = cand;
      break;
    case TimeMode::kAbsolute:
      f.z_seq = concat({x_prime_seq, slice(abs_emb, 0, 0, l)}, 1);
      f.z_cand = concat({cand, reshape(slice(abs_emb, 0, l, 1), {d})}, 0);
      break;
    case TimeMode::kBoth:
      f.z_seq = concat({x_prime_seq, slice(abs_emb, 0, 0, l), rel_emb}, 1);
      f.z_cand = concat({cand, reshape(slice(abs_emb, 0, l, 1), {d})}, 0);
      break;
  }
  return f;
}

Tensor time_aware_transform(const Tensor& z_i, const Tensor& z_cand, const Tensor& u, const Tensor& w_c) {
  const std::size_t width = z_i.dim(-1) + z_cand.numel() + u.numel();
  if (w_c.rank() != 2 || w_c.dim(0) != width) {
    throw ConfigError("W_c has shape " + shape_str(w_c.shape()) + " but the fused input has width " +
                      std::to_string(width));
  }
  if (z_i.rank() == 1) {
    Tensor row = concat({z_i, reshape(z_cand, {z_cand.numel()}), reshape(u, {u.numel()})}, 0);
    return reshape(matmul(reshape(row, {1, width}), w_c), {w_c.dim(1)});
  }
  if (z_i.rank() != 2) throw ShapeError("time_aware_transform: z must be [z_dim] or [L, z_dim]");
  const std::size_t l = z_i.dim(0);
  return matmul(concat({z_i, repeat_row(z_cand, l), repeat_row(u, l)}, 1), w_c);
}

BlockOutput transformer_block(const Tensor& t_seq, const TransformerBlockParams& params, double dropout_rate,
                              Rng* rng, double ln_eps) {
  const bool single = t_seq.rank() == 2;
  if (!single && t_seq.rank() != 3) {
    throw ShapeError("transformer_block: expected [L, d] or [B, L, d], got " + shape_str(t_seq.shape()));
  }
  const std::size_t d = t_seq.dim(-1);
  const std::size_t l = t_seq.dim(-2);
  const std::size_t h = params.heads;
  if (h == 0 || d % h != 0) throw ConfigError("heads must divide d");
  if (params.wq.shape() != Shape{d, d} || params.wa.rank() != 2 || params.wa.dim(0) != d ||
      params.wb.shape() != Shape{params.wa.dim(1), d}) {
    throw ShapeError("transformer_block: parameter shapes do not match d = " + std::to_string(d));
  }
  const std::size_t dh = d / h;
  Tensor t = single ? reshape(t_seq, {1, l, d}) : t_seq;

  Tensor q = matmul(t, params.wq);
  Tensor k = matmul(t, params.wk);
  Tensor v = matmul(t, params.wv);
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> outs;
  std::vector<Tensor> weights;
  for (std::size_t i = 0; i < h; ++i) {
    Tensor qh = h == 1 ? q : slice(q, 2, i * dh, dh);
    Tensor kh = h == 1 ? k : slice(k, 2, i * dh, dh);
    Tensor vh = h == 1 ? v : slice(v, 2, i * dh, dh);
    Tensor w = softmax_last(scale(bmm(qh, kh, true), inv));
    outs.push_back(bmm(w, vh));
    weights.push_back(w);
  }
  Tensor att = h == 1 ? outs[0] : concat(outs, 2);

  Tensor x = relu(matmul(att, params.wa));
  Tensor y = matmul(x, params.wb);
  if (rng != nullptr && dropout_rate > 0.0) y = dropout(y, dropout_rate, *rng);
  Tensor out = layer_norm(add(y, att), params.ln_gamma, params.ln_beta, ln_eps);

  Tensor avg;
  if (h == 1) {
    avg = weights[0];
  } else {
    NoGradScope no_grad;
    avg = weights[0];
    for (std::size_t i = 1; i < h; ++i) avg = add(avg, weights[i]);
    avg = scale(avg, 1.0 / static_cast<double>(h));
  }
  if (single) return {reshape(out, {l, d}), reshape(avg, {l, l})};
  return {out, avg};
}

}  // namespace dhan
