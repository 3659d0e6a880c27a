#include "dhan/ops.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <memory>
#include <string>

#include <Eigen/Core>

#include "dhan/errors.hpp"

namespace dhan {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;
using Impl = std::shared_ptr<detail::TensorImpl>;

Tape* tracking(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = active_tape();
  if (tape == nullptr) return nullptr;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return tape;
  }
  return nullptr;
}

void check_finite(const Tensor& t, const char* op) {
  // Exponent bits all set means Inf or NaN; the OR-reduction vectorizes.
  constexpr std::uint64_t kExp = 0x7ff0000000000000ULL;
  std::uint64_t bad = 0;
  for (double v : t.data()) bad |= static_cast<std::uint64_t>((std::bit_cast<std::uint64_t>(v) & kExp) == kExp);
  if (bad) throw NumericError(std::string(op) + ": non-finite value in forward pass");
}

std::size_t normalize_axis(int axis, std::size_t rank, const char* op) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range");
  return static_cast<std::size_t>(a);
}

// (outer, extent, inner) decomposition of a shape around `axis`.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined tensor");
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (b.rank() != 2 || a.rank() < 1 || a.shape().back() != b.dim(0)) {
    throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) + " · " + shape_str(b.shape()));
  }
  const std::size_t k = b.dim(0);
  const std::size_t n = b.dim(1);
  const std::size_t m = a.numel() / k;
  Shape out_shape = a.shape();
  out_shape.back() = n;
  Tensor out(out_shape);
  MutMap(out.ptr(), m, n).noalias() = ConstMap(a.ptr(), m, k) * ConstMap(b.ptr(), k, n);
  check_finite(out, "matmul");
  if (Tape* tape = tracking({&a, &b})) {
    out.set_requires_grad(true);
    tape->record([ai = a.handle(), bi = b.handle(), oi = out.handle(), m, k, n] {
      if (oi->grad.empty()) return;
      ConstMap g(oi->grad.data(), m, n);
      if (ai->requires_grad) {
        MutMap(ai->grad_buffer(), m, k).noalias() += g * ConstMap(bi->data.data(), k, n).transpose();
      }
      if (bi->requires_grad) {
        MutMap(bi->grad_buffer(), k, n).noalias() += ConstMap(ai->data.data(), m, k).transpose() * g;
      }
    });
  }
  return out;
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  require_defined(a, "bmm");
  require_defined(b, "bmm");
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0)) {
    throw ShapeError("bmm: expects [B,m,k] and [B,k,n], got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t batch = a.dim(0);
  const std::size_t m = a.dim(1);
  const std::size_t k = a.dim(2);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  const std::size_t bk = transpose_b ? b.dim(2) : b.dim(1);
  if (bk != k) {
    throw ShapeError("bmm: inner extents differ, " + shape_str(a.shape()) + " · " + shape_str(b.shape()) +
                     (transpose_b ? "ᵀ" : ""));
  }
  Tensor out({batch, m, n});
  const double* ap = a.ptr();
  const double* bp = b.ptr();
  double* op = out.ptr();
  for (std::size_t i = 0; i < batch; ++i) {
    ConstMap A(ap + i * m * k, m, k);
    MutMap O(op + i * m * n, m, n);
    if (transpose_b) {
      O.noalias() = A.lazyProduct(ConstMap(bp + i * n * k, n, k).transpose());
    } else {
      O.noalias() = A.lazyProduct(ConstMap(bp + i * k * n, k, n));
    }
  }
  check_finite(out, "bmm");
  if (Tape* tape = tracking({&a, &b})) {
    out.set_requires_grad(true);
    tape->record([ai = a.handle(), bi = b.handle(), oi = out.handle(), batch, m, k, n, transpose_b] {
      if (oi->grad.empty()) return;
      double* ga = ai->requires_grad ? ai->grad_buffer() : nullptr;
      double* gb = bi->requires_grad ? bi->grad_buffer() : nullptr;
      for (std::size_t i = 0; i < batch; ++i) {
        ConstMap G(oi->grad.data() + i * m * n, m, n);
        ConstMap A(ai->data.data() + i * m * k, m, k);
        if (transpose_b) {
          ConstMap B(bi->data.data() + i * n * k, n, k);
          if (ga) MutMap(ga + i * m * k, m, k).noalias() += G.lazyProduct(B);
          if (gb) MutMap(gb + i * n * k, n, k).noalias() += G.transpose().lazyProduct(A);
        } else {
          ConstMap B(bi->data.data() + i * k * n, k, n);
          if (ga) MutMap(ga + i * m * k, m, k).noalias() += G.lazyProduct(B.transpose());
          if (gb) MutMap(gb + i * k * n, k, n).noalias() += A.transpose().lazyProduct(G);
        }
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_defined(a, "transpose");
  if (a.rank() != 2) throw ShapeError("transpose: expects a matrix, got " + shape_str(a.shape()));
  const std::size_t r = a.dim(0);
  const std::size_t c = a.dim(1);
  Tensor out({c, r});
  MutMap(out.ptr(), c, r) = ConstMap(a.ptr(), r, c).transpose();
  if (Tape* tape = tracking({&a})) {
    out.set_requires_grad(true);
    tape->record([ai = a.handle(), oi = out.handle(), r, c] {
      if (oi->grad.empty()) return;
      MutMap(ai->grad_buffer(), r, c) += ConstMap(oi->grad.data(), c, r).transpose();
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_defined(a, "add");
  require_defined(b, "add");
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Tensor out(a.shape());
  const std::size_t n = out.numel();
  const double* ap = a.ptr();
  const double* bp = b.ptr();
  double* op = out.ptr();
  for (std::size_t i = 0; i < n; ++i) op[i] = ap[i] + bp[i];
  check_finite(out, "add");
  if (Tape* tape = tracking({&a, &b})) {
    out.set_requires_grad(true);
    tape->record([ai = a.handle(), bi = b.handle(), oi = out.handle(), n] {
      if (oi->grad.empty()) return;
      const double* g = oi->grad.data();
      if (ai->requires_grad) {
        double* ga = ai->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
      }
      if (bi->requires_grad) {
        double* gb = bi->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

Tensor add_broadcast(const Tensor& a, const Tensor& b) {
  require_defined(a, "add_broadcast");
  require_defined(b, "add_broadcast");
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (bs.size() > as.size() || !std::equal(bs.rbegin(), bs.rend(), as.rbegin())) {
    throw ShapeError("add_broadcast: " + shape_str(bs) + " is not a suffix of " + shape_str(as));
  }
  const std::size_t inner = b.numel();
  const std::size_t outer = a.numel() / inner;
  Tensor out(as);
  const double* ap = a.ptr();
  const double* bp = b.ptr();
  double* op = out.ptr();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) op[o * inner + i] = ap[o * inner + i] + bp[i];
  }
  check_finite(out, "add_broadcast");
  if (Tape* tape = tracking({&a, &b})) {
    out.set_requires_grad(true);
    tape->record([ai = a.handle(), bi = b.handle(), oi = out.handle(), outer, inner] {
      if (oi->grad.empty()) return;
      const double* g = oi->grad.data();
      if (ai->requires_grad) {
        double* ga = ai->grad_buffer();
        for (std::size_t i = 0; i < outer * inner; ++i) ga[i] += g[i];
      }
      if (bi->requires_grad) {
        double* gb = bi->grad_buffer();
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t i = 0; i < inner; ++i) gb[i] += g[o * inner + i];
        }
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  require_defined(a, "scale");
  Tensor out(a.shape());
  const std::size_t n = out.numel();
  const double* ap = a.ptr();
  double* op = out.ptr();
  for (std::size_t i = 0; i < n; ++i) op[i] = ap[i] * factor;
  check_finite(out, "scale");
  if (Tape* tape = tracking({&a})) {
    out.set_requires_grad(true);
    tape->record([ai = a.handle(), oi = out.handle(), n, factor] {
      if (oi->grad.empty()) return;
      double* ga = ai->grad_buffer();
      const double* g = oi->grad.data();
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * factor;
    });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  double total = 0.0;
  for (double v : a.data()) total += v;
  Tensor out(Shape{1}, std::vector<double>{total});
  check_finite(out, "sum");
  if (Tape* tape = tracking({&a})) {
    out.set_requires_grad(true);
    tape->record([ai = a.handle(), oi = out.handle()] {
      if (oi->grad.empty()) return;
      const double g = oi->grad[0];
      double* ga = ai->grad_buffer();
      for (std::size_t i = 0; i < ai->data.size(); ++i) ga[i] += g;
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  for (const Tensor& p : parts) require_defined(p, "concat");
  const Shape& first = parts.front().shape();
  const std::size_t ax = normalize_axis(axis, first.size(), "concat");
  Shape out_shape = first;
  out_shape[ax] = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == ax) || s[i] == first[i];
    if (!ok) throw ShapeError("concat: incompatible shapes " + shape_str(first) + " and " + shape_str(s));
    out_shape[ax] += s[ax];
  }
  Tensor out(out_shape);
  const AxisSplit os = split_at(out_shape, ax);
  std::vector<std::size_t> widths;
  widths.reserve(parts.size());
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t w = p.dim(static_cast<int>(ax)) * os.inner;
    const double* src = p.ptr();
    double* dst = out.ptr();
    for (std::size_t o = 0; o < os.outer; ++o) {
      std::copy_n(src + o * w, w, dst + o * os.extent * os.inner + offset);
    }
    widths.push_back(w);
    offset += w;
  }
  Tape* tape = active_tape();
  bool any = false;
  for (const Tensor& p : parts) any = any || p.requires_grad();
  if (tape != nullptr && any) {
    out.set_requires_grad(true);
    std::vector<Impl> inputs;
    inputs.reserve(parts.size());
    for (const Tensor& p : parts) inputs.push_back(p.handle());
    const std::size_t row = os.extent * os.inner;
    tape->record([inputs = std::move(inputs), widths, oi = out.handle(), outer = os.outer, row] {
      if (oi->grad.empty()) return;
      std::size_t off = 0;
      for (std::size_t j = 0; j < inputs.size(); ++j) {
        const std::size_t w = widths[j];
        if (inputs[j]->requires_grad) {
          double* g = inputs[j]->grad_buffer();
          for (std::size_t o = 0; o < outer; ++o) {
            const double* src = oi->grad.data() + o * row + off;
            for (std::size_t i = 0; i < w; ++i) g[o * w + i] += src[i];
          }
        }
        off += w;
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& a, int axis, std::size_t start, std::size_t length) {
  require_defined(a, "slice");
  const std::size_t ax = normalize_axis(axis, a.rank(), "slice");
  if (length == 0 || start + length > a.shape()[ax]) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") exceeds extent of " + shape_str(a.shape()));
  }
  const AxisSplit s = split_at(a.shape(), ax);
  Shape out_shape = a.shape();
  out_shape[ax] = length;
  Tensor out(out_shape);
  const std::size_t w = length * s.inner;
  const std::size_t row = s.extent * s.inner;
  const std::size_t off = start * s.inner;
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(a.ptr() + o * row + off, w, out.ptr() + o * w);
  }
  if (Tape* tape = tracking({&a})) {
    out.set_requires_grad(true);
    tape->record([ai = a.handle(), oi = out.handle(), outer = s.outer, row, off, w] {
      if (oi->grad.empty()) return;
      double* g = ai->grad_buffer();
      for (std::size_t o = 0; o < outer; ++o) {
        const double* src = oi->grad.data() + o * w;
        for (std::size_t i = 0; i < w; ++i) g[o * row + off + i] += src[i];
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()));
  if (Tape* tape = tracking({&a})) {
    out.set_requires_grad(true);
    tape->record([ai = a.handle(), oi = out.handle()] {
      if (oi->grad.empty()) return;
      double* g = ai->grad_buffer();
      for (std::size_t i = 0; i < oi->grad.size(); ++i) g[i] += oi->grad[i];
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& a, const IndexList& index) {
  require_defined(a, "gather_rows");
  if (a.rank() < 1 || index.empty()) throw ShapeError("gather_rows: empty selection or scalar source");
  const std::size_t rows = a.dim(0);
  const std::size_t inner = a.numel() / rows;
  for (std::size_t i : index) {
    if (i >= rows) {
      throw ShapeError("gather_rows: index " + std::to_string(i) + " out of range for " + shape_str(a.shape()));
    }
  }
  Shape out_shape = a.shape();
  out_shape[0] = index.size();
  Tensor out(out_shape);
  for (std::size_t r = 0; r < index.size(); ++r) {
    std::copy_n(a.ptr() + index[r] * inner, inner, out.ptr() + r * inner);
  }
  if (Tape* tape = tracking({&a})) {
    out.set_requires_grad(true);
    tape->record([ai = a.handle(), oi = out.handle(), index, inner] {
      if (oi->grad.empty()) return;
      double* g = ai->grad_buffer();
      for (std::size_t r = 0; r < index.size(); ++r) {
        const double* src = oi->grad.data() + r * inner;
        double* dst = g + index[r] * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
      }
    });
  }
  return out;
}

void Bags::add_mean(std::span<const std::int32_t> words) {
  const double w = words.empty() ? 0.0 : 1.0 / static_cast<double>(words.size());
  add_weighted(words, w);
  close_bag();
}

void Bags::add_weighted(std::span<const std::int32_t> words, double weight) {
  for (std::int32_t id : words) {
    if (id < 0) throw ShapeError("embedding_bag: negative token id");
    ids.push_back(static_cast<std::size_t>(id));
    weights.push_back(weight);
  }
}

Tensor embedding_bag(const Tensor& table, const Bags& bags) {
  require_defined(table, "embedding_bag");
  if (table.rank() != 2) throw ShapeError("embedding_bag: table must be [V, d]");
  if (bags.size() == 0) throw ShapeError("embedding_bag: no bags");
  const std::size_t vocab = table.dim(0);
  const std::size_t d = table.dim(1);
  for (std::size_t id : bags.ids) {
    if (id >= vocab) {
      throw ShapeError("embedding_bag: id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(vocab));
    }
  }
  Tensor out({bags.size(), d});
  const double* t = table.ptr();
  double* o = out.ptr();
  for (std::size_t b = 0; b < bags.size(); ++b) {
    for (std::size_t j = bags.offsets[b]; j < bags.offsets[b + 1]; ++j) {
      const double w = bags.weights[j];
      const double* row = t + bags.ids[j] * d;
      for (std::size_t c = 0; c < d; ++c) o[b * d + c] += w * row[c];
    }
  }
  check_finite(out, "embedding_bag");
  if (Tape* tape = tracking({&table})) {
    out.set_requires_grad(true);
    tape->record([ti = table.handle(), oi = out.handle(), bags, d] {
      if (oi->grad.empty()) return;
      double* g = ti->grad_buffer();
      for (std::size_t b = 0; b < bags.size(); ++b) {
        const double* src = oi->grad.data() + b * d;
        for (std::size_t j = bags.offsets[b]; j < bags.offsets[b + 1]; ++j) {
          const double w = bags.weights[j];
          double* dst = g + bags.ids[j] * d;
          for (std::size_t c = 0; c < d; ++c) dst[c] += w * src[c];
        }
      }
    });
  }
  return out;
}

Tensor mean(const Tensor& a, int axis) {
  require_defined(a, "mean");
  const std::size_t ax = normalize_axis(axis, a.rank(), "mean");
  const AxisSplit s = split_at(a.shape(), ax);
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
  if (out_shape.empty()) out_shape = {1};
  Tensor out(out_shape);
  const double inv = 1.0 / static_cast<double>(s.extent);
  const double* ap = a.ptr();
  double* op = out.ptr();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t e = 0; e < s.extent; ++e) {
      const double* src = ap + (o * s.extent + e) * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) op[o * s.inner + i] += src[i];
    }
  }
  for (std::size_t i = 0; i < out.numel(); ++i) op[i] *= inv;
  if (Tape* tape = tracking({&a})) {
    out.set_requires_grad(true);
    tape->record([ai = a.handle(), oi = out.handle(), s, inv] {
      if (oi->grad.empty()) return;
      double* g = ai->grad_buffer();
      for (std::size_t o = 0; o < s.outer; ++o) {
        const double* src = oi->grad.data() + o * s.inner;
        for (std::size_t e = 0; e < s.extent; ++e) {
          double* dst = g + (o * s.extent + e) * s.inner;
          for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i] * inv;
        }
      }
    });
  }
  return out;
}

Tensor softmax_last(const Tensor& a) {
  require_defined(a, "softmax");
  const std::size_t c = a.shape().back();
  const std::size_t rows = a.numel() / c;
  Tensor out(a.shape());
  const double* ap = a.ptr();
  double* op = out.ptr();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = ap + r * c;
    double* y = op + r * c;
    double mx = x[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      // exp underflows to exactly 0 below this; skip the slow libm path.
      const double e = x[j] - mx;
      y[j] = e < -745.2 ? 0.0 : std::exp(e);
      z += y[j];
    }
    const double inv = 1.0 / z;
    for (std::size_t j = 0; j < c; ++j) y[j] *= inv;
  }
  check_finite(a, "softmax input");
  if (Tape* tape = tracking({&a})) {
    out.set_requires_grad(true);
    tape->record([ai = a.handle(), oi = out.handle(), rows, c] {
      if (oi->grad.empty()) return;
      double* g = ai->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = oi->data.data() + r * c;
        const double* gy = oi->grad.data() + r * c;
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += gy[j] * y[j];
        for (std::size_t j = 0; j < c; ++j) g[r * c + j] += y[j] * (gy[j] - dot);
      }
    });
  }
  return out;
}

Tensor softmax_rows(const Tensor& m) {
  if (m.rank() != 2) throw ShapeError("softmax_rows: expects a matrix, got " + shape_str(m.shape()));
  return softmax_last(m);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_defined(x, "layer_norm");
  const std::size_t d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d) {
    throw ShapeError("layer_norm: gamma/beta must have " + std::to_string(d) + " entries");
  }
  const std::size_t rows = x.numel() / d;
  Tensor out(x.shape());
  // Normalized values and inverse std are kept for the backward pass.
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  const double* xp = x.ptr();
  const double* gp = gamma.ptr();
  const double* bp = beta.ptr();
  double* op = out.ptr();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xp + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * is;
      (*xhat)[r * d + j] = h;
      op[r * d + j] = gp[j] * h + bp[j];
    }
  }
  check_finite(out, "layer_norm");
  if (Tape* tape = tracking({&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    tape->record([xi = x.handle(), gi = gamma.handle(), bi = beta.handle(), oi = out.handle(), xhat, inv_std,
                  rows, d] {
      if (oi->grad.empty()) return;
      const double* gy = oi->grad.data();
      if (gi->requires_grad || bi->requires_grad) {
        double* gg = gi->requires_grad ? gi->grad_buffer() : nullptr;
        double* gb = bi->requires_grad ? bi->grad_buffer() : nullptr;
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < d; ++j) {
            if (gg) gg[j] += gy[r * d + j] * (*xhat)[r * d + j];
            if (gb) gb[j] += gy[r * d + j];
          }
        }
      }
      if (xi->requires_grad) {
        double* gx = xi->grad_buffer();
        const double* gam = gi->data.data();
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          double sum_g = 0.0;
          double sum_gh = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double gh = gy[r * d + j] * gam[j];
            sum_g += gh;
            sum_gh += gh * (*xhat)[r * d + j];
          }
          const double is = (*inv_std)[r];
          for (std::size_t j = 0; j < d; ++j) {
            const double gh = gy[r * d + j] * gam[j];
            gx[r * d + j] += is * (gh - inv_d * sum_g - (*xhat)[r * d + j] * inv_d * sum_gh);
          }
        }
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& a) {
  require_defined(a, "relu");
  Tensor out(a.shape());
  const std::size_t n = out.numel();
  const double* ap = a.ptr();
  double* op = out.ptr();
  for (std::size_t i = 0; i < n; ++i) op[i] = ap[i] > 0.0 ? ap[i] : 0.0;
  check_finite(a, "relu input");
  if (Tape* tape = tracking({&a})) {
    out.set_requires_grad(true);
    tape->record([ai = a.handle(), oi = out.handle(), n] {
      if (oi->grad.empty()) return;
      double* g = ai->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        if (ai->data[i] > 0.0) g[i] += oi->grad[i];
      }
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& a) {
  require_defined(a, "sigmoid");
  Tensor out(a.shape());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a[i];
    out.data()[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  check_finite(out, "sigmoid");
  if (Tape* tape = tracking({&a})) {
    out.set_requires_grad(true);
    tape->record([ai = a.handle(), oi = out.handle(), n] {
      if (oi->grad.empty()) return;
      double* g = ai->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        const double y = oi->data[i];
        g[i] += oi->grad[i] * y * (1.0 - y);
      }
    });
  }
  return out;
}

Tensor dropout(const Tensor& a, double rate, Rng& rng) {
  require_defined(a, "dropout");
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must lie in [0, 1)");
  if (rate == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(a.numel());
  for (double& m : *mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.data()[i] = a[i] * (*mask)[i];
  if (Tape* tape = tracking({&a})) {
    out.set_requires_grad(true);
    tape->record([ai = a.handle(), oi = out.handle(), mask] {
      if (oi->grad.empty()) return;
      double* g = ai->grad_buffer();
      for (std::size_t i = 0; i < mask->size(); ++i) g[i] += oi->grad[i] * (*mask)[i];
    });
  }
  return out;
}

Tensor bce_with_logits(const Tensor& logits, std::span<const double> labels) {
  require_defined(logits, "bce_with_logits");
  if (logits.numel() != labels.size()) {
    throw ShapeError("bce_with_logits: " + std::to_string(logits.numel()) + " logits but " +
                     std::to_string(labels.size()) + " labels");
  }
  for (double y : labels) {
    if (y != 0.0 && y != 1.0) throw std::invalid_argument("bce_with_logits: labels must be 0 or 1");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double x = logits[i];
    const double softplus = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
    total += softplus - labels[i] * x;
  }
  Tensor out(Shape{1}, std::vector<double>{total});
  check_finite(out, "bce_with_logits");
  if (Tape* tape = tracking({&logits})) {
    out.set_requires_grad(true);
    std::vector<double> y(labels.begin(), labels.end());
    tape->record([li = logits.handle(), oi = out.handle(), y = std::move(y)] {
      if (oi->grad.empty()) return;
      const double g = oi->grad[0];
      double* gl = li->grad_buffer();
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double x = li->data[i];
        const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        gl[i] += g * (s - y[i]);
      }
    });
  }
  return out;
}

}  // namespace dhan
