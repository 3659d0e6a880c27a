#include "dhan/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "dhan/errors.hpp"

namespace dhan {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  if (shape.size() == 1) os << ',';
  os << ')';
  return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
}

thread_local Tape* g_active_tape = nullptr;

}  // namespace

Tensor::Tensor(Shape shape, bool requires_grad) : impl_(std::make_shared<detail::TensorImpl>()) {
  validate_shape(shape);
  impl_->data.assign(shape_numel(shape), 0.0);
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  validate_shape(shape);
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor of shape " + shape_str(shape) + " cannot hold " +
                     std::to_string(values.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, std::vector<double>{value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(values));
}

const Shape& Tensor::shape() const {
  static const Shape kEmpty;
  return impl_ ? impl_->shape : kEmpty;
}

std::size_t Tensor::dim(int axis) const {
  const int r = static_cast<int>(rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape()));
  }
  return shape()[static_cast<std::size_t>(a)];
}

std::size_t Tensor::numel() const { return impl_ ? impl_->data.size() : 0; }

std::span<double> Tensor::data() { return impl_->data; }
std::span<const double> Tensor::data() const { return impl_->data; }

double Tensor::at(std::size_t i, std::size_t j) const {
  return impl_->data[i * impl_->shape.at(1) + j];
}

double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
  const auto& s = impl_->shape;
  return impl_->data[(i * s.at(1) + j) * s.at(2) + k];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() needs a single-element tensor, got " + shape_str(shape()));
  return impl_->data[0];
}

void Tensor::set_requires_grad(bool flag) { impl_->requires_grad = flag; }

std::span<double> Tensor::grad() {
  impl_->grad_buffer();
  return impl_->grad;
}

std::span<const double> Tensor::grad() const { return impl_->grad; }

void Tensor::zero_grad() {
  if (impl_->grad.empty()) {
    impl_->grad.assign(impl_->data.size(), 0.0);
  } else {
    std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
  }
}

Tensor Tensor::clone() const {
  Tensor out(impl_->shape, impl_->data, impl_->requires_grad);
  return out;
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data, false); }

void Tape::record(std::function<void()> backward_fn) { entries_.push_back(std::move(backward_fn)); }

void Tape::backward(const Tensor& root) {
  if (!root.defined() || root.numel() != 1) {
    throw ShapeError("backward() needs a scalar root, got " + shape_str(root.shape()));
  }
  if (!root.requires_grad()) {
    entries_.clear();
    return;
  }
  root.handle()->grad_buffer()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  entries_.clear();
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

}  // namespace dhan
