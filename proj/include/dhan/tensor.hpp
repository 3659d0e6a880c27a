#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dhan {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient is first accumulated
  bool requires_grad = false;

  double* grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad.data();
  }
};

}  // namespace detail

/// Dense row-major tensor of 64-bit scalars.
///
/// A Tensor is a shared handle: copies refer to the same storage, which is
/// how parameters are shared between a ParamStore and the model that reads
/// them. Use clone() or detach() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  // Negative axes count from the back.
  std::size_t dim(int axis) const;
  std::size_t numel() const;

  std::span<double> data();
  std::span<const double> data() const;
  double* ptr() { return impl_->data.data(); }
  const double* ptr() const { return impl_->data.data(); }

  double operator[](std::size_t i) const { return impl_->data[i]; }
  double at(std::size_t i, std::size_t j) const;
  double at(std::size_t i, std::size_t j, std::size_t k) const;
  double item() const;

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool flag);
  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  // Allocates a zero buffer on first access.
  std::span<double> grad();
  std::span<const double> grad() const;
  void zero_grad();

  Tensor clone() const;   // deep copy, keeps requires_grad
  Tensor detach() const;  // deep copy, no gradient tracking
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  const std::shared_ptr<detail::TensorImpl>& handle() const { return impl_; }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Records backward closures in forward order; backward() replays them in
/// reverse. A tape is confined to one thread and one forward/backward pass.
class Tape {
 public:
  void record(std::function<void()> backward_fn);
  // Seeds d(root)/d(root) = 1 and runs the recorded closures in reverse.
  // The tape is cleared afterwards.
  void backward(const Tensor& root);
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  std::vector<std::function<void()>> entries_;
};

Tape* active_tape();

// Makes `tape` the active tape of the current thread for the scope lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suspends gradient recording for the scope lifetime.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

}  // namespace dhan
