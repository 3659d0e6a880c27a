#include "dhan/param_store.hpp"

#include <cstring>
#include <stdexcept>

#include "dhan/errors.hpp"

namespace dhan {

Tensor ParamStore::add(const std::string& name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  index_[name] = tensors_.size();
  names_.push_back(name);
  tensors_.push_back(std::move(value));
  return tensors_.back();
}

Tensor ParamStore::add_uniform(const std::string& name, Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape), true);
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return add(name, std::move(t));
}

Tensor ParamStore::add_constant(const std::string& name, Shape shape, double value) {
  Tensor t(std::move(shape), true);
  for (double& v : t.data()) v = value;
  return add(name, std::move(t));
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return tensors_[it->second];
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return tensors_[it->second];
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& t : tensors_) n += t.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (Tensor& t : tensors_) {
    if (t.requires_grad()) t.zero_grad();
  }
}

void ParamStore::assign_values(const ParamStore& other) {
  if (other.names_ != names_) throw ShapeError("parameter sets differ");
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].shape() != other.tensors_[i].shape()) {
      throw ShapeError("parameter " + names_[i] + ": shape " + shape_str(other.tensors_[i].shape()) +
                       " does not match " + shape_str(tensors_[i].shape()));
    }
    auto src = other.tensors_[i].data();
    std::copy(src.begin(), src.end(), tensors_[i].data().begin());
  }
}

bool ParamStore::identical_to(const ParamStore& other) const {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const Tensor& a = tensors_[i];
    const Tensor& b = other.tensors_[i];
    if (a.shape() != b.shape() || a.requires_grad() != b.requires_grad()) return false;
    if (std::memcmp(a.ptr(), b.ptr(), a.numel() * sizeof(double)) != 0) return false;
  }
  return true;
}

GradMap collect_grads(const ParamStore& store) {
  GradMap grads;
  for (const std::string& name : store.names()) {
    const Tensor& t = store.get(name);
    if (!t.requires_grad()) continue;
    if (t.has_grad()) {
      grads[name].assign(t.grad().begin(), t.grad().end());
    } else {
      grads[name].assign(t.numel(), 0.0);
    }
  }
  return grads;
}

}  // namespace dhan
