#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "dhan/rng.hpp"
#include "dhan/tensor.hpp"

namespace dhan {

/// Named, insertion-ordered collection of parameter tensors.
class ParamStore {
 public:
  // Registers a parameter; duplicate names are rejected. Returns a handle
  // sharing storage with the stored tensor.
  Tensor add(const std::string& name, Tensor value);
  // Uniform(-bound, bound) initialized trainable parameter.
  Tensor add_uniform(const std::string& name, Shape shape, double bound, Rng& rng);
  Tensor add_constant(const std::string& name, Shape shape, double value);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  // Total scalar count over all parameters.
  std::size_t parameter_count() const;

  void zero_grad();

  // Copies values from `other` into the existing tensors; names and shapes
  // must match exactly. Existing handles stay valid.
  void assign_values(const ParamStore& other);

  // Bitwise equality of names, shapes, flags and values.
  bool identical_to(const ParamStore& other) const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::map<std::string, std::size_t> index_;
};

using GradMap = std::map<std::string, std::vector<double>>;

// Snapshot of the accumulated gradient of every trainable parameter.
GradMap collect_grads(const ParamStore& store);

}  // namespace dhan
