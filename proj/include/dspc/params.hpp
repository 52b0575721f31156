#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dspc/data_io.hpp"
#include "dspc/tensor.hpp"

namespace dspc {

// Ordered registry of named trainable tensors. Iteration order is insertion
// order, which fixes the optimizer update order and the checkpoint layout.
struct ParamSet {
  std::vector<std::pair<std::string, Tensor>> items;

  Tensor& add(const std::string& name, Tensor t);
  bool has(const std::string& name) const;
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  void zero_grad_all();

  std::vector<io::NamedTensor> to_named() const;
  // Restores values from a checkpoint dump; every registered parameter must
  // appear with a matching shape.
  void load_named(const std::vector<io::NamedTensor>& named);
};

}  // namespace dspc
