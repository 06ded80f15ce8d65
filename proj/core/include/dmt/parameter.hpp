#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dmt/tensor.hpp"

namespace dmt {

/// A trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  // False for LN affine terms, biases, class token and positional embeddings.
  bool decay = true;

  Parameter(std::string name_, Tensor value_, bool decay_ = true);

  void zero_grad();
};

/// Ordered, named parameter collection. Order is the checkpoint order.
class ParameterSet {
 public:
  Parameter& add(std::string name, Tensor value, bool decay = true);

  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<Parameter>& items() { return params_; }
  const std::vector<Parameter>& items() const { return params_; }
  std::size_t size() const { return params_.size(); }

  std::size_t scalar_count() const;
  void zero_grad();

  bool frozen() const { return frozen_; }
  void set_frozen(bool frozen) { frozen_ = frozen; }

  /// FNV-1a over names, shapes and raw value bytes.
  std::uint64_t hash() const;

  /// Bitwise equality of names, shapes and values.
  bool bit_equal(const ParameterSet& other) const;

 private:
  std::vector<Parameter> params_;
  bool frozen_ = false;
};

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace dmt
