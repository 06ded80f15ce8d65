#include "dmt/parameter.hpp"

#include <algorithm>

#include "dmt/errors.hpp"

namespace dmt {

Parameter::Parameter(std::string name_, Tensor value_, bool decay_)
    : name(std::move(name_)), value(std::move(value_)), grad(value.shape()), decay(decay_) {}

void Parameter::zero_grad() {
  auto& g = grad.storage();
  std::fill(g.begin(), g.end(), 0.0);
}

Parameter& ParameterSet::add(std::string name, Tensor value, bool decay) {
  if (contains(name)) throw InvalidArgument("duplicate parameter name: " + name);
  params_.emplace_back(std::move(name), std::move(value), decay);
  return params_.back();
}

Parameter& ParameterSet::get(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw InvalidArgument("no parameter named " + name);
}

const Parameter& ParameterSet::get(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p;
  }
  throw InvalidArgument("no parameter named " + name);
}

bool ParameterSet::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t ParameterSet::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params_) {
    h = fnv1a(p.name.data(), p.name.size(), h);
    const auto& shape = p.value.shape();
    h = fnv1a(shape.data(), shape.size() * sizeof(std::size_t), h);
    h = fnv1a(p.value.storage().data(), p.value.numel() * sizeof(double), h);
  }
  return h;
}

bool ParameterSet::bit_equal(const ParameterSet& other) const {
  if (params_.size() != other.params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name != other.params_[i].name) return false;
    if (!params_[i].value.bit_equal(other.params_[i].value)) return false;
  }
  return true;
}

}  // namespace dmt
