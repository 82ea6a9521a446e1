#pragma once

#include <map>
#include <string>
#include <vector>

#include "wavesr/ops.hpp"
#include "wavesr/tensor.hpp"

namespace wavesr {

// Named parameter collection; iteration order is the lexicographic name order,
// which makes optimizer traversal and checkpoint layout deterministic.
template <typename T>
class ParamSet {
 public:
  Tensor<T>& add(const std::string& name, Tensor<T> t) {
    auto [it, fresh] = entries_.emplace(name, std::move(t));
    if (!fresh) throw ShapeMismatch("duplicate parameter name: " + name);
    it->second.set_requires_grad(true);
    return it->second;
  }

  bool has(const std::string& name) const { return entries_.count(name) > 0; }

  Tensor<T>& at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ShapeMismatch("no parameter named " + name);
    return it->second;
  }
  const Tensor<T>& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ShapeMismatch("no parameter named " + name);
    return it->second;
  }

  void zero_grad() {
    for (auto& [k, v] : entries_) v.clear_grad();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [k, v] : entries_) n += v.numel();
    return n;
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, Tensor<T>> entries_;
};

// He-normal conv kernel: stddev sqrt(2 / fan_in)
template <typename T>
Tensor<T> init_conv_kernel(int co, int ci, int kh, int kw, Rng& rng) {
  T stddev = std::sqrt(T(2) / static_cast<T>(ci * kh * kw));
  return Tensor<T>::randn(Shape{co, ci, kh, kw}, rng, stddev);
}

template <typename T>
Tensor<T> init_zeros(const Shape& s) {
  return Tensor<T>::zeros(s);
}

}  // namespace wavesr
