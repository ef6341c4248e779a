#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sgg/nn/autograd.hpp"

namespace sgg::nn {

/// Ordered, named collection of trainable leaves.
template <typename T>
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Var<T> var;
  };

  Var<T> add(std::string name, Tensor<T> init) {
    for (const auto& e : entries_) {
      if (e.name == name) throw std::invalid_argument("duplicate parameter name: " + name);
    }
    auto v = leaf(std::move(init), true);
    entries_.push_back({std::move(name), v});
    return v;
  }

  Var<T> find(std::string_view name) const {
    for (const auto& e : entries_) {
      if (e.name == name) return e.var;
    }
    throw std::out_of_range("no parameter named " + std::string(name));
  }

  const std::vector<Entry>& entries() const { return entries_; }

  std::size_t count() const {
    std::size_t total = 0;
    for (const auto& e : entries_) total += e.var->value.size();
    return total;
  }

  void zero_grad() {
    for (auto& e : entries_) e.var->zero_grad();
  }

  void set_requires_grad(bool on) {
    for (auto& e : entries_) e.var->requires_grad = on;
  }

  /// Copies values from a set with the same layout.
  template <typename U>
  void copy_values_from(const ParameterSet<U>& other) {
    const auto& src = other.entries();
    if (src.size() != entries_.size()) {
      throw std::invalid_argument("parameter layout mismatch: " + std::to_string(src.size()) +
                                  " vs " + std::to_string(entries_.size()));
    }
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (src[i].name != entries_[i].name ||
          src[i].var->value.shape() != entries_[i].var->value.shape()) {
        throw std::invalid_argument("parameter layout mismatch at " + entries_[i].name);
      }
      entries_[i].var->value = src[i].var->value.template cast<T>();
    }
  }

 private:
  std::vector<Entry> entries_;
};

template <typename T, typename Rng>
Tensor<T> random_normal(Shape s, Rng& rng, double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor<T> t(s);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

/// Convolution (or fully connected, as 1x1) layer with equalized learning rate:
/// weights are stored unit-variance and scaled by 1/sqrt(fan_in) at use.
template <typename T>
struct ConvLayer {
  Var<T> weight;
  Var<T> bias;  // null when the layer has no bias
  kernels::ConvSpec spec;

  template <typename Rng>
  static ConvLayer create(ParameterSet<T>& params, const std::string& name, int in, int out,
                          int kernel, bool with_bias, Rng& rng, double bias_init = 0.0,
                          kernels::Padding padding = kernels::Padding::Zeros) {
    ConvLayer layer;
    layer.weight = params.add(name + ".weight", random_normal<T>({out, in, kernel, kernel}, rng));
    if (with_bias) {
      layer.bias = params.add(name + ".bias", Tensor<T>({1, out, 1, 1}, static_cast<T>(bias_init)));
    }
    layer.spec.gain = 1.0 / std::sqrt(static_cast<double>(in) * kernel * kernel);
    layer.spec.padding = padding;
    return layer;
  }

  Var<T> operator()(const Var<T>& x) const { return conv2d(x, weight, bias, spec); }
};

}  // namespace sgg::nn
