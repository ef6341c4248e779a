#pragma once

// Minimal reverse-mode automatic differentiation over NCHW tensors.
//
// A Var is a shared handle to a graph node. Ops create new nodes that keep
// their inputs alive; leaves (parameters, inputs) are plain nodes. Calling
// backward() on a scalar node accumulates d(root)/d(leaf) into every leaf that
// requires a gradient. Graph nodes never reference their consumers, so a
// graph is released as soon as its root goes out of scope.

#include <functional>
#include <memory>
#include <vector>

#include "sgg/nn/kernels.hpp"
#include "sgg/nn/tensor.hpp"

namespace sgg::nn {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  const Shape& shape() const { return value.shape(); }

  /// Gradient buffer, zero-initialized on first access.
  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
  void zero_grad() { grad = Tensor<T>(); }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

/// While alive, ops on the current thread build no graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

template <typename T>
Var<T> constant(Tensor<T> value);
template <typename T>
Var<T> leaf(Tensor<T> value, bool requires_grad = true);

/// Builds an op node; drops inputs and backward function when nothing upstream
/// needs a gradient or grad mode is off.
template <typename T>
Var<T> make_node(Tensor<T> value, std::vector<Var<T>> inputs,
                 std::function<void(Node<T>&)> backward_fn);

/// Seeds d(root)/d(root) = 1 (root must hold one element) and propagates.
template <typename T>
void backward(const Var<T>& root);
/// Seeds with an explicit upstream gradient of root's shape.
template <typename T>
void backward(const Var<T>& root, const Tensor<T>& seed);

// Elementwise
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, double s);
template <typename T> Var<T> add_scalar(const Var<T>& a, double s);
/// a * m for a constant tensor m of the same shape.
template <typename T> Var<T> mul_const(const Var<T>& a, const Tensor<T>& m);
/// a + m for a constant tensor m of the same shape.
template <typename T> Var<T> add_const(const Var<T>& a, const Tensor<T>& m);
template <typename T> Var<T> leaky_relu(const Var<T>& a, double slope = 0.2);
template <typename T> Var<T> tanh(const Var<T>& a);
template <typename T> Var<T> softplus(const Var<T>& a);
template <typename T> Var<T> square(const Var<T>& a);

// Reductions to a [1,1,1,1] scalar
template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a);
/// Sum of w * a over all elements for a constant weight tensor.
template <typename T> Var<T> weighted_sum(const Var<T>& a, const Tensor<T>& w);

// Structural
template <typename T> Var<T> reshape(const Var<T>& a, Shape s);
template <typename T> Var<T> concat_channels(const std::vector<Var<T>>& parts);
/// Channels [begin, begin + count).
template <typename T> Var<T> slice_channels(const Var<T>& a, int begin, int count);

// Layers
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias,
              const kernels::ConvSpec& spec);
template <typename T> Var<T> instance_norm(const Var<T>& x, double eps = 1e-8);
template <typename T> Var<T> avg_pool2(const Var<T>& x);
template <typename T>
Var<T> upsample2(const Var<T>& x, kernels::Padding edge = kernels::Padding::Zeros);

}  // namespace sgg::nn
