#include "sgg/nn/autograd.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace sgg::nn {
namespace {

thread_local bool g_grad_enabled = true;

template <typename T>
bool needs_grad(const Var<T>& v) {
  return v && v->requires_grad;
}

template <typename T>
T stable_softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

template <typename T>
Var<T> constant(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  return n;
}

template <typename T>
Var<T> leaf(Tensor<T> value, bool requires_grad) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

template <typename T>
Var<T> make_node(Tensor<T> value, std::vector<Var<T>> inputs,
                 std::function<void(Node<T>&)> backward_fn) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  if (!g_grad_enabled) return n;
  bool any = false;
  for (const auto& in : inputs) any = any || needs_grad(in);
  if (!any) return n;
  n->requires_grad = true;
  n->inputs = std::move(inputs);
  n->backward_fn = std::move(backward_fn);
  return n;
}

template <typename T>
void backward(const Var<T>& root, const Tensor<T>& seed) {
  require_same(root->shape(), seed.shape(), "backward seed");
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child && child->requires_grad && !seen.count(child)) {
        seen.insert(child);
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  Tensor<T>& g = root->grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward_fn && !node->grad.empty()) {
      node->backward_fn(*node);
      // Interior gradients are not needed after propagation.
      node->grad = Tensor<T>();
    }
  }
}

template <typename T>
void backward(const Var<T>& root) {
  if (root->value.size() != 1) {
    throw ShapeError("backward: root must be scalar, got " + root->shape().str());
  }
  backward(root, Tensor<T>(root->shape(), T(1)));
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same(a->shape(), b->shape(), "add");
  Tensor<T> out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
  return make_node<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same(a->shape(), b->shape(), "sub");
  Tensor<T> out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b->value[i];
  return make_node<T>(std::move(out), {a, b}, [](Node<T>& self) {
    if (self.inputs[0]->requires_grad) {
      auto& g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.inputs[1]->requires_grad) {
      auto& g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same(a->shape(), b->shape(), "mul");
  Tensor<T> out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
  return make_node<T>(std::move(out), {a, b}, [](Node<T>& self) {
    auto& a = self.inputs[0];
    auto& b = self.inputs[1];
    if (a->requires_grad) {
      auto& g = a->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * b->value[i];
    }
    if (b->requires_grad) {
      auto& g = b->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * a->value[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, double s) {
  Tensor<T> out = a->value;
  const T f = static_cast<T>(s);
  for (auto& v : out.values()) v *= f;
  return make_node<T>(std::move(out), {a}, [f](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += f * self.grad[i];
  });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, double s) {
  Tensor<T> out = a->value;
  for (auto& v : out.values()) v += static_cast<T>(s);
  return make_node<T>(std::move(out), {a}, [](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Var<T> mul_const(const Var<T>& a, const Tensor<T>& m) {
  require_same(a->shape(), m.shape(), "mul_const");
  Tensor<T> out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= m[i];
  return make_node<T>(std::move(out), {a}, [m](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * m[i];
  });
}

template <typename T>
Var<T> add_const(const Var<T>& a, const Tensor<T>& m) {
  require_same(a->shape(), m.shape(), "add_const");
  Tensor<T> out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += m[i];
  return make_node<T>(std::move(out), {a}, [](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, double slope) {
  Tensor<T> out = a->value;
  const T s = static_cast<T>(slope);
  for (auto& v : out.values()) v = v > T(0) ? v : v * s;
  return make_node<T>(std::move(out), {a}, [s](Node<T>& self) {
    const auto& x = self.inputs[0]->value;
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += x[i] > T(0) ? self.grad[i] : s * self.grad[i];
  });
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
  Tensor<T> out = a->value;
  for (auto& v : out.values()) v = std::tanh(v);
  return make_node<T>(std::move(out), {a}, [](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T y = self.value[i];
      g[i] += self.grad[i] * (T(1) - y * y);
    }
  });
}

template <typename T>
Var<T> softplus(const Var<T>& a) {
  Tensor<T> out = a->value;
  for (auto& v : out.values()) v = stable_softplus(v);
  return make_node<T>(std::move(out), {a}, [](Node<T>& self) {
    const auto& x = self.inputs[0]->value;
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * sigmoid(x[i]);
  });
}

template <typename T>
Var<T> square(const Var<T>& a) {
  Tensor<T> out = a->value;
  for (auto& v : out.values()) v = v * v;
  return make_node<T>(std::move(out), {a}, [](Node<T>& self) {
    const auto& x = self.inputs[0]->value;
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += T(2) * x[i] * self.grad[i];
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  double s = 0;
  for (T v : a->value.values()) s += v;
  Tensor<T> out({1, 1, 1, 1}, static_cast<T>(s));
  return make_node<T>(std::move(out), {a}, [](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const T up = self.grad[0];
    for (auto& v : g.values()) v += up;
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a->value.size()));
}

template <typename T>
Var<T> weighted_sum(const Var<T>& a, const Tensor<T>& w) {
  require_same(a->shape(), w.shape(), "weighted_sum");
  double s = 0;
  for (std::size_t i = 0; i < w.size(); ++i) s += static_cast<double>(a->value[i]) * w[i];
  Tensor<T> out({1, 1, 1, 1}, static_cast<T>(s));
  return make_node<T>(std::move(out), {a}, [w](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const T up = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += up * w[i];
  });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape s) {
  Tensor<T> out = a->value.reshaped(s);
  return make_node<T>(std::move(out), {a}, [](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  Shape s = parts.front()->shape();
  int channels = 0;
  for (const auto& p : parts) {
    const Shape& ps = p->shape();
    if (ps.n != s.n || ps.h != s.h || ps.w != s.w) {
      throw ShapeError("concat_channels: " + ps.str() + " vs " + s.str());
    }
    channels += ps.c;
  }
  s.c = channels;
  Tensor<T> out(s);
  const std::size_t hw = s.plane();
  for (int n = 0; n < s.n; ++n) {
    int offset = 0;
    for (const auto& p : parts) {
      const int pc = p->shape().c;
      std::copy_n(p->value.plane(n, 0), pc * hw, out.plane(n, offset));
      offset += pc;
    }
  }
  return make_node<T>(std::move(out), parts, [](Node<T>& self) {
    const Shape s = self.shape();
    const std::size_t hw = s.plane();
    for (int n = 0; n < s.n; ++n) {
      int offset = 0;
      for (auto& p : self.inputs) {
        const int pc = p->shape().c;
        if (p->requires_grad) {
          T* dst = p->grad_buffer().plane(n, 0);
          const T* src = self.grad.plane(n, offset);
          for (std::size_t i = 0; i < pc * hw; ++i) dst[i] += src[i];
        }
        offset += pc;
      }
    }
  });
}

template <typename T>
Var<T> slice_channels(const Var<T>& a, int begin, int count) {
  Shape s = a->shape();
  if (begin < 0 || count <= 0 || begin + count > s.c) {
    throw ShapeError("slice_channels: [" + std::to_string(begin) + "," +
                     std::to_string(begin + count) + ") of " + s.str());
  }
  Shape os = s;
  os.c = count;
  Tensor<T> out(os);
  const std::size_t hw = s.plane();
  for (int n = 0; n < s.n; ++n) std::copy_n(a->value.plane(n, begin), count * hw, out.plane(n, 0));
  return make_node<T>(std::move(out), {a}, [begin, count](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const std::size_t hw = self.shape().plane();
    for (int n = 0; n < self.shape().n; ++n) {
      T* dst = g.plane(n, begin);
      const T* src = self.grad.plane(n, 0);
      for (std::size_t i = 0; i < count * hw; ++i) dst[i] += src[i];
    }
  });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias,
              const kernels::ConvSpec& spec) {
  Tensor<T> out;
  kernels::conv2d_forward(x->value, w->value, bias ? &bias->value : nullptr, spec, out);
  std::vector<Var<T>> inputs{x, w};
  if (bias) inputs.push_back(bias);
  return make_node<T>(std::move(out), std::move(inputs), [spec](Node<T>& self) {
    auto& x = self.inputs[0];
    auto& w = self.inputs[1];
    Node<T>* b = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
    if (x->requires_grad) {
      kernels::conv2d_backward_input(self.grad, w->value, spec, x->grad_buffer());
    }
    const bool want_b = b && b->requires_grad;
    if (w->requires_grad) {
      kernels::conv2d_backward_params(x->value, self.grad, spec, w->grad_buffer(),
                                      want_b ? &b->grad_buffer() : nullptr);
    } else if (want_b) {
      auto& gb = b->grad_buffer();
      const Shape s = self.shape();
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
          const T* g = self.grad.plane(n, c);
          T acc = 0;
          for (std::size_t i = 0; i < s.plane(); ++i) acc += g[i];
          gb[c] += acc;
        }
    }
  });
}

template <typename T>
Var<T> instance_norm(const Var<T>& x, double eps) {
  Tensor<T> out;
  std::vector<T> inv_std;
  kernels::instance_norm_forward(x->value, eps, out, inv_std);
  return make_node<T>(std::move(out), {x}, [inv_std = std::move(inv_std)](Node<T>& self) {
    kernels::instance_norm_backward(self.value, inv_std, self.grad,
                                    self.inputs[0]->grad_buffer());
  });
}

template <typename T>
Var<T> avg_pool2(const Var<T>& x) {
  Tensor<T> out;
  kernels::avg_pool2_forward(x->value, out);
  return make_node<T>(std::move(out), {x}, [](Node<T>& self) {
    kernels::avg_pool2_backward(self.grad, self.inputs[0]->grad_buffer());
  });
}

template <typename T>
Var<T> upsample2(const Var<T>& x, kernels::Padding edge) {
  Tensor<T> out;
  kernels::upsample2_forward(x->value, edge, out);
  return make_node<T>(std::move(out), {x}, [edge](Node<T>& self) {
    kernels::upsample2_backward(self.grad, edge, self.inputs[0]->grad_buffer());
  });
}

#define SGG_INSTANTIATE_AUTOGRAD(T)                                                       \
  template Var<T> constant<T>(Tensor<T>);                                                 \
  template Var<T> leaf<T>(Tensor<T>, bool);                                               \
  template Var<T> make_node<T>(Tensor<T>, std::vector<Var<T>>,                            \
                               std::function<void(Node<T>&)>);                            \
  template void backward<T>(const Var<T>&);                                               \
  template void backward<T>(const Var<T>&, const Tensor<T>&);                             \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                   \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                   \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                   \
  template Var<T> scale<T>(const Var<T>&, double);                                        \
  template Var<T> add_scalar<T>(const Var<T>&, double);                                   \
  template Var<T> mul_const<T>(const Var<T>&, const Tensor<T>&);                          \
  template Var<T> add_const<T>(const Var<T>&, const Tensor<T>&);                          \
  template Var<T> leaky_relu<T>(const Var<T>&, double);                                   \
  template Var<T> tanh<T>(const Var<T>&);                                                 \
  template Var<T> softplus<T>(const Var<T>&);                                             \
  template Var<T> square<T>(const Var<T>&);                                               \
  template Var<T> sum<T>(const Var<T>&);                                                  \
  template Var<T> mean<T>(const Var<T>&);                                                 \
  template Var<T> weighted_sum<T>(const Var<T>&, const Tensor<T>&);                       \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                       \
  template Var<T> concat_channels<T>(const std::vector<Var<T>>&);                         \
  template Var<T> slice_channels<T>(const Var<T>&, int, int);                             \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&,                  \
                            const kernels::ConvSpec&);                                    \
  template Var<T> instance_norm<T>(const Var<T>&, double);                                \
  template Var<T> avg_pool2<T>(const Var<T>&);                                            \
  template Var<T> upsample2<T>(const Var<T>&, kernels::Padding);

SGG_INSTANTIATE_AUTOGRAD(float)
SGG_INSTANTIATE_AUTOGRAD(double)

}  // namespace sgg::nn
