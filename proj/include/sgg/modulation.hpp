#pragma once

// Surface-adaptive modulation: pixel-wise styles from the latent field, applied
// before each convolution, with per-channel standardization after it.

#include <random>
#include <string>

#include "sgg/nn/parameters.hpp"

namespace sgg {

inline constexpr double kNormEpsilon = 1e-8;

/// The affine maps A_gamma, A_beta: D -> channels, as 1x1 convolutions.
template <typename T>
struct StyleProjection {
  nn::ConvLayer<T> gamma;
  nn::ConvLayer<T> beta;

  static StyleProjection create(nn::ParameterSet<T>& params, const std::string& name,
                                int latent_dim, int channels, std::mt19937_64& rng) {
    StyleProjection p;
    p.gamma = nn::ConvLayer<T>::create(params, name + ".gamma", latent_dim, channels, 1, true, rng, 1.0);
    p.beta = nn::ConvLayer<T>::create(params, name + ".beta", latent_dim, channels, 1, true, rng, 0.0);
    return p;
  }
  int latent_dim() const { return weight_dims(gamma).second; }
  int channels() const { return weight_dims(gamma).first; }

 private:
  static std::pair<int, int> weight_dims(const nn::ConvLayer<T>& l) {
    return {l.weight->shape().n, l.weight->shape().c};
  }
};

template <typename T>
struct LayerStyles {
  nn::Var<T> gamma;  // [N, c, H, W]
  nn::Var<T> beta;
};

template <typename T>
LayerStyles<T> styles(const nn::Var<T>& field, const StyleProjection<T>& proj) {
  if (field->shape().c != proj.latent_dim()) {
    throw nn::ShapeError("styles: field has " + std::to_string(field->shape().c) +
                         " channels, projection expects " + std::to_string(proj.latent_dim()));
  }
  return {proj.gamma(field), proj.beta(field)};
}

/// gamma * x + beta, elementwise.
template <typename T>
nn::Var<T> modulate(const nn::Var<T>& x, const nn::Var<T>& gamma, const nn::Var<T>& beta) {
  nn::require_same(x->shape(), gamma->shape(), "modulate gamma");
  nn::require_same(x->shape(), beta->shape(), "modulate beta");
  return nn::add(nn::mul(x, gamma), beta);
}

template <typename T>
nn::Var<T> modulate(const nn::Var<T>& x, const LayerStyles<T>& s) {
  return modulate(x, s.gamma, s.beta);
}

/// Per-image, per-channel spatial standardization without learned affine.
template <typename T>
nn::Var<T> normalize(const nn::Var<T>& x) {
  return nn::instance_norm(x, kNormEpsilon);
}

/// modulate -> conv (no bias) -> normalize.
template <typename T>
struct ModulatedConv {
  StyleProjection<T> proj;
  nn::ConvLayer<T> conv;

  static ModulatedConv create(nn::ParameterSet<T>& params, const std::string& name, int latent_dim,
                              int in, int out, int kernel, std::mt19937_64& rng,
                              nn::kernels::Padding padding) {
    ModulatedConv m;
    m.proj = StyleProjection<T>::create(params, name + ".style", latent_dim, in, rng);
    m.conv = nn::ConvLayer<T>::create(params, name + ".conv", in, out, kernel, false, rng, 0.0, padding);
    return m;
  }

  nn::Var<T> operator()(const nn::Var<T>& x, const nn::Var<T>& field) const {
    return normalize(conv(modulate(x, styles(field, proj))));
  }
};

}  // namespace sgg
