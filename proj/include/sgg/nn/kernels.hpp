#pragma once

// Raw tensor kernels. Every hot kernel has an OpenMP-parallel version (used by
// the autograd ops) and a plain serial reference kept for tests and benchmarks.

#include "sgg/nn/tensor.hpp"

namespace sgg::nn::kernels {

enum class Padding { Zeros, Circular };

/// Stride-1 "same" convolution with an odd square kernel taken from the weight
/// shape [Cout, Cin, k, k]. The effective weight is gain * w (equalized lr).
struct ConvSpec {
  double gain = 1.0;
  Padding padding = Padding::Zeros;
};

template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                    const ConvSpec& spec, Tensor<T>& y);
template <typename T>
void conv2d_forward_reference(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                              const ConvSpec& spec, Tensor<T>& y);

/// Accumulates into dx.
template <typename T>
void conv2d_backward_input(const Tensor<T>& dy, const Tensor<T>& w, const ConvSpec& spec,
                           Tensor<T>& dx);
template <typename T>
void conv2d_backward_input_reference(const Tensor<T>& dy, const Tensor<T>& w,
                                     const ConvSpec& spec, Tensor<T>& dx);

/// Accumulates into dw and (if non-null) dbias.
template <typename T>
void conv2d_backward_params(const Tensor<T>& x, const Tensor<T>& dy, const ConvSpec& spec,
                            Tensor<T>& dw, Tensor<T>* dbias);
template <typename T>
void conv2d_backward_params_reference(const Tensor<T>& x, const Tensor<T>& dy,
                                      const ConvSpec& spec, Tensor<T>& dw, Tensor<T>* dbias);

/// Per-(image, channel) standardization over the spatial plane. Writes the
/// normalized output and the per-plane inverse standard deviation.
template <typename T>
void instance_norm_forward(const Tensor<T>& x, double eps, Tensor<T>& y, std::vector<T>& inv_std);
template <typename T>
void instance_norm_forward_reference(const Tensor<T>& x, double eps, Tensor<T>& y,
                                     std::vector<T>& inv_std);
/// Accumulates into dx.
template <typename T>
void instance_norm_backward(const Tensor<T>& y, const std::vector<T>& inv_std,
                            const Tensor<T>& dy, Tensor<T>& dx);

template <typename T>
void avg_pool2_forward(const Tensor<T>& x, Tensor<T>& y);
template <typename T>
void avg_pool2_backward(const Tensor<T>& dy, Tensor<T>& dx);

/// Bilinear x2 upsampling (half-pixel centers). Borders clamp for Zeros
/// padding and wrap for Circular.
template <typename T>
void upsample2_forward(const Tensor<T>& x, Padding edge, Tensor<T>& y);
template <typename T>
void upsample2_backward(const Tensor<T>& dy, Padding edge, Tensor<T>& dx);

}  // namespace sgg::nn::kernels
