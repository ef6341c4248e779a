#pragma once

// Critic with a scalar real/fake logit and an FPN head regressing per-pixel
// surface embeddings, plus the masked smooth-L1 surface loss.

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "sgg/batch.hpp"
#include "sgg/nn/parameters.hpp"

namespace sgg {

struct DiscriminatorConfig {
  int height = 64;
  int width = 32;
  std::vector<int> channels{32, 64, 128, 192};  // one entry per resolution level
  int fpn_channels = 32;
  int fc_width = 192;
  int embed_dim = kEmbeddingChannels;

  int levels() const { return static_cast<int>(channels.size()); }
  void validate() const;
};

nlohmann::json to_json(const DiscriminatorConfig& c);
DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j);

template <typename T>
class Discriminator {
 public:
  Discriminator(const DiscriminatorConfig& config, std::uint64_t seed);
  Discriminator(const Discriminator&) = delete;
  Discriminator& operator=(const Discriminator&) = delete;

  const DiscriminatorConfig& config() const { return config_; }
  nn::ParameterSet<T>& params() { return params_; }
  const nn::ParameterSet<T>& params() const { return params_; }

  struct Output {
    nn::Var<T> logit;  // [N,1,1,1]
    nn::Var<T> e_hat;  // [N,C,H,W]
  };
  /// image [N,3,H,W] in [-1,1]; mask_planes [N,3,H,W] one-hot regions.
  Output forward(const nn::Var<T>& image, const nn::Tensor<T>& mask_planes) const;

 private:
  DiscriminatorConfig config_;
  nn::ParameterSet<T> params_;
  nn::ConvLayer<T> stem_;
  std::vector<nn::ConvLayer<T>> conv_a_;
  std::vector<nn::ConvLayer<T>> conv_b_;  // level l -> l + 1 before pooling
  nn::ConvLayer<T> fc1_, fc2_;
  std::vector<nn::ConvLayer<T>> lateral_, fuse_;
  nn::ConvLayer<T> head_;
};

inline constexpr double kSmoothL1Beta = 1.0;

/// 0.5 d^2 / beta for |d| < beta, else |d| - 0.5 beta.
double smooth_l1(double d, double beta = kSmoothL1Beta);
double smooth_l1_grad(double d, double beta = kSmoothL1Beta);

template <typename T>
struct SurfaceLoss {
  nn::Var<T> loss;        // scalar
  bool degenerate = false;  // no BODY pixels; loss is a constant 0
};

/// Smooth-L1 summed over channels and averaged over all BODY pixels of the
/// batch; every other pixel contributes neither value nor gradient.
template <typename T>
SurfaceLoss<T> surface_loss(const nn::Var<T>& e_hat, const SurfaceBatch<T>& batch,
                            double beta = kSmoothL1Beta);

/// Surface loss of the discriminator's prediction on a generated image. Freeze
/// the discriminator parameters to keep their gradients untouched.
template <typename T>
SurfaceLoss<T> generator_surface_loss(const Discriminator<T>& d, const nn::Var<T>& generated,
                                      const SurfaceBatch<T>& batch);

}  // namespace sgg
