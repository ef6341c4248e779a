#pragma once

// U-Net generator with surface-adaptive modulation at every convolution.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgg/batch.hpp"
#include "sgg/mapping.hpp"
#include "sgg/model.hpp"
#include "sgg/modulation.hpp"

namespace sgg {

enum class GeneratorMode { Inpaint, DecoderOnly };

/// VSam: the mapping network sees (e, z). Sam: the mapping network sees e only
/// and z enters as a learned spatial map concatenated at the bottleneck.
enum class ModulationMode { Sam, VSam };

struct GeneratorConfig {
  int height = 64;
  int width = 32;
  std::vector<int> channels{24, 48, 96, 192};  // one entry per resolution level
  GeneratorMode mode = GeneratorMode::Inpaint;
  ModulationMode modulation = ModulationMode::VSam;
  int z_dim = 64;
  MappingConfig mapping{.depth = 2, .width = 128, .out_dim = 64, .variational = true, .z_dim = 64};
  nn::kernels::Padding padding = nn::kernels::Padding::Zeros;

  int levels() const { return static_cast<int>(channels.size()); }
  int input_channels() const { return mode == GeneratorMode::Inpaint ? 6 : 3; }
  /// Mapping config with `variational` and `z_dim` derived from the modulation mode.
  MappingConfig effective_mapping() const;
  void validate() const;

  static GeneratorConfig desk();
  /// 288x160 shapes sized to the published parameter counts (wiring check only).
  static GeneratorConfig paper_baseline();
  static GeneratorConfig paper_config_e();
};

nlohmann::json to_json(const GeneratorConfig& c);
GeneratorConfig generator_config_from_json(const nlohmann::json& j);

template <typename T>
class Generator {
 public:
  Generator(const GeneratorConfig& config, std::uint64_t seed);
  Generator(const Generator&) = delete;
  Generator& operator=(const Generator&) = delete;

  const GeneratorConfig& config() const { return config_; }
  nn::ParameterSet<T>& params() { return params_; }
  const nn::ParameterSet<T>& params() const { return params_; }
  MappingNetwork<T>& mapping() { return *mapping_; }
  const MappingNetwork<T>& mapping() const { return *mapping_; }
  int z_dim() const { return config_.z_dim; }

  struct Output {
    nn::Var<T> raw;        // [N,3,H,W] in (-1, 1)
    nn::Var<T> composite;  // M*I + (1-M)*raw; raw itself in decoder-only mode
    nn::Var<T> field;      // latent field after truncation
    nn::Var<T> body_omega; // untruncated BODY latents, null without BODY pixels
  };

  /// z is [N, z_dim, 1, 1]. truncation < 1 requires a populated latent mean.
  Output forward(const SurfaceBatch<T>& batch, const nn::Tensor<T>& z, double truncation = 1.0) const;

  /// Synthesis from a precomputed latent field (shape [N, D, H, W]).
  Output synthesize(const SurfaceBatch<T>& batch, const nn::Var<T>& field,
                    const nn::Tensor<T>& z) const;

 private:
  struct Level {
    ModulatedConv<T> a;
    ModulatedConv<T> b;
  };
  GeneratorConfig config_;
  nn::ParameterSet<T> params_;
  std::unique_ptr<MappingNetwork<T>> mapping_;
  std::vector<Level> encoder_;
  std::vector<Level> decoder_;  // decoder_[l] produces level l, l = 0..levels-2
  StyleProjection<T> out_style_;
  nn::ConvLayer<T> out_conv_;
  nn::ConvLayer<T> z_embed_;  // Sam mode only
};

/// Adapts a float generator to the ImageModel interface.
class GeneratorModel : public ImageModel {
 public:
  explicit GeneratorModel(const Generator<float>& g) : g_(g) {}
  int z_dim() const override { return g_.z_dim(); }
  int height() const override { return g_.config().height; }
  int width() const override { return g_.config().width; }
  Image generate(const SurfaceAnnotation& ann, std::span<const float> z,
                 double truncation) const override;

 private:
  const Generator<float>& g_;
};

}  // namespace sgg
