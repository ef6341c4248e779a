#pragma once

// The surface-adaptive mapping network: per-pixel intermediate latents from the
// surface embedding (and, in the variational form, a latent code z).

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sgg/batch.hpp"
#include "sgg/nn/parameters.hpp"
#include "sgg/surface.hpp"

namespace sgg {

struct MappingConfig {
  int depth = 6;        // residual blocks; 0 means one affine projection
  int width = 512;
  int out_dim = 512;    // D
  bool variational = true;
  int z_dim = 512;
  int embed_dim = kEmbeddingChannels;

  int input_dim() const { return embed_dim + (variational ? z_dim : 0); }
  void validate() const;
};

/// Per-pixel latent field, [N, D, H, W].
template <typename T>
using StyleField = nn::Tensor<T>;

template <typename T>
class MappingNetwork {
 public:
  MappingNetwork(const MappingConfig& config, nn::ParameterSet<T>& params,
                 const std::string& prefix, std::mt19937_64& rng);

  const MappingConfig& config() const { return config_; }

  /// Pixel list [1, input_dim, P, 1] -> [1, D, P, 1].
  nn::Var<T> forward_pixels(const nn::Var<T>& inputs) const;

  /// Latent for one embedding; z must be empty unless the config is variational.
  std::vector<T> map_core(std::span<const T> e, std::span<const T> z) const;

  struct FieldResult {
    nn::Var<T> field;  // [N, D, H, W]
    nn::Var<T> body;   // [1, D, P, 1], BODY pixels in image-major raster order; null if P = 0
  };
  /// BODY pixels get f(e_i[, z]); KNOWN get omega_known; DILATED get omega_dilated.
  /// z is [N, z_dim, 1, 1] when variational, otherwise ignored.
  FieldResult map_field(const SurfaceBatch<T>& batch, const nn::Tensor<T>& z) const;

  /// Latents of every table vertex for one z, as [1, D, K, 1].
  nn::Tensor<T> map_vertices(const VertexTable& table, std::span<const T> z) const;

  nn::Var<T> omega_known;    // [1, D, 1, 1]
  nn::Var<T> omega_dilated;  // [1, D, 1, 1]

  /// Running mean of BODY latents used by truncation.
  nn::Tensor<T> omega_mean;  // [1, D, 1, 1]
  std::uint64_t mean_updates = 0;

  /// new_mean = decay * old + (1 - decay) * mean over the P body latents.
  void update_mean(const nn::Tensor<T>& body, double decay);

 private:
  MappingConfig config_;
  nn::ConvLayer<T> in_proj_;
  std::vector<nn::ConvLayer<T>> blocks_;
  nn::ConvLayer<T> out_proj_;  // unused when depth == 0
};

/// Assembles a [N, D, H, W] field from BODY latents and the two region latents.
template <typename T>
nn::Var<T> assemble_field(const nn::Var<T>& body, const nn::Var<T>& omega_known,
                          const nn::Var<T>& omega_dilated, const std::vector<Region>& regions,
                          int n, int height, int width);

/// Per-pixel vertex indices of a discretized raster (-1 off-body). Throws
/// PreconditionError when a valid embedding is not exactly a table row.
std::vector<int> discretized_indices(const EmbeddingRaster& raster, const VertexTable& table);

/// Field from precomputed vertex latents ([1, D, K, 1]) and per-pixel indices
/// for a single image.
template <typename T>
StyleField<T> gather_field(const nn::Tensor<T>& vertex_omega, const std::vector<int>& indices,
                           const RegionMask& mask, const nn::Tensor<T>& omega_known,
                           const nn::Tensor<T>& omega_dilated);

/// BODY latents move toward `mean` by factor t (t = 1 identity, t = 0 collapse).
template <typename T>
nn::Var<T> truncate(const nn::Var<T>& field, const std::vector<Region>& regions,
                    const nn::Tensor<T>& mean, double t);

/// Evenly spaced linear interpolation with exact endpoints.
std::vector<std::vector<float>> interpolate_z(std::span<const float> z0,
                                              std::span<const float> z1, int steps);

}  // namespace sgg
