#pragma once

// Procedural dataset whose BODY texture is a known function of the embedding.

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "sgg/surface.hpp"

namespace sgg {

struct SyntheticSpec {
  int height = 64;
  int width = 32;
  std::uint64_t table_seed = 1;
  int vertices = 1024;  // a perfect square: the table is a sqrt(K) x sqrt(K) (u, v) grid
  std::uint64_t texture_seed = 2;
  std::uint64_t palette_seed = 3;
  int samples = 2000;
  int blobs_min = 2;
  int blobs_max = 4;
  int dilation = 2;
  double texture_gain = 1.2;
  double frequency = 0.8;  // std of the table's (u, v) frequencies, cycles per body

  void validate() const;
};

nlohmann::json to_json(const SyntheticSpec& s);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);

/// Smooth table: row (i, j) is a unit-norm random Fourier feature of grid
/// point (u, v) = (i, j) / (g - 1).
VertexTable synthetic_table(const SyntheticSpec& spec);

/// The fixed map T(e) = tanh(gain * A e), A a seeded 3 x C matrix.
class TextureMap {
 public:
  TextureMap(std::uint64_t seed, double gain, int channels = kEmbeddingChannels);
  explicit TextureMap(const SyntheticSpec& spec) : TextureMap(spec.texture_seed, spec.texture_gain) {}
  void apply(std::span<const float> e, std::span<float> rgb) const;

 private:
  int channels_;
  std::vector<double> a_;  // 3 x C, gain folded in
};

/// Deterministic per (spec, index). BODY colors are T(e) exactly; the DILATED
/// ring carries a per-sample random color; the rest is a flat scene with shapes.
SurfaceAnnotation render_sample(const SyntheticSpec& spec, const VertexTable& table,
                                const TextureMap& texture, int index);

/// Copy of the image with every BODY pixel replaced by T(e).
Image oracle_texture(const SurfaceAnnotation& ann, const TextureMap& texture);

/// Writes spec.json, table.vtx and spec.samples annotations named 000000, 000001, ...
void write_dataset(const SyntheticSpec& spec, const std::filesystem::path& dir);

}  // namespace sgg
