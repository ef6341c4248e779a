#pragma once

// Invariance PSNR study, diversity proxy, oracle scoring and image grids.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sgg/discriminator.hpp"
#include "sgg/model.hpp"
#include "sgg/synthetic.hpp"

namespace sgg {

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(4 / MSE) over [-1, 1] images, capped at 100 dB. With `valid`,
/// only pixels where it is nonzero count; no valid pixel is an error.
double psnr(const Image& a, const Image& b, const std::vector<std::uint8_t>* valid = nullptr);

enum class Family { Translation, Rotation, Hflip };
std::string to_string(Family f);
Family parse_family(const std::string& s);

/// Inverse map of a spatial transform: output pixel-center coordinate (y, x)
/// to the source coordinate, in pixel units where pixel k spans [k, k + 1).
struct Warp {
  std::function<std::pair<double, double>(double, double)> source;
};

Warp translation_warp(int dy, int dx);
Warp rotation_warp(double degrees, int height, int width);
Warp hflip_warp(int width);
/// A nonidentity transform of the family: integer shifts up to 1/8 of each side,
/// rotations within +-90 degrees, or the mirror.
Warp random_warp(Family f, int height, int width, std::mt19937_64& rng);

struct Warped {
  Image image;
  std::vector<std::uint8_t> valid;  // 1 where the source lies on the canvas
};

/// Bilinear resampling of an image.
Warped warp_image(const Image& img, const Warp& t);
/// Image bilinear; embeddings and mask nearest. Off-canvas pixels become KNOWN,
/// zero-valued and without embedding.
SurfaceAnnotation warp_annotation(const SurfaceAnnotation& a, const Warp& t,
                                  std::vector<std::uint8_t>* valid = nullptr);

struct InvarianceResult {
  Family family = Family::Translation;
  double mean_psnr = 0;
  int samples = 0;
  std::uint64_t seed = 0;
  std::vector<double> values;
};

/// Mean PSNR between t(G(A, z)) and G(t(A), z) over pixels valid under t,
/// using raw generator outputs. Sample i uses dataset[i % size] and a fresh (t, z).
InvarianceResult invariance_study(const ImageModel& model,
                                  const std::vector<SurfaceAnnotation>& dataset, Family family,
                                  int n_samples, std::uint64_t seed, double truncation = 1.0);

struct InvarianceReport {
  std::vector<InvarianceResult> families;
  nlohmann::json to_json() const;
};

/// Mean over pairs of the mean absolute pixel distance on BODY and DILATED
/// between n samples with independent z.
double diversity_proxy(const ImageModel& model, const SurfaceAnnotation& ann, int n = 6,
                       std::uint64_t seed = 0, double truncation = 1.0);

/// Mean PSNR on BODY pixels of the raw output against oracle_texture.
double oracle_body_psnr(const ImageModel& model, const std::vector<SurfaceAnnotation>& samples,
                        const TextureMap& texture, std::uint64_t seed = 0, double truncation = 1.0);

/// Mean per-pixel smooth-L1 embedding error of the discriminator on real samples.
double discriminator_surface_error(const Discriminator<float>& d,
                                   const std::vector<SurfaceAnnotation>& samples);

/// Row-major tiling with `columns` per row (0: ceil(sqrt(n))).
Image tile_grid(const std::vector<Image>& images, int columns = 0);
void emit_grid(const std::vector<Image>& images, const std::filesystem::path& path, int columns = 0);

}  // namespace sgg
