#pragma once

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "sgg/surface.hpp"

namespace sgg::testing {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("sgg_test_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

/// Random image, an elliptical BODY blob (embeddings drawn from `table` rows when
/// given, else random), dilated by one pixel.
inline SurfaceAnnotation toy_annotation(int h, int w, std::uint64_t seed,
                                        const VertexTable* table = nullptr) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<float> n;
  SurfaceAnnotation a;
  a.image = Image(h, w, 3);
  for (auto& v : a.image.data) v = static_cast<float>(2 * u(rng) - 1);
  a.embeddings = EmbeddingRaster(h, w);
  a.mask = RegionMask(h, w);
  const double cy = h * (0.3 + 0.4 * u(rng)), cx = w * (0.3 + 0.4 * u(rng));
  const double ry = h * (0.15 + 0.15 * u(rng)), rx = w * (0.15 + 0.15 * u(rng));
  std::uniform_int_distribution<int> pick(0, table ? table->size() - 1 : 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dy = (y + 0.5 - cy) / ry, dx = (x + 0.5 - cx) / rx;
      if (dy * dy + dx * dx > 1) continue;
      a.mask.at(y, x) = Region::Body;
      a.embeddings.valid[a.embeddings.pixel_index(y, x)] = 1;
      auto e = a.embeddings.at(y, x);
      if (table) {
        auto row = table->row(pick(rng));
        std::copy(row.begin(), row.end(), e.begin());
      } else {
        for (auto& v : e) v = 0.3f * n(rng);
      }
    }
  }
  a.mask = dilate_mask(a.mask, 1);
  return a;
}

/// Applies one pixel permutation to every plane of an annotation.
inline SurfaceAnnotation permute_pixels(const SurfaceAnnotation& a, const std::vector<int>& perm) {
  SurfaceAnnotation b = a;
  const int c = a.embeddings.channels;
  for (std::size_t p = 0; p < perm.size(); ++p) {
    const std::size_t q = perm[p];
    for (int ch = 0; ch < 3; ++ch) b.image.data[p * 3 + ch] = a.image.data[q * 3 + ch];
    for (int ch = 0; ch < c; ++ch) b.embeddings.data[p * c + ch] = a.embeddings.data[q * c + ch];
    b.embeddings.valid[p] = a.embeddings.valid[q];
    b.mask.classes[p] = a.mask.classes[q];
  }
  return b;
}

inline std::vector<int> random_permutation(int n, std::uint64_t seed) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

}  // namespace sgg::testing
