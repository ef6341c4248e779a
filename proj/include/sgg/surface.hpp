#pragma once

// Canonical-surface vertex tables, per-pixel embedding rasters, tri-state
// region masks, and the on-disk annotation format.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sgg/image.hpp"

namespace sgg {

inline constexpr int kEmbeddingChannels = 16;

/// K x C table of canonical-surface vertex embeddings.
class VertexTable {
 public:
  /// Validates K >= 2, finite rows, and pairwise-distinct rows.
  VertexTable(int vertices, int channels, std::vector<float> rows);

  /// Seeded random table with unit-norm rows.
  static VertexTable random(int vertices, std::uint64_t seed, int channels = kEmbeddingChannels);

  int size() const { return vertices_; }
  int channels() const { return channels_; }
  std::span<const float> row(int k) const {
    return {rows_.data() + static_cast<std::size_t>(k) * channels_, std::size_t(channels_)};
  }
  const std::vector<float>& data() const { return rows_; }

 private:
  int vertices_;
  int channels_;
  std::vector<float> rows_;
};

/// H x W x C embedding raster plus validity plane. Contents at invalid pixels
/// are unspecified.
struct EmbeddingRaster {
  int height = 0;
  int width = 0;
  int channels = kEmbeddingChannels;
  std::vector<float> data;
  std::vector<std::uint8_t> valid;

  EmbeddingRaster() = default;
  EmbeddingRaster(int h, int w, int c = kEmbeddingChannels)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, 0.0f),
        valid(static_cast<std::size_t>(h) * w, 0) {}

  std::size_t pixel_index(int y, int x) const { return static_cast<std::size_t>(y) * width + x; }
  std::span<float> at(int y, int x) {
    return {data.data() + pixel_index(y, x) * channels, std::size_t(channels)};
  }
  std::span<const float> at(int y, int x) const {
    return {data.data() + pixel_index(y, x) * channels, std::size_t(channels)};
  }
  std::span<const float> at_pixel(std::size_t p) const {
    return {data.data() + p * channels, std::size_t(channels)};
  }
  bool is_valid(int y, int x) const { return valid[pixel_index(y, x)] != 0; }
};

enum class Region : std::uint8_t { Known = 0, Body = 1, Dilated = 2 };

/// Tri-state mask: KNOWN context, BODY (has an embedding), DILATED (to be
/// generated, no embedding). The inpainting mask M is 1 on KNOWN only.
struct RegionMask {
  int height = 0;
  int width = 0;
  std::vector<Region> classes;

  RegionMask() = default;
  RegionMask(int h, int w, Region fill = Region::Known)
      : height(h), width(w), classes(static_cast<std::size_t>(h) * w, fill) {}

  Region& at(int y, int x) { return classes[static_cast<std::size_t>(y) * width + x]; }
  Region at(int y, int x) const { return classes[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count(Region r) const;
  bool operator==(const RegionMask&) const = default;
};

/// On-disk mask codes.
inline constexpr std::uint8_t kMaskKnown = 255;
inline constexpr std::uint8_t kMaskDilated = 128;
inline constexpr std::uint8_t kMaskBody = 0;

struct SurfaceAnnotation {
  Image image;  // H x W x 3 in [-1, 1]
  EmbeddingRaster embeddings;
  RegionMask mask;

  int height() const { return image.height; }
  int width() const { return image.width; }
  /// Throws FormatError naming the first inconsistent plane.
  void validate() const;
};

/// Index of the nearest table row in Euclidean distance; ties go to the smaller index.
int nearest_vertex(std::span<const float> e, const VertexTable& table);

/// Nearest-row index per pixel, -1 where the raster is invalid.
std::vector<int> nearest_indices(const EmbeddingRaster& raster, const VertexTable& table);

/// Replaces every valid embedding with its nearest table row.
EmbeddingRaster discretize(const EmbeddingRaster& raster, const VertexTable& table);

/// Marks KNOWN pixels within Chebyshev distance `radius` of a BODY pixel as DILATED.
RegionMask dilate_mask(const RegionMask& mask, int radius);

/// Per-pixel table rows for an index plane (-1 -> invalid pixel).
EmbeddingRaster gather_rows(const std::vector<int>& indices, int height, int width,
                            const VertexTable& table);

void save_annotation(const SurfaceAnnotation& ann, const std::filesystem::path& dir,
                     const std::string& id);
SurfaceAnnotation load_annotation(const std::filesystem::path& dir, const std::string& id);
/// Sorted ids S of every `S.image.png` in a directory.
std::vector<std::string> list_annotation_ids(const std::filesystem::path& dir);

void save_embeddings(const EmbeddingRaster& raster, const std::filesystem::path& path);
/// Validity is not stored on disk; the result has every pixel with finite data marked valid.
EmbeddingRaster load_embeddings(const std::filesystem::path& path);

void save_mask(const RegionMask& mask, const std::filesystem::path& path);
RegionMask load_mask(const std::filesystem::path& path);

void save_vertex_table(const VertexTable& table, const std::filesystem::path& path);
VertexTable load_vertex_table(const std::filesystem::path& path);

}  // namespace sgg
