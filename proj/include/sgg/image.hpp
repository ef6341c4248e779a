#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace sgg {

/// H x W x channels raster, channel-interleaved, values nominally in [-1, 1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, int c = 3, float fill = 0.0f)
      : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

  std::size_t index(int y, int x, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  float& at(int y, int x, int c = 0) { return data[index(y, x, c)]; }
  float at(int y, int x, int c = 0) const { return data[index(y, x, c)]; }
  std::span<float> pixel(int y, int x) { return {data.data() + index(y, x), std::size_t(channels)}; }
  std::span<const float> pixel(int y, int x) const {
    return {data.data() + index(y, x), std::size_t(channels)};
  }
  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  bool operator==(const Image&) const = default;
};

/// [-1, 1] -> {0..255}, rounding to nearest and clamping.
std::uint8_t to_byte(float v);
float from_byte(std::uint8_t b);

/// 8-bit PNG, gray (1 channel) or RGB (3 channels). Values mapped through to_byte.
void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path, int expected_channels);

/// Raw 8-bit plane I/O for masks stored as codes rather than intensities.
void write_png_gray8(const std::filesystem::path& path, int height, int width,
                     std::span<const std::uint8_t> pixels);
std::vector<std::uint8_t> read_png_gray8(const std::filesystem::path& path, int& height,
                                         int& width);

/// Bilinear resize with half-pixel centers and clamped borders.
Image resize_bilinear(const Image& src, int height, int width);
/// Source coordinate sampled by output coordinate `o` of a nearest-neighbour
/// resize from `src_size` to `dst_size` samples (half-pixel centers).
int nearest_source(int o, int dst_size, int src_size);
/// Nearest-neighbour resize with half-pixel centers.
Image resize_nearest(const Image& src, int height, int width);

}  // namespace sgg
