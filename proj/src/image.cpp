#include "sgg/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "sgg/errors.hpp"

namespace sgg {

std::uint8_t to_byte(float v) {
  const float scaled = std::round((v + 1.0f) * 127.5f);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0f, 255.0f));
}

float from_byte(std::uint8_t b) { return static_cast<float>(b) / 127.5f - 1.0f; }

namespace {

void write_raw(const std::filesystem::path& path, int height, int width, int channels,
               const std::uint8_t* pixels) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, pixels, 0, nullptr)) {
    throw std::runtime_error("cannot write " + path.string() + ": " + img.message);
  }
}

std::vector<std::uint8_t> read_raw(const std::filesystem::path& path, int channels, int& height,
                                   int& width) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw FormatError("image", "cannot read " + path.string() + ": " + img.message);
  }
  img.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw FormatError("image", "cannot decode " + path.string() + ": " + img.message);
  }
  height = static_cast<int>(img.height);
  width = static_cast<int>(img.width);
  return buf;
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw std::invalid_argument("write_png: unsupported channel count " +
                                std::to_string(image.channels));
  }
  std::vector<std::uint8_t> bytes(image.data.size());
  std::transform(image.data.begin(), image.data.end(), bytes.begin(), to_byte);
  write_raw(path, image.height, image.width, image.channels, bytes.data());
}

Image read_png(const std::filesystem::path& path, int expected_channels) {
  int h = 0;
  int w = 0;
  const auto bytes = read_raw(path, expected_channels, h, w);
  Image out(h, w, expected_channels);
  std::transform(bytes.begin(), bytes.end(), out.data.begin(), from_byte);
  return out;
}

void write_png_gray8(const std::filesystem::path& path, int height, int width,
                     std::span<const std::uint8_t> pixels) {
  if (pixels.size() != static_cast<std::size_t>(height) * width) {
    throw std::invalid_argument("write_png_gray8: pixel count mismatch");
  }
  write_raw(path, height, width, 1, pixels.data());
}

std::vector<std::uint8_t> read_png_gray8(const std::filesystem::path& path, int& height,
                                         int& width) {
  return read_raw(path, 1, height, width);
}

Image resize_bilinear(const Image& src, int height, int width) {
  if (height <= 0 || width <= 0 || src.height <= 0 || src.width <= 0) {
    throw std::invalid_argument("resize_bilinear: empty size");
  }
  Image out(height, width, src.channels);
  const double sy = static_cast<double>(src.height) / height;
  const double sx = static_cast<double>(src.width) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < src.channels; ++c) {
        const double v = (1 - wy) * ((1 - wx) * src.at(y0, x0, c) + wx * src.at(y0, x1, c)) +
                         wy * ((1 - wx) * src.at(y1, x0, c) + wx * src.at(y1, x1, c));
        out.at(y, x, c) = static_cast<float>(v);
      }
    }
  }
  return out;
}

int nearest_source(int o, int dst_size, int src_size) {
  const int s = static_cast<int>(std::floor((o + 0.5) * src_size / static_cast<double>(dst_size)));
  return std::clamp(s, 0, src_size - 1);
}

Image resize_nearest(const Image& src, int height, int width) {
  Image out(height, width, src.channels);
  for (int y = 0; y < height; ++y) {
    const int sy = nearest_source(y, height, src.height);
    for (int x = 0; x < width; ++x) {
      const int sx = nearest_source(x, width, src.width);
      for (int c = 0; c < src.channels; ++c) out.at(y, x, c) = src.at(sy, sx, c);
    }
  }
  return out;
}

}  // namespace sgg
