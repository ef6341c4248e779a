#include "sgg/surface.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "sgg/binary_io.hpp"
#include "sgg/errors.hpp"

namespace sgg {
namespace fs = std::filesystem;

VertexTable::VertexTable(int vertices, int channels, std::vector<float> rows)
    : vertices_(vertices), channels_(channels), rows_(std::move(rows)) {
  if (vertices_ < 2) throw std::invalid_argument("vertex table needs K >= 2");
  if (channels_ < 1) throw std::invalid_argument("vertex table needs C >= 1");
  if (rows_.size() != static_cast<std::size_t>(vertices_) * channels_) {
    throw std::invalid_argument("vertex table data size does not match K x C");
  }
  for (float v : rows_) {
    if (!std::isfinite(v)) throw std::invalid_argument("vertex table has a non-finite entry");
  }
  std::vector<int> order(vertices_);
  std::iota(order.begin(), order.end(), 0);
  auto less = [this](int a, int b) {
    auto ra = row(a);
    auto rb = row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  };
  std::sort(order.begin(), order.end(), less);
  for (int i = 1; i < vertices_; ++i) {
    auto ra = row(order[i - 1]);
    auto rb = row(order[i]);
    if (std::equal(ra.begin(), ra.end(), rb.begin())) {
      throw std::invalid_argument("vertex table rows " + std::to_string(order[i - 1]) + " and " +
                                  std::to_string(order[i]) + " are identical");
    }
  }
}

VertexTable VertexTable::random(int vertices, std::uint64_t seed, int channels) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  std::vector<float> rows(static_cast<std::size_t>(vertices) * channels);
  for (int k = 0; k < vertices; ++k) {
    std::vector<double> r(channels);
    double norm = 0;
    for (auto& v : r) {
      v = dist(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (int c = 0; c < channels; ++c) {
      rows[static_cast<std::size_t>(k) * channels + c] = static_cast<float>(r[c] / norm);
    }
  }
  return VertexTable(vertices, channels, std::move(rows));
}

std::size_t RegionMask::count(Region r) const {
  return static_cast<std::size_t>(std::count(classes.begin(), classes.end(), r));
}

void SurfaceAnnotation::validate() const {
  const int h = image.height;
  const int w = image.width;
  if (image.channels != 3) throw FormatError("image", "expected 3 channels");
  if (image.data.size() != static_cast<std::size_t>(h) * w * 3) {
    throw FormatError("image", "data size does not match shape");
  }
  for (float v : image.data) {
    if (!std::isfinite(v)) throw FormatError("image", "non-finite pixel value");
  }
  if (mask.height != h || mask.width != w ||
      mask.classes.size() != static_cast<std::size_t>(h) * w) {
    throw FormatError("mask", "shape " + std::to_string(mask.height) + "x" +
                                  std::to_string(mask.width) + " does not match image " +
                                  std::to_string(h) + "x" + std::to_string(w));
  }
  if (embeddings.height != h || embeddings.width != w ||
      embeddings.valid.size() != static_cast<std::size_t>(h) * w ||
      embeddings.data.size() != static_cast<std::size_t>(h) * w * embeddings.channels) {
    throw FormatError("embeddings", "shape does not match image");
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool body = mask.at(y, x) == Region::Body;
      const bool valid = embeddings.is_valid(y, x);
      if (body && !valid) {
        throw FormatError("mask", "BODY pixel (" + std::to_string(y) + "," + std::to_string(x) +
                                      ") has no valid embedding");
      }
      if (!body && valid) {
        throw FormatError("embeddings", "pixel (" + std::to_string(y) + "," +
                                            std::to_string(x) + ") carries an embedding but is not BODY");
      }
      if (valid) {
        for (float v : embeddings.at(y, x)) {
          if (!std::isfinite(v)) throw FormatError("embeddings", "non-finite embedding value");
        }
      }
    }
  }
}

namespace {

int nearest_unchecked(std::span<const float> e, const VertexTable& table) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < table.size(); ++k) {
    const auto r = table.row(k);
    double d = 0;
    for (std::size_t c = 0; c < e.size(); ++c) {
      const double diff = static_cast<double>(e[c]) - r[c];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

}  // namespace

int nearest_vertex(std::span<const float> e, const VertexTable& table) {
  if (static_cast<int>(e.size()) != table.channels()) {
    throw std::invalid_argument("nearest_vertex: embedding has " + std::to_string(e.size()) +
                                " channels, table has " + std::to_string(table.channels()));
  }
  for (float v : e) {
    if (!std::isfinite(v)) throw std::invalid_argument("nearest_vertex: non-finite embedding");
  }
  return nearest_unchecked(e, table);
}

std::vector<int> nearest_indices(const EmbeddingRaster& raster, const VertexTable& table) {
  if (raster.channels != table.channels()) {
    throw std::invalid_argument("discretize: raster has " + std::to_string(raster.channels) +
                                " channels, table has " + std::to_string(table.channels()));
  }
  const int pixels = raster.height * raster.width;
  for (int p = 0; p < pixels; ++p) {
    if (!raster.valid[p]) continue;
    for (float v : raster.at_pixel(p)) {
      if (!std::isfinite(v)) throw std::invalid_argument("discretize: non-finite embedding");
    }
  }
  std::vector<int> out(pixels, -1);
#pragma omp parallel for schedule(dynamic, 64)
  for (int p = 0; p < pixels; ++p) {
    if (raster.valid[p]) out[p] = nearest_unchecked(raster.at_pixel(p), table);
  }
  return out;
}

EmbeddingRaster gather_rows(const std::vector<int>& indices, int height, int width,
                            const VertexTable& table) {
  EmbeddingRaster out(height, width, table.channels());
  for (std::size_t p = 0; p < indices.size(); ++p) {
    if (indices[p] < 0) continue;
    const auto r = table.row(indices[p]);
    std::copy(r.begin(), r.end(), out.data.begin() + p * out.channels);
    out.valid[p] = 1;
  }
  return out;
}

EmbeddingRaster discretize(const EmbeddingRaster& raster, const VertexTable& table) {
  const auto idx = nearest_indices(raster, table);
  EmbeddingRaster out = raster;
  for (std::size_t p = 0; p < idx.size(); ++p) {
    if (idx[p] < 0) continue;
    const auto r = table.row(idx[p]);
    std::copy(r.begin(), r.end(), out.data.begin() + p * out.channels);
  }
  return out;
}

RegionMask dilate_mask(const RegionMask& mask, int radius) {
  if (radius < 0) throw std::invalid_argument("dilate_mask: negative radius");
  if (radius == 0) return mask;
  const int h = mask.height;
  const int w = mask.width;
  // Separable max filter of the BODY indicator with a square structuring element.
  std::vector<std::uint8_t> body(static_cast<std::size_t>(h) * w);
  for (std::size_t i = 0; i < body.size(); ++i) body[i] = mask.classes[i] == Region::Body;
  std::vector<std::uint8_t> horiz(body.size(), 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::uint8_t hit = 0;
      for (int dx = std::max(0, x - radius); dx <= std::min(w - 1, x + radius) && !hit; ++dx) {
        hit = body[static_cast<std::size_t>(y) * w + dx];
      }
      horiz[static_cast<std::size_t>(y) * w + x] = hit;
    }
  }
  RegionMask out = mask;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (out.at(y, x) != Region::Known) continue;
      for (int dy = std::max(0, y - radius); dy <= std::min(h - 1, y + radius); ++dy) {
        if (horiz[static_cast<std::size_t>(dy) * w + x]) {
          out.at(y, x) = Region::Dilated;
          break;
        }
      }
    }
  }
  return out;
}

void save_embeddings(const EmbeddingRaster& raster, const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write("EMB1", 4);
  binary::write_u32(os, static_cast<std::uint32_t>(raster.height));
  binary::write_u32(os, static_cast<std::uint32_t>(raster.width));
  binary::write_u32(os, static_cast<std::uint32_t>(raster.channels));
  const float nan = std::numeric_limits<float>::quiet_NaN();
  for (std::size_t p = 0; p < raster.valid.size(); ++p) {
    for (int c = 0; c < raster.channels; ++c) {
      binary::write_f32(os, raster.valid[p] ? raster.data[p * raster.channels + c] : nan);
    }
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

EmbeddingRaster load_embeddings(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("embeddings", "cannot open " + path.string());
  binary::Reader r(is, "embeddings");
  r.expect_magic("EMB1");
  const std::uint32_t h = r.u32();
  const std::uint32_t w = r.u32();
  const std::uint32_t c = r.u32();
  if (h == 0 || w == 0 || c == 0 || h > 65536 || w > 65536 || c > 4096) {
    throw FormatError("embeddings", "implausible header " + std::to_string(h) + "x" +
                                        std::to_string(w) + "x" + std::to_string(c));
  }
  EmbeddingRaster out(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
  for (auto& v : out.data) v = r.f32();
  for (std::size_t p = 0; p < out.valid.size(); ++p) {
    bool finite = true;
    for (std::uint32_t k = 0; k < c; ++k) finite = finite && std::isfinite(out.data[p * c + k]);
    out.valid[p] = finite;
  }
  return out;
}

void save_mask(const RegionMask& mask, const fs::path& path) {
  std::vector<std::uint8_t> codes(mask.classes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    switch (mask.classes[i]) {
      case Region::Known: codes[i] = kMaskKnown; break;
      case Region::Body: codes[i] = kMaskBody; break;
      case Region::Dilated: codes[i] = kMaskDilated; break;
    }
  }
  write_png_gray8(path, mask.height, mask.width, codes);
}

RegionMask load_mask(const fs::path& path) {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> codes;
  try {
    codes = read_png_gray8(path, h, w);
  } catch (const FormatError& e) {
    throw FormatError("mask", e.what());
  }
  RegionMask out(h, w);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    switch (codes[i]) {
      case kMaskKnown: out.classes[i] = Region::Known; break;
      case kMaskBody: out.classes[i] = Region::Body; break;
      case kMaskDilated: out.classes[i] = Region::Dilated; break;
      default:
        throw FormatError("mask", "invalid code " + std::to_string(codes[i]) + " at pixel " +
                                      std::to_string(i));
    }
  }
  return out;
}

void save_annotation(const SurfaceAnnotation& ann, const fs::path& dir, const std::string& id) {
  ann.validate();
  write_png(dir / (id + ".image.png"), ann.image);
  save_mask(ann.mask, dir / (id + ".mask.png"));
  save_embeddings(ann.embeddings, dir / (id + ".emb"));
}

SurfaceAnnotation load_annotation(const fs::path& dir, const std::string& id) {
  SurfaceAnnotation ann;
  ann.image = read_png(dir / (id + ".image.png"), 3);
  ann.mask = load_mask(dir / (id + ".mask.png"));
  ann.embeddings = load_embeddings(dir / (id + ".emb"));
  if (ann.mask.height != ann.image.height || ann.mask.width != ann.image.width) {
    throw FormatError("mask", "shape does not match image");
  }
  if (ann.embeddings.height != ann.image.height || ann.embeddings.width != ann.image.width) {
    throw FormatError("embeddings", "shape does not match image");
  }
  // Off-body contents are unspecified on disk; only BODY pixels carry embeddings.
  for (std::size_t p = 0; p < ann.embeddings.valid.size(); ++p) {
    const bool body = ann.mask.classes[p] == Region::Body;
    if (body && !ann.embeddings.valid[p]) {
      throw FormatError("mask", "BODY pixel " + std::to_string(p) + " lacks a finite embedding");
    }
    if (!body) ann.embeddings.valid[p] = 0;
  }
  ann.validate();
  return ann;
}

std::vector<std::string> list_annotation_ids(const fs::path& dir) {
  static const std::string suffix = ".image.png";
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && name.size() > suffix.size() && name.ends_with(suffix)) {
      ids.push_back(name.substr(0, name.size() - suffix.size()));
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

void save_vertex_table(const VertexTable& table, const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write("VTX1", 4);
  binary::write_u32(os, static_cast<std::uint32_t>(table.size()));
  binary::write_u32(os, static_cast<std::uint32_t>(table.channels()));
  for (float v : table.data()) binary::write_f32(os, v);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

VertexTable load_vertex_table(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("vertex table", "cannot open " + path.string());
  binary::Reader r(is, "vertex table");
  r.expect_magic("VTX1");
  const std::uint32_t k = r.u32();
  const std::uint32_t c = r.u32();
  if (k < 2 || c == 0 || k > (1u << 24) || c > 4096) {
    throw FormatError("vertex table", "implausible header K=" + std::to_string(k) +
                                          " C=" + std::to_string(c));
  }
  std::vector<float> rows(static_cast<std::size_t>(k) * c);
  for (auto& v : rows) v = r.f32();
  try {
    return VertexTable(static_cast<int>(k), static_cast<int>(c), std::move(rows));
  } catch (const std::invalid_argument& e) {
    throw FormatError("vertex table", e.what());
  }
}

}  // namespace sgg
