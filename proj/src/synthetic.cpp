#include "sgg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

namespace sgg {

namespace {

int grid_side(int vertices) {
  const int g = static_cast<int>(std::lround(std::sqrt(static_cast<double>(vertices))));
  return g * g == vertices ? g : -1;
}

std::mt19937_64 sample_rng(const SyntheticSpec& spec, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(spec.palette_seed),
                    static_cast<std::uint32_t>(spec.palette_seed >> 32),
                    static_cast<std::uint32_t>(index), 0x5eedu};
  return std::mt19937_64(seq);
}

struct Rgb {
  float r, g, b;
};

std::vector<Rgb> palette(std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<float> u(-0.9f, 0.9f);
  std::vector<Rgb> p(8);
  for (auto& c : p) c = {u(rng), u(rng), u(rng)};
  return p;
}

void fill_pixel(Image& img, int y, int x, Rgb c) {
  img.at(y, x, 0) = c.r;
  img.at(y, x, 1) = c.g;
  img.at(y, x, 2) = c.b;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (height < 8 || width < 8) throw std::invalid_argument("synthetic resolution must be >= 8x8");
  if (vertices < 4 || grid_side(vertices) < 0) {
    throw std::invalid_argument("synthetic vertex count must be a perfect square >= 4, got " +
                                std::to_string(vertices));
  }
  if (samples < 0) throw std::invalid_argument("sample count must be >= 0");
  if (blobs_min < 1 || blobs_max < blobs_min) throw std::invalid_argument("invalid blob-count range");
  if (dilation < 0) throw std::invalid_argument("dilation must be >= 0");
}

nlohmann::json to_json(const SyntheticSpec& s) {
  return {{"height", s.height},
          {"width", s.width},
          {"table_seed", s.table_seed},
          {"vertices", s.vertices},
          {"texture_seed", s.texture_seed},
          {"palette_seed", s.palette_seed},
          {"samples", s.samples},
          {"blobs", {s.blobs_min, s.blobs_max}},
          {"dilation", s.dilation},
          {"texture_gain", s.texture_gain},
          {"frequency", s.frequency},
          {"latent", "per-sample uniform random RGB color on the DILATED ring"}};
}

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  s.height = j.value("height", s.height);
  s.width = j.value("width", s.width);
  s.table_seed = j.value("table_seed", s.table_seed);
  s.vertices = j.value("vertices", s.vertices);
  s.texture_seed = j.value("texture_seed", s.texture_seed);
  s.palette_seed = j.value("palette_seed", s.palette_seed);
  s.samples = j.value("samples", s.samples);
  if (j.contains("blobs")) {
    s.blobs_min = j["blobs"].at(0).get<int>();
    s.blobs_max = j["blobs"].at(1).get<int>();
  }
  s.dilation = j.value("dilation", s.dilation);
  s.texture_gain = j.value("texture_gain", s.texture_gain);
  s.frequency = j.value("frequency", s.frequency);
  s.validate();
  return s;
}

VertexTable synthetic_table(const SyntheticSpec& spec) {
  spec.validate();
  const int g = grid_side(spec.vertices);
  const int c = kEmbeddingChannels;
  std::mt19937_64 rng(spec.table_seed);
  std::normal_distribution<double> freq(0.0, spec.frequency);
  std::uniform_real_distribution<double> phase(0.0, 2 * std::numbers::pi);
  std::vector<double> fu(c), fv(c), ph(c);
  for (int i = 0; i < c; ++i) {
    fu[i] = freq(rng);
    fv[i] = freq(rng);
    ph[i] = phase(rng);
  }
  std::vector<float> rows(static_cast<std::size_t>(spec.vertices) * c);
  for (int i = 0; i < g; ++i) {
    for (int j = 0; j < g; ++j) {
      const double v = static_cast<double>(i) / (g - 1);
      const double u = static_cast<double>(j) / (g - 1);
      std::vector<double> e(c);
      double norm = 0;
      for (int k = 0; k < c; ++k) {
        e[k] = std::cos(2 * std::numbers::pi * (fu[k] * u + fv[k] * v) + ph[k]);
        norm += e[k] * e[k];
      }
      norm = std::sqrt(norm);
      float* dst = rows.data() + (static_cast<std::size_t>(i) * g + j) * c;
      for (int k = 0; k < c; ++k) dst[k] = static_cast<float>(e[k] / norm);
    }
  }
  return VertexTable(spec.vertices, c, std::move(rows));
}

TextureMap::TextureMap(std::uint64_t seed, double gain, int channels)
    : channels_(channels), a_(static_cast<std::size_t>(3) * channels) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : a_) v = gain * n(rng);
}

void TextureMap::apply(std::span<const float> e, std::span<float> rgb) const {
  if (static_cast<int>(e.size()) != channels_ || rgb.size() != 3) {
    throw std::invalid_argument("TextureMap::apply: dimension mismatch");
  }
  for (int o = 0; o < 3; ++o) {
    double acc = 0;
    for (int k = 0; k < channels_; ++k) acc += a_[o * channels_ + k] * e[k];
    rgb[o] = static_cast<float>(std::tanh(acc));
  }
}

SurfaceAnnotation render_sample(const SyntheticSpec& spec, const VertexTable& table,
                                const TextureMap& texture, int index) {
  spec.validate();
  if (index < 0 || index >= spec.samples) {
    throw std::out_of_range("sample index " + std::to_string(index) + " outside [0, " +
                            std::to_string(spec.samples) + ")");
  }
  const int h = spec.height, w = spec.width;
  const int g = grid_side(spec.vertices);
  if (table.size() != spec.vertices) throw std::invalid_argument("table does not match spec");
  auto rng = sample_rng(spec, index);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
  const auto pal = palette(spec.palette_seed);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(pal.size()) - 1);

  SurfaceAnnotation a;
  a.image = Image(h, w, 3);
  a.embeddings = EmbeddingRaster(h, w);
  a.mask = RegionMask(h, w);

  const Rgb bg = pal[pick(rng)];
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) fill_pixel(a.image, y, x, bg);
  const int shapes = 2 + static_cast<int>(u01(rng) * 3);
  for (int s = 0; s < shapes; ++s) {
    const Rgb c = pal[pick(rng)];
    const bool circle = u01(rng) < 0.5;
    const double cy = uni(0, h), cx = uni(0, w);
    const double ry = uni(0.08, 0.25) * h, rx = uni(0.1, 0.4) * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double dy = (y + 0.5 - cy) / ry, dx = (x + 0.5 - cx) / rx;
        const bool in = circle ? dy * dy + dx * dx <= 1 : std::abs(dy) <= 1 && std::abs(dx) <= 1;
        if (in) fill_pixel(a.image, y, x, c);
      }
  }

  // Body: a torso ellipse plus limb ellipses around it, kept clear of the border.
  const int blobs = spec.blobs_min + static_cast<int>(u01(rng) * (spec.blobs_max - spec.blobs_min + 1));
  const double ty = uni(0.38, 0.62) * h, tx = uni(0.38, 0.62) * w;
  struct Ellipse {
    double cy, cx, ry, rx;
  };
  std::vector<Ellipse> parts{{ty, tx, uni(0.14, 0.22) * h, uni(0.14, 0.26) * w}};
  for (int b = 1; b < blobs; ++b) {
    parts.push_back({ty + uni(-0.25, 0.25) * h, tx + uni(-0.28, 0.28) * w, uni(0.06, 0.14) * h,
                     uni(0.07, 0.16) * w});
  }
  const int margin = spec.dilation + 1;
  int y0 = h, y1 = -1, x0 = w, x1 = -1;
  for (int y = margin; y < h - margin; ++y) {
    for (int x = margin; x < w - margin; ++x) {
      for (const auto& e : parts) {
        const double dy = (y + 0.5 - e.cy) / e.ry, dx = (x + 0.5 - e.cx) / e.rx;
        if (dy * dy + dx * dx <= 1) {
          a.mask.at(y, x) = Region::Body;
          y0 = std::min(y0, y);
          y1 = std::max(y1, y);
          x0 = std::min(x0, x);
          x1 = std::max(x1, x);
          break;
        }
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (a.mask.at(y, x) != Region::Body) continue;
      const double v = static_cast<double>(y - y0) / std::max(1, y1 - y0);
      const double u = static_cast<double>(x - x0) / std::max(1, x1 - x0);
      const int i = static_cast<int>(std::lround(v * (g - 1)));
      const int j = static_cast<int>(std::lround(u * (g - 1)));
      const auto row = table.row(i * g + j);
      std::copy(row.begin(), row.end(), a.embeddings.at(y, x).begin());
      a.embeddings.valid[a.embeddings.pixel_index(y, x)] = 1;
      texture.apply(row, a.image.pixel(y, x));
    }
  }
  a.mask = dilate_mask(a.mask, spec.dilation);
  const Rgb ring{static_cast<float>(uni(-1, 1)), static_cast<float>(uni(-1, 1)),
                 static_cast<float>(uni(-1, 1))};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (a.mask.at(y, x) == Region::Dilated) fill_pixel(a.image, y, x, ring);
  a.validate();
  return a;
}

Image oracle_texture(const SurfaceAnnotation& ann, const TextureMap& texture) {
  Image out = ann.image;
  for (int y = 0; y < ann.height(); ++y)
    for (int x = 0; x < ann.width(); ++x)
      if (ann.mask.at(y, x) == Region::Body) texture.apply(ann.embeddings.at(y, x), out.pixel(y, x));
  return out;
}

void write_dataset(const SyntheticSpec& spec, const std::filesystem::path& dir) {
  spec.validate();
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "spec.json");
    if (!os) throw std::runtime_error("cannot write " + (dir / "spec.json").string());
    os << to_json(spec).dump(2) << "\n";
  }
  const auto table = synthetic_table(spec);
  save_vertex_table(table, dir / "table.vtx");
  const TextureMap texture(spec);
  for (int i = 0; i < spec.samples; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "%06d", i);
    save_annotation(render_sample(spec, table, texture, i), dir, id);
  }
}

}  // namespace sgg
