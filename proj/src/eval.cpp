#include "sgg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sgg {

double psnr(const Image& a, const Image& b, const std::vector<std::uint8_t>* valid) {
  if (!a.same_shape(b)) throw std::invalid_argument("psnr: image shapes differ");
  const std::size_t pixels = static_cast<std::size_t>(a.height) * a.width;
  if (valid && valid->size() != pixels) throw std::invalid_argument("psnr: validity plane size");
  double se = 0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < pixels; ++p) {
    if (valid && !(*valid)[p]) continue;
    for (int c = 0; c < a.channels; ++c) {
      const double d = static_cast<double>(a.data[p * a.channels + c]) - b.data[p * a.channels + c];
      se += d * d;
    }
    count += a.channels;
  }
  if (count == 0) throw std::invalid_argument("psnr: no valid pixels");
  const double mse = se / static_cast<double>(count);
  if (mse == 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(4.0 / mse));
}

std::string to_string(Family f) {
  switch (f) {
    case Family::Translation: return "translation";
    case Family::Rotation: return "rotation";
    case Family::Hflip: return "hflip";
  }
  return "?";
}

Family parse_family(const std::string& s) {
  if (s == "translation") return Family::Translation;
  if (s == "rotation") return Family::Rotation;
  if (s == "hflip") return Family::Hflip;
  throw std::invalid_argument("unknown transform family '" + s + "' (translation, rotation, hflip)");
}

Warp translation_warp(int dy, int dx) {
  return {[dy, dx](double y, double x) { return std::pair{y - dy, x - dx}; }};
}

Warp rotation_warp(double degrees, int height, int width) {
  const double th = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(th), s = std::sin(th);
  const double cy = height / 2.0, cx = width / 2.0;
  return {[=](double y, double x) {
    const double dy = y - cy, dx = x - cx;
    return std::pair{cy + c * dy - s * dx, cx + s * dy + c * dx};
  }};
}

Warp hflip_warp(int width) {
  return {[width](double y, double x) { return std::pair{y, width - x}; }};
}

Warp random_warp(Family f, int height, int width, std::mt19937_64& rng) {
  switch (f) {
    case Family::Translation: {
      std::uniform_int_distribution<int> ty(-height / 8, height / 8), tx(-width / 8, width / 8);
      for (;;) {
        const int dy = ty(rng), dx = tx(rng);
        if (dy != 0 || dx != 0) return translation_warp(dy, dx);
      }
    }
    case Family::Rotation: {
      std::uniform_real_distribution<double> a(1.0, 90.0);
      std::bernoulli_distribution sign(0.5);
      const double deg = a(rng);
      return rotation_warp(sign(rng) ? deg : -deg, height, width);
    }
    case Family::Hflip:
      return hflip_warp(width);
  }
  throw std::invalid_argument("random_warp: bad family");
}

namespace {

struct Source {
  double y, x;
  bool valid;
  int ny, nx;
};

Source locate(const Warp& t, int y, int x, int h, int w) {
  const auto [sy, sx] = t.source(y + 0.5, x + 0.5);
  const int ny = static_cast<int>(std::floor(sy)), nx = static_cast<int>(std::floor(sx));
  return {sy, sx, ny >= 0 && ny < h && nx >= 0 && nx < w, ny, nx};
}

void bilinear(const Image& img, double sy, double sx, std::span<float> out) {
  const double u = sy - 0.5, v = sx - 0.5;
  const int y0 = static_cast<int>(std::floor(u)), x0 = static_cast<int>(std::floor(v));
  const double fy = u - y0, fx = v - x0;
  const int ya = std::clamp(y0, 0, img.height - 1), yb = std::clamp(y0 + 1, 0, img.height - 1);
  const int xa = std::clamp(x0, 0, img.width - 1), xb = std::clamp(x0 + 1, 0, img.width - 1);
  for (int c = 0; c < img.channels; ++c) {
    const double top = img.at(ya, xa, c) * (1 - fx) + img.at(ya, xb, c) * fx;
    const double bot = img.at(yb, xa, c) * (1 - fx) + img.at(yb, xb, c) * fx;
    out[c] = static_cast<float>(top * (1 - fy) + bot * fy);
  }
}

}  // namespace

Warped warp_image(const Image& img, const Warp& t) {
  Warped r{Image(img.height, img.width, img.channels),
           std::vector<std::uint8_t>(static_cast<std::size_t>(img.height) * img.width, 0)};
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const Source s = locate(t, y, x, img.height, img.width);
      if (!s.valid) continue;
      r.valid[static_cast<std::size_t>(y) * img.width + x] = 1;
      bilinear(img, s.y, s.x, r.image.pixel(y, x));
    }
  return r;
}

SurfaceAnnotation warp_annotation(const SurfaceAnnotation& a, const Warp& t,
                                  std::vector<std::uint8_t>* valid) {
  const int h = a.height(), w = a.width();
  SurfaceAnnotation b;
  b.image = Image(h, w, 3);
  b.embeddings = EmbeddingRaster(h, w, a.embeddings.channels);
  b.mask = RegionMask(h, w);
  if (valid) valid->assign(static_cast<std::size_t>(h) * w, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Source s = locate(t, y, x, h, w);
      if (!s.valid) continue;
      const std::size_t p = b.embeddings.pixel_index(y, x);
      if (valid) (*valid)[p] = 1;
      bilinear(a.image, s.y, s.x, b.image.pixel(y, x));
      b.mask.at(y, x) = a.mask.at(s.ny, s.nx);
      if (a.embeddings.is_valid(s.ny, s.nx)) {
        const auto src = a.embeddings.at(s.ny, s.nx);
        std::copy(src.begin(), src.end(), b.embeddings.at(y, x).begin());
        b.embeddings.valid[p] = 1;
      }
    }
  return b;
}

namespace {

std::vector<float> draw_z(int dim, std::mt19937_64& rng) {
  std::normal_distribution<float> n;
  std::vector<float> z(dim);
  for (auto& v : z) v = n(rng);
  return z;
}

}  // namespace

InvarianceResult invariance_study(const ImageModel& model,
                                  const std::vector<SurfaceAnnotation>& dataset, Family family,
                                  int n_samples, std::uint64_t seed, double truncation) {
  if (dataset.empty()) throw std::invalid_argument("invariance_study: empty dataset");
  if (n_samples < 1) throw std::invalid_argument("invariance_study: need at least one sample");
  InvarianceResult r;
  r.family = family;
  r.samples = n_samples;
  r.seed = seed;
  std::mt19937_64 rng(seed);
  double total = 0;
  for (int i = 0; i < n_samples; ++i) {
    const auto& a = dataset[static_cast<std::size_t>(i) % dataset.size()];
    const Warp t = random_warp(family, a.height(), a.width(), rng);
    const auto z = draw_z(model.z_dim(), rng);
    const Warped after = warp_image(model.generate(a, z, truncation), t);
    std::vector<std::uint8_t> valid;
    const Image before = model.generate(warp_annotation(a, t, &valid), z, truncation);
    for (std::size_t p = 0; p < valid.size(); ++p) valid[p] = valid[p] && after.valid[p];
    const double v = psnr(after.image, before, &valid);
    r.values.push_back(v);
    total += v;
  }
  r.mean_psnr = total / n_samples;
  return r;
}

nlohmann::json InvarianceReport::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& f : families) {
    j[to_string(f.family)] = {{"mean_psnr_db", f.mean_psnr}, {"samples", f.samples}, {"seed", f.seed}};
  }
  return j;
}

double diversity_proxy(const ImageModel& model, const SurfaceAnnotation& ann, int n,
                       std::uint64_t seed, double truncation) {
  if (n < 2) throw std::invalid_argument("diversity_proxy: need at least two samples");
  std::mt19937_64 rng(seed);
  std::vector<Image> out;
  for (int i = 0; i < n; ++i) out.push_back(model.generate(ann, draw_z(model.z_dim(), rng), truncation));
  std::vector<std::size_t> region;
  for (std::size_t p = 0; p < ann.mask.classes.size(); ++p)
    if (ann.mask.classes[p] != Region::Known) region.push_back(p);
  if (region.empty()) return 0.0;
  double total = 0;
  int pairs = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double d = 0;
      for (std::size_t p : region)
        for (int c = 0; c < 3; ++c) d += std::abs(out[i].data[p * 3 + c] - out[j].data[p * 3 + c]);
      total += d / (3.0 * region.size());
      ++pairs;
    }
  return total / pairs;
}

double oracle_body_psnr(const ImageModel& model, const std::vector<SurfaceAnnotation>& samples,
                        const TextureMap& texture, std::uint64_t seed, double truncation) {
  if (samples.empty()) throw std::invalid_argument("oracle_body_psnr: no samples");
  std::mt19937_64 rng(seed);
  double total = 0;
  for (const auto& a : samples) {
    const Image out = model.generate(a, draw_z(model.z_dim(), rng), truncation);
    std::vector<std::uint8_t> body(a.mask.classes.size());
    for (std::size_t p = 0; p < body.size(); ++p) body[p] = a.mask.classes[p] == Region::Body;
    total += psnr(out, oracle_texture(a, texture), &body);
  }
  return total / static_cast<double>(samples.size());
}

double discriminator_surface_error(const Discriminator<float>& d,
                                   const std::vector<SurfaceAnnotation>& samples) {
  nn::NoGradGuard guard;
  double weighted = 0, pixels = 0;
  for (std::size_t i = 0; i < samples.size(); i += 8) {
    std::vector<const SurfaceAnnotation*> chunk;
    for (std::size_t k = i; k < std::min(samples.size(), i + 8); ++k) chunk.push_back(&samples[k]);
    const auto batch = make_batch<float>(chunk);
    const auto e_hat = d.forward(nn::constant(batch.image), batch.mask_planes).e_hat;
    const auto l = surface_loss(e_hat, batch);
    if (l.degenerate) continue;
    const double body = static_cast<double>(batch.count(Region::Body));
    weighted += l.loss->value[0] * body;
    pixels += body;
  }
  if (pixels == 0) throw std::invalid_argument("discriminator_surface_error: no BODY pixels");
  return weighted / pixels;
}

Image tile_grid(const std::vector<Image>& images, int columns) {
  if (images.empty()) throw std::invalid_argument("tile_grid: no images");
  const int n = static_cast<int>(images.size());
  if (columns <= 0) columns = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  columns = std::min(columns, n);
  const int rows = (n + columns - 1) / columns;
  const Image& first = images.front();
  for (const auto& im : images)
    if (!im.same_shape(first)) throw std::invalid_argument("tile_grid: images differ in shape");
  Image grid(rows * first.height, columns * first.width, first.channels, -1.0f);
  for (int k = 0; k < n; ++k) {
    const int oy = (k / columns) * first.height, ox = (k % columns) * first.width;
    for (int y = 0; y < first.height; ++y)
      for (int x = 0; x < first.width; ++x)
        for (int c = 0; c < first.channels; ++c) grid.at(oy + y, ox + x, c) = images[k].at(y, x, c);
  }
  return grid;
}

void emit_grid(const std::vector<Image>& images, const std::filesystem::path& path, int columns) {
  write_png(path, tile_grid(images, columns));
}

}  // namespace sgg
