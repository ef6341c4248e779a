#include <doctest.h>

#include <cmath>

#include "sgg/eval.hpp"
#include "sgg/generator.hpp"
#include "support/fixtures.hpp"
#include "support/mocks.hpp"

using namespace sgg;

namespace {

Image random_image(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1, 1);
  Image im(h, w, 3);
  for (auto& v : im.data) v = u(rng);
  return im;
}

std::vector<SurfaceAnnotation> toy_set(int n, int h = 32, int w = 16) {
  std::vector<SurfaceAnnotation> v;
  for (int i = 0; i < n; ++i) v.push_back(testing::toy_annotation(h, w, 70 + i));
  return v;
}

}  // namespace

TEST_CASE("psnr examples and properties") {
  auto a = random_image(8, 6, 1);
  CHECK(psnr(a, a) == kPsnrCap);
  CHECK(psnr(Image(4, 4, 3, -1.0f), Image(4, 4, 3, 1.0f)) == doctest::Approx(0.0));
  auto b = a;
  for (auto& v : b.data) v += 0.2f;
  CHECK(psnr(a, b) == doctest::Approx(10 * std::log10(4 / 0.04)).epsilon(1e-5));
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-5));
  auto c = random_image(8, 6, 2);
  CHECK(psnr(a, c) == psnr(c, a));
  std::mt19937_64 rng(3);
  std::normal_distribution<float> n;
  auto noise = random_image(8, 6, 4);
  double prev = kPsnrCap + 1;
  for (float amp : {0.01f, 0.05f, 0.2f}) {
    auto d = a;
    for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] += amp * noise.data[i];
    const double p = psnr(a, d);
    CHECK(p < prev);
    prev = p;
  }
  CHECK_THROWS_AS(psnr(a, Image(8, 5, 3)), std::invalid_argument);
  std::vector<std::uint8_t> none(48, 0);
  CHECK_THROWS_AS(psnr(a, c, &none), std::invalid_argument);
  // Validity plane restricts the average.
  std::vector<std::uint8_t> first(48, 0);
  first[0] = 1;
  auto e = a;
  e.data[3] += 1.0f;
  CHECK(psnr(a, e, &first) == kPsnrCap);
}

TEST_CASE("warps") {
  auto a = testing::toy_annotation(32, 16, 5);

  SUBCASE("integer translation moves every plane exactly") {
    std::vector<std::uint8_t> valid;
    auto t = warp_annotation(a, translation_warp(3, -2), &valid);
    CHECK_NOTHROW(t.validate());
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 16; ++x) {
        const int sy = y - 3, sx = x + 2;
        const bool in = sy >= 0 && sy < 32 && sx >= 0 && sx < 16;
        CHECK(valid[y * 16 + x] == in);
        if (!in) continue;
        CHECK(t.image.at(y, x, 1) == a.image.at(sy, sx, 1));
        CHECK(t.mask.at(y, x) == a.mask.at(sy, sx));
      }
    auto w = warp_image(a.image, translation_warp(3, -2));
    CHECK(w.valid == valid);
    CHECK(w.image.data == t.image.data);
  }

  SUBCASE("hflip is exact and involutive") {
    auto f = warp_annotation(warp_annotation(a, hflip_warp(16)), hflip_warp(16));
    CHECK(f.image.data == a.image.data);
    CHECK(f.mask == a.mask);
  }

  SUBCASE("rotations keep embeddings as source rows and the annotation valid") {
    std::mt19937_64 rng(6);
    for (int i = 0; i < 10; ++i) {
      auto t = warp_annotation(a, random_warp(Family::Rotation, 32, 16, rng));
      CHECK_NOTHROW(t.validate());
    }
    auto r = warp_annotation(a, rotation_warp(0.0, 32, 16));
    CHECK(r.mask == a.mask);
  }

  SUBCASE("random translations stay within an eighth of each side and are nonzero") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 100; ++i) {
      auto w = random_warp(Family::Translation, 64, 32, rng);
      const auto [sy, sx] = w.source(10.5, 10.5);
      const double dy = 10.5 - sy, dx = 10.5 - sx;
      CHECK(std::abs(dy) <= 8);
      CHECK(std::abs(dx) <= 4);
      CHECK((dy != 0 || dx != 0));
    }
  }
}

TEST_CASE("invariance study on constructed models") {
  const auto data = toy_set(4);

  SUBCASE("a pointwise model scores the cap under translation and hflip") {
    auto m = testing::pointwise_model(32, 16);
    for (Family f : {Family::Translation, Family::Hflip}) {
      auto r = invariance_study(m, data, f, 12, 1);
      CHECK(r.mean_psnr == kPsnrCap);
      CHECK(r.values.size() == 12);
    }
  }

  SUBCASE("a constant model scores PSNR(t(c), c)") {
    const auto c = random_image(32, 16, 8);
    auto m = testing::constant_model(c);
    Image mirrored(32, 16, 3);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 16; ++x)
        for (int ch = 0; ch < 3; ++ch) mirrored.at(y, x, ch) = c.at(y, 15 - x, ch);
    auto r = invariance_study(m, data, Family::Hflip, 3, 2);
    CHECK(r.mean_psnr == doctest::Approx(psnr(mirrored, c)).epsilon(1e-9));
    for (Family f : {Family::Translation, Family::Rotation, Family::Hflip})
      CHECK(invariance_study(m, data, f, 5, 3).mean_psnr < kPsnrCap);
  }

  SUBCASE("degenerate requests are errors") {
    auto m = testing::pointwise_model(32, 16);
    CHECK_THROWS_AS(invariance_study(m, data, Family::Hflip, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(invariance_study(m, {}, Family::Hflip, 3, 1), std::invalid_argument);
    CHECK_THROWS_AS(parse_family("shear"), std::invalid_argument);
    CHECK(parse_family(to_string(Family::Rotation)) == Family::Rotation);
  }

  SUBCASE("report JSON") {
    auto m = testing::pointwise_model(32, 16);
    InvarianceReport rep{{invariance_study(m, data, Family::Hflip, 2, 5)}};
    auto j = rep.to_json();
    CHECK(j["hflip"]["mean_psnr_db"] == kPsnrCap);
    CHECK(j["hflip"]["samples"] == 2);
  }
}

TEST_CASE("diversity proxy") {
  auto a = testing::toy_annotation(32, 16, 9);
  CHECK(diversity_proxy(testing::pointwise_model(32, 16), a) == 0.0);
  CHECK(diversity_proxy(testing::latent_model(32, 16), a, 6, 1) > 0.1);

  GeneratorConfig cfg;
  cfg.height = 32;
  cfg.width = 16;
  cfg.channels = {6, 8, 10};
  cfg.z_dim = 5;
  cfg.mapping = MappingConfig{.depth = 1, .width = 12, .out_dim = 7};
  Generator<float> g(cfg, 3);
  g.mapping().mean_updates = 1;
  GeneratorModel m(g);
  CHECK(diversity_proxy(m, a, 6, 4, 0.0) == 0.0);
  CHECK(diversity_proxy(m, a, 6, 4, 1.0) > 0.0);
  CHECK_THROWS(diversity_proxy(m, a, 1, 4));
}

TEST_CASE("oracle PSNR of a model that renders the texture map is the cap") {
  SyntheticSpec spec;
  spec.height = 32;
  spec.width = 16;
  spec.samples = 3;
  const auto table = synthetic_table(spec);
  const TextureMap tex(spec);
  std::vector<SurfaceAnnotation> samples;
  for (int i = 0; i < 3; ++i) samples.push_back(render_sample(spec, table, tex, i));
  testing::FnModel oracle(32, 16, 2, [&](const SurfaceAnnotation& a, std::span<const float>, double) {
    return oracle_texture(a, tex);
  });
  CHECK(oracle_body_psnr(oracle, samples, tex) == kPsnrCap);
  CHECK(oracle_body_psnr(testing::fill_model(32, 16, 0.0f), samples, tex) < 30);
}

TEST_CASE("image grids") {
  auto a = random_image(4, 3, 10);
  CHECK(tile_grid({a}) == a);
  std::vector<Image> six;
  for (int i = 0; i < 6; ++i) six.push_back(random_image(4, 3, 20 + i));
  auto g = tile_grid(six);
  CHECK(g.width == 9);
  CHECK(g.height == 8);
  CHECK(g.at(4, 3, 1) == six[4].at(0, 0, 1));
  CHECK_THROWS_AS(tile_grid({}), std::invalid_argument);
  CHECK_THROWS_AS(tile_grid({a, random_image(5, 3, 1)}), std::invalid_argument);
  const auto dir = testing::temp_dir("grid");
  emit_grid(six, dir / "g.png");
  auto back = read_png(dir / "g.png", 3);
  CHECK(back.width == 9);
  CHECK(back.height == 8);
}
