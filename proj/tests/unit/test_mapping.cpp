#include <doctest.h>

#include <cmath>
#include <random>

#include "sgg/batch.hpp"
#include "sgg/errors.hpp"
#include "sgg/mapping.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"

using namespace sgg;
using nn::Tensor;

namespace {

MappingConfig small_config(int depth, bool variational) {
  MappingConfig c;
  c.depth = depth;
  c.width = 12;
  c.out_dim = 10;
  c.variational = variational;
  c.z_dim = 5;
  return c;
}

template <typename T>
struct Net {
  nn::ParameterSet<T> params;
  MappingNetwork<T> net;
  Net(const MappingConfig& c, std::uint64_t seed) : net(make(c, seed)) {}

 private:
  MappingNetwork<T> make(const MappingConfig& c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return MappingNetwork<T>(c, params, "map", rng);
  }
};

std::vector<double> randvec(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Effective dense matrix (gain folded in) of a 1x1 layer.
std::vector<double> dense(const Net<double>& n, const std::string& name, int out, int in) {
  auto w = n.params.find(name + ".weight")->value;
  std::vector<double> m(static_cast<std::size_t>(out) * in);
  const double g = 1.0 / std::sqrt(double(in));
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = g * w[i];
  return m;
}

}  // namespace

TEST_CASE("map_core with n = 0 is an affine map of the input") {
  auto cfg = small_config(0, false);
  cfg.out_dim = kEmbeddingChannels;
  Net<double> n(cfg, 1);
  // Identity projection: stored weight sqrt(fan_in) on the diagonal cancels the gain.
  auto w = n.params.find("map.proj.weight");
  auto b = n.params.find("map.proj.bias");
  w->value.fill(0);
  for (int i = 0; i < kEmbeddingChannels; ++i) {
    w->value[i * kEmbeddingChannels + i] = std::sqrt(double(kEmbeddingChannels));
  }
  std::mt19937_64 rng(2);
  auto bias = randvec(kEmbeddingChannels, rng);
  std::copy(bias.begin(), bias.end(), b->value.data());
  auto e = randvec(kEmbeddingChannels, rng);
  auto out = n.net.map_core(e, {});
  for (int i = 0; i < kEmbeddingChannels; ++i) CHECK(out[i] == doctest::Approx(e[i] + bias[i]).epsilon(1e-12));
}

TEST_CASE("map_core is deterministic and validates dimensions") {
  Net<float> a(small_config(2, true), 5), b(small_config(2, true), 5);
  std::vector<float> e(16, 0.25f), z(5, -0.5f);
  CHECK(a.net.map_core(e, z) == a.net.map_core(e, z));
  CHECK(a.net.map_core(e, z) == b.net.map_core(e, z));
  CHECK_THROWS_AS(a.net.map_core(e, {}), std::invalid_argument);
  std::vector<float> short_e(15, 0.f);
  CHECK_THROWS_AS(a.net.map_core(short_e, z), std::invalid_argument);
  Net<float> sam(small_config(2, false), 5);
  CHECK_THROWS_AS(sam.net.map_core(e, z), std::invalid_argument);
  CHECK_NOTHROW(sam.net.map_core(e, {}));
}

TEST_CASE("zeroed residual branches reduce to an equivalent single projection") {
  for (int depth : {1, 3}) {
    auto cfg = small_config(depth, true);
    Net<double> deep(cfg, 11);
    for (int i = 0; i < depth; ++i) {
      deep.params.find("map.block" + std::to_string(i) + ".weight")->value.fill(0);
      deep.params.find("map.block" + std::to_string(i) + ".bias")->value.fill(0);
    }
    const int in = cfg.input_dim(), wd = cfg.width, d = cfg.out_dim;
    // Compose in_proj, the 2^{-n/2} skip scaling, and out_proj into one affine map.
    auto win = dense(deep, "map.in", wd, in);
    auto wout = dense(deep, "map.out", d, wd);
    auto bin = deep.params.find("map.in.bias")->value;
    auto bout = deep.params.find("map.out.bias")->value;
    const double s = std::pow(2.0, -depth / 2.0);

    auto flat = cfg;
    flat.depth = 0;
    Net<double> shallow(flat, 99);
    auto w0 = shallow.params.find("map.proj.weight");
    auto b0 = shallow.params.find("map.proj.bias");
    const double g0 = 1.0 / std::sqrt(double(in));
    for (int o = 0; o < d; ++o) {
      double bias = bout[o];
      for (int k = 0; k < wd; ++k) bias += s * wout[o * wd + k] * bin[k];
      b0->value[o] = bias;
      for (int i = 0; i < in; ++i) {
        double m = 0;
        for (int k = 0; k < wd; ++k) m += wout[o * wd + k] * win[k * in + i];
        w0->value[o * in + i] = s * m / g0;
      }
    }
    std::mt19937_64 rng(3);
    auto e = randvec(16, rng);
    auto z = randvec(5, rng);
    auto a = deep.net.map_core(e, z);
    auto b = shallow.net.map_core(e, z);
    for (int o = 0; o < d; ++o) CHECK(a[o] == doctest::Approx(b[o]).epsilon(1e-10));
  }
}

TEST_CASE("map_field follows the region case split") {
  auto cfg = small_config(2, true);
  Net<double> n(cfg, 4);
  std::mt19937_64 rng(6);
  auto zv = randvec(5, rng);
  Tensor<double> z({1, 5, 1, 1});
  std::copy(zv.begin(), zv.end(), z.data());

  SUBCASE("all KNOWN gives the constant omega_M field") {
    SurfaceAnnotation a = testing::toy_annotation(6, 4, 1);
    a.mask = RegionMask(6, 4);
    std::fill(a.embeddings.valid.begin(), a.embeddings.valid.end(), 0);
    auto f = n.net.map_field(make_batch<double>(a), z).field->value;
    for (int c = 0; c < cfg.out_dim; ++c)
      for (int p = 0; p < 24; ++p) CHECK(f[c * 24 + p] == n.net.omega_known->value[c]);
  }
  SUBCASE("a single BODY pixel equals map_core of its embedding") {
    SurfaceAnnotation a = testing::toy_annotation(6, 4, 1);
    a.mask = RegionMask(6, 4);
    std::fill(a.embeddings.valid.begin(), a.embeddings.valid.end(), 0);
    a.mask.at(2, 1) = Region::Body;
    a.embeddings.valid[a.embeddings.pixel_index(2, 1)] = 1;
    a.mask.at(0, 0) = Region::Dilated;
    auto f = n.net.map_field(make_batch<double>(a), z).field->value;
    auto e = a.embeddings.at(2, 1);
    std::vector<double> ed(e.begin(), e.end());
    auto ref = n.net.map_core(ed, zv);
    for (int c = 0; c < cfg.out_dim; ++c) {
      CHECK(f.at(0, c, 2, 1) == ref[c]);
      CHECK(f.at(0, c, 0, 0) == n.net.omega_dilated->value[c]);
      CHECK(f.at(0, c, 5, 3) == n.net.omega_known->value[c]);
    }
    CHECK(f.at(0, 0, 2, 1) != f.at(0, 0, 5, 3));
  }
  CHECK(n.net.omega_known->value.values() != n.net.omega_dilated->value.values());
}

TEST_CASE("map_field is bit-exactly pixel-permutation equivariant") {
  Net<float> n(small_config(2, true), 8);
  auto a = testing::toy_annotation(10, 6, 3);
  auto perm = testing::random_permutation(60, 4);
  auto b = testing::permute_pixels(a, perm);
  Tensor<float> z({1, 5, 1, 1}, 0.3f);
  auto fa = n.net.map_field(make_batch<float>(a), z).field->value;
  auto fb = n.net.map_field(make_batch<float>(b), z).field->value;
  for (int c = 0; c < 10; ++c)
    for (int p = 0; p < 60; ++p) REQUIRE(fb[c * 60 + p] == fa[c * 60 + perm[p]]);
}

TEST_CASE("same embedding at two pixels of two images receives the same latent") {
  Net<float> n(small_config(1, true), 8);
  auto a = testing::toy_annotation(8, 8, 3);
  auto b = testing::toy_annotation(8, 8, 9);
  // Copy one BODY embedding of a into a BODY pixel of b.
  int pa = -1, pb = -1;
  for (int p = 0; p < 64; ++p) {
    if (pa < 0 && a.mask.classes[p] == Region::Body) pa = p;
    if (b.mask.classes[p] == Region::Body) pb = p;
  }
  REQUIRE(pa >= 0);
  REQUIRE(pb >= 0);
  auto src = a.embeddings.at_pixel(pa);
  std::copy(src.begin(), src.end(), b.embeddings.data.begin() + pb * 16);
  std::vector<const SurfaceAnnotation*> both{&a, &b};
  Tensor<float> z({2, 5, 1, 1}, 0.7f);
  auto f = n.net.map_field(make_batch<float>(both), z).field->value;
  for (int c = 0; c < 10; ++c) CHECK(f[(0 * 10 + c) * 64 + pa] == f[(1 * 10 + c) * 64 + pb]);
}

TEST_CASE("map_vertices plus gather equals map_field on discretized rasters") {
  for (int k : {4, 64}) {
    auto table = VertexTable::random(k, 13);
    Net<float> n(small_config(2, true), 21);
    std::vector<float> z{0.1f, -0.4f, 1.2f, 0.0f, 0.5f};
    Tensor<float> zt({1, 5, 1, 1});
    std::copy(z.begin(), z.end(), zt.data());
    auto vo = n.net.map_vertices(table, z);
    for (std::uint64_t s : {1u, 2u}) {
      auto a = testing::toy_annotation(8, 8, s, &table);
      auto idx = discretized_indices(a.embeddings, table);
      auto g = gather_field(vo, idx, a.mask, n.net.omega_known->value, n.net.omega_dilated->value);
      auto f = n.net.map_field(make_batch<float>(a), zt).field->value;
      REQUIRE(g.shape() == f.shape());
      double worst = 0;
      for (std::size_t i = 0; i < f.size(); ++i) worst = std::max(worst, double(std::abs(f[i] - g[i])));
      CHECK(worst <= 1e-5);
    }
    CHECK(n.net.map_vertices(table, z).values() == vo.values());
  }
}

TEST_CASE("gather with an empty BODY region yields only region latents") {
  auto table = VertexTable::random(4, 13);
  Net<float> n(small_config(1, true), 21);
  std::vector<float> z(5, 0.f);
  RegionMask m(4, 4);
  m.at(1, 1) = Region::Dilated;
  auto g = gather_field(n.net.map_vertices(table, z), std::vector<int>(16, -1), m,
                        n.net.omega_known->value, n.net.omega_dilated->value);
  CHECK(g.at(0, 3, 1, 1) == n.net.omega_dilated->value[3]);
  CHECK(g.at(0, 3, 0, 0) == n.net.omega_known->value[3]);
}

TEST_CASE("discretized_indices rejects non-discretized rasters") {
  auto table = VertexTable::random(4, 13);
  auto a = testing::toy_annotation(8, 8, 1);
  CHECK_THROWS_AS(discretized_indices(a.embeddings, table), PreconditionError);
  CHECK_NOTHROW(discretized_indices(discretize(a.embeddings, table), table));
}

TEST_CASE("truncate examples") {
  Net<double> n(small_config(1, true), 2);
  auto a = testing::toy_annotation(6, 6, 5);
  auto batch = make_batch<double>(a);
  Tensor<double> z({1, 5, 1, 1}, 0.4);
  auto field = n.net.map_field(batch, z).field;
  std::mt19937_64 rng(1);
  auto mv = randvec(10, rng);
  Tensor<double> mean({1, 10, 1, 1});
  std::copy(mv.begin(), mv.end(), mean.data());

  auto t1 = truncate(field, batch.regions, mean, 1.0)->value;
  CHECK(t1.values() == field->value.values());
  auto t0 = truncate(field, batch.regions, mean, 0.0)->value;
  auto th = truncate(field, batch.regions, mean, 0.5)->value;
  for (int c = 0; c < 10; ++c) {
    for (int p = 0; p < 36; ++p) {
      const std::size_t i = c * 36 + p;
      if (batch.regions[p] == Region::Body) {
        CHECK(t0[i] == mean[c]);
      } else {
        CHECK(t0[i] == field->value[i]);
      }
      CHECK(th[i] == doctest::Approx(0.5 * (t0[i] + t1[i])).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(truncate(field, batch.regions, mean, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(truncate(field, batch.regions, mean, -0.1), std::invalid_argument);
}

TEST_CASE("interpolate_z examples") {
  std::vector<float> z0{0, 1, 2}, z1{2, 3, -2};
  auto two = interpolate_z(z0, z1, 2);
  CHECK(two == std::vector<std::vector<float>>{z0, z1});
  auto three = interpolate_z(z0, z1, 3);
  CHECK(three[1] == std::vector<float>{1, 2, 0});
  for (auto& z : interpolate_z(z0, z0, 5)) CHECK(z == z0);
  std::vector<float> bad{1};
  CHECK_THROWS(interpolate_z(z0, bad, 3));
  CHECK_THROWS(interpolate_z(z0, z1, 1));
}

TEST_CASE("map_core parameter gradients match finite differences") {
  for (bool variational : {false, true}) {
    auto cfg = small_config(2, variational);
    Net<double> n(cfg, 31);
    auto a = testing::toy_annotation(5, 4, 7);
    auto batch = make_batch<double>(a);
    std::mt19937_64 rng(8);
    Tensor<double> z = nn::random_normal<double>({1, cfg.z_dim, 1, 1}, rng);
    Tensor<double> w = nn::random_normal<double>({1, cfg.out_dim, 5, 4}, rng);
    std::vector<nn::Var<double>> leaves;
    for (auto& e : n.params.entries()) leaves.push_back(e.var);
    auto loss = [&] { return nn::weighted_sum(n.net.map_field(batch, z).field, w); };
    auto r = testing::grad_check(loss, leaves, 1e-6, 16);
    CHECK(r.relative_error < 1e-3);
    CHECK(r.analytic_norm > 0);
  }
}

TEST_CASE("omega mean update is a convex combination") {
  Net<double> n(small_config(1, true), 2);
  std::mt19937_64 rng(3);
  auto old = nn::random_normal<double>({1, 10, 1, 1}, rng);
  n.net.omega_mean = old;
  auto body = nn::random_normal<double>({1, 10, 7, 1}, rng);
  n.net.update_mean(body, 0.995);
  CHECK(n.net.mean_updates == 1);
  for (int c = 0; c < 10; ++c) {
    double m = 0;
    for (int p = 0; p < 7; ++p) m += body[c * 7 + p];
    m /= 7;
    CHECK(n.net.omega_mean[c] == doctest::Approx(0.995 * old[c] + 0.005 * m).epsilon(1e-14));
  }
}
