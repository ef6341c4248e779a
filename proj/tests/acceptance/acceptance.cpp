// Acceptance gates 1-8. Prints one PASS/FAIL line per criterion; exit status 1 if any fails.
//
//   acceptance [--steps N] [--batch N] [--work DIR] [--only LIST]
//
// Criteria 6 and 7 train two desk models (V-SAM and the SAM spatial-z baseline).
// Runs resume from checkpoints in the work directory when the stored configuration
// matches, so an interrupted run continues instead of starting over.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>

#include "sgg/anonymizer.hpp"
#include "sgg/eval.hpp"
#include "sgg/modulation.hpp"
#include "sgg/synthetic.hpp"
#include "sgg/training.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"
#include "support/mocks.hpp"

using namespace sgg;
using nn::Tensor;
using nn::Var;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- 1

Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::pair<std::string, double>> errs;
  std::mt19937_64 rng(1);

  {  // map_core, through the per-pixel path it is built on
    MappingConfig mc{.depth = 2, .width = 12, .out_dim = 10, .variational = true, .z_dim = 5};
    nn::ParameterSet<double> p;
    MappingNetwork<double> net(mc, p, "map", rng);
    auto in = nn::leaf(nn::random_normal<double>({1, mc.input_dim(), 3, 1}, rng));
    auto w = nn::random_normal<double>({1, 10, 3, 1}, rng);
    std::vector<Var<double>> leaves{in};
    for (auto& e : p.entries()) leaves.push_back(e.var);
    errs.emplace_back("map_core", testing::grad_check([&] { return nn::weighted_sum(net.forward_pixels(in), w); },
                                                      leaves, 1e-6, 12).relative_error);
  }
  {  // styles + modulate + normalize
    nn::ParameterSet<double> p;
    auto proj = StyleProjection<double>::create(p, "s", 6, 4, rng);
    auto x = nn::leaf(nn::random_normal<double>({1, 4, 5, 5}, rng));
    auto f = nn::leaf(nn::random_normal<double>({1, 6, 5, 5}, rng));
    auto w = nn::random_normal<double>({1, 4, 5, 5}, rng);
    std::vector<Var<double>> leaves{x, f};
    for (auto& e : p.entries()) leaves.push_back(e.var);
    auto loss = [&] { return nn::weighted_sum(normalize(modulate(x, styles(f, proj))), w); };
    errs.emplace_back("styles+modulate+normalize", testing::grad_check(loss, leaves, 1e-6, 20).relative_error);
  }
  auto a = testing::toy_annotation(16, 8, 3);
  auto b = make_batch<double>(a);
  {
    auto e_hat = nn::leaf(nn::random_normal<double>({1, 16, 16, 8}, rng, 0.8));
    errs.emplace_back("surface_loss",
                      testing::grad_check([&] { return surface_loss(e_hat, b).loss; }, {e_hat}, 1e-6, 200).relative_error);
  }
  DiscriminatorConfig dc;
  dc.height = 16;
  dc.width = 8;
  dc.channels = {4, 6, 8};
  dc.fpn_channels = 5;
  dc.fc_width = 8;
  Discriminator<double> d(dc, 4);
  std::vector<Var<double>> dparams;
  for (auto& e : d.params().entries()) dparams.push_back(e.var);
  {  // generator_surface_loss through a two-parameter toy generator, D frozen
    auto ga = nn::leaf(Tensor<double>({1, 1, 1, 1}, 0.7));
    auto gb = nn::leaf(Tensor<double>({1, 1, 1, 1}, -0.2));
    d.params().set_requires_grad(false);
    auto gen = [&] {
      auto s = nn::conv2d(nn::constant(b.image.reshaped({3, 1, 16, 8})), ga, gb,
                          nn::kernels::ConvSpec{1.0, nn::kernels::Padding::Zeros});
      return nn::tanh(nn::reshape(s, nn::Shape{1, 3, 16, 8}));
    };
    errs.emplace_back("generator_surface_loss",
                      testing::grad_check([&] { return generator_surface_loss(d, gen(), b).loss; }, {ga, gb}, 1e-6)
                          .relative_error);
    d.params().set_requires_grad(true);
  }
  const auto fake = nn::random_normal<double>(b.image.shape(), rng, 0.5);
  for (auto [name, lw] : {std::pair{"d_loss adversarial", LossWeights{0.0, 0.0}},
                          std::pair{"d_loss eps+cse", LossWeights{0.8, 0.3}}}) {
    errs.emplace_back(name, testing::grad_check([&, lw = lw] { return d_loss(d, b, fake, lw).total; }, dparams, 1e-6, 5)
                                .relative_error);
  }
  {
    auto img = nn::leaf(fake);
    d.params().set_requires_grad(false);
    errs.emplace_back("g_loss", testing::grad_check([&] { return g_loss(d, img, b, 0.7).total; }, {img}, 1e-6, 60)
                                    .relative_error);
    d.params().set_requires_grad(true);
  }
  {  // masked r1 parameter gradient against differences of its value
    LogitFn<double> logit = [&](const Var<double>& x) { return d.forward(x, b.mask_planes).logit; };
    d.params().zero_grad();
    r1_accumulate(logit, d.params(), b, 1.0);
    double diff2 = 0, n2 = 0;
    std::mt19937_64 pick_rng(5);
    for (auto& e : d.params().entries()) {
      auto& v = e.var->value;
      std::uniform_int_distribution<std::size_t> pick(0, v.size() - 1);
      for (int k = 0; k < 3; ++k) {
        const std::size_t i = pick(pick_rng);
        const double keep = v[i], h = 1e-6;
        v[i] = keep + h;
        const double up = r1_value(logit, d.params(), b, 1.0);
        v[i] = keep - h;
        const double down = r1_value(logit, d.params(), b, 1.0);
        v[i] = keep;
        const double num = (up - down) / (2 * h), an = e.var->grad.empty() ? 0.0 : e.var->grad[i];
        diff2 += (num - an) * (num - an);
        n2 += num * num;
      }
    }
    errs.emplace_back("masked r1", std::sqrt(diff2 / std::max(n2, 1e-300)));
  }
  const double secs = seconds_since(t0);
  double worst = 0;
  std::string which;
  for (const auto& [n, e] : errs)
    if (!(e <= worst)) worst = e, which = n;
  const bool ok = worst < 1e-3 && secs < 60;
  return {ok, std::to_string(errs.size()) + " checks, worst relative error " + fmt("%.2e", worst) + " (" + which +
                  "), " + fmt("%.1f", secs) + " s"};
}

// ---------------------------------------------------------------- 2

Outcome surface_oracle() {
  std::mt19937_64 rng(5);
  double worst = 0;
  bool masked_zero = true;
  for (int trial = 0; trial < 100; ++trial) {
    auto a = testing::toy_annotation(8, 8, 100 + trial);
    auto b = make_batch<double>(a);
    auto e_hat = nn::leaf(nn::random_normal<double>({1, 16, 8, 8}, rng, 0.8));
    auto l = surface_loss(e_hat, b);
    double total = 0;
    int body = 0;
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        if (a.mask.at(y, x) != Region::Body) continue;
        ++body;
        for (int c = 0; c < 16; ++c) {
          const double r = e_hat->value.at(0, c, y, x) - a.embeddings.at(y, x)[c];
          total += std::abs(r) < 1 ? 0.5 * r * r : std::abs(r) - 0.5;
        }
      }
    worst = std::max(worst, std::abs(l.loss->value[0] - total / std::max(body, 1)));
    nn::backward(l.loss);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        if (a.mask.at(y, x) != Region::Body)
          for (int c = 0; c < 16; ++c) masked_zero = masked_zero && e_hat->grad.at(0, c, y, x) == 0.0;
  }
  return {worst <= 1e-6 && masked_zero, "100 cases, max |vectorized - loop| " + fmt("%.1e", worst) +
                                            (masked_zero ? ", masked gradients exactly zero" : ", NONZERO masked gradient")};
}

// ---------------------------------------------------------------- 3

Tensor<float> permute_planes(const Tensor<float>& t, const std::vector<int>& perm) {
  Tensor<float> out(t.shape());
  const std::size_t hw = t.shape().plane();
  for (std::size_t pl = 0; pl < t.size() / hw; ++pl)
    for (std::size_t p = 0; p < hw; ++p) out[pl * hw + p] = t[pl * hw + perm[p]];
  return out;
}

Outcome equivariance() {
  std::mt19937_64 rng(7);
  MappingConfig mc{.depth = 2, .width = 32, .out_dim = 24, .variational = true, .z_dim = 8};
  nn::ParameterSet<float> p;
  MappingNetwork<float> net(mc, p, "map", rng);
  const auto table = VertexTable::random(64, 3);
  auto a = testing::toy_annotation(12, 10, 4, &table);
  const auto perm = testing::random_permutation(120, 5);
  auto ap = testing::permute_pixels(a, perm);
  const auto z = nn::random_normal<float>({1, 8, 1, 1}, rng);
  const auto f = net.map_field(make_batch<float>(a), z).field->value;
  const auto fp = net.map_field(make_batch<float>(ap), z).field->value;
  const bool field_ok = fp.values() == permute_planes(f, perm).values();

  auto proj = StyleProjection<float>::create(p, "s", 24, 6, rng);
  const auto x = nn::random_normal<float>({1, 6, 12, 10}, rng);
  auto s = styles(nn::constant(f), proj);
  auto sp = styles(nn::constant(fp), proj);
  const bool styles_ok = sp.gamma->value.values() == permute_planes(s.gamma->value, perm).values() &&
                         sp.beta->value.values() == permute_planes(s.beta->value, perm).values();
  const auto m = modulate(nn::constant(x), s)->value;
  const auto mp = modulate(nn::constant(permute_planes(x, perm)), sp)->value;
  const bool mod_ok = mp.values() == permute_planes(m, perm).values();

  std::vector<float> zv(z.values().begin(), z.values().end());
  const auto vo = net.map_vertices(table, zv);
  const auto g = gather_field(vo, discretized_indices(a.embeddings, table), a.mask, net.omega_known->value,
                              net.omega_dilated->value);
  double worst = 0;
  for (std::size_t i = 0; i < f.size(); ++i) worst = std::max(worst, double(std::abs(f[i] - g[i])));
  const bool ok = field_ok && styles_ok && mod_ok && worst <= 1e-5;
  return {ok, std::string("map_field ") + (field_ok ? "exact" : "MISMATCH") + ", styles " +
                  (styles_ok ? "exact" : "MISMATCH") + ", modulate " + (mod_ok ? "exact" : "MISMATCH") +
                  ", vertices+gather max diff " + fmt("%.1e", worst)};
}

// ---------------------------------------------------------------- 4

GeneratorConfig tiny_generator() {
  GeneratorConfig c;
  c.height = 32;
  c.width = 16;
  c.channels = {8, 12, 16};
  c.z_dim = 6;
  c.mapping = MappingConfig{.depth = 2, .width = 16, .out_dim = 10};
  return c;
}

Outcome truncation() {
  Generator<float> g(tiny_generator(), 3);
  auto a = testing::toy_annotation(32, 16, 6);
  auto b = make_batch<float>(a);
  std::mt19937_64 rng(8);
  const auto z1 = nn::random_normal<float>({1, 6, 1, 1}, rng);
  const auto z2 = nn::random_normal<float>({1, 6, 1, 1}, rng);
  // Populate the latent mean from a forward pass.
  g.mapping().update_mean(g.forward(b, z1).body_omega->value, 0.0);
  const auto f1 = g.forward(b, z1, 0.0).field->value;
  const auto f2 = g.forward(b, z2, 0.0).field->value;
  const bool collapse = f1.values() == f2.values();
  const GeneratorModel model(g);
  const double div = diversity_proxy(model, a, 6, 9, 0.0);
  const auto raw = g.mapping().map_field(b, z1).field;
  const auto t1 = truncate(raw, b.regions, g.mapping().omega_mean, 1.0)->value;
  const bool identity = t1.values() == raw->value.values() &&
                        g.forward(b, z1, 1.0).field->value.values() == raw->value.values();
  return {collapse && div == 0.0 && identity,
          std::string("t=0 fields ") + (collapse ? "identical" : "DIFFER") + ", diversity at t=0 " + fmt("%.3g", div) +
              ", t=1 " + (identity ? "identity" : "NOT identity")};
}

// ---------------------------------------------------------------- 5

Outcome discretization() {
  const auto table = VertexTable::random(500, 11);
  bool self = true;
  for (int k = 0; k < table.size(); ++k) self = self && nearest_vertex(table.row(k), table) == k;
  std::mt19937_64 rng(12);
  std::normal_distribution<float> n(0.0f, 0.4f);
  EmbeddingRaster r(25, 40);
  for (auto& v : r.data) v = n(rng);
  std::fill(r.valid.begin(), r.valid.end(), 1);
  const auto d = discretize(r, table);
  int agree = 0;
  bool rows = true;
  for (int p = 0; p < 1000; ++p) {
    const auto q = r.at_pixel(p);
    int best = 0;
    double bd = 1e300;
    for (int k = 0; k < table.size(); ++k) {
      double s = 0;
      for (int c = 0; c < 16; ++c) s += std::pow(double(q[c]) - table.row(k)[c], 2);
      if (s < bd) bd = s, best = k;
    }
    agree += nearest_vertex(q, table) == best;
    const auto row = table.row(best);
    rows = rows && std::equal(row.begin(), row.end(), d.at_pixel(p).begin());
  }
  const bool idem = discretize(d, table).data == d.data;
  return {self && agree == 1000 && rows && idem,
          "nearest_vertex(e_k)=k " + std::string(self ? "for all k" : "FAILS") + ", brute-force agreement " +
              std::to_string(agree) + "/1000, outputs " + (rows ? "table rows" : "NOT rows") + ", " +
              (idem ? "idempotent" : "NOT idempotent")};
}

// ---------------------------------------------------------------- 6, 7

struct Run {
  std::unique_ptr<TrainState> state;
  double seconds = 0;
  bool resumed = false;
};

struct World {
  SyntheticSpec spec;
  std::vector<SurfaceAnnotation> train, held;
  std::unique_ptr<VertexTable> table;
  std::unique_ptr<TextureMap> texture;
};

World make_world() {
  World w;
  w.spec.samples = 2064;
  w.table = std::make_unique<VertexTable>(synthetic_table(w.spec));
  w.texture = std::make_unique<TextureMap>(w.spec);
  for (int i = 0; i < 2064; ++i) {
    auto s = render_sample(w.spec, *w.table, *w.texture, i);
    (i < 2000 ? w.train : w.held).push_back(std::move(s));
  }
  return w;
}

Run train_model(const World& w, ModulationMode mode, int steps, int batch, const fs::path& dir) {
  GeneratorConfig g = GeneratorConfig::desk();
  g.modulation = mode;
  TrainConfig t;
  t.steps = steps;
  t.batch = batch;
  t.checkpoint_every = 250;
  const DiscriminatorConfig d;
  const fs::path ck = dir / "checkpoint.bin";
  const nlohmann::json want{{"generator", to_json(g)}, {"discriminator", to_json(d)}, {"train", to_json(t)},
                            {"data", to_json(w.spec)}};
  Run run;
  const auto t0 = std::chrono::steady_clock::now();
  std::ifstream is(dir / "config.json");
  if (is && fs::exists(ck) && nlohmann::json::parse(is) == want) {
    run.state = std::make_unique<TrainState>(load_checkpoint(ck));
    run.resumed = true;
  } else {
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "config.json") << want.dump(2);
    run.state = std::make_unique<TrainState>(TrainState::create(g, d, t));
  }
  const std::string name = mode == ModulationMode::VSam ? "vsam" : "sam";
  std::fprintf(stderr, "[%s] %s at step %llu of %d\n", name.c_str(), run.resumed ? "resuming" : "training",
               static_cast<unsigned long long>(run.state->step), steps);
  TrainHooks hooks{ck, dir / "metrics.txt", [&](const StepResult& r) {
                     if ((r.step + 1) % 250 != 0) return;
                     std::fprintf(stderr, "[%s] step %llu  %.0f s  d_cse %.4f  g_adv %.3f\n", name.c_str(),
                                  static_cast<unsigned long long>(r.step + 1), seconds_since(t0),
                                  [&] {
                                    for (const auto& [n, v] : r.terms)
                                      if (n == "d_cse") return v;
                                    return 0.0;
                                  }(),
                                  [&] {
                                    for (const auto& [n, v] : r.terms)
                                      if (n == "g_adv") return v;
                                    return 0.0;
                                  }());
                   }};
  train(*run.state, w.train, hooks);
  run.seconds = seconds_since(t0);
  return run;
}

Outcome synthetic_end_to_end(const World& w, const Run& vsam, int steps) {
  const GeneratorModel model(vsam.state->eval_generator());
  const double body_psnr = oracle_body_psnr(model, w.held, *w.texture, 17);
  const double d_err = discriminator_surface_error(*vsam.state->d, w.held);
  const std::size_t params = vsam.state->g->params().count();
  const bool ok = body_psnr > 15.0 && d_err < 0.05 && steps <= 5000;
  return {ok, "V-SAM G " + fmt("%.2f", params / 1e6) + "M params, " + std::to_string(steps) +
                  " steps: held-out BODY PSNR " + fmt("%.2f", body_psnr) + " dB (gate 15), D embedding error " +
                  fmt("%.4f", d_err) + " (gate 0.05), train time " + fmt("%.0f", vsam.seconds) + " s" +
                  (vsam.resumed ? " after resume" : "")};
}

Outcome invariance_protocol(const World& w, const Run* vsam, const Run* sam) {
  const std::vector<SurfaceAnnotation> data(w.held.begin(), w.held.begin() + 16);
  auto point = testing::pointwise_model(64, 32);
  const double pt = invariance_study(point, data, Family::Translation, 16, 1).mean_psnr;
  const double ph = invariance_study(point, data, Family::Hflip, 16, 1).mean_psnr;
  Image c(64, 32, 3);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(-1, 1);
  for (auto& v : c.data) v = u(rng);
  auto constant = testing::constant_model(c);
  const double ct = invariance_study(constant, data, Family::Translation, 16, 1).mean_psnr;
  const double ch = invariance_study(constant, data, Family::Hflip, 16, 1).mean_psnr;
  bool ok = pt == kPsnrCap && ph == kPsnrCap && ct < kPsnrCap && ch < kPsnrCap;
  std::string detail = "pointwise mock " + fmt("%.0f", pt) + "/" + fmt("%.0f", ph) + " dB, constant mock " +
                       fmt("%.1f", ct) + "/" + fmt("%.1f", ch) + " dB (translation/hflip)";
  if (vsam && sam) {
    const GeneratorModel mv(vsam->state->eval_generator()), ms(sam->state->eval_generator());
    const double v = invariance_study(mv, w.held, Family::Translation, 64, 23).mean_psnr;
    const double s = invariance_study(ms, w.held, Family::Translation, 64, 23).mean_psnr;
    ok = ok && v >= s;
    detail += "; trained translation PSNR V-SAM " + fmt("%.2f", v) + " dB vs SAM spatial-z " + fmt("%.2f", s) + " dB";
  } else {
    ok = false;
    detail += "; trained comparison not run";
  }
  return {ok, detail};
}

// ---------------------------------------------------------------- 8

Outcome pipeline(const World& w, const Run* vsam, const fs::path& work) {
  std::vector<std::string> notes;
  bool ok = true;
  // Bit-diff: crop equal to model size, so the expected region has a closed form.
  const Box box{10, 14, 16, 26};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(-0.9f, 0.9f);
  Image img(40, 30, 3);
  for (auto& v : img.data) v = u(rng);
  EmbeddingRaster surf(40, 30);
  std::normal_distribution<float> n(0, 0.3f);
  for (int y = 16; y < 24; ++y)
    for (int x = 11; x < 15; ++x) {
      surf.valid[surf.pixel_index(y, x)] = 1;
      for (auto& v : surf.at(y, x)) v = n(rng);
    }
  auto fill = testing::fill_model(16, 8, 0.123f);
  auto r = anonymize_image(img, surf, {{box, 0.9}}, fill, AnonymizeOptions{});
  int mismatches = 0;
  const Box crop = context_crop(box, 0.2, 40, 30);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 30; ++x) {
      bool expect = false;
      if (y >= crop.y0 && y < crop.y1 && x >= crop.x0 && x < crop.x1)
        for (int by = std::max(0, y - 2); by <= std::min(39, y + 2); ++by)
          for (int bx = std::max(0, x - 2); bx <= std::min(29, x + 2); ++bx)
            expect = expect || (surf.is_valid(by, bx) && by >= box.y0 && by < box.y1 && bx >= box.x0 && bx < box.x1);
      bool changed = false;
      for (int c = 0; c < 3; ++c) changed = changed || r.image.at(y, x, c) != img.at(y, x, c);
      mismatches += changed != expect;
    }
  ok = ok && mismatches == 0;
  notes.push_back("bit-diff mismatches " + std::to_string(mismatches));

  if (vsam) {
    const GeneratorModel model(vsam->state->eval_generator());
    const auto& s = w.held[0];
    const auto pass = anonymize_image(s.image, s.embeddings, {}, model, AnonymizeOptions{});
    const bool same = pass.image == s.image;
    auto rr = anonymize_image(s.image, s.embeddings, {{{4, 4, 28, 60}, 0.8}}, model, AnonymizeOptions{});
    int outside = 0;
    for (std::size_t p = 0; p < rr.region.size(); ++p)
      if (!rr.region[p])
        for (int c = 0; c < 3; ++c) outside += rr.image.data[p * 3 + c] != s.image.data[p * 3 + c];
    ok = ok && same && outside == 0;
    notes.push_back(std::string("zero detections ") + (same ? "bit-identical" : "CHANGED") +
                    ", trained-model changes outside region " + std::to_string(outside));
  } else {
    auto ident = testing::identity_model(16, 8);
    const bool same = anonymize_image(img, surf, {}, ident, AnonymizeOptions{}).image == img;
    ok = ok && same;
    notes.push_back(std::string("zero detections ") + (same ? "bit-identical" : "CHANGED"));
  }

  // Resume: losses after reload match the uninterrupted run.
  GeneratorConfig g = tiny_generator();
  g.height = 64;
  g.width = 32;
  DiscriminatorConfig d;
  d.channels = {8, 12, 16};
  d.fpn_channels = 8;
  d.fc_width = 16;
  TrainConfig t;
  t.batch = 2;
  t.r1_interval = 2;
  t.seed = 5;
  const std::vector<SurfaceAnnotation> data(w.train.begin(), w.train.begin() + 16);
  auto s = TrainState::create(g, d, t);
  for (int i = 0; i < 3; ++i) train_step(s, data);
  const fs::path ck = work / "resume.bin";
  save_checkpoint(s, ck);
  std::vector<Terms> direct, resumed;
  for (int i = 0; i < 3; ++i) direct.push_back(train_step(s, data).terms);
  auto back = load_checkpoint(ck);
  for (int i = 0; i < 3; ++i) resumed.push_back(train_step(back, data).terms);
  double worst = 0;
  for (int i = 0; i < 3; ++i) {
    if (direct[i].size() != resumed[i].size()) worst = 1e300;
    for (std::size_t k = 0; k < std::min(direct[i].size(), resumed[i].size()); ++k)
      worst = std::max(worst, std::abs(direct[i][k].second - resumed[i][k].second));
  }
  ok = ok && worst <= 1e-5;
  notes.push_back("resume max loss diff " + fmt("%.1e", worst));
  std::string detail;
  for (const auto& x : notes) detail += (detail.empty() ? "" : ", ") + x;
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance gates"};
  int steps = 5000, batch = 8;
  std::string work = "acceptance_work", only;
  app.add_option("--steps", steps, "Training steps per model (at most 5000)");
  app.add_option("--batch", batch, "Training batch size");
  app.add_option("--work", work, "Checkpoint directory");
  app.add_option("--only", only, "Comma-separated criteria to run, e.g. 1,2,8");
  CLI11_PARSE(app, argc, argv);

  std::set<int> selected;
  {
    std::stringstream ss(only);
    for (std::string tok; std::getline(ss, tok, ',');)
      if (!tok.empty()) selected.insert(std::stoi(tok));
  }
  auto want = [&](int k) { return selected.empty() || selected.count(k) > 0; };
  const fs::path wdir(work);
  fs::create_directories(wdir);

  int failures = 0;
  auto report = [&](int k, const std::string& name, const std::function<Outcome()>& fn) {
    if (!want(k)) return;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", k, name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "gradient suite", gradients);
  report(2, "surface loss oracle", surface_oracle);
  report(3, "equivariance", equivariance);
  report(4, "truncation", truncation);
  report(5, "discretization", discretization);

  if (want(6) || want(7) || want(8)) {
    const World world = make_world();
    Run vsam, sam;
    const bool need_training = want(6) || want(7);
    std::string train_error;
    if (need_training) {
      try {
        vsam = train_model(world, ModulationMode::VSam, steps, batch, wdir / "vsam");
        if (want(7)) sam = train_model(world, ModulationMode::Sam, steps, batch, wdir / "sam");
      } catch (const std::exception& e) {
        train_error = e.what();
      }
    }
    report(6, "synthetic end-to-end", [&] {
      if (!vsam.state) throw std::runtime_error("training failed: " + train_error);
      return synthetic_end_to_end(world, vsam, steps);
    });
    report(7, "invariance protocol", [&] {
      return invariance_protocol(world, vsam.state ? &vsam : nullptr, sam.state ? &sam : nullptr);
    });
    report(8, "pipeline contracts", [&] { return pipeline(world, vsam.state ? &vsam : nullptr, wdir); });
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
