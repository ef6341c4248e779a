#include "sgg/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sgg/errors.hpp"

namespace sgg {

using nn::Tensor;
using nn::Var;

void TrainConfig::validate() const {
  if (!(lr_g > 0) || !(lr_d > 0)) throw std::invalid_argument("learning rates must be positive");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
  if (batch < 1) throw std::invalid_argument("batch must be >= 1");
  if (steps < 0) throw std::invalid_argument("steps must be >= 0");
  if (lambda_cse < 0 || r1_gamma < 0 || epsilon_penalty < 0) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
  if (r1_interval < 1) throw std::invalid_argument("r1 interval must be >= 1");
  if (ema_decay < 0 || ema_decay >= 1) throw std::invalid_argument("EMA decay must lie in [0, 1)");
  if (omega_mean_decay < 0 || omega_mean_decay >= 1) {
    throw std::invalid_argument("latent mean decay must lie in [0, 1)");
  }
  if (checkpoint_every < 1) throw std::invalid_argument("checkpoint interval must be >= 1");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"lr_g", c.lr_g},
          {"lr_d", c.lr_d},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_eps", c.adam_eps},
          {"batch", c.batch},
          {"steps", c.steps},
          {"lambda_cse", c.lambda_cse},
          {"r1_gamma", c.r1_gamma},
          {"r1_interval", c.r1_interval},
          {"epsilon_penalty", c.epsilon_penalty},
          {"hflip", c.hflip},
          {"translate", c.translate},
          {"color", c.color},
          {"ema_decay", c.ema_decay},
          {"omega_mean_decay", c.omega_mean_decay},
          {"checkpoint_every", c.checkpoint_every},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.lr_g = j.value("lr_g", c.lr_g);
  c.lr_d = j.value("lr_d", c.lr_d);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.batch = j.value("batch", c.batch);
  c.steps = j.value("steps", c.steps);
  c.lambda_cse = j.value("lambda_cse", c.lambda_cse);
  c.r1_gamma = j.value("r1_gamma", c.r1_gamma);
  c.r1_interval = j.value("r1_interval", c.r1_interval);
  c.epsilon_penalty = j.value("epsilon_penalty", c.epsilon_penalty);
  c.hflip = j.value("hflip", c.hflip);
  c.translate = j.value("translate", c.translate);
  c.color = j.value("color", c.color);
  c.ema_decay = j.value("ema_decay", c.ema_decay);
  c.omega_mean_decay = j.value("omega_mean_decay", c.omega_mean_decay);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

namespace {

std::string describe(std::uint64_t step, const Terms& terms) {
  std::ostringstream os;
  os << "training diverged at step " << step << ":";
  for (const auto& [name, value] : terms) os << " " << name << "=" << value;
  return os.str();
}

template <typename T>
double scalar(const Var<T>& v) {
  return static_cast<double>(v->value[0]);
}

}  // namespace

DivergenceError::DivergenceError(std::uint64_t step, Terms terms)
    : std::runtime_error(describe(step, terms)), step_(step), terms_(std::move(terms)) {}

template <typename T>
LossResult<T> d_loss(const Discriminator<T>& d, const SurfaceBatch<T>& real, const Tensor<T>& fake,
                     const LossWeights& w) {
  nn::require_same(fake.shape(), real.image.shape(), "d_loss fake image");
  const double inv_n = 1.0 / real.n;
  auto ro = d.forward(nn::constant(real.image), real.mask_planes);
  auto fo = d.forward(nn::constant(fake), real.mask_planes);
  auto real_term = nn::scale(nn::sum(nn::softplus(nn::scale(ro.logit, -1.0))), inv_n);
  auto fake_term = nn::scale(nn::sum(nn::softplus(fo.logit)), inv_n);
  auto eps_term = nn::scale(nn::sum(nn::square(ro.logit)), w.epsilon_penalty * inv_n);
  auto cse_term = nn::scale(surface_loss(ro.e_hat, real).loss, w.lambda_cse);
  LossResult<T> r;
  r.total = nn::add(nn::add(real_term, fake_term), nn::add(eps_term, cse_term));
  r.terms = {{"d_real", scalar(real_term)},
             {"d_fake", scalar(fake_term)},
             {"d_eps", scalar(eps_term)},
             {"d_cse", scalar(cse_term)}};
  return r;
}

template <typename T>
LossResult<T> g_loss(const Discriminator<T>& d, const Var<T>& fake, const SurfaceBatch<T>& batch,
                     double lambda_cse) {
  auto o = d.forward(fake, batch.mask_planes);
  auto adv = nn::scale(nn::sum(nn::softplus(nn::scale(o.logit, -1.0))), 1.0 / batch.n);
  auto cse = nn::scale(surface_loss(o.e_hat, batch).loss, lambda_cse);
  LossResult<T> r;
  r.total = nn::add(adv, cse);
  r.terms = {{"g_adv", scalar(adv)}, {"g_cse", scalar(cse)}};
  return r;
}

namespace {

/// M * d(sum logit)/dI with the parameters frozen during the pass.
template <typename T>
Tensor<T> masked_input_gradient(const LogitFn<T>& logit, nn::ParameterSet<T>& params,
                                const SurfaceBatch<T>& real) {
  params.set_requires_grad(false);
  auto x = nn::leaf(real.image);
  try {
    nn::backward(nn::sum(logit(x)));
  } catch (...) {
    params.set_requires_grad(true);
    throw;
  }
  params.set_requires_grad(true);
  Tensor<T> v = x->grad.empty() ? Tensor<T>(real.image.shape()) : x->grad;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= real.known3[i];
  return v;
}

template <typename T>
double half_sq_mean(const Tensor<T>& v, int n, double gamma) {
  double s = 0;
  for (T x : v.values()) s += static_cast<double>(x) * x;
  return 0.5 * gamma * s / n;
}

}  // namespace

template <typename T>
double r1_value(const LogitFn<T>& logit, nn::ParameterSet<T>& params, const SurfaceBatch<T>& real,
                double gamma) {
  return half_sq_mean(masked_input_gradient(logit, params, real), real.n, gamma);
}

template <typename T>
double r1_accumulate(const LogitFn<T>& logit, nn::ParameterSet<T>& params,
                     const SurfaceBatch<T>& real, double gamma) {
  const Tensor<T> v = masked_input_gradient(logit, params, real);
  const double value = half_sq_mean(v, real.n, gamma);
  double vmax = 0;
  for (T x : v.values()) vmax = std::max(vmax, std::abs(static_cast<double>(x)));
  if (vmax == 0 || gamma == 0) return value;
  // d/dtheta of (gamma/2n) sum ||v||^2 = (gamma/n) H_{theta,x} v, with H v taken
  // as a central difference of d logit/d theta along v.
  const double fd = sizeof(T) == sizeof(float) ? 1e-2 : 1e-4;
  const double eps = fd / vmax;
  const double coef = gamma / real.n / (2 * eps);
  for (int sign : {1, -1}) {
    Tensor<T> x = real.image;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += static_cast<T>(sign * eps) * v[i];
    nn::backward(nn::sum(logit(nn::constant(std::move(x)))),
                 Tensor<T>({1, 1, 1, 1}, static_cast<T>(sign * coef)));
  }
  return value;
}

SurfaceAnnotation hflip(const SurfaceAnnotation& a) {
  SurfaceAnnotation b = a;
  const int h = a.height(), w = a.width(), c = a.embeddings.channels;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int sx = w - 1 - x;
      for (int ch = 0; ch < 3; ++ch) b.image.at(y, x, ch) = a.image.at(y, sx, ch);
      const auto src = a.embeddings.at(y, sx);
      std::copy(src.begin(), src.end(), b.embeddings.at(y, x).begin());
      b.embeddings.valid[b.embeddings.pixel_index(y, x)] = a.embeddings.valid[a.embeddings.pixel_index(y, sx)];
      b.mask.at(y, x) = a.mask.at(y, sx);
    }
  }
  (void)c;
  return b;
}

SurfaceAnnotation translate(const SurfaceAnnotation& a, int dy, int dx) {
  SurfaceAnnotation b = a;
  const int h = a.height(), w = a.width();
  std::fill(b.embeddings.data.begin(), b.embeddings.data.end(), 0.0f);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int sy = y - dy, sx = x - dx;
      const bool inside = sy >= 0 && sy < h && sx >= 0 && sx < w;
      const int cy = std::clamp(sy, 0, h - 1), cx = std::clamp(sx, 0, w - 1);
      for (int ch = 0; ch < 3; ++ch) b.image.at(y, x, ch) = a.image.at(cy, cx, ch);
      const std::size_t p = b.embeddings.pixel_index(y, x);
      if (inside) {
        const auto src = a.embeddings.at(sy, sx);
        std::copy(src.begin(), src.end(), b.embeddings.at(y, x).begin());
        b.embeddings.valid[p] = a.embeddings.valid[a.embeddings.pixel_index(sy, sx)];
        b.mask.at(y, x) = a.mask.at(sy, sx);
      } else {
        b.embeddings.valid[p] = 0;
        b.mask.at(y, x) = Region::Known;
      }
    }
  }
  return b;
}

SurfaceAnnotation color_jitter(const SurfaceAnnotation& a, double brightness, double contrast) {
  SurfaceAnnotation b = a;
  double mean = 0;
  for (float v : a.image.data) mean += v;
  mean /= static_cast<double>(a.image.data.size());
  for (auto& v : b.image.data) {
    v = static_cast<float>(std::clamp((v - mean) * contrast + mean + brightness, -1.0, 1.0));
  }
  return b;
}

SurfaceAnnotation augment(const SurfaceAnnotation& a, const AugmentConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  SurfaceAnnotation out = a;
  if (cfg.hflip && u01(rng) < 0.5) out = hflip(out);
  if (cfg.translate) {
    const int my = a.height() / 8, mx = a.width() / 8;
    std::uniform_int_distribution<int> ty(-my, my), tx(-mx, mx);
    const int dy = ty(rng), dx = tx(rng);
    if (dy != 0 || dx != 0) out = translate(out, dy, dx);
  }
  if (cfg.color) {
    const double br = 0.4 * u01(rng) - 0.2;
    const double ct = 0.8 + 0.4 * u01(rng);
    out = color_jitter(out, br, ct);
  }
  return out;
}

Adam::Adam(const nn::ParameterSet<float>& params) {
  for (const auto& e : params.entries()) {
    m.emplace_back(e.var->shape());
    v.emplace_back(e.var->shape());
  }
}

void Adam::step(nn::ParameterSet<float>& params, double lr, double beta1, double beta2, double eps) {
  const auto& entries = params.entries();
  if (entries.size() != m.size()) throw std::invalid_argument("Adam: parameter layout changed");
  ++t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t k = 0; k < entries.size(); ++k) {
    auto& node = *entries[k].var;
    if (node.grad.empty()) continue;
    float* p = node.value.data();
    const float* g = node.grad.data();
    float* mk = m[k].data();
    float* vk = v[k].data();
    const std::size_t n = node.value.size();
    for (std::size_t i = 0; i < n; ++i) {
      mk[i] = static_cast<float>(beta1 * mk[i] + (1 - beta1) * g[i]);
      vk[i] = static_cast<float>(beta2 * vk[i] + (1 - beta2) * double(g[i]) * g[i]);
      const double mh = mk[i] / c1;
      const double vh = vk[i] / c2;
      p[i] = static_cast<float>(p[i] - lr * mh / (std::sqrt(vh) + eps));
    }
  }
}

template <typename T>
void ema_update(nn::ParameterSet<T>& ema, const nn::ParameterSet<T>& src, double decay) {
  const auto& a = ema.entries();
  const auto& b = src.entries();
  if (a.size() != b.size()) throw std::invalid_argument("ema_update: parameter layout mismatch");
  for (std::size_t k = 0; k < a.size(); ++k) {
    auto& dst = a[k].var->value;
    const auto& s = b[k].var->value;
    nn::require_same(dst.shape(), s.shape(), "ema_update");
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i] = static_cast<T>(decay * dst[i] + (1 - decay) * s[i]);
    }
  }
}

TrainState TrainState::create(const GeneratorConfig& g, const DiscriminatorConfig& d,
                              const TrainConfig& t) {
  t.validate();
  if (g.height != d.height || g.width != d.width) {
    throw std::invalid_argument("generator and discriminator resolutions differ");
  }
  TrainState s;
  s.g_config = g;
  s.d_config = d;
  s.config = t;
  s.g = std::make_unique<Generator<float>>(g, t.seed * 3 + 1);
  s.d = std::make_unique<Discriminator<float>>(d, t.seed * 3 + 2);
  if (t.ema_decay > 0) {
    s.g_ema = std::make_unique<Generator<float>>(g, t.seed * 3 + 1);
    s.g_ema->params().copy_values_from(s.g->params());
  }
  s.adam_g = std::make_unique<Adam>(s.g->params());
  s.adam_d = std::make_unique<Adam>(s.d->params());
  return s;
}

namespace {

std::mt19937_64 step_rng(std::uint64_t seed, std::uint64_t step) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32)};
  return std::mt19937_64(seq);
}

bool all_finite(const Terms& terms) {
  return std::all_of(terms.begin(), terms.end(),
                     [](const auto& t) { return std::isfinite(t.second); });
}

bool params_finite(const nn::ParameterSet<float>& p) {
  for (const auto& e : p.entries()) {
    for (float v : e.var->value.values()) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

}  // namespace

StepResult train_step(TrainState& s, const std::vector<SurfaceAnnotation>& data) {
  if (data.empty()) throw std::invalid_argument("train_step: empty dataset");
  const TrainConfig& cfg = s.config;
  auto rng = step_rng(cfg.seed, s.step);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  const AugmentConfig aug{cfg.hflip, cfg.translate, cfg.color};
  std::vector<SurfaceAnnotation> anns;
  anns.reserve(cfg.batch);
  for (int i = 0; i < cfg.batch; ++i) anns.push_back(augment(data[pick(rng)], aug, rng));
  std::vector<const SurfaceAnnotation*> ptrs;
  for (const auto& a : anns) ptrs.push_back(&a);
  const auto batch = make_batch<float>(ptrs);
  const nn::Shape zs{cfg.batch, s.g->z_dim(), 1, 1};
  const Tensor<float> z_d = nn::random_normal<float>(zs, rng);
  const Tensor<float> z_g = nn::random_normal<float>(zs, rng);

  StepResult r;
  r.step = s.step;

  // Discriminator step.
  Tensor<float> fake;
  {
    nn::NoGradGuard guard;
    fake = s.g->forward(batch, z_d).composite->value;
  }
  s.d->params().zero_grad();
  auto dl = d_loss(*s.d, batch, fake, LossWeights{cfg.lambda_cse, cfg.epsilon_penalty});
  nn::backward(dl.total);
  r.terms = dl.terms;
  double d_total = dl.total->value[0];
  const bool lazy = cfg.r1_interval > 1;
  if (cfg.r1_gamma > 0 && s.step % cfg.r1_interval == 0) {
    const Discriminator<float>& d = *s.d;
    LogitFn<float> logit = [&](const Var<float>& x) { return d.forward(x, batch.mask_planes).logit; };
    const double r1 = r1_accumulate(logit, s.d->params(), batch, cfg.r1_gamma * cfg.r1_interval);
    r.terms.emplace_back("r1", r1);
    d_total += r1;
  }
  r.terms.emplace_back("d_total", d_total);
  if (!all_finite(r.terms)) throw DivergenceError(s.step, r.terms);
  const double c = lazy ? static_cast<double>(cfg.r1_interval) / (cfg.r1_interval + 1) : 1.0;
  s.adam_d->step(s.d->params(), cfg.lr_d * c, std::pow(cfg.beta1, c), std::pow(cfg.beta2, c),
                 cfg.adam_eps);

  // Generator step.
  s.g->params().zero_grad();
  s.d->params().set_requires_grad(false);
  Generator<float>::Output out;
  LossResult<float> gl;
  try {
    out = s.g->forward(batch, z_g);
    gl = g_loss(*s.d, out.composite, batch, cfg.lambda_cse);
    nn::backward(gl.total);
  } catch (...) {
    s.d->params().set_requires_grad(true);
    throw;
  }
  s.d->params().set_requires_grad(true);
  r.terms.insert(r.terms.end(), gl.terms.begin(), gl.terms.end());
  r.terms.emplace_back("g_total", gl.total->value[0]);
  if (!all_finite(r.terms)) throw DivergenceError(s.step, r.terms);
  s.adam_g->step(s.g->params(), cfg.lr_g, cfg.beta1, cfg.beta2, cfg.adam_eps);
  if (out.body_omega) s.g->mapping().update_mean(out.body_omega->value, cfg.omega_mean_decay);
  s.g->params().zero_grad();
  s.d->params().zero_grad();

  if (!params_finite(s.g->params()) || !params_finite(s.d->params())) {
    Terms t = r.terms;
    t.emplace_back("nonfinite_parameters", 1.0);
    throw DivergenceError(s.step, t);
  }
  if (s.g_ema) {
    ema_update(s.g_ema->params(), s.g->params(), cfg.ema_decay);
    s.g_ema->mapping().omega_mean = s.g->mapping().omega_mean;
    s.g_ema->mapping().mean_updates = s.g->mapping().mean_updates;
  }
  ++s.step;
  return r;
}

void append_metrics(const std::filesystem::path& path, const StepResult& r) {
  std::ofstream os(path, std::ios::app);
  if (!os) throw std::runtime_error("cannot append to metrics log " + path.string());
  os.precision(9);
  for (const auto& [name, value] : r.terms) os << r.step << " " << name << " " << value << "\n";
}

void train(TrainState& state, const std::vector<SurfaceAnnotation>& data, const TrainHooks& hooks) {
  while (state.step < static_cast<std::uint64_t>(state.config.steps)) {
    const StepResult r = train_step(state, data);
    if (!hooks.metrics.empty()) append_metrics(hooks.metrics, r);
    if (hooks.on_step) hooks.on_step(r);
    if (!hooks.checkpoint.empty() &&
        (state.step % state.config.checkpoint_every == 0 ||
         state.step == static_cast<std::uint64_t>(state.config.steps))) {
      save_checkpoint(state, hooks.checkpoint);
    }
  }
}

std::vector<SurfaceAnnotation> load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::runtime_error("dataset directory " + dir.string() + " does not exist");
  }
  std::vector<SurfaceAnnotation> out;
  for (const auto& id : list_annotation_ids(dir)) {
    try {
      out.push_back(load_annotation(dir, id));
    } catch (const FormatError& e) {
      throw FormatError(e.plane(), "sample " + id + " in " + dir.string() + ": " + e.what());
    }
  }
  return out;
}

#define SGG_INSTANTIATE_TRAINING(T)                                                              \
  template LossResult<T> d_loss<T>(const Discriminator<T>&, const SurfaceBatch<T>&,              \
                                   const Tensor<T>&, const LossWeights&);                        \
  template LossResult<T> g_loss<T>(const Discriminator<T>&, const Var<T>&,                       \
                                   const SurfaceBatch<T>&, double);                              \
  template double r1_value<T>(const LogitFn<T>&, nn::ParameterSet<T>&, const SurfaceBatch<T>&,   \
                              double);                                                           \
  template double r1_accumulate<T>(const LogitFn<T>&, nn::ParameterSet<T>&,                     \
                                   const SurfaceBatch<T>&, double);                              \
  template void ema_update<T>(nn::ParameterSet<T>&, const nn::ParameterSet<T>&, double);

SGG_INSTANTIATE_TRAINING(float)
SGG_INSTANTIATE_TRAINING(double)

}  // namespace sgg
