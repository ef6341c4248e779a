#pragma once

// Adversarial training: losses, masked r1, augmentation, Adam, EMA, the train
// loop, checkpoints and the metrics log.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sgg/discriminator.hpp"
#include "sgg/generator.hpp"

namespace sgg {

struct TrainConfig {
  double lr_g = 2e-3;
  double lr_d = 2e-3;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double adam_eps = 1e-8;
  int batch = 8;
  int steps = 5000;
  double lambda_cse = 1.0;
  double r1_gamma = 0.1;
  int r1_interval = 16;
  double epsilon_penalty = 1e-3;
  bool hflip = true;
  bool translate = true;
  bool color = false;
  double ema_decay = 0.999;  // 0 disables the EMA generator
  double omega_mean_decay = 0.995;
  int checkpoint_every = 500;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Named scalar terms of one loss evaluation, in insertion order.
using Terms = std::vector<std::pair<std::string, double>>;

/// Non-finite loss; carries the step and the term breakdown.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::uint64_t step, Terms terms);
  std::uint64_t step() const { return step_; }
  const Terms& terms() const { return terms_; }

 private:
  std::uint64_t step_;
  Terms terms_;
};

template <typename T>
struct LossResult {
  nn::Var<T> total;
  Terms terms;
};

struct LossWeights {
  double lambda_cse = 1.0;
  double epsilon_penalty = 1e-3;
};

/// softplus(-l_real) + softplus(l_fake) + eps * l_real^2 + lambda * L_CSE(real),
/// each averaged over the batch. `fake` is a constant generated image.
template <typename T>
LossResult<T> d_loss(const Discriminator<T>& d, const SurfaceBatch<T>& real,
                     const nn::Tensor<T>& fake, const LossWeights& w);

/// softplus(-l_fake) + lambda * L_CSE(fake), averaged over the batch.
template <typename T>
LossResult<T> g_loss(const Discriminator<T>& d, const nn::Var<T>& fake,
                     const SurfaceBatch<T>& batch, double lambda_cse);

/// Logit of a batch of images, [N,1,1,1].
template <typename T>
using LogitFn = std::function<nn::Var<T>(const nn::Var<T>& image)>;

/// Masked r1: (gamma / 2) * mean_n || M_n * d logit_n / d I_n ||^2.
/// Leaves parameter gradients untouched.
template <typename T>
double r1_value(const LogitFn<T>& logit, nn::ParameterSet<T>& params, const SurfaceBatch<T>& real,
                double gamma);

/// Computes the masked r1 value and accumulates its parameter gradient, via a
/// central-difference Hessian-vector product along v = M * dlogit/dI. Returns the value.
template <typename T>
double r1_accumulate(const LogitFn<T>& logit, nn::ParameterSet<T>& params,
                     const SurfaceBatch<T>& real, double gamma);

struct AugmentConfig {
  bool hflip = true;
  bool translate = true;
  bool color = false;
};

/// Mirrors every plane horizontally.
SurfaceAnnotation hflip(const SurfaceAnnotation& a);
/// Integer translation of every plane; vacated pixels become KNOWN with the
/// nearest edge color and no embedding.
SurfaceAnnotation translate(const SurfaceAnnotation& a, int dy, int dx);
/// Brightness and contrast jitter on the image only.
SurfaceAnnotation color_jitter(const SurfaceAnnotation& a, double brightness, double contrast);
/// Random hflip, translation up to 1/8 of each side, and color jitter.
SurfaceAnnotation augment(const SurfaceAnnotation& a, const AugmentConfig& cfg, std::mt19937_64& rng);

/// Adam with bias correction over a parameter set.
class Adam {
 public:
  explicit Adam(const nn::ParameterSet<float>& params);
  /// lr, beta1, beta2 as passed (lazy regularization rescales them outside).
  void step(nn::ParameterSet<float>& params, double lr, double beta1, double beta2, double eps);
  std::uint64_t t = 0;
  std::vector<nn::Tensor<float>> m, v;
};

/// ema = decay * ema + (1 - decay) * src, entry by entry.
template <typename T>
void ema_update(nn::ParameterSet<T>& ema, const nn::ParameterSet<T>& src, double decay);

struct TrainState {
  GeneratorConfig g_config;
  DiscriminatorConfig d_config;
  TrainConfig config;
  std::unique_ptr<Generator<float>> g;
  std::unique_ptr<Generator<float>> g_ema;  // null when ema_decay == 0
  std::unique_ptr<Discriminator<float>> d;
  std::unique_ptr<Adam> adam_g, adam_d;
  std::uint64_t step = 0;

  static TrainState create(const GeneratorConfig& g, const DiscriminatorConfig& d,
                           const TrainConfig& t);
  /// Generator used for evaluation outputs: the EMA copy when present.
  const Generator<float>& eval_generator() const { return g_ema ? *g_ema : *g; }
};

struct StepResult {
  std::uint64_t step = 0;
  Terms terms;
};

/// One D step then one G step on a batch drawn deterministically from (seed, step).
StepResult train_step(TrainState& state, const std::vector<SurfaceAnnotation>& data);

struct TrainHooks {
  std::filesystem::path checkpoint;  // empty: no checkpoints
  std::filesystem::path metrics;     // empty: no metrics log
  std::function<void(const StepResult&)> on_step;
};

/// Runs until state.step reaches config.steps.
void train(TrainState& state, const std::vector<SurfaceAnnotation>& data, const TrainHooks& hooks);

/// Appends "step term value" lines.
void append_metrics(const std::filesystem::path& path, const StepResult& r);

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);
/// The evaluation generator of a checkpoint (EMA when stored).
std::unique_ptr<Generator<float>> load_generator(const std::filesystem::path& path);

/// All annotations of a directory in id order.
std::vector<SurfaceAnnotation> load_dataset(const std::filesystem::path& dir);

}  // namespace sgg
