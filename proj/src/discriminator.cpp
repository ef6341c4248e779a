#include "sgg/discriminator.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace sgg {

using nn::Tensor;
using nn::Var;

void DiscriminatorConfig::validate() const {
  if (levels() < 3) throw std::invalid_argument("discriminator needs at least 3 levels for the FPN head");
  for (int c : channels) {
    if (c < 1) throw std::invalid_argument("discriminator channel counts must be >= 1");
  }
  const int f = 1 << (levels() - 1);
  if (height < 1 || width < 1 || height % f != 0 || width % f != 0) {
    throw std::invalid_argument("discriminator resolution not divisible by " + std::to_string(f));
  }
  if (fpn_channels < 1 || fc_width < 1 || embed_dim < 1) {
    throw std::invalid_argument("discriminator widths must be >= 1");
  }
}

nlohmann::json to_json(const DiscriminatorConfig& c) {
  return {{"height", c.height},           {"width", c.width},       {"channels", c.channels},
          {"fpn_channels", c.fpn_channels}, {"fc_width", c.fc_width}, {"embed_dim", c.embed_dim}};
}

DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j) {
  DiscriminatorConfig c;
  c.height = j.value("height", c.height);
  c.width = j.value("width", c.width);
  c.channels = j.value("channels", c.channels);
  c.fpn_channels = j.value("fpn_channels", c.fpn_channels);
  c.fc_width = j.value("fc_width", c.fc_width);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.validate();
  return c;
}

namespace {

template <typename T>
Var<T> act(const Var<T>& x) {
  return nn::scale(nn::leaky_relu(x, 0.2), std::sqrt(2.0));
}

}  // namespace

template <typename T>
Discriminator<T>::Discriminator(const DiscriminatorConfig& config, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const auto& ch = config_.channels;
  const int levels = config_.levels();
  stem_ = nn::ConvLayer<T>::create(params_, "d.stem", 6, ch[0], 3, true, rng);
  for (int l = 0; l < levels; ++l) {
    const std::string name = "d.l" + std::to_string(l);
    conv_a_.push_back(nn::ConvLayer<T>::create(params_, name + ".a", ch[l], ch[l], 3, true, rng));
    if (l + 1 < levels) {
      conv_b_.push_back(nn::ConvLayer<T>::create(params_, name + ".b", ch[l], ch[l + 1], 3, true, rng));
    }
  }
  const int f = 1 << (levels - 1);
  const int flat = ch[levels - 1] * (config_.height / f) * (config_.width / f);
  fc1_ = nn::ConvLayer<T>::create(params_, "d.fc1", flat, config_.fc_width, 1, true, rng);
  fc2_ = nn::ConvLayer<T>::create(params_, "d.fc2", config_.fc_width, 1, 1, true, rng);
  for (int l = 0; l < 3; ++l) {
    const std::string name = "d.fpn" + std::to_string(l);
    lateral_.push_back(
        nn::ConvLayer<T>::create(params_, name + ".lateral", ch[l], config_.fpn_channels, 1, true, rng));
    fuse_.push_back(nn::ConvLayer<T>::create(params_, name + ".fuse", config_.fpn_channels,
                                             config_.fpn_channels, 3, true, rng));
  }
  head_ = nn::ConvLayer<T>::create(params_, "d.head", config_.fpn_channels, config_.embed_dim, 1,
                                   true, rng);
}

template <typename T>
typename Discriminator<T>::Output Discriminator<T>::forward(const Var<T>& image,
                                                            const Tensor<T>& mask_planes) const {
  const nn::Shape s = image->shape();
  if (s.c != 3 || s.h != config_.height || s.w != config_.width) {
    throw std::invalid_argument("discriminator: expected [N,3," + std::to_string(config_.height) +
                                "," + std::to_string(config_.width) + "] image, got " + s.str());
  }
  nn::require_same(mask_planes.shape(), s, "discriminator mask planes");
  const int levels = config_.levels();
  Var<T> x = act(stem_(nn::concat_channels<T>({image, nn::constant(mask_planes)})));
  std::vector<Var<T>> feats;
  for (int l = 0; l < levels; ++l) {
    x = act(conv_a_[l](x));
    feats.push_back(x);
    if (l + 1 < levels) x = nn::avg_pool2(act(conv_b_[l](x)));
  }
  const nn::Shape xs = x->shape();
  Var<T> flat = nn::reshape(x, nn::Shape{xs.n, xs.c * xs.h * xs.w, 1, 1});
  Output out;
  out.logit = fc2_(act(fc1_(flat)));

  Var<T> p = act(fuse_[2](lateral_[2](feats[2])));
  for (int l = 1; l >= 0; --l) {
    p = act(fuse_[l](nn::add(lateral_[l](feats[l]), nn::upsample2(p))));
  }
  out.e_hat = head_(p);
  return out;
}

double smooth_l1(double d, double beta) {
  const double a = std::abs(d);
  return a < beta ? 0.5 * d * d / beta : a - 0.5 * beta;
}

double smooth_l1_grad(double d, double beta) {
  if (std::abs(d) < beta) return d / beta;
  return d > 0 ? 1.0 : -1.0;
}

template <typename T>
SurfaceLoss<T> surface_loss(const Var<T>& e_hat, const SurfaceBatch<T>& batch, double beta) {
  nn::require_same(e_hat->shape(), batch.embeddings.shape(), "surface_loss");
  const nn::Shape s = e_hat->shape();
  const std::size_t hw = s.plane();
  const std::size_t body = batch.count(Region::Body);
  SurfaceLoss<T> out;
  if (body == 0) {
    out.degenerate = true;
    out.loss = nn::constant(Tensor<T>({1, 1, 1, 1}));
    return out;
  }
  double total = 0;
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t p = 0; p < hw; ++p) {
      if (batch.regions[n * hw + p] != Region::Body) continue;
      for (int c = 0; c < s.c; ++c) {
        const std::size_t i = (static_cast<std::size_t>(n) * s.c + c) * hw + p;
        total += smooth_l1(double(e_hat->value[i]) - batch.embeddings[i], beta);
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(body);
  Tensor<T> value({1, 1, 1, 1}, static_cast<T>(total * inv));
  auto regions = batch.regions;
  auto target = batch.embeddings;
  out.loss = nn::make_node<T>(
      std::move(value), {e_hat},
      [regions = std::move(regions), target = std::move(target), inv, beta](nn::Node<T>& self) {
        auto& in = *self.inputs[0];
        auto& g = in.grad_buffer();
        const nn::Shape s = in.shape();
        const std::size_t hw = s.plane();
        const double up = self.grad[0] * inv;
        for (int n = 0; n < s.n; ++n) {
          for (std::size_t p = 0; p < hw; ++p) {
            if (regions[n * hw + p] != Region::Body) continue;
            for (int c = 0; c < s.c; ++c) {
              const std::size_t i = (static_cast<std::size_t>(n) * s.c + c) * hw + p;
              g[i] += static_cast<T>(up * smooth_l1_grad(double(in.value[i]) - target[i], beta));
            }
          }
        }
      });
  return out;
}

template <typename T>
SurfaceLoss<T> generator_surface_loss(const Discriminator<T>& d, const Var<T>& generated,
                                      const SurfaceBatch<T>& batch) {
  return surface_loss(d.forward(generated, batch.mask_planes).e_hat, batch);
}

template class Discriminator<float>;
template class Discriminator<double>;
template SurfaceLoss<float> surface_loss<float>(const Var<float>&, const SurfaceBatch<float>&, double);
template SurfaceLoss<double> surface_loss<double>(const Var<double>&, const SurfaceBatch<double>&,
                                                  double);
template SurfaceLoss<float> generator_surface_loss<float>(const Discriminator<float>&,
                                                          const Var<float>&,
                                                          const SurfaceBatch<float>&);
template SurfaceLoss<double> generator_surface_loss<double>(const Discriminator<double>&,
                                                            const Var<double>&,
                                                            const SurfaceBatch<double>&);

}  // namespace sgg
