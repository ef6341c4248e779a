#include "sgg/generator.hpp"

#include <stdexcept>

#include "sgg/errors.hpp"

namespace sgg {

using nn::Tensor;
using nn::Var;

MappingConfig GeneratorConfig::effective_mapping() const {
  MappingConfig m = mapping;
  m.variational = modulation == ModulationMode::VSam;
  m.z_dim = z_dim;
  return m;
}

void GeneratorConfig::validate() const {
  if (channels.empty()) throw std::invalid_argument("generator needs at least one level");
  for (int c : channels) {
    if (c < 1) throw std::invalid_argument("generator channel counts must be >= 1");
  }
  const int f = 1 << (levels() - 1);
  if (height < 1 || width < 1 || height % f != 0 || width % f != 0) {
    throw std::invalid_argument("generator resolution " + std::to_string(height) + "x" +
                                std::to_string(width) + " not divisible by " + std::to_string(f));
  }
  if (z_dim < 1) throw std::invalid_argument("z_dim must be >= 1");
  effective_mapping().validate();
}

GeneratorConfig GeneratorConfig::desk() { return GeneratorConfig{}; }

GeneratorConfig GeneratorConfig::paper_baseline() {
  GeneratorConfig c;
  c.height = 288;
  c.width = 160;
  c.channels = {32, 64, 128, 160, 160, 128};
  c.modulation = ModulationMode::Sam;
  c.z_dim = 512;
  c.mapping = MappingConfig{.depth = 0, .width = 512, .out_dim = 128, .variational = false, .z_dim = 512};
  return c;
}

GeneratorConfig GeneratorConfig::paper_config_e() {
  GeneratorConfig c;
  c.height = 288;
  c.width = 160;
  c.channels = {64, 128, 256, 448, 512, 512};
  c.modulation = ModulationMode::VSam;
  c.z_dim = 512;
  c.mapping = MappingConfig{.depth = 6, .width = 512, .out_dim = 512, .variational = true, .z_dim = 512};
  return c;
}

namespace {

const char* padding_name(nn::kernels::Padding p) {
  return p == nn::kernels::Padding::Zeros ? "zeros" : "circular";
}

nn::kernels::Padding padding_from(const std::string& s) {
  if (s == "zeros") return nn::kernels::Padding::Zeros;
  if (s == "circular") return nn::kernels::Padding::Circular;
  throw std::invalid_argument("unknown padding '" + s + "'");
}

}  // namespace

nlohmann::json to_json(const GeneratorConfig& c) {
  return {
      {"height", c.height},
      {"width", c.width},
      {"channels", c.channels},
      {"mode", c.mode == GeneratorMode::Inpaint ? "inpaint" : "decoder_only"},
      {"modulation", c.modulation == ModulationMode::VSam ? "vsam" : "sam"},
      {"z_dim", c.z_dim},
      {"mapping",
       {{"depth", c.mapping.depth}, {"width", c.mapping.width}, {"out_dim", c.mapping.out_dim}}},
      {"padding", padding_name(c.padding)},
  };
}

GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  c.height = j.value("height", c.height);
  c.width = j.value("width", c.width);
  c.channels = j.value("channels", c.channels);
  const std::string mode = j.value("mode", std::string("inpaint"));
  if (mode == "inpaint") {
    c.mode = GeneratorMode::Inpaint;
  } else if (mode == "decoder_only") {
    c.mode = GeneratorMode::DecoderOnly;
  } else {
    throw std::invalid_argument("unknown generator mode '" + mode + "'");
  }
  const std::string mod = j.value("modulation", std::string("vsam"));
  if (mod == "vsam") {
    c.modulation = ModulationMode::VSam;
  } else if (mod == "sam") {
    c.modulation = ModulationMode::Sam;
  } else {
    throw std::invalid_argument("unknown modulation mode '" + mod + "'");
  }
  c.z_dim = j.value("z_dim", c.z_dim);
  if (j.contains("mapping")) {
    const auto& m = j["mapping"];
    c.mapping.depth = m.value("depth", c.mapping.depth);
    c.mapping.width = m.value("width", c.mapping.width);
    c.mapping.out_dim = m.value("out_dim", c.mapping.out_dim);
  }
  c.padding = padding_from(j.value("padding", std::string("zeros")));
  c.validate();
  return c;
}

template <typename T>
Generator<T>::Generator(const GeneratorConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const auto mc = config_.effective_mapping();
  mapping_ = std::make_unique<MappingNetwork<T>>(mc, params_, "g.mapping", rng);
  const int d = mc.out_dim;
  const int levels = config_.levels();
  const auto& ch = config_.channels;
  const auto pad = config_.padding;
  for (int l = 0; l < levels; ++l) {
    int in = l == 0 ? config_.input_channels() : ch[l - 1];
    if (l == levels - 1 && config_.modulation == ModulationMode::Sam) in += ch[l];
    const std::string name = "g.enc" + std::to_string(l);
    encoder_.push_back({ModulatedConv<T>::create(params_, name + ".a", d, in, ch[l], 3, rng, pad),
                        ModulatedConv<T>::create(params_, name + ".b", d, ch[l], ch[l], 3, rng, pad)});
  }
  decoder_.resize(std::max(levels - 1, 0));
  for (int l = levels - 2; l >= 0; --l) {
    const std::string name = "g.dec" + std::to_string(l);
    decoder_[l] = {
        ModulatedConv<T>::create(params_, name + ".a", d, ch[l + 1] + ch[l], ch[l], 3, rng, pad),
        ModulatedConv<T>::create(params_, name + ".b", d, ch[l], ch[l], 3, rng, pad)};
  }
  out_style_ = StyleProjection<T>::create(params_, "g.out.style", d, ch[0], rng);
  out_conv_ = nn::ConvLayer<T>::create(params_, "g.out.conv", ch[0], 3, 1, true, rng);
  if (config_.modulation == ModulationMode::Sam) {
    const int f = 1 << (levels - 1);
    const int cells = ch[levels - 1] * (config_.height / f) * (config_.width / f);
    z_embed_ = nn::ConvLayer<T>::create(params_, "g.z_embed", config_.z_dim, cells, 1, true, rng);
  }
}

template <typename T>
typename Generator<T>::Output Generator<T>::forward(const SurfaceBatch<T>& batch, const Tensor<T>& z,
                                                    double truncation) const {
  if (z.shape() != nn::Shape{batch.n, config_.z_dim, 1, 1}) {
    throw std::invalid_argument("generator: z must be [N, z_dim, 1, 1], got " + z.shape().str());
  }
  auto mapped = mapping_->map_field(batch, z);
  Var<T> field = mapped.field;
  if (truncation < 1.0) {
    if (mapping_->mean_updates == 0) {
      throw PreconditionError("truncation requires a latent mean; the model has not been trained");
    }
    field = truncate(field, batch.regions, mapping_->omega_mean, truncation);
  } else if (truncation > 1.0) {
    throw std::invalid_argument("truncation must lie in [0, 1]");
  }
  Output out = synthesize(batch, field, z);
  out.body_omega = mapped.body;
  return out;
}

template <typename T>
typename Generator<T>::Output Generator<T>::synthesize(const SurfaceBatch<T>& batch,
                                                       const Var<T>& field,
                                                       const Tensor<T>& z) const {
  if (batch.height != config_.height || batch.width != config_.width) {
    throw std::invalid_argument("generator: batch is " + std::to_string(batch.height) + "x" +
                                std::to_string(batch.width) + ", model expects " +
                                std::to_string(config_.height) + "x" + std::to_string(config_.width));
  }
  const int levels = config_.levels();
  std::vector<Var<T>> fields{field};
  for (int l = 1; l < levels; ++l) fields.push_back(nn::avg_pool2(fields.back()));

  Var<T> h;
  if (config_.mode == GeneratorMode::Inpaint) {
    Tensor<T> masked = batch.image;
    for (std::size_t i = 0; i < masked.size(); ++i) masked[i] *= batch.known3[i];
    h = nn::concat_channels<T>({nn::constant(std::move(masked)), nn::constant(batch.mask_planes)});
  } else {
    h = nn::constant(batch.mask_planes);
  }

  std::vector<Var<T>> skips(levels);
  for (int l = 0; l < levels; ++l) {
    if (l > 0) h = nn::avg_pool2(h);
    if (l == levels - 1 && config_.modulation == ModulationMode::Sam) {
      auto zmap = nn::reshape(z_embed_(nn::constant(z)),
                              nn::Shape{batch.n, config_.channels[l], h->shape().h, h->shape().w});
      h = nn::concat_channels<T>({h, zmap});
    }
    h = nn::leaky_relu(encoder_[l].a(h, fields[l]), 0.2);
    h = nn::leaky_relu(encoder_[l].b(h, fields[l]), 0.2);
    skips[l] = h;
  }
  for (int l = levels - 2; l >= 0; --l) {
    h = nn::concat_channels<T>({nn::upsample2(h, config_.padding), skips[l]});
    h = nn::leaky_relu(decoder_[l].a(h, fields[l]), 0.2);
    h = nn::leaky_relu(decoder_[l].b(h, fields[l]), 0.2);
  }
  Output out;
  out.field = field;
  out.raw = nn::tanh(out_conv_(modulate(h, styles(fields[0], out_style_))));
  if (config_.mode == GeneratorMode::Inpaint) {
    Tensor<T> hole(batch.known3.shape());
    Tensor<T> kept(batch.image.shape());
    for (std::size_t i = 0; i < hole.size(); ++i) {
      hole[i] = T(1) - batch.known3[i];
      kept[i] = batch.image[i] * batch.known3[i];
    }
    out.composite = nn::add_const(nn::mul_const(out.raw, hole), kept);
  } else {
    out.composite = out.raw;
  }
  return out;
}

Image GeneratorModel::generate(const SurfaceAnnotation& ann, std::span<const float> z,
                               double truncation) const {
  if (static_cast<int>(z.size()) != g_.z_dim()) {
    throw std::invalid_argument("generate: z has " + std::to_string(z.size()) + " entries, expected " +
                                std::to_string(g_.z_dim()));
  }
  nn::NoGradGuard guard;
  auto batch = make_batch<float>(ann);
  Tensor<float> zt({1, g_.z_dim(), 1, 1});
  std::copy(z.begin(), z.end(), zt.data());
  return tensor_to_image(g_.forward(batch, zt, truncation).raw->value, 0);
}

template class Generator<float>;
template class Generator<double>;

}  // namespace sgg
