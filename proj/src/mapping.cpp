#include "sgg/mapping.hpp"

#include <cmath>
#include <stdexcept>

#include "sgg/errors.hpp"

namespace sgg {

using nn::Shape;
using nn::Tensor;
using nn::Var;

void MappingConfig::validate() const {
  if (depth < 0) throw std::invalid_argument("mapping depth must be >= 0");
  if (width < 1 || out_dim < 1 || embed_dim < 1) {
    throw std::invalid_argument("mapping widths must be >= 1");
  }
  if (variational && z_dim < 1) throw std::invalid_argument("z_dim must be >= 1");
}

template <typename T>
MappingNetwork<T>::MappingNetwork(const MappingConfig& config, nn::ParameterSet<T>& params,
                                  const std::string& prefix, std::mt19937_64& rng)
    : config_(config) {
  config_.validate();
  const int in = config_.input_dim();
  if (config_.depth == 0) {
    in_proj_ = nn::ConvLayer<T>::create(params, prefix + ".proj", in, config_.out_dim, 1, true, rng);
  } else {
    in_proj_ = nn::ConvLayer<T>::create(params, prefix + ".in", in, config_.width, 1, true, rng);
    for (int i = 0; i < config_.depth; ++i) {
      blocks_.push_back(nn::ConvLayer<T>::create(params, prefix + ".block" + std::to_string(i),
                                                 config_.width, config_.width, 1, true, rng));
    }
    out_proj_ = nn::ConvLayer<T>::create(params, prefix + ".out", config_.width, config_.out_dim,
                                         1, true, rng);
  }
  const Shape ds{1, config_.out_dim, 1, 1};
  omega_known = params.add(prefix + ".omega_known", nn::random_normal<T>(ds, rng));
  omega_dilated = params.add(prefix + ".omega_dilated", nn::random_normal<T>(ds, rng));
  omega_mean = Tensor<T>(ds);
}

template <typename T>
Var<T> MappingNetwork<T>::forward_pixels(const Var<T>& inputs) const {
  if (inputs->shape().c != config_.input_dim() || inputs->shape().n != 1 ||
      inputs->shape().w != 1) {
    throw std::invalid_argument("mapping: expected [1," + std::to_string(config_.input_dim()) +
                                ",P,1] input, got " + inputs->shape().str());
  }
  Var<T> h = in_proj_(inputs);
  if (config_.depth == 0) return h;
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (const auto& fc : blocks_) {
    h = nn::scale(nn::add(h, fc(nn::leaky_relu(h, 0.2))), inv_sqrt2);
  }
  return out_proj_(h);
}

template <typename T>
std::vector<T> MappingNetwork<T>::map_core(std::span<const T> e, std::span<const T> z) const {
  if (static_cast<int>(e.size()) != config_.embed_dim) {
    throw std::invalid_argument("map_core: embedding has " + std::to_string(e.size()) +
                                " channels, expected " + std::to_string(config_.embed_dim));
  }
  if (config_.variational != !z.empty() ||
      (config_.variational && static_cast<int>(z.size()) != config_.z_dim)) {
    throw std::invalid_argument("map_core: z must be present (size z_dim) iff variational");
  }
  Tensor<T> in({1, config_.input_dim(), 1, 1});
  std::copy(e.begin(), e.end(), in.data());
  std::copy(z.begin(), z.end(), in.data() + e.size());
  nn::NoGradGuard guard;
  return forward_pixels(nn::constant(std::move(in)))->value.values();
}

template <typename T>
Var<T> assemble_field(const Var<T>& body, const Var<T>& omega_known, const Var<T>& omega_dilated,
                      const std::vector<Region>& regions, int n, int height, int width) {
  const int d = omega_known->shape().c;
  const std::size_t hw = static_cast<std::size_t>(height) * width;
  if (regions.size() != n * hw) throw std::invalid_argument("assemble_field: region count");
  std::size_t p_total = 0;
  for (Region r : regions) p_total += r == Region::Body;
  if (p_total > 0 && (!body || body->shape() != Shape{1, d, static_cast<int>(p_total), 1})) {
    throw std::invalid_argument("assemble_field: body latents do not match BODY pixel count");
  }
  Tensor<T> out({n, d, height, width});
  const T* ok = omega_known->value.data();
  const T* od = omega_dilated->value.data();
  std::size_t p = 0;
  for (int i = 0; i < n; ++i) {
    for (std::size_t px = 0; px < hw; ++px) {
      const Region r = regions[i * hw + px];
      T* dst = out.data() + static_cast<std::size_t>(i) * d * hw + px;
      if (r == Region::Body) {
        const T* src = body->value.data() + p;
        for (int c = 0; c < d; ++c) dst[c * hw] = src[c * p_total];
        ++p;
      } else {
        const T* src = r == Region::Known ? ok : od;
        for (int c = 0; c < d; ++c) dst[c * hw] = src[c];
      }
    }
  }
  std::vector<Var<T>> inputs{omega_known, omega_dilated};
  if (p_total > 0) inputs.push_back(body);
  return nn::make_node<T>(
      std::move(out), std::move(inputs),
      [regions, n, d, hw, p_total](nn::Node<T>& self) {
        auto& known = self.inputs[0];
        auto& dilated = self.inputs[1];
        nn::Node<T>* body = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
        T* gk = known->requires_grad ? known->grad_buffer().data() : nullptr;
        T* gd = dilated->requires_grad ? dilated->grad_buffer().data() : nullptr;
        T* gb = body && body->requires_grad ? body->grad_buffer().data() : nullptr;
        std::size_t p = 0;
        for (int i = 0; i < n; ++i) {
          for (std::size_t px = 0; px < hw; ++px) {
            const Region r = regions[i * hw + px];
            const T* g = self.grad.data() + static_cast<std::size_t>(i) * d * hw + px;
            if (r == Region::Body) {
              if (gb) {
                for (int c = 0; c < d; ++c) gb[c * p_total + p] += g[c * hw];
              }
              ++p;
            } else {
              T* dst = r == Region::Known ? gk : gd;
              if (dst) {
                for (int c = 0; c < d; ++c) dst[c] += g[c * hw];
              }
            }
          }
        }
      });
}

template <typename T>
typename MappingNetwork<T>::FieldResult MappingNetwork<T>::map_field(
    const SurfaceBatch<T>& batch, const Tensor<T>& z) const {
  const int n = batch.n;
  const std::size_t hw = static_cast<std::size_t>(batch.height) * batch.width;
  const int e_dim = config_.embed_dim;
  if (batch.embeddings.shape().c != e_dim) {
    throw std::invalid_argument("map_field: embedding channels do not match mapping config");
  }
  if (config_.variational && z.shape() != Shape{n, config_.z_dim, 1, 1}) {
    throw std::invalid_argument("map_field: z must be [N, z_dim, 1, 1], got " + z.shape().str());
  }
  const std::size_t p_total = batch.count(Region::Body);
  FieldResult result;
  if (p_total > 0) {
    const int in_dim = config_.input_dim();
    Tensor<T> in({1, in_dim, static_cast<int>(p_total), 1});
    std::size_t p = 0;
    for (int i = 0; i < n; ++i) {
      for (std::size_t px = 0; px < hw; ++px) {
        if (batch.regions[i * hw + px] != Region::Body) continue;
        for (int c = 0; c < e_dim; ++c) {
          in[c * p_total + p] = batch.embeddings.data()[(static_cast<std::size_t>(i) * e_dim + c) * hw + px];
        }
        if (config_.variational) {
          for (int c = 0; c < config_.z_dim; ++c) {
            in[(e_dim + c) * p_total + p] = z.at(i, c, 0, 0);
          }
        }
        ++p;
      }
    }
    result.body = forward_pixels(nn::constant(std::move(in)));
  }
  result.field = assemble_field(result.body, omega_known, omega_dilated, batch.regions, n,
                                batch.height, batch.width);
  return result;
}

template <typename T>
Tensor<T> MappingNetwork<T>::map_vertices(const VertexTable& table, std::span<const T> z) const {
  if (table.channels() != config_.embed_dim) {
    throw std::invalid_argument("map_vertices: table channels do not match mapping config");
  }
  if (config_.variational != !z.empty() ||
      (config_.variational && static_cast<int>(z.size()) != config_.z_dim)) {
    throw std::invalid_argument("map_vertices: z must be present (size z_dim) iff variational");
  }
  const int k = table.size();
  const int e_dim = config_.embed_dim;
  Tensor<T> in({1, config_.input_dim(), k, 1});
  for (int v = 0; v < k; ++v) {
    const auto row = table.row(v);
    for (int c = 0; c < e_dim; ++c) in[static_cast<std::size_t>(c) * k + v] = row[c];
    for (std::size_t c = 0; c < z.size(); ++c) in[(e_dim + c) * k + v] = z[c];
  }
  nn::NoGradGuard guard;
  return forward_pixels(nn::constant(std::move(in)))->value;
}

template <typename T>
void MappingNetwork<T>::update_mean(const Tensor<T>& body, double decay) {
  const int d = config_.out_dim;
  const nn::Shape s = body.shape();
  if (s.c != d || s.n != 1 || s.w != 1 || s.h < 1) {
    throw std::invalid_argument("update_mean: expected [1,D,P,1], got " + s.str());
  }
  const std::size_t p = static_cast<std::size_t>(s.h);
  for (int c = 0; c < d; ++c) {
    double m = 0;
    for (std::size_t i = 0; i < p; ++i) m += body[c * p + i];
    m /= static_cast<double>(p);
    omega_mean[c] = static_cast<T>(decay * omega_mean[c] + (1.0 - decay) * m);
  }
  ++mean_updates;
}

std::vector<int> discretized_indices(const EmbeddingRaster& raster, const VertexTable& table) {
  auto idx = nearest_indices(raster, table);
  for (std::size_t p = 0; p < idx.size(); ++p) {
    if (idx[p] < 0) continue;
    const auto row = table.row(idx[p]);
    const auto e = raster.at_pixel(p);
    if (!std::equal(row.begin(), row.end(), e.begin())) {
      throw PreconditionError("embedding at pixel " + std::to_string(p) +
                              " is not a table row; discretize the raster first");
    }
  }
  return idx;
}

template <typename T>
StyleField<T> gather_field(const Tensor<T>& vertex_omega, const std::vector<int>& indices,
                           const RegionMask& mask, const Tensor<T>& omega_known,
                           const Tensor<T>& omega_dilated) {
  const int d = omega_known.shape().c;
  const int k = vertex_omega.shape().h;
  if (vertex_omega.shape().c != d) throw std::invalid_argument("gather_field: D mismatch");
  const std::size_t hw = static_cast<std::size_t>(mask.height) * mask.width;
  if (indices.size() != hw) throw std::invalid_argument("gather_field: index plane size");
  StyleField<T> out({1, d, mask.height, mask.width});
  for (std::size_t px = 0; px < hw; ++px) {
    const Region r = mask.classes[px];
    if (r == Region::Body) {
      const int v = indices[px];
      if (v < 0 || v >= k) throw PreconditionError("gather_field: BODY pixel without a vertex");
      for (int c = 0; c < d; ++c) out[c * hw + px] = vertex_omega[static_cast<std::size_t>(c) * k + v];
    } else {
      const Tensor<T>& src = r == Region::Known ? omega_known : omega_dilated;
      for (int c = 0; c < d; ++c) out[c * hw + px] = src[c];
    }
  }
  return out;
}

template <typename T>
Var<T> truncate(const Var<T>& field, const std::vector<Region>& regions, const Tensor<T>& mean,
                double t) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw std::invalid_argument("truncate: t must lie in [0, 1], got " + std::to_string(t));
  }
  const Shape s = field->shape();
  if (mean.size() != static_cast<std::size_t>(s.c)) {
    throw std::invalid_argument("truncate: mean has wrong dimension");
  }
  const std::size_t hw = s.plane();
  Tensor<T> out = field->value;
  const T tt = static_cast<T>(t);
  for (int i = 0; i < s.n; ++i) {
    for (std::size_t px = 0; px < hw; ++px) {
      if (regions[i * hw + px] != Region::Body) continue;
      for (int c = 0; c < s.c; ++c) {
        T& v = out.data()[(static_cast<std::size_t>(i) * s.c + c) * hw + px];
        v = t == 1.0 ? v : static_cast<T>(mean[c] + tt * (v - mean[c]));
      }
    }
  }
  return nn::make_node<T>(std::move(out), {field}, [regions, tt](nn::Node<T>& self) {
    const Shape s = self.shape();
    const std::size_t hw = s.plane();
    auto& g = self.inputs[0]->grad_buffer();
    for (int i = 0; i < s.n; ++i) {
      for (int c = 0; c < s.c; ++c) {
        for (std::size_t px = 0; px < hw; ++px) {
          const std::size_t j = (static_cast<std::size_t>(i) * s.c + c) * hw + px;
          g[j] += regions[i * hw + px] == Region::Body ? tt * self.grad[j] : self.grad[j];
        }
      }
    }
  });
}

std::vector<std::vector<float>> interpolate_z(std::span<const float> z0, std::span<const float> z1,
                                              int steps) {
  if (z0.size() != z1.size()) throw std::invalid_argument("interpolate_z: dimension mismatch");
  if (steps < 2) throw std::invalid_argument("interpolate_z: steps must be >= 2");
  std::vector<std::vector<float>> out;
  out.reserve(steps);
  for (int s = 0; s < steps; ++s) {
    if (s == 0) {
      out.emplace_back(z0.begin(), z0.end());
      continue;
    }
    if (s == steps - 1) {
      out.emplace_back(z1.begin(), z1.end());
      continue;
    }
    const double a = static_cast<double>(s) / (steps - 1);
    std::vector<float> z(z0.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      z[i] = static_cast<float>((1 - a) * z0[i] + a * z1[i]);
    }
    out.push_back(std::move(z));
  }
  return out;
}

#define SGG_INSTANTIATE_MAPPING(T)                                                             \
  template class MappingNetwork<T>;                                                            \
  template Var<T> assemble_field<T>(const Var<T>&, const Var<T>&, const Var<T>&,               \
                                    const std::vector<Region>&, int, int, int);                \
  template StyleField<T> gather_field<T>(const Tensor<T>&, const std::vector<int>&,            \
                                         const RegionMask&, const Tensor<T>&,                  \
                                         const Tensor<T>&);                                    \
  template Var<T> truncate<T>(const Var<T>&, const std::vector<Region>&, const Tensor<T>&,     \
                              double);

SGG_INSTANTIATE_MAPPING(float)
SGG_INSTANTIATE_MAPPING(double)

}  // namespace sgg
