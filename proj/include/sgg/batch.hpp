#pragma once

#include <span>
#include <vector>

#include "sgg/nn/tensor.hpp"
#include "sgg/surface.hpp"

namespace sgg {

/// A stack of annotations as NCHW tensors, the common input of the networks.
template <typename T>
struct SurfaceBatch {
  int n = 0;
  int height = 0;
  int width = 0;
  nn::Tensor<T> image;        // [N,3,H,W]
  nn::Tensor<T> known;        // [N,1,H,W], the inpainting mask M
  nn::Tensor<T> known3;       // [N,3,H,W], M broadcast over colour channels
  nn::Tensor<T> mask_planes;  // [N,3,H,W], one-hot (KNOWN, BODY, DILATED)
  nn::Tensor<T> embeddings;   // [N,C,H,W], zero off-body
  std::vector<Region> regions;  // N*H*W, row-major per image

  Region region(int img, int y, int x) const {
    return regions[(static_cast<std::size_t>(img) * height + y) * width + x];
  }
  std::size_t count(Region r) const;
};

template <typename T>
SurfaceBatch<T> make_batch(std::span<const SurfaceAnnotation* const> anns);

template <typename T>
SurfaceBatch<T> make_batch(const SurfaceAnnotation& ann) {
  const SurfaceAnnotation* p = &ann;
  return make_batch<T>(std::span<const SurfaceAnnotation* const>(&p, 1));
}

/// Row `img` of a [N,3,H,W] tensor as an interleaved image.
template <typename T>
Image tensor_to_image(const nn::Tensor<T>& t, int img);

}  // namespace sgg
