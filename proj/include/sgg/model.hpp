#pragma once

#include <span>

#include "sgg/image.hpp"
#include "sgg/surface.hpp"

namespace sgg {

/// Anything that turns a surface annotation and a latent code into an image.
/// Implemented by the trained generator and by test mocks.
class ImageModel {
 public:
  virtual ~ImageModel() = default;
  virtual int z_dim() const = 0;
  /// Raw generator output (before compositing), same size as the annotation.
  virtual Image generate(const SurfaceAnnotation& ann, std::span<const float> z,
                         double truncation) const = 0;
  /// Native resolution; the anonymizer resizes crops to it.
  virtual int height() const = 0;
  virtual int width() const = 0;
};

}  // namespace sgg
