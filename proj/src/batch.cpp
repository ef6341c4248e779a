#include "sgg/batch.hpp"

#include <algorithm>
#include <stdexcept>

namespace sgg {

template <typename T>
std::size_t SurfaceBatch<T>::count(Region r) const {
  return static_cast<std::size_t>(std::count(regions.begin(), regions.end(), r));
}

template <typename T>
SurfaceBatch<T> make_batch(std::span<const SurfaceAnnotation* const> anns) {
  if (anns.empty()) throw std::invalid_argument("make_batch: empty batch");
  SurfaceBatch<T> b;
  b.n = static_cast<int>(anns.size());
  b.height = anns[0]->height();
  b.width = anns[0]->width();
  const int c = anns[0]->embeddings.channels;
  const int h = b.height;
  const int w = b.width;
  b.image = nn::Tensor<T>({b.n, 3, h, w});
  b.known = nn::Tensor<T>({b.n, 1, h, w});
  b.known3 = nn::Tensor<T>({b.n, 3, h, w});
  b.mask_planes = nn::Tensor<T>({b.n, 3, h, w});
  b.embeddings = nn::Tensor<T>({b.n, c, h, w});
  b.regions.resize(static_cast<std::size_t>(b.n) * h * w);
  for (int i = 0; i < b.n; ++i) {
    const SurfaceAnnotation& a = *anns[i];
    if (a.height() != h || a.width() != w || a.embeddings.channels != c) {
      throw std::invalid_argument("make_batch: annotations differ in shape");
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const Region r = a.mask.at(y, x);
        b.regions[(static_cast<std::size_t>(i) * h + y) * w + x] = r;
        const T m = r == Region::Known ? T(1) : T(0);
        b.known.at(i, 0, y, x) = m;
        b.mask_planes.at(i, static_cast<int>(r), y, x) = T(1);
        for (int ch = 0; ch < 3; ++ch) {
          b.image.at(i, ch, y, x) = static_cast<T>(a.image.at(y, x, ch));
          b.known3.at(i, ch, y, x) = m;
        }
        if (r == Region::Body) {
          const auto e = a.embeddings.at(y, x);
          for (int ch = 0; ch < c; ++ch) b.embeddings.at(i, ch, y, x) = static_cast<T>(e[ch]);
        }
      }
    }
  }
  return b;
}

template <typename T>
Image tensor_to_image(const nn::Tensor<T>& t, int img) {
  const nn::Shape s = t.shape();
  Image out(s.h, s.w, s.c);
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x)
      for (int c = 0; c < s.c; ++c) out.at(y, x, c) = static_cast<float>(t.at(img, c, y, x));
  return out;
}

template struct SurfaceBatch<float>;
template struct SurfaceBatch<double>;
template SurfaceBatch<float> make_batch<float>(std::span<const SurfaceAnnotation* const>);
template SurfaceBatch<double> make_batch<double>(std::span<const SurfaceAnnotation* const>);
template Image tensor_to_image<float>(const nn::Tensor<float>&, int);
template Image tensor_to_image<double>(const nn::Tensor<double>&, int);

}  // namespace sgg
