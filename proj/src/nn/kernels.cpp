#include "sgg/nn/kernels.hpp"

#include <Eigen/Core>

#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sgg::nn::kernels {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

int thread_id() {
#ifdef _OPENMP
  return omp_get_thread_num();
#else
  return 0;
#endif
}

inline int wrap(int i, int n) {
  i %= n;
  return i < 0 ? i + n : i;
}

void check_conv(const Shape& xs, const Shape& ws, const Shape* bs) {
  if (ws.h != ws.w || ws.h % 2 == 0) {
    throw ShapeError("conv2d: kernel must be odd and square, got " + ws.str());
  }
  if (xs.c != ws.c) throw ShapeError("conv2d: input " + xs.str() + " vs weight " + ws.str());
  if (bs && bs->numel() != static_cast<std::size_t>(ws.n)) {
    throw ShapeError("conv2d: bias " + bs->str() + " vs weight " + ws.str());
  }
}

// Column buffer for one image: rows (ci, ky, kx), columns pixels.
template <typename T>
void im2col(const T* x, int c, int h, int w, int k, Padding pad, T* col) {
  const int r = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int ci = 0; ci < c; ++ci) {
    const T* plane = x + ci * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * hw;
        const int dy = ky - r;
        const int dx = kx - r;
        for (int y = 0; y < h; ++y) {
          int sy = y + dy;
          T* out = row + static_cast<std::size_t>(y) * w;
          if (pad == Padding::Circular) {
            sy = wrap(sy, h);
            const T* src = plane + static_cast<std::size_t>(sy) * w;
            for (int xx = 0; xx < w; ++xx) out[xx] = src[wrap(xx + dx, w)];
            continue;
          }
          if (sy < 0 || sy >= h) {
            std::fill(out, out + w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(sy) * w;
          const int lo = std::max(0, -dx);
          const int hi = std::min(w, w - dx);
          for (int xx = 0; xx < lo; ++xx) out[xx] = T(0);
          for (int xx = lo; xx < hi; ++xx) out[xx] = src[xx + dx];
          for (int xx = std::max(hi, lo); xx < w; ++xx) out[xx] = T(0);
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int c, int h, int w, int k, Padding pad, T* x) {
  const int r = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int ci = 0; ci < c; ++ci) {
    T* plane = x + ci * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * hw;
        const int dy = ky - r;
        const int dx = kx - r;
        for (int y = 0; y < h; ++y) {
          int sy = y + dy;
          const T* in = row + static_cast<std::size_t>(y) * w;
          if (pad == Padding::Circular) {
            sy = wrap(sy, h);
            T* dst = plane + static_cast<std::size_t>(sy) * w;
            for (int xx = 0; xx < w; ++xx) dst[wrap(xx + dx, w)] += in[xx];
            continue;
          }
          if (sy < 0 || sy >= h) continue;
          T* dst = plane + static_cast<std::size_t>(sy) * w;
          const int lo = std::max(0, -dx);
          const int hi = std::min(w, w - dx);
          for (int xx = lo; xx < hi; ++xx) dst[xx + dx] += in[xx];
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                    const ConvSpec& spec, Tensor<T>& y) {
  const Shape xs = x.shape();
  const Shape ws = w.shape();
  check_conv(xs, ws, bias ? &bias->shape() : nullptr);
  const int k = ws.h;
  const int hw = xs.h * xs.w;
  const int rows = ws.c * k * k;
  y = Tensor<T>({xs.n, ws.n, xs.h, xs.w});
  const T gain = static_cast<T>(spec.gain);
  ConstMapMat<T> wm(w.data(), ws.n, rows);

#pragma omp parallel
  {
    std::vector<T> col(k == 1 ? 0 : static_cast<std::size_t>(rows) * hw);
#pragma omp for schedule(static)
    for (int n = 0; n < xs.n; ++n) {
      MapMat<T> out(y.plane(n, 0), ws.n, hw);
      if (k == 1) {
        // Same summation order at every pixel.
        for (int co = 0; co < ws.n; ++co) {
          T* o = y.plane(n, co);
          const T* wr = w.data() + static_cast<std::size_t>(co) * xs.c;
          for (int ci = 0; ci < xs.c; ++ci) {
            const T a = wr[ci];
            const T* xi = x.plane(n, ci);
            for (int p = 0; p < hw; ++p) o[p] += a * xi[p];
          }
          for (int p = 0; p < hw; ++p) o[p] *= gain;
        }
      } else {
        im2col(x.plane(n, 0), xs.c, xs.h, xs.w, k, spec.padding, col.data());
        out.noalias() = gain * (wm * ConstMapMat<T>(col.data(), rows, hw));
      }
      if (bias) {
        for (int co = 0; co < ws.n; ++co) out.row(co).array() += (*bias)[co];
      }
    }
  }
}

template <typename T>
void conv2d_forward_reference(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                              const ConvSpec& spec, Tensor<T>& y) {
  const Shape xs = x.shape();
  const Shape ws = w.shape();
  check_conv(xs, ws, bias ? &bias->shape() : nullptr);
  const int k = ws.h;
  const int r = k / 2;
  y = Tensor<T>({xs.n, ws.n, xs.h, xs.w});
  for (int n = 0; n < xs.n; ++n) {
    for (int co = 0; co < ws.n; ++co) {
      for (int yy = 0; yy < xs.h; ++yy) {
        for (int xx = 0; xx < xs.w; ++xx) {
          T acc = 0;
          for (int ci = 0; ci < xs.c; ++ci) {
            for (int ky = 0; ky < k; ++ky) {
              for (int kx = 0; kx < k; ++kx) {
                int sy = yy + ky - r;
                int sx = xx + kx - r;
                if (spec.padding == Padding::Circular) {
                  sy = wrap(sy, xs.h);
                  sx = wrap(sx, xs.w);
                } else if (sy < 0 || sy >= xs.h || sx < 0 || sx >= xs.w) {
                  continue;
                }
                acc += w.at(co, ci, ky, kx) * x.at(n, ci, sy, sx);
              }
            }
          }
          acc *= static_cast<T>(spec.gain);
          if (bias) acc += (*bias)[co];
          y.at(n, co, yy, xx) = acc;
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_input(const Tensor<T>& dy, const Tensor<T>& w, const ConvSpec& spec,
                           Tensor<T>& dx) {
  const Shape ws = w.shape();
  const Shape xs = dx.shape();
  check_conv(xs, ws, nullptr);
  const int k = ws.h;
  const int hw = xs.h * xs.w;
  const int rows = ws.c * k * k;
  const T gain = static_cast<T>(spec.gain);
  ConstMapMat<T> wm(w.data(), ws.n, rows);

#pragma omp parallel
  {
    std::vector<T> col(static_cast<std::size_t>(rows) * hw);
#pragma omp for schedule(static)
    for (int n = 0; n < xs.n; ++n) {
      ConstMapMat<T> g(dy.plane(n, 0), ws.n, hw);
      if (k == 1) {
        MapMat<T>(dx.plane(n, 0), xs.c, hw).noalias() += gain * (wm.transpose() * g);
      } else {
        MapMat<T> cm(col.data(), rows, hw);
        cm.noalias() = gain * (wm.transpose() * g);
        col2im(col.data(), xs.c, xs.h, xs.w, k, spec.padding, dx.plane(n, 0));
      }
    }
  }
}

template <typename T>
void conv2d_backward_input_reference(const Tensor<T>& dy, const Tensor<T>& w,
                                     const ConvSpec& spec, Tensor<T>& dx) {
  const Shape ws = w.shape();
  const Shape xs = dx.shape();
  const int k = ws.h;
  const int r = k / 2;
  for (int n = 0; n < xs.n; ++n) {
    for (int co = 0; co < ws.n; ++co) {
      for (int yy = 0; yy < xs.h; ++yy) {
        for (int xx = 0; xx < xs.w; ++xx) {
          const T g = dy.at(n, co, yy, xx) * static_cast<T>(spec.gain);
          for (int ci = 0; ci < xs.c; ++ci) {
            for (int ky = 0; ky < k; ++ky) {
              for (int kx = 0; kx < k; ++kx) {
                int sy = yy + ky - r;
                int sx = xx + kx - r;
                if (spec.padding == Padding::Circular) {
                  sy = wrap(sy, xs.h);
                  sx = wrap(sx, xs.w);
                } else if (sy < 0 || sy >= xs.h || sx < 0 || sx >= xs.w) {
                  continue;
                }
                dx.at(n, ci, sy, sx) += w.at(co, ci, ky, kx) * g;
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_params(const Tensor<T>& x, const Tensor<T>& dy, const ConvSpec& spec,
                            Tensor<T>& dw, Tensor<T>* dbias) {
  const Shape xs = x.shape();
  const Shape ws = dw.shape();
  check_conv(xs, ws, dbias ? &dbias->shape() : nullptr);
  const int k = ws.h;
  const int hw = xs.h * xs.w;
  const int rows = ws.c * k * k;
  const T gain = static_cast<T>(spec.gain);
  const int threads = thread_count();
  std::vector<RowMat<T>> partial(threads, RowMat<T>::Zero(ws.n, rows));

#pragma omp parallel
  {
    std::vector<T> col(k == 1 ? 0 : static_cast<std::size_t>(rows) * hw);
    RowMat<T>& acc = partial[thread_id()];
#pragma omp for schedule(static)
    for (int n = 0; n < xs.n; ++n) {
      ConstMapMat<T> g(dy.plane(n, 0), ws.n, hw);
      if (k == 1) {
        acc.noalias() += g * ConstMapMat<T>(x.plane(n, 0), xs.c, hw).transpose();
      } else {
        im2col(x.plane(n, 0), xs.c, xs.h, xs.w, k, spec.padding, col.data());
        acc.noalias() += g * ConstMapMat<T>(col.data(), rows, hw).transpose();
      }
    }
  }
  MapMat<T> out(dw.data(), ws.n, rows);
  for (const auto& p : partial) out += gain * p;

  if (dbias) {
    for (int n = 0; n < xs.n; ++n) {
      for (int co = 0; co < ws.n; ++co) {
        const T* g = dy.plane(n, co);
        T s = 0;
        for (int i = 0; i < hw; ++i) s += g[i];
        (*dbias)[co] += s;
      }
    }
  }
}

template <typename T>
void conv2d_backward_params_reference(const Tensor<T>& x, const Tensor<T>& dy,
                                      const ConvSpec& spec, Tensor<T>& dw, Tensor<T>* dbias) {
  const Shape xs = x.shape();
  const Shape ws = dw.shape();
  const int k = ws.h;
  const int r = k / 2;
  for (int n = 0; n < xs.n; ++n) {
    for (int co = 0; co < ws.n; ++co) {
      for (int yy = 0; yy < xs.h; ++yy) {
        for (int xx = 0; xx < xs.w; ++xx) {
          const T g = dy.at(n, co, yy, xx);
          if (dbias) (*dbias)[co] += g;
          for (int ci = 0; ci < xs.c; ++ci) {
            for (int ky = 0; ky < k; ++ky) {
              for (int kx = 0; kx < k; ++kx) {
                int sy = yy + ky - r;
                int sx = xx + kx - r;
                if (spec.padding == Padding::Circular) {
                  sy = wrap(sy, xs.h);
                  sx = wrap(sx, xs.w);
                } else if (sy < 0 || sy >= xs.h || sx < 0 || sx >= xs.w) {
                  continue;
                }
                dw.at(co, ci, ky, kx) += static_cast<T>(spec.gain) * g * x.at(n, ci, sy, sx);
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void instance_norm_forward(const Tensor<T>& x, double eps, Tensor<T>& y,
                           std::vector<T>& inv_std) {
  const Shape s = x.shape();
  const int planes = s.n * s.c;
  const std::size_t hw = s.plane();
  y = Tensor<T>(s);
  inv_std.assign(planes, T(0));
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const T* in = x.data() + p * hw;
    T* out = y.data() + p * hw;
    double mean = 0;
    for (std::size_t i = 0; i < hw; ++i) mean += in[i];
    mean /= static_cast<double>(hw);
    double var = 0;
    for (std::size_t i = 0; i < hw; ++i) {
      const double d = in[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(hw);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[p] = static_cast<T>(is);
    for (std::size_t i = 0; i < hw; ++i) out[i] = static_cast<T>((in[i] - mean) * is);
  }
}

template <typename T>
void instance_norm_forward_reference(const Tensor<T>& x, double eps, Tensor<T>& y,
                                     std::vector<T>& inv_std) {
  const Shape s = x.shape();
  y = Tensor<T>(s);
  inv_std.assign(static_cast<std::size_t>(s.n) * s.c, T(0));
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      double mean = 0;
      for (int yy = 0; yy < s.h; ++yy)
        for (int xx = 0; xx < s.w; ++xx) mean += x.at(n, c, yy, xx);
      mean /= static_cast<double>(s.plane());
      double var = 0;
      for (int yy = 0; yy < s.h; ++yy)
        for (int xx = 0; xx < s.w; ++xx) {
          const double d = x.at(n, c, yy, xx) - mean;
          var += d * d;
        }
      var /= static_cast<double>(s.plane());
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[n * s.c + c] = static_cast<T>(is);
      for (int yy = 0; yy < s.h; ++yy)
        for (int xx = 0; xx < s.w; ++xx)
          y.at(n, c, yy, xx) = static_cast<T>((x.at(n, c, yy, xx) - mean) * is);
    }
  }
}

template <typename T>
void instance_norm_backward(const Tensor<T>& y, const std::vector<T>& inv_std,
                            const Tensor<T>& dy, Tensor<T>& dx) {
  const Shape s = y.shape();
  const int planes = s.n * s.c;
  const std::size_t hw = s.plane();
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const T* yo = y.data() + p * hw;
    const T* g = dy.data() + p * hw;
    T* out = dx.data() + p * hw;
    double mg = 0;
    double mgy = 0;
    for (std::size_t i = 0; i < hw; ++i) {
      mg += g[i];
      mgy += static_cast<double>(g[i]) * yo[i];
    }
    mg /= static_cast<double>(hw);
    mgy /= static_cast<double>(hw);
    const double is = inv_std[p];
    for (std::size_t i = 0; i < hw; ++i) {
      out[i] += static_cast<T>(is * (g[i] - mg - yo[i] * mgy));
    }
  }
}

template <typename T>
void avg_pool2_forward(const Tensor<T>& x, Tensor<T>& y) {
  const Shape s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) throw ShapeError("avg_pool2: odd spatial size " + s.str());
  const int oh = s.h / 2;
  const int ow = s.w / 2;
  y = Tensor<T>({s.n, s.c, oh, ow});
  const int planes = s.n * s.c;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const T* in = x.data() + p * s.plane();
    T* out = y.data() + static_cast<std::size_t>(p) * oh * ow;
    for (int yy = 0; yy < oh; ++yy) {
      const T* r0 = in + static_cast<std::size_t>(2 * yy) * s.w;
      const T* r1 = r0 + s.w;
      for (int xx = 0; xx < ow; ++xx) {
        out[yy * ow + xx] =
            T(0.25) * (r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1]);
      }
    }
  }
}

template <typename T>
void avg_pool2_backward(const Tensor<T>& dy, Tensor<T>& dx) {
  const Shape s = dx.shape();
  const int oh = s.h / 2;
  const int ow = s.w / 2;
  const int planes = s.n * s.c;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const T* g = dy.data() + static_cast<std::size_t>(p) * oh * ow;
    T* out = dx.data() + p * s.plane();
    for (int yy = 0; yy < s.h; ++yy) {
      for (int xx = 0; xx < s.w; ++xx) {
        out[yy * s.w + xx] += T(0.25) * g[(yy / 2) * ow + xx / 2];
      }
    }
  }
}

namespace {

// Source taps for output coordinate o of a x2 bilinear upsample over n input samples.
inline void up_taps(int o, int n, Padding edge, int& i0, int& i1, double& w1) {
  const double src = (o + 0.5) / 2.0 - 0.5;
  const int f = static_cast<int>(std::floor(src));
  w1 = src - f;
  i0 = f;
  i1 = f + 1;
  if (edge == Padding::Circular) {
    i0 = wrap(i0, n);
    i1 = wrap(i1, n);
  } else {
    i0 = std::clamp(i0, 0, n - 1);
    i1 = std::clamp(i1, 0, n - 1);
  }
}

}  // namespace

template <typename T>
void upsample2_forward(const Tensor<T>& x, Padding edge, Tensor<T>& y) {
  const Shape s = x.shape();
  const int oh = s.h * 2;
  const int ow = s.w * 2;
  y = Tensor<T>({s.n, s.c, oh, ow});
  const int planes = s.n * s.c;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const T* in = x.data() + p * s.plane();
    T* out = y.data() + static_cast<std::size_t>(p) * oh * ow;
    for (int yy = 0; yy < oh; ++yy) {
      int y0, y1;
      double wy;
      up_taps(yy, s.h, edge, y0, y1, wy);
      for (int xx = 0; xx < ow; ++xx) {
        int x0, x1;
        double wx;
        up_taps(xx, s.w, edge, x0, x1, wx);
        const double v = (1 - wy) * ((1 - wx) * in[y0 * s.w + x0] + wx * in[y0 * s.w + x1]) +
                         wy * ((1 - wx) * in[y1 * s.w + x0] + wx * in[y1 * s.w + x1]);
        out[yy * ow + xx] = static_cast<T>(v);
      }
    }
  }
}

template <typename T>
void upsample2_backward(const Tensor<T>& dy, Padding edge, Tensor<T>& dx) {
  const Shape s = dx.shape();
  const int oh = s.h * 2;
  const int ow = s.w * 2;
  const int planes = s.n * s.c;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const T* g = dy.data() + static_cast<std::size_t>(p) * oh * ow;
    T* out = dx.data() + p * s.plane();
    for (int yy = 0; yy < oh; ++yy) {
      int y0, y1;
      double wy;
      up_taps(yy, s.h, edge, y0, y1, wy);
      for (int xx = 0; xx < ow; ++xx) {
        int x0, x1;
        double wx;
        up_taps(xx, s.w, edge, x0, x1, wx);
        const double v = g[yy * ow + xx];
        out[y0 * s.w + x0] += static_cast<T>((1 - wy) * (1 - wx) * v);
        out[y0 * s.w + x1] += static_cast<T>((1 - wy) * wx * v);
        out[y1 * s.w + x0] += static_cast<T>(wy * (1 - wx) * v);
        out[y1 * s.w + x1] += static_cast<T>(wy * wx * v);
      }
    }
  }
}

#define SGG_INSTANTIATE_KERNELS(T)                                                            \
  template void conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,       \
                                  const ConvSpec&, Tensor<T>&);                               \
  template void conv2d_forward_reference<T>(const Tensor<T>&, const Tensor<T>&,               \
                                            const Tensor<T>*, const ConvSpec&, Tensor<T>&);   \
  template void conv2d_backward_input<T>(const Tensor<T>&, const Tensor<T>&, const ConvSpec&, \
                                         Tensor<T>&);                                         \
  template void conv2d_backward_input_reference<T>(const Tensor<T>&, const Tensor<T>&,        \
                                                   const ConvSpec&, Tensor<T>&);              \
  template void conv2d_backward_params<T>(const Tensor<T>&, const Tensor<T>&,                 \
                                          const ConvSpec&, Tensor<T>&, Tensor<T>*);           \
  template void conv2d_backward_params_reference<T>(const Tensor<T>&, const Tensor<T>&,       \
                                                    const ConvSpec&, Tensor<T>&, Tensor<T>*); \
  template void instance_norm_forward<T>(const Tensor<T>&, double, Tensor<T>&,                \
                                         std::vector<T>&);                                    \
  template void instance_norm_forward_reference<T>(const Tensor<T>&, double, Tensor<T>&,      \
                                                   std::vector<T>&);                          \
  template void instance_norm_backward<T>(const Tensor<T>&, const std::vector<T>&,            \
                                          const Tensor<T>&, Tensor<T>&);                      \
  template void avg_pool2_forward<T>(const Tensor<T>&, Tensor<T>&);                           \
  template void avg_pool2_backward<T>(const Tensor<T>&, Tensor<T>&);                          \
  template void upsample2_forward<T>(const Tensor<T>&, Padding, Tensor<T>&);                  \
  template void upsample2_backward<T>(const Tensor<T>&, Padding, Tensor<T>&);

SGG_INSTANTIATE_KERNELS(float)
SGG_INSTANTIATE_KERNELS(double)

}  // namespace sgg::nn::kernels
