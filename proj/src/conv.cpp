#include <algorithm>
#include <cstdint>

#include <Eigen/Core>
#include <omp.h>

#include "ynet/ops.hpp"

namespace ynet {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Strided = Eigen::OuterStride<>;

// Upper bound on the im2col scratch per worker, in elements.
constexpr std::size_t kColsBudget = std::size_t{1} << 21;

struct Geometry {
  std::size_t cin, h, w, k, stride, pad, hout, wout;
  std::size_t patch() const { return cin * k * k; }
  std::size_t rows_per_chunk() const { return std::max<std::size_t>(1, kColsBudget / (patch() * wout)); }
};

// Unfolds output rows [oh0, oh1) of one sample into a (patch x len) matrix.
template <typename T>
void im2col(const T* x, const Geometry& g, std::size_t oh0, std::size_t oh1, T* cols) {
  const std::size_t len = (oh1 - oh0) * g.wout;
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    const T* plane = x + ci * g.h * g.w;
    for (std::size_t kh = 0; kh < g.k; ++kh) {
      for (std::size_t kw = 0; kw < g.k; ++kw) {
        T* row = cols + ((ci * g.k + kh) * g.k + kw) * len;
        for (std::size_t oh = oh0; oh < oh1; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) - static_cast<std::ptrdiff_t>(g.pad);
          T* dst = row + (oh - oh0) * g.wout;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.wout, T{0});
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(ih) * g.w;
          for (std::size_t ow = 0; ow < g.wout; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kw) - static_cast<std::ptrdiff_t>(g.pad);
            dst[ow] = (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.w)) ? src[iw] : T{0};
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters a (patch x len) matrix back onto the sample.
template <typename T>
void col2im(const T* cols, const Geometry& g, std::size_t oh0, std::size_t oh1, T* dx) {
  const std::size_t len = (oh1 - oh0) * g.wout;
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    T* plane = dx + ci * g.h * g.w;
    for (std::size_t kh = 0; kh < g.k; ++kh) {
      for (std::size_t kw = 0; kw < g.k; ++kw) {
        const T* row = cols + ((ci * g.k + kh) * g.k + kw) * len;
        for (std::size_t oh = oh0; oh < oh1; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) - static_cast<std::ptrdiff_t>(g.pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) continue;
          const T* src = row + (oh - oh0) * g.wout;
          T* dst = plane + static_cast<std::size_t>(ih) * g.w;
          for (std::size_t ow = 0; ow < g.wout; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kw) - static_cast<std::ptrdiff_t>(g.pad);
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.w)) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

template <typename T>
Geometry check_geometry(const Tensor<T>& input, const ConvParams<T>& p) {
  const Shape4& xs = input.shape();
  const Shape4& ws = p.weights.shape();
  if (ws.h != ws.w || ws.h == 0) {
    throw ShapeError("conv2d: kernel must be square and non-empty, got " + ws.str());
  }
  if (xs.c != ws.c) {
    throw ShapeError("conv2d: input channels " + std::to_string(xs.c) + " != weight in_channels " +
                     std::to_string(ws.c));
  }
  if (p.stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (xs.h + 2 * p.pad < ws.h || xs.w + 2 * p.pad < ws.w) {
    throw ShapeError("conv2d: kernel " + std::to_string(ws.h) + " larger than padded input " + xs.str());
  }
  return Geometry{xs.c, xs.h, xs.w, ws.h, p.stride, p.pad,
                  conv_out_dim(xs.h, ws.h, p.stride, p.pad), conv_out_dim(xs.w, ws.w, p.stride, p.pad)};
}

}  // namespace

void set_num_threads(int n) { omp_set_num_threads(std::max(1, n)); }
int num_threads() { return omp_get_max_threads(); }

std::size_t conv_out_dim(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (in + 2 * pad < kernel || stride == 0) {
    throw ShapeError("window " + std::to_string(kernel) + " larger than padded extent " +
                     std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvParams<T>& p) {
  const Geometry g = check_geometry(input, p);
  require_finite(input, "conv2d");
  const std::size_t n = input.shape().n;
  const std::size_t cout = p.out_channels();
  const std::size_t k_dim = g.patch();
  const std::size_t hw_out = g.hout * g.wout;
  const std::size_t chunk_rows = g.rows_per_chunk();

  Tensor<T> out(Shape4{n, cout, g.hout, g.wout});
  const Eigen::Map<const RowMat<T>> wm(p.weights.ptr(), static_cast<Eigen::Index>(cout),
                                       static_cast<Eigen::Index>(k_dim));
  const T* x = input.ptr();
  T* y = out.ptr();

#pragma omp parallel for schedule(static)
  for (std::int64_t s = 0; s < static_cast<std::int64_t>(n); ++s) {
    std::vector<T> cols(k_dim * std::min(chunk_rows, g.hout) * g.wout);
    const T* xs = x + static_cast<std::size_t>(s) * g.cin * g.h * g.w;
    T* ys = y + static_cast<std::size_t>(s) * cout * hw_out;
    for (std::size_t oh0 = 0; oh0 < g.hout; oh0 += chunk_rows) {
      const std::size_t oh1 = std::min(g.hout, oh0 + chunk_rows);
      const std::size_t len = (oh1 - oh0) * g.wout;
      im2col(xs, g, oh0, oh1, cols.data());
      const Eigen::Map<const RowMat<T>> cm(cols.data(), static_cast<Eigen::Index>(k_dim),
                                           static_cast<Eigen::Index>(len));
      Eigen::Map<RowMat<T>, 0, Strided> ym(ys + oh0 * g.wout, static_cast<Eigen::Index>(cout),
                                           static_cast<Eigen::Index>(len),
                                           Strided(static_cast<Eigen::Index>(hw_out)));
      ym.noalias() = wm * cm;
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const ConvParams<T>& p, const Tensor<T>& grad_out,
                             bool need_input_grad) {
  const Geometry g = check_geometry(input, p);
  const std::size_t n = input.shape().n;
  const std::size_t cout = p.out_channels();
  if (grad_out.shape() != Shape4{n, cout, g.hout, g.wout}) {
    throw ShapeError("conv2d_backward: grad_out shape " + grad_out.shape().str() + " does not match output");
  }
  const std::size_t k_dim = g.patch();
  const std::size_t hw_out = g.hout * g.wout;
  const std::size_t chunk_rows = g.rows_per_chunk();
  const bool need_weight_grad = p.learnable;

  ConvGrads<T> grads;
  if (need_input_grad) grads.input = Tensor<T>(input.shape());
  // One partial weight gradient per sample, reduced in sample order below so
  // the result does not depend on the worker count.
  std::vector<T> partial(need_weight_grad ? n * cout * k_dim : 0, T{0});

  const Eigen::Map<const RowMat<T>> wm(p.weights.ptr(), static_cast<Eigen::Index>(cout),
                                       static_cast<Eigen::Index>(k_dim));
  const T* x = input.ptr();
  const T* dy = grad_out.ptr();
  T* dx = need_input_grad ? grads.input.ptr() : nullptr;

#pragma omp parallel for schedule(static)
  for (std::int64_t s = 0; s < static_cast<std::int64_t>(n); ++s) {
    const std::size_t rows_cap = std::min(chunk_rows, g.hout) * g.wout;
    std::vector<T> cols(need_weight_grad ? k_dim * rows_cap : 0);
    std::vector<T> dcols(need_input_grad ? k_dim * rows_cap : 0);
    const std::size_t su = static_cast<std::size_t>(s);
    const T* xs = x + su * g.cin * g.h * g.w;
    const T* dys = dy + su * cout * hw_out;
    Eigen::Map<RowMat<T>> dwm(need_weight_grad ? partial.data() + su * cout * k_dim : nullptr,
                              static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(k_dim));
    for (std::size_t oh0 = 0; oh0 < g.hout; oh0 += chunk_rows) {
      const std::size_t oh1 = std::min(g.hout, oh0 + chunk_rows);
      const auto len = static_cast<Eigen::Index>((oh1 - oh0) * g.wout);
      const Eigen::Map<const RowMat<T>, 0, Strided> dym(dys + oh0 * g.wout, static_cast<Eigen::Index>(cout),
                                                        len, Strided(static_cast<Eigen::Index>(hw_out)));
      if (need_weight_grad) {
        im2col(xs, g, oh0, oh1, cols.data());
        const Eigen::Map<const RowMat<T>> cm(cols.data(), static_cast<Eigen::Index>(k_dim), len);
        dwm.noalias() += dym * cm.transpose();
      }
      if (need_input_grad) {
        Eigen::Map<RowMat<T>> dcm(dcols.data(), static_cast<Eigen::Index>(k_dim), len);
        dcm.noalias() = wm.transpose() * dym;
        col2im(dcols.data(), g, oh0, oh1, dx + su * g.cin * g.h * g.w);
      }
    }
  }

  if (need_weight_grad) {
    grads.weights = Tensor<T>(p.weights.shape());
    T* dw = grads.weights.ptr();
    const std::size_t wn = cout * k_dim;
    for (std::size_t s = 0; s < n; ++s) {
      const T* src = partial.data() + s * wn;
      for (std::size_t i = 0; i < wn; ++i) dw[i] += src[i];
    }
  }
  return grads;
}

template Tensor<float> conv2d(const Tensor<float>&, const ConvParams<float>&);
template Tensor<double> conv2d(const Tensor<double>&, const ConvParams<double>&);
template ConvGrads<float> conv2d_backward(const Tensor<float>&, const ConvParams<float>&, const Tensor<float>&, bool);
template ConvGrads<double> conv2d_backward(const Tensor<double>&, const ConvParams<double>&, const Tensor<double>&,
                                           bool);

}  // namespace ynet
