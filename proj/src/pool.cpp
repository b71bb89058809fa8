#include <algorithm>
#include <cstdint>

#include "ynet/ops.hpp"

namespace ynet {

namespace {

struct Window {
  std::size_t begin;
  std::size_t end;  // exclusive, clipped to the unpadded input
};

Window clip(std::size_t o, const PoolSpec& s, std::size_t extent) {
  const auto start = static_cast<std::ptrdiff_t>(o * s.stride) - static_cast<std::ptrdiff_t>(s.pad);
  const auto stop = start + static_cast<std::ptrdiff_t>(s.window);
  return Window{static_cast<std::size_t>(std::max<std::ptrdiff_t>(start, 0)),
                static_cast<std::size_t>(std::min<std::ptrdiff_t>(stop, static_cast<std::ptrdiff_t>(extent)))};
}

Shape4 pooled_shape(const Shape4& in, const PoolSpec& s) {
  if (s.window < 2) throw ShapeError("avg_pool: window must be >= 2");
  if (s.stride == 0) throw ShapeError("avg_pool: stride must be positive");
  if (s.pad >= s.window) throw ShapeError("avg_pool: pad must be smaller than the window");
  if (in.h + 2 * s.pad < s.window || in.w + 2 * s.pad < s.window) {
    throw ShapeError("avg_pool: window " + std::to_string(s.window) + " larger than padded input " + in.str());
  }
  return Shape4{in.n, in.c, conv_out_dim(in.h, s.window, s.stride, s.pad),
                conv_out_dim(in.w, s.window, s.stride, s.pad)};
}

}  // namespace

template <typename T>
Tensor<T> avg_pool(const Tensor<T>& input, PoolSpec s) {
  const Shape4& is = input.shape();
  const Shape4 os = pooled_shape(is, s);
  Tensor<T> out(os);
  const T* x = input.ptr();
  T* y = out.ptr();
  const std::int64_t planes = static_cast<std::int64_t>(is.n * is.c);

#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = x + static_cast<std::size_t>(p) * is.plane();
    T* dst = y + static_cast<std::size_t>(p) * os.plane();
    for (std::size_t oh = 0; oh < os.h; ++oh) {
      const Window rows = clip(oh, s, is.h);
      for (std::size_t ow = 0; ow < os.w; ++ow) {
        const Window cols = clip(ow, s, is.w);
        T acc{0};
        for (std::size_t ih = rows.begin; ih < rows.end; ++ih) {
          for (std::size_t iw = cols.begin; iw < cols.end; ++iw) acc += src[ih * is.w + iw];
        }
        const auto count = static_cast<T>((rows.end - rows.begin) * (cols.end - cols.begin));
        dst[oh * os.w + ow] = acc / count;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> avg_pool_backward(const Shape4& input_shape, const Tensor<T>& grad_out, PoolSpec s) {
  const Shape4 os = pooled_shape(input_shape, s);
  if (grad_out.shape() != os) {
    throw ShapeError("avg_pool_backward: grad_out shape " + grad_out.shape().str() + " != " + os.str());
  }
  Tensor<T> out(input_shape);
  const T* dy = grad_out.ptr();
  T* dx = out.ptr();
  const std::int64_t planes = static_cast<std::int64_t>(input_shape.n * input_shape.c);

#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = dy + static_cast<std::size_t>(p) * os.plane();
    T* dst = dx + static_cast<std::size_t>(p) * input_shape.plane();
    for (std::size_t oh = 0; oh < os.h; ++oh) {
      const Window rows = clip(oh, s, input_shape.h);
      for (std::size_t ow = 0; ow < os.w; ++ow) {
        const Window cols = clip(ow, s, input_shape.w);
        const auto count = static_cast<T>((rows.end - rows.begin) * (cols.end - cols.begin));
        const T g = src[oh * os.w + ow] / count;
        for (std::size_t ih = rows.begin; ih < rows.end; ++ih) {
          for (std::size_t iw = cols.begin; iw < cols.end; ++iw) dst[ih * input_shape.w + iw] += g;
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input) {
  const Shape4& s = input.shape();
  if (s.h == 0 || s.w == 0) throw ShapeError("global_avg_pool: empty feature map");
  Tensor<T> out(Shape4{s.n, s.c, 1, 1});
  const std::size_t plane = s.plane();
  for (std::size_t p = 0; p < s.n * s.c; ++p) {
    double acc = 0.0;
    const T* src = input.ptr() + p * plane;
    for (std::size_t i = 0; i < plane; ++i) acc += static_cast<double>(src[i]);
    out[p] = static_cast<T>(acc / static_cast<double>(plane));
  }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Shape4& input_shape, const Tensor<T>& grad_out) {
  if (grad_out.shape() != Shape4{input_shape.n, input_shape.c, 1, 1}) {
    throw ShapeError("global_avg_pool_backward: grad_out shape " + grad_out.shape().str());
  }
  Tensor<T> out(input_shape);
  const std::size_t plane = input_shape.plane();
  const T inv = T{1} / static_cast<T>(plane);
  for (std::size_t p = 0; p < input_shape.n * input_shape.c; ++p) {
    const T g = grad_out[p] * inv;
    std::fill_n(out.ptr() + p * plane, plane, g);
  }
  return out;
}

#define YNET_INSTANTIATE(T)                                                               \
  template Tensor<T> avg_pool(const Tensor<T>&, PoolSpec);                                \
  template Tensor<T> avg_pool_backward(const Shape4&, const Tensor<T>&, PoolSpec);        \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                   \
  template Tensor<T> global_avg_pool_backward(const Shape4&, const Tensor<T>&);

YNET_INSTANTIATE(float)
YNET_INSTANTIATE(double)
#undef YNET_INSTANTIATE

}  // namespace ynet
