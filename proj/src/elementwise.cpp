#include <cmath>

#include "ynet/ops.hpp"

namespace ynet {

namespace {

template <typename T>
void check_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": grad_out shape " + b.shape().str() + " != input shape " + a.shape().str());
  }
}

template <typename T, typename F>
Tensor<T> map(const Tensor<T>& x, F f) {
  Tensor<T> out(x.shape());
  const T* src = x.ptr();
  T* dst = out.ptr();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(src[i]);
  return out;
}

// grad_in[i] = grad_out[i] * f(x[i])
template <typename T, typename F>
Tensor<T> gate(const Tensor<T>& x, const Tensor<T>& dy, const char* op, F f) {
  check_same(x, dy, op);
  Tensor<T> out(x.shape());
  const T* xs = x.ptr();
  const T* g = dy.ptr();
  T* dst = out.ptr();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = g[i] * f(xs[i]);
  return out;
}

void check_trunc(TruncSpec s) {
  if (s.threshold < 1) throw std::invalid_argument("trunc: threshold must be >= 1");
}

}  // namespace

template <typename T>
Tensor<T> trunc(const Tensor<T>& input, TruncSpec s) {
  check_trunc(s);
  const T t = static_cast<T>(s.threshold);
  return map(input, [t](T v) { return std::clamp(v, -t, t); });
}

template <typename T>
Tensor<T> trunc_backward(const Tensor<T>& input, const Tensor<T>& grad_out, TruncSpec s) {
  check_trunc(s);
  const T t = static_cast<T>(s.threshold);
  return gate(input, grad_out, "trunc_backward", [t](T v) { return (v >= -t && v <= t) ? T{1} : T{0}; });
}

template <typename T>
Tensor<T> abs_layer(const Tensor<T>& input) {
  return map(input, [](T v) { return std::abs(v); });
}

template <typename T>
Tensor<T> abs_backward(const Tensor<T>& input, const Tensor<T>& grad_out) {
  return gate(input, grad_out, "abs_backward", [](T v) { return v > 0 ? T{1} : (v < 0 ? T{-1} : T{0}); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  return map(input, [](T v) { return v > 0 ? v : T{0}; });
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_out) {
  return gate(input, grad_out, "relu_backward", [](T v) { return v > 0 ? T{1} : T{0}; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& input, std::span<const T> gamma, std::span<const T> beta) {
  const Shape4& s = input.shape();
  if (gamma.size() != s.c || beta.size() != s.c) {
    throw ShapeError("scale: gamma/beta length " + std::to_string(gamma.size()) + "/" +
                     std::to_string(beta.size()) + " != channels " + std::to_string(s.c));
  }
  Tensor<T> out(s);
  const T* x = input.ptr();
  T* y = out.ptr();
  const std::size_t plane = s.plane();
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const std::size_t off = (n * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) y[off + i] = gamma[c] * x[off + i] + beta[c];
    }
  }
  return out;
}

template <typename T>
ScaleGrads<T> scale_backward(const Tensor<T>& input, std::span<const T> gamma, const Tensor<T>& grad_out) {
  check_same(input, grad_out, "scale_backward");
  const Shape4& s = input.shape();
  if (gamma.size() != s.c) throw ShapeError("scale_backward: gamma length does not match channels");
  ScaleGrads<T> g{Tensor<T>(s), std::vector<T>(s.c, T{0}), std::vector<T>(s.c, T{0})};
  const T* x = input.ptr();
  const T* dy = grad_out.ptr();
  T* dx = g.input.ptr();
  const std::size_t plane = s.plane();
  for (std::size_t c = 0; c < s.c; ++c) {
    double dgamma = 0.0;
    double dbeta = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t off = (n * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        dgamma += static_cast<double>(dy[off + i]) * static_cast<double>(x[off + i]);
        dbeta += static_cast<double>(dy[off + i]);
        dx[off + i] = dy[off + i] * gamma[c];
      }
    }
    g.gamma[c] = static_cast<T>(dgamma);
    g.beta[c] = static_cast<T>(dbeta);
  }
  return g;
}

#define YNET_INSTANTIATE(T)                                                                      \
  template Tensor<T> trunc(const Tensor<T>&, TruncSpec);                                         \
  template Tensor<T> trunc_backward(const Tensor<T>&, const Tensor<T>&, TruncSpec);              \
  template Tensor<T> abs_layer(const Tensor<T>&);                                                \
  template Tensor<T> abs_backward(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> relu(const Tensor<T>&);                                                     \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> scale(const Tensor<T>&, std::span<const T>, std::span<const T>);            \
  template ScaleGrads<T> scale_backward(const Tensor<T>&, std::span<const T>, const Tensor<T>&);

YNET_INSTANTIATE(float)
YNET_INSTANTIATE(double)
#undef YNET_INSTANTIATE

}  // namespace ynet
