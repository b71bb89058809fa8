#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "ynet/ops.hpp"

namespace ynet {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using CMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MMap = Eigen::Map<RowMat<T>>;

template <typename T>
void check_dense(const Tensor<T>& input, const Tensor<T>& weights) {
  const Shape4& ws = weights.shape();
  if (ws.h != 1 || ws.w != 1) throw ShapeError("fully_connected: weights must be (out, in, 1, 1), got " + ws.str());
  if (input.shape().sample() != ws.c) {
    throw ShapeError("fully_connected: input width " + std::to_string(input.shape().sample()) +
                     " != weight input dimension " + std::to_string(ws.c));
  }
}

void check_labels(std::span<const int> labels, std::size_t n, std::size_t classes) {
  if (labels.size() != n) {
    throw ShapeError("softmax_xent: " + std::to_string(labels.size()) + " labels for batch of " + std::to_string(n));
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) {
      throw std::out_of_range("softmax_xent: label " + std::to_string(l) + " out of range [0," +
                              std::to_string(classes) + ")");
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> fully_connected(const Tensor<T>& input, const Tensor<T>& weights, std::span<const T> bias) {
  check_dense(input, weights);
  const auto n = static_cast<Eigen::Index>(input.shape().n);
  const auto in = static_cast<Eigen::Index>(weights.shape().c);
  const auto out_dim = static_cast<Eigen::Index>(weights.shape().n);
  if (bias.size() != static_cast<std::size_t>(out_dim)) {
    throw ShapeError("fully_connected: bias length " + std::to_string(bias.size()) + " != outputs " +
                     std::to_string(out_dim));
  }
  require_finite(input, "fully_connected");
  Tensor<T> out(Shape4{input.shape().n, weights.shape().n, 1, 1});
  CMap<T> x(input.ptr(), n, in);
  CMap<T> w(weights.ptr(), out_dim, in);
  MMap<T> y(out.ptr(), n, out_dim);
  y.noalias() = x * w.transpose();
  const Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.data(), out_dim);
  y.rowwise() += b;
  return out;
}

template <typename T>
DenseGrads<T> fully_connected_backward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& grad_out) {
  check_dense(input, weights);
  const auto n = static_cast<Eigen::Index>(input.shape().n);
  const auto in = static_cast<Eigen::Index>(weights.shape().c);
  const auto out_dim = static_cast<Eigen::Index>(weights.shape().n);
  if (grad_out.shape() != Shape4{input.shape().n, weights.shape().n, 1, 1}) {
    throw ShapeError("fully_connected_backward: grad_out shape " + grad_out.shape().str());
  }
  DenseGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(weights.shape()), std::vector<T>(weights.shape().n)};
  CMap<T> x(input.ptr(), n, in);
  CMap<T> w(weights.ptr(), out_dim, in);
  CMap<T> dy(grad_out.ptr(), n, out_dim);
  MMap<T>(g.input.ptr(), n, in).noalias() = dy * w;
  MMap<T>(g.weights.ptr(), out_dim, in).noalias() = dy.transpose() * x;
  // fixed summation order: Eigen's vectorized reductions depend on buffer alignment
  for (Eigen::Index j = 0; j < out_dim; ++j) {
    T acc = 0;
    for (Eigen::Index i = 0; i < n; ++i) acc += dy(i, j);
    g.bias[static_cast<std::size_t>(j)] = acc;
  }
  return g;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  const Shape4& s = logits.shape();
  const std::size_t k = s.sample();
  Tensor<T> out(s);
  for (std::size_t i = 0; i < s.n; ++i) {
    const T* z = logits.ptr() + i * k;
    T* p = out.ptr() + i * k;
    const T mx = *std::max_element(z, z + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += std::exp(static_cast<double>(z[j] - mx));
    for (std::size_t j = 0; j < k; ++j) p[j] = static_cast<T>(std::exp(static_cast<double>(z[j] - mx)) / total);
  }
  return out;
}

template <typename T>
SoftmaxXent<T> softmax_xent(const Tensor<T>& logits, std::span<const int> labels) {
  const Shape4& s = logits.shape();
  const std::size_t k = s.sample();
  check_labels(labels, s.n, k);
  require_finite(logits, "softmax_xent");
  SoftmaxXent<T> r{0.0, softmax(logits)};
  double total = 0.0;
  for (std::size_t i = 0; i < s.n; ++i) {
    // log p_label = z_label - max - log(sum exp(z - max)), never log(0)
    const T* z = logits.ptr() + i * k;
    const double mx = static_cast<double>(*std::max_element(z, z + k));
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(z[j]) - mx);
    total -= static_cast<double>(z[labels[i]]) - mx - std::log(sum);
  }
  r.loss = s.n > 0 ? total / static_cast<double>(s.n) : 0.0;
  return r;
}

template <typename T>
Tensor<T> softmax_xent_backward(const Tensor<T>& probabilities, std::span<const int> labels) {
  const Shape4& s = probabilities.shape();
  const std::size_t k = s.sample();
  check_labels(labels, s.n, k);
  Tensor<T> g = probabilities;
  const T inv_n = T{1} / static_cast<T>(s.n);
  for (std::size_t i = 0; i < s.n; ++i) {
    g[i * k + static_cast<std::size_t>(labels[i])] -= T{1};
    for (std::size_t j = 0; j < k; ++j) g[i * k + j] *= inv_n;
  }
  return g;
}

#define YNET_INSTANTIATE(T)                                                                            \
  template Tensor<T> fully_connected(const Tensor<T>&, const Tensor<T>&, std::span<const T>);          \
  template DenseGrads<T> fully_connected_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> softmax(const Tensor<T>&);                                                        \
  template SoftmaxXent<T> softmax_xent(const Tensor<T>&, std::span<const int>);                        \
  template Tensor<T> softmax_xent_backward(const Tensor<T>&, std::span<const int>);

YNET_INSTANTIATE(float)
YNET_INSTANTIATE(double)
#undef YNET_INSTANTIATE

}  // namespace ynet
