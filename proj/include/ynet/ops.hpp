#pragma once

// Forward and backward kernels for every layer primitive of the network.
// All kernels are templated on the scalar type and instantiated for float
// (training) and double (gradient checks and oracles).

#include <cstddef>
#include <span>
#include <vector>

#include "ynet/tensor.hpp"

namespace ynet {

enum class Mode { train, eval };

// Worker count for the data-parallel kernels. Results do not depend on it.
void set_num_threads(int n);
int num_threads();

// ---------------------------------------------------------------------------
// Convolution

// Symmetric zero padding that preserves the spatial size at stride 1.
constexpr std::size_t same_pad(std::size_t kernel) { return (kernel - 1) / 2; }

std::size_t conv_out_dim(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);

// Weights are (out_channels, in_channels, k, k). There is no bias.
template <typename T>
struct ConvParams {
  Tensor<T> weights;
  std::size_t stride = 1;
  std::size_t pad = 0;
  bool learnable = true;

  std::size_t out_channels() const { return weights.shape().n; }
  std::size_t in_channels() const { return weights.shape().c; }
  std::size_t kernel() const { return weights.shape().h; }
};

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weights;  // empty when the parameters are not learnable
};

// Cross-correlation (no kernel flip).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvParams<T>& p);

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const ConvParams<T>& p, const Tensor<T>& grad_out,
                             bool need_input_grad = true);

// ---------------------------------------------------------------------------
// Elementwise activations

struct TruncSpec {
  int threshold = 1;
};

template <typename T>
Tensor<T> trunc(const Tensor<T>& input, TruncSpec s);
// Gradient passes where -T <= x <= T, boundary included.
template <typename T>
Tensor<T> trunc_backward(const Tensor<T>& input, const Tensor<T>& grad_out, TruncSpec s);

template <typename T>
Tensor<T> abs_layer(const Tensor<T>& input);
// sign(0) == 0
template <typename T>
Tensor<T> abs_backward(const Tensor<T>& input, const Tensor<T>& grad_out);

template <typename T>
Tensor<T> relu(const Tensor<T>& input);
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_out);

// ---------------------------------------------------------------------------
// Batch normalization (no affine part; see scale)

template <typename T>
struct BnState {
  std::vector<T> running_mean;
  std::vector<T> running_var;
  double eps = 1e-5;
  double stat_momentum = 0.9;  // running <- m * running + (1 - m) * batch
  Mode mode = Mode::train;
  std::size_t updates = 0;     // train-mode forwards seen so far

  explicit BnState(std::size_t channels = 0)
      : running_mean(channels, T{0}), running_var(channels, T{1}) {}
  bool initialized() const { return updates > 0; }
};

template <typename T>
struct BnCache {
  Mode mode = Mode::train;
  Tensor<T> normalized;
  std::vector<T> inv_std;
};

// Train mode normalizes with batch statistics and updates the running
// statistics; the first update copies the batch statistics outright.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, BnState<T>& st, BnCache<T>* cache = nullptr);

// Train mode differentiates through the batch mean and variance.
template <typename T>
Tensor<T> batch_norm_backward(const Tensor<T>& grad_out, const BnCache<T>& cache);

// ---------------------------------------------------------------------------
// Per-channel affine transform

template <typename T>
struct ScaleGrads {
  Tensor<T> input;
  std::vector<T> gamma;
  std::vector<T> beta;
};

template <typename T>
Tensor<T> scale(const Tensor<T>& input, std::span<const T> gamma, std::span<const T> beta);

template <typename T>
ScaleGrads<T> scale_backward(const Tensor<T>& input, std::span<const T> gamma, const Tensor<T>& grad_out);

// ---------------------------------------------------------------------------
// Pooling

struct PoolSpec {
  std::size_t window = 2;
  std::size_t stride = 2;
  std::size_t pad = 0;
  bool operator==(const PoolSpec&) const = default;
};

// Padded positions are excluded from each window's divisor.
template <typename T>
Tensor<T> avg_pool(const Tensor<T>& input, PoolSpec s);
template <typename T>
Tensor<T> avg_pool_backward(const Shape4& input_shape, const Tensor<T>& grad_out, PoolSpec s);

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input);
template <typename T>
Tensor<T> global_avg_pool_backward(const Shape4& input_shape, const Tensor<T>& grad_out);

// ---------------------------------------------------------------------------
// Fully connected: input (n, c, h, w) is flattened to (n, c*h*w);
// weights are (out, in, 1, 1); output is (n, out, 1, 1).

template <typename T>
struct DenseGrads {
  Tensor<T> input;
  Tensor<T> weights;
  std::vector<T> bias;
};

template <typename T>
Tensor<T> fully_connected(const Tensor<T>& input, const Tensor<T>& weights, std::span<const T> bias);

template <typename T>
DenseGrads<T> fully_connected_backward(const Tensor<T>& input, const Tensor<T>& weights,
                                       const Tensor<T>& grad_out);

// ---------------------------------------------------------------------------
// Softmax + mean cross-entropy. Logits are (n, classes, 1, 1).

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

template <typename T>
struct SoftmaxXent {
  double loss = 0.0;
  Tensor<T> probabilities;
};

template <typename T>
SoftmaxXent<T> softmax_xent(const Tensor<T>& logits, std::span<const int> labels);

// (p - one_hot(label)) / batch
template <typename T>
Tensor<T> softmax_xent_backward(const Tensor<T>& probabilities, std::span<const int> labels);

}  // namespace ynet
