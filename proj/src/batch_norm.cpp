#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "ynet/ops.hpp"

namespace ynet {

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, BnState<T>& st, BnCache<T>* cache) {
  const Shape4& s = input.shape();
  if (st.running_mean.size() != s.c || st.running_var.size() != s.c) {
    throw ShapeError("batch_norm: state has " + std::to_string(st.running_mean.size()) +
                     " channels, input has " + std::to_string(s.c));
  }
  if (!(st.eps > 0.0)) throw std::invalid_argument("batch_norm: eps must be positive");
  const std::size_t plane = s.plane();
  const std::size_t m = s.n * plane;
  const bool train = st.mode == Mode::train;
  if (train && m < 2) {
    throw ShapeError("batch_norm: train mode needs at least 2 values per channel, got " + std::to_string(m));
  }
  if (!train && !st.initialized()) {
    throw std::logic_error("batch_norm: uninitialized statistics (eval mode before any train-mode update)");
  }

  Tensor<T> out(s);
  std::vector<T> inv_std(s.c);
  const T* x = input.ptr();
  T* y = out.ptr();
  const double mom = st.stat_momentum;
  const bool first = st.updates == 0;

#pragma omp parallel for schedule(static)
  for (std::int64_t ci = 0; ci < static_cast<std::int64_t>(s.c); ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    double mean = 0.0;
    double var = 0.0;
    if (train) {
      for (std::size_t n = 0; n < s.n; ++n) {
        const T* p = x + (n * s.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) mean += static_cast<double>(p[i]);
      }
      mean /= static_cast<double>(m);
      for (std::size_t n = 0; n < s.n; ++n) {
        const T* p = x + (n * s.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = static_cast<double>(p[i]) - mean;
          var += d * d;
        }
      }
      var /= static_cast<double>(m);
      const double unbiased = var * static_cast<double>(m) / static_cast<double>(m - 1);
      if (first) {
        st.running_mean[c] = static_cast<T>(mean);
        st.running_var[c] = static_cast<T>(unbiased);
      } else {
        st.running_mean[c] = static_cast<T>(mom * st.running_mean[c] + (1.0 - mom) * mean);
        st.running_var[c] = static_cast<T>(mom * st.running_var[c] + (1.0 - mom) * unbiased);
      }
    } else {
      mean = static_cast<double>(st.running_mean[c]);
      var = static_cast<double>(st.running_var[c]);
    }
    const double is = 1.0 / std::sqrt(var + st.eps);
    inv_std[c] = static_cast<T>(is);
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t off = (n * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        y[off + i] = static_cast<T>((static_cast<double>(x[off + i]) - mean) * is);
      }
    }
  }
  if (train) ++st.updates;

  if (cache != nullptr) {
    cache->mode = st.mode;
    cache->normalized = out;
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

template <typename T>
Tensor<T> batch_norm_backward(const Tensor<T>& grad_out, const BnCache<T>& cache) {
  const Shape4& s = grad_out.shape();
  if (s != cache.normalized.shape()) {
    throw ShapeError("batch_norm_backward: grad_out shape " + s.str() + " != cached " +
                     cache.normalized.shape().str());
  }
  const std::size_t plane = s.plane();
  const double m = static_cast<double>(s.n * plane);
  Tensor<T> out(s);
  const T* dy = grad_out.ptr();
  const T* xh = cache.normalized.ptr();
  T* dx = out.ptr();

#pragma omp parallel for schedule(static)
  for (std::int64_t ci = 0; ci < static_cast<std::int64_t>(s.c); ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    const double is = static_cast<double>(cache.inv_std[c]);
    if (cache.mode == Mode::eval) {
      for (std::size_t n = 0; n < s.n; ++n) {
        const std::size_t off = (n * s.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) dx[off + i] = static_cast<T>(dy[off + i] * is);
      }
      continue;
    }
    double sum_dy = 0.0;
    double sum_dy_xh = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t off = (n * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += static_cast<double>(dy[off + i]);
        sum_dy_xh += static_cast<double>(dy[off + i]) * static_cast<double>(xh[off + i]);
      }
    }
    const double mean_dy = sum_dy / m;
    const double mean_dy_xh = sum_dy_xh / m;
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t off = (n * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double v = is * (static_cast<double>(dy[off + i]) - mean_dy - static_cast<double>(xh[off + i]) * mean_dy_xh);
        dx[off + i] = static_cast<T>(v);
      }
    }
  }
  return out;
}

template Tensor<float> batch_norm(const Tensor<float>&, BnState<float>&, BnCache<float>*);
template Tensor<double> batch_norm(const Tensor<double>&, BnState<double>&, BnCache<double>*);
template Tensor<float> batch_norm_backward(const Tensor<float>&, const BnCache<float>&);
template Tensor<double> batch_norm_backward(const Tensor<double>&, const BnCache<double>&);

}  // namespace ynet
