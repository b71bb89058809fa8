#pragma once

#include <array>
#include <string>
#include <vector>

#include "ynet/ops.hpp"
#include "ynet/tensor.hpp"

namespace ynet {

// 5x5 integer kernel, row-major.
using Kernel5 = std::array<int, 25>;

// The 30 fixed high-pass residual kernels of the pre-processing block,
// unnormalized, smaller supports centered and zero-padded to 5x5.
//
// Order (class-major, directions clockwise starting east, or north for the
// edge kernels):
//    0- 7  order1_{e,se,s,sw,w,nw,n,ne}     [-1 1]
//    8-11  order2_{h,d,v,ad}                [1 -2 1]
//   12-19  order3_{e,se,s,sw,w,nw,n,ne}     [1 -3 3 -1]
//   20     square3x3                        KB
//   21     square5x5                        KV
//   22-25  edge3x3_{n,e,s,w}
//   26-29  edge5x5_{n,e,s,w}
struct FilterBank {
  static constexpr std::size_t kCount = 30;
  static constexpr std::size_t kSize = 5;

  std::vector<Kernel5> kernels;
  std::vector<std::string> names;

  // (30, 1, 5, 5) weight tensor.
  template <typename T>
  Tensor<T> weights() const;
};

FilterBank build_filter_bank();

// image (n, 1, h, w) raw pixel values -> residuals (n, 30, h, w); stride 1,
// SAME padding, weights never learnable.
template <typename T>
Tensor<T> preprocess(const Tensor<T>& image, const FilterBank& bank);

template <typename T>
ConvParams<T> preprocess_params(const FilterBank& bank);

// Plain-text dump: per kernel a name line, five rows of five integers, blank line.
std::string export_filter_text(const FilterBank& bank);

}  // namespace ynet
