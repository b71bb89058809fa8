#include "ynet/tensor.hpp"

namespace ynet {

std::string Shape4::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace ynet
