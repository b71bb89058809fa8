#include "ynet/srm.hpp"

#include <sstream>

#include "ynet/dihedral.hpp"

namespace ynet {

namespace {

struct Tap {
  int row;
  int col;
  int value;
};

Kernel5 make(std::initializer_list<Tap> taps) {
  Kernel5 k{};
  for (const Tap& t : taps) k[static_cast<std::size_t>(t.row * 5 + t.col)] = t.value;
  return k;
}

Kernel5 rotate(const Kernel5& k, int quarter_turns) {
  const std::vector<int> v(k.begin(), k.end());
  const std::vector<int> r = apply_dihedral(v, 5, 5, Dihedral{quarter_turns, false});
  Kernel5 out{};
  std::copy(r.begin(), r.end(), out.begin());
  return out;
}

// Interleaves the rotations of an axis-aligned and a diagonal base so the
// directions run clockwise: axis0, diag0, axis1, diag1, ...
void add_eight(FilterBank& bank, const std::string& prefix, const Kernel5& axis_east, const Kernel5& diag_se) {
  static const char* dirs[] = {"e", "se", "s", "sw", "w", "nw", "n", "ne"};
  for (int t = 0; t < 4; ++t) {
    bank.kernels.push_back(rotate(axis_east, t));
    bank.names.push_back(prefix + "_" + dirs[2 * t]);
    bank.kernels.push_back(rotate(diag_se, t));
    bank.names.push_back(prefix + "_" + dirs[2 * t + 1]);
  }
}

void add_four_edges(FilterBank& bank, const std::string& prefix, const Kernel5& north) {
  static const char* dirs[] = {"n", "e", "s", "w"};
  for (int t = 0; t < 4; ++t) {
    bank.kernels.push_back(rotate(north, t));
    bank.names.push_back(prefix + "_" + dirs[t]);
  }
}

}  // namespace

FilterBank build_filter_bank() {
  FilterBank bank;

  add_eight(bank, "order1", make({{2, 2, -1}, {2, 3, 1}}), make({{2, 2, -1}, {3, 3, 1}}));

  const Kernel5 o2_h = make({{2, 1, 1}, {2, 2, -2}, {2, 3, 1}});
  const Kernel5 o2_d = make({{1, 1, 1}, {2, 2, -2}, {3, 3, 1}});
  bank.kernels.insert(bank.kernels.end(), {o2_h, o2_d, rotate(o2_h, 1), rotate(o2_d, 1)});
  bank.names.insert(bank.names.end(), {"order2_h", "order2_d", "order2_v", "order2_ad"});

  add_eight(bank, "order3", make({{2, 1, 1}, {2, 2, -3}, {2, 3, 3}, {2, 4, -1}}),
            make({{1, 1, 1}, {2, 2, -3}, {3, 3, 3}, {4, 4, -1}}));

  bank.kernels.push_back(make({{1, 1, -1}, {1, 2, 2}, {1, 3, -1},
                               {2, 1, 2}, {2, 2, -4}, {2, 3, 2},
                               {3, 1, -1}, {3, 2, 2}, {3, 3, -1}}));
  bank.names.emplace_back("square3x3");

  bank.kernels.push_back(Kernel5{-1, 2, -2, 2, -1,
                                  2, -6, 8, -6, 2,
                                 -2, 8, -12, 8, -2,
                                  2, -6, 8, -6, 2,
                                 -1, 2, -2, 2, -1});
  bank.names.emplace_back("square5x5");

  add_four_edges(bank, "edge3x3",
                 make({{1, 1, -1}, {1, 2, 2}, {1, 3, -1}, {2, 1, 2}, {2, 2, -4}, {2, 3, 2}}));
  add_four_edges(bank, "edge5x5", Kernel5{-1, 2, -2, 2, -1,
                                           2, -6, 8, -6, 2,
                                          -2, 8, -12, 8, -2,
                                           0, 0, 0, 0, 0,
                                           0, 0, 0, 0, 0});
  return bank;
}

template <typename T>
Tensor<T> FilterBank::weights() const {
  Tensor<T> w(Shape4{kernels.size(), 1, kSize, kSize});
  for (std::size_t k = 0; k < kernels.size(); ++k) {
    for (std::size_t i = 0; i < 25; ++i) w[k * 25 + i] = static_cast<T>(kernels[k][i]);
  }
  return w;
}

template <typename T>
ConvParams<T> preprocess_params(const FilterBank& bank) {
  return ConvParams<T>{bank.weights<T>(), 1, same_pad(FilterBank::kSize), false};
}

template <typename T>
Tensor<T> preprocess(const Tensor<T>& image, const FilterBank& bank) {
  if (image.shape().c != 1) {
    throw ShapeError("preprocess: expected single-channel image, got " + std::to_string(image.shape().c) +
                     " channels");
  }
  return conv2d(image, preprocess_params<T>(bank));
}

std::string export_filter_text(const FilterBank& bank) {
  std::ostringstream os;
  for (std::size_t k = 0; k < bank.kernels.size(); ++k) {
    os << bank.names[k] << '\n';
    for (std::size_t r = 0; r < 5; ++r) {
      for (std::size_t c = 0; c < 5; ++c) os << (c ? " " : "") << bank.kernels[k][r * 5 + c];
      os << '\n';
    }
    os << '\n';
  }
  return os.str();
}

template Tensor<float> FilterBank::weights<float>() const;
template Tensor<double> FilterBank::weights<double>() const;
template ConvParams<float> preprocess_params<float>(const FilterBank&);
template ConvParams<double> preprocess_params<double>(const FilterBank&);
template Tensor<float> preprocess(const Tensor<float>&, const FilterBank&);
template Tensor<double> preprocess(const Tensor<double>&, const FilterBank&);

}  // namespace ynet
