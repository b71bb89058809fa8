#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace ynet {

// The 8 elements of the dihedral group of the square, indexed 0..7:
// index = 4 * flip + quarter_turns. Quarter turns are clockwise; the flip is
// horizontal (mirror columns) and is applied after the rotation.
struct Dihedral {
  int quarter_turns = 0;  // 0..3
  bool flip = false;

  static Dihedral from_index(int i) {
    if (i < 0 || i > 7) throw std::out_of_range("dihedral index must be in [0,8)");
    return Dihedral{i % 4, i >= 4};
  }
  int index() const { return quarter_turns + (flip ? 4 : 0); }
};

inline constexpr std::array<const char*, 8> kDihedralNames = {"id", "rot90", "rot180", "rot270",
                                                              "flip", "rot90_flip", "rot180_flip", "rot270_flip"};

// Row-major h x w grid -> transformed grid; *out_h / *out_w receive the new
// extent (swapped for odd quarter turns). Pure index permutation.
template <typename T>
std::vector<T> apply_dihedral(const std::vector<T>& src, std::size_t h, std::size_t w, Dihedral d,
                              std::size_t* out_h = nullptr, std::size_t* out_w = nullptr) {
  if (src.size() != h * w) throw std::invalid_argument("apply_dihedral: size does not match extent");
  std::vector<T> cur = src;
  std::size_t ch = h;
  std::size_t cw = w;
  for (int t = 0; t < d.quarter_turns; ++t) {
    // clockwise: dst(i, j) = src(ch - 1 - j, i), dst extent cw x ch
    std::vector<T> next(cur.size());
    for (std::size_t i = 0; i < cw; ++i) {
      for (std::size_t j = 0; j < ch; ++j) next[i * ch + j] = cur[(ch - 1 - j) * cw + i];
    }
    cur.swap(next);
    std::swap(ch, cw);
  }
  if (d.flip) {
    for (std::size_t i = 0; i < ch; ++i) {
      for (std::size_t j = 0; j < cw / 2; ++j) std::swap(cur[i * cw + j], cur[i * cw + (cw - 1 - j)]);
    }
  }
  if (out_h != nullptr) *out_h = ch;
  if (out_w != nullptr) *out_w = cw;
  return cur;
}

}  // namespace ynet
