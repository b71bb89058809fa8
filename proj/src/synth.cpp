#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "ynet/datapipe.hpp"

namespace ynet {

GrayImage synth_texture(std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 gen(mix64(seed));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  struct Wave {
    double amp, fx, fy, phase;
  };
  auto wave = [&](double amp_lo, double amp_hi, double f_lo, double f_hi) {
    const double f = f_lo + (f_hi - f_lo) * u(gen);
    const double theta = 2.0 * std::numbers::pi * u(gen);
    return Wave{amp_lo + (amp_hi - amp_lo) * u(gen), f * std::cos(theta), f * std::sin(theta),
                2.0 * std::numbers::pi * u(gen)};
  };
  std::vector<Wave> waves;
  for (int i = 0; i < 3; ++i) waves.push_back(wave(10.0, 35.0, 0.005, 0.05));  // content
  for (int i = 0; i < 3; ++i) waves.push_back(wave(1.5, 6.0, 0.08, 0.30));     // texture
  const double base = 90.0 + 75.0 * u(gen);
  std::normal_distribution<double> noise(0.0, 0.5);

  GrayImage img(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      double v = base + noise(gen);
      for (const Wave& wv : waves) {
        v += wv.amp * std::sin(2.0 * std::numbers::pi * (wv.fx * static_cast<double>(c) + wv.fy * static_cast<double>(r)) +
                               wv.phase);
      }
      img.at(r, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  return img;
}

}  // namespace ynet
