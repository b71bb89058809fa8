#include <cmath>
#include <stdexcept>

#include "ynet/datapipe.hpp"

namespace ynet {

std::uint64_t mix64(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

namespace {

// H2(beta) + beta, in bits
double ternary_entropy(double beta) {
  if (beta <= 0.0) return 0.0;
  const double h2 = -beta * std::log2(beta) - (1.0 - beta) * std::log2(1.0 - beta);
  return h2 + beta;
}

double unit_uniform(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

}  // namespace

double change_rate_for_payload(double payload_bpp) {
  if (!(payload_bpp >= 0.0 && payload_bpp <= kMaxTernaryPayload)) {
    throw std::out_of_range("payload must lie in [0, log2(3)] bits per pixel");
  }
  if (payload_bpp == 0.0) return 0.0;
  if (payload_bpp == kMaxTernaryPayload) return 2.0 / 3.0;
  // ternary_entropy is increasing on [0, 2/3]
  double lo = 0.0;
  double hi = 2.0 / 3.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
    const double mid = 0.5 * (lo + hi);
    (ternary_entropy(mid) < payload_bpp ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

EmbedParams EmbedParams::for_payload(double payload_bpp, std::uint64_t seed) {
  return EmbedParams{payload_bpp, change_rate_for_payload(payload_bpp), seed};
}

GrayImage lsbm_embed(const GrayImage& cover, const EmbedParams& p) {
  if (!(p.change_rate >= 0.0 && p.change_rate <= 2.0 / 3.0)) {
    throw std::out_of_range("change rate must lie in [0, 2/3]");
  }
  GrayImage stego = cover;
  const std::uint64_t key = mix64(p.seed);
  for (std::size_t i = 0; i < stego.pixels.size(); ++i) {
    const std::uint64_t r = mix64(key ^ mix64(static_cast<std::uint64_t>(i)));
    if (unit_uniform(r) >= p.change_rate) continue;
    std::uint8_t& px = stego.pixels[i];
    const bool up = px == 0 || (px != 255 && (mix64(r) & 1U) != 0);
    px = static_cast<std::uint8_t>(up ? px + 1 : px - 1);
  }
  return stego;
}

GrayImage transform(const GrayImage& img, Dihedral d) {
  GrayImage out;
  out.pixels = apply_dihedral(img.pixels, img.h, img.w, d, &out.h, &out.w);
  return out;
}

std::array<GrayImage, 8> augment8(const GrayImage& img) {
  std::array<GrayImage, 8> out;
  for (int k = 0; k < 8; ++k) out[static_cast<std::size_t>(k)] = transform(img, Dihedral::from_index(k));
  return out;
}

}  // namespace ynet
