#include <cctype>
#include <fstream>
#include <iterator>

#include "ynet/datapipe.hpp"

namespace ynet {

namespace {

using Kind = PgmError::Kind;

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> b) : b_(b) {}

  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    std::size_t v = 0;
    std::size_t digits = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + static_cast<std::size_t>(b_[pos_] - '0');
      ++pos_;
      if (++digits > 9) throw PgmError(Kind::malformed_header, std::string("PGM header: ") + what + " too large");
    }
    if (digits == 0) throw PgmError(Kind::malformed_header, std::string("PGM header: missing ") + what);
    return v;
  }

  std::size_t pos() const { return pos_; }
  void advance() { ++pos_; }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

GrayImage decode_pgm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') throw PgmError(Kind::malformed_header, "PGM header: missing magic");
  if (bytes[1] != '5') {
    throw PgmError(Kind::unsupported_variant,
                   std::string("unsupported PNM variant P") + static_cast<char>(bytes[1]) + " (only P5 is read)");
  }
  HeaderReader r(bytes.subspan(2));
  const std::size_t w = r.number("width");
  const std::size_t h = r.number("height");
  const std::size_t maxval = r.number("maxval");
  if (maxval != 255) {
    throw PgmError(Kind::unsupported_variant, "unsupported PNM variant: maxval " + std::to_string(maxval));
  }
  if (w == 0 || h == 0) throw PgmError(Kind::malformed_header, "PGM header: zero dimension");
  const std::size_t after = 2 + r.pos();
  if (after >= bytes.size() || !std::isspace(bytes[after])) {
    throw PgmError(Kind::malformed_header, "PGM header: expected whitespace after maxval");
  }
  const std::size_t data = after + 1;
  if (bytes.size() - data < w * h) {
    throw PgmError(Kind::short_payload, "PGM payload has " + std::to_string(bytes.size() - data) + " bytes, expected " +
                                            std::to_string(w * h));
  }
  GrayImage img(h, w);
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(data), w * h, img.pixels.begin());
  return img;
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& img) {
  const std::string header = "P5\n" + std::to_string(img.w) + " " + std::to_string(img.h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

GrayImage load_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PgmError(Kind::io, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_pgm(bytes);
  } catch (const PgmError& e) {
    throw PgmError(e.kind(), path.string() + ": " + e.what());
  }
}

void save_pgm(const GrayImage& img, const std::filesystem::path& path) {
  const auto bytes = encode_pgm(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PgmError(Kind::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw PgmError(Kind::io, "failed writing " + path.string());
}

}  // namespace ynet
