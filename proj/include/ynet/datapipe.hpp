#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ynet/dihedral.hpp"
#include "ynet/errors.hpp"
#include "ynet/tensor.hpp"

namespace ynet {

// 8-bit grayscale image, row-major.
struct GrayImage {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(std::size_t rows, std::size_t cols, std::uint8_t fill = 0) : h(rows), w(cols), pixels(rows * cols, fill) {}
  std::uint8_t at(std::size_t r, std::size_t c) const { return pixels[r * w + c]; }
  std::uint8_t& at(std::size_t r, std::size_t c) { return pixels[r * w + c]; }
  bool operator==(const GrayImage&) const = default;
};

// Smallest image the network accepts.
inline constexpr std::size_t kMinImageSide = 32;

// ---------------------------------------------------------------------------
// PGM (binary P5, maxval 255 only)

class PgmError : public DataError {
 public:
  enum class Kind { io, malformed_header, short_payload, unsupported_variant };
  PgmError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

GrayImage decode_pgm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pgm(const GrayImage& img);
GrayImage load_pgm(const std::filesystem::path& path);
void save_pgm(const GrayImage& img, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// +-1 embedding simulator

// Largest payload of a ternary +-1 change: log2(3) bits per pixel.
inline constexpr double kMaxTernaryPayload = 1.584962500721156;

// Change rate beta with H2(beta) + beta = payload (bits per pixel), by bisection.
double change_rate_for_payload(double payload_bpp);

struct EmbedParams {
  double payload_bpp = 0.0;
  double change_rate = 0.0;
  std::uint64_t seed = 0;

  static EmbedParams for_payload(double payload_bpp, std::uint64_t seed);
};

// Each pixel changes independently with probability change_rate, +1 or -1
// with equal odds; 0 can only go up and 255 only down. The decision for
// pixel i depends only on (seed, i).
GrayImage lsbm_embed(const GrayImage& cover, const EmbedParams& p);

// ---------------------------------------------------------------------------
// Dihedral augmentation

// Index k of the result is Dihedral::from_index(k) applied to img.
std::array<GrayImage, 8> augment8(const GrayImage& img);
GrayImage transform(const GrayImage& img, Dihedral d);

// ---------------------------------------------------------------------------
// Manifest

enum class Split { unassigned, train, val, test };
const char* to_string(Split s);
Split parse_split(const std::string& s);

struct PairRecord {
  std::string id;
  std::string cover_path;  // relative to the manifest directory, or absolute
  std::string stego_path;
  Split split = Split::unassigned;
  std::string source;
};

// CSV `id,cover_path,stego_path,split,source`.
struct DatasetManifest {
  std::vector<PairRecord> pairs;
  std::filesystem::path base_dir;

  static DatasetManifest load(const std::filesystem::path& csv);
  static DatasetManifest parse(std::string_view text, const std::filesystem::path& base_dir);
  std::string to_csv() const;
  // Writes the CSV, rewriting relative paths against the new location.
  void save(const std::filesystem::path& csv) const;

  std::filesystem::path resolve(const std::string& p) const;
  std::size_t count(Split s) const;
};

struct SplitCounts {
  std::size_t train_pairs = 4000;
  std::size_t val_pairs = 1000;
};

// Half of the pairs (rounded down) form the training pool, the rest the test
// set. The pool is carved into val_pairs validation and train_pairs training
// pairs, which must use it up exactly. Pairs whose source is listed in
// train_only_sources bypass the shuffle and all go to train.
DatasetManifest make_splits(const DatasetManifest& m, std::uint64_t seed, SplitCounts counts = {},
                            const std::set<std::string>& train_only_sources = {});

// Writes the 8 transforms of every train pair under out_dir and returns a
// manifest (located in out_dir) where each train pair is replaced by its 8
// transformed pairs `<id>_d<k>`. Val and test pairs are kept as they are.
DatasetManifest augment_manifest(const DatasetManifest& m, const std::filesystem::path& out_dir);

// ---------------------------------------------------------------------------
// In-memory pair sets and batching

struct PairSet {
  std::vector<std::string> ids;
  std::vector<GrayImage> covers;
  std::vector<GrayImage> stegos;

  std::size_t size() const { return covers.size(); }
  void add(std::string id, GrayImage cover, GrayImage stego);
};

// Loads and validates every pair of one split: equal dimensions everywhere,
// sides >= kMinImageSide.
PairSet load_split(const DatasetManifest& m, Split s);

struct Batch {
  TensorF images;                  // (2 * pairs, 1, h, w): cover, stego, cover, stego, ...
  std::vector<int> labels;         // 0 = cover, 1 = stego
  std::vector<std::size_t> pairs;  // pair indices in the set
};

Batch make_batch(const PairSet& set, std::span<const std::size_t> pair_indices);

// Epoch-ordered stream of batches holding batch_size / 2 complete pairs.
// The order depends only on (seed, epoch); a partial final batch is dropped.
class BatchStream {
 public:
  BatchStream(const PairSet& set, std::size_t batch_size, std::uint64_t seed, std::size_t epoch);
  std::optional<Batch> next();
  std::size_t batches() const { return order_.size() / pairs_per_batch_; }
  const std::vector<std::size_t>& order() const { return order_; }

 private:
  const PairSet* set_;
  std::size_t pairs_per_batch_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

BatchStream batch_pairs(const PairSet& set, std::size_t batch_size, std::uint64_t seed, std::size_t epoch);

// ---------------------------------------------------------------------------
// Synthetic covers

// Smooth random field plus mid-frequency texture and mild sensor noise.
GrayImage synth_texture(std::size_t h, std::size_t w, std::uint64_t seed);

// Deterministic 64-bit mixer used for per-pixel and per-epoch randomness.
std::uint64_t mix64(std::uint64_t x);

}  // namespace ynet
