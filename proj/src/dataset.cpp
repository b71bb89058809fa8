#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "ynet/datapipe.hpp"

namespace ynet {

namespace fs = std::filesystem;

const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::unassigned: return "";
  }
  return "";
}

Split parse_split(const std::string& s) {
  if (s.empty()) return Split::unassigned;
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw DataError("manifest: unknown split '" + s + "'");
}

namespace {

constexpr const char* kHeader = "id,cover_path,stego_path,split,source";

std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        fields.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.emplace_back();
    } else {
      fields.back() += ch;
    }
  }
  if (quoted) throw DataError("manifest line " + std::to_string(line_no) + ": unterminated quote");
  return fields;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return q + "\"";
}

}  // namespace

DatasetManifest DatasetManifest::parse(std::string_view text, const fs::path& base_dir) {
  DatasetManifest m;
  m.base_dir = base_dir;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line.rfind("\xEF\xBB\xBF", 0) == 0) line = line.substr(3);
      if (line != kHeader) throw DataError(std::string("manifest: header must be '") + kHeader + "'");
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_csv_line(line, line_no);
    if (f.size() != 5) throw DataError("manifest line " + std::to_string(line_no) + ": expected 5 fields");
    if (f[0].empty()) throw DataError("manifest line " + std::to_string(line_no) + ": empty id");
    if (!ids.insert(f[0]).second) throw DataError("manifest line " + std::to_string(line_no) + ": duplicate id " + f[0]);
    m.pairs.push_back(PairRecord{f[0], f[1], f[2], parse_split(f[3]), f[4]});
  }
  if (line_no == 0) throw DataError("manifest: empty file");
  return m;
}

DatasetManifest DatasetManifest::load(const fs::path& csv) {
  std::ifstream in(csv, std::ios::binary);
  if (!in) throw DataError("cannot open manifest " + csv.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), csv.parent_path());
}

std::string DatasetManifest::to_csv() const {
  std::string out = std::string(kHeader) + "\n";
  for (const auto& p : pairs) {
    out += csv_field(p.id) + "," + csv_field(p.cover_path) + "," + csv_field(p.stego_path) + "," + to_string(p.split) +
           "," + csv_field(p.source) + "\n";
  }
  return out;
}

void DatasetManifest::save(const fs::path& csv) const {
  DatasetManifest moved = *this;
  const fs::path new_base = fs::absolute(csv).parent_path();
  auto rebase = [&](const std::string& p) {
    if (p.empty() || fs::path(p).is_absolute()) return p;
    return fs::proximate(fs::absolute(resolve(p)), new_base).generic_string();
  };
  for (auto& rec : moved.pairs) {
    rec.cover_path = rebase(rec.cover_path);
    rec.stego_path = rebase(rec.stego_path);
  }
  std::ofstream out(csv, std::ios::binary);
  if (!out) throw DataError("cannot write manifest " + csv.string());
  out << moved.to_csv();
}

fs::path DatasetManifest::resolve(const std::string& p) const {
  const fs::path path(p);
  return path.is_absolute() ? path : base_dir / path;
}

std::size_t DatasetManifest::count(Split s) const {
  return static_cast<std::size_t>(std::count_if(pairs.begin(), pairs.end(), [s](const auto& p) { return p.split == s; }));
}

DatasetManifest make_splits(const DatasetManifest& m, std::uint64_t seed, SplitCounts counts,
                            const std::set<std::string>& train_only_sources) {
  DatasetManifest out = m;
  std::vector<std::size_t> primary;
  for (std::size_t i = 0; i < out.pairs.size(); ++i) {
    if (train_only_sources.count(out.pairs[i].source) != 0) {
      out.pairs[i].split = Split::train;
    } else {
      primary.push_back(i);
    }
  }
  const std::size_t pool = primary.size() / 2;
  if (counts.train_pairs + counts.val_pairs > pool) {
    throw DataError("make_splits: insufficient pairs: train pool holds " + std::to_string(pool) + " pairs, " +
                    std::to_string(counts.train_pairs + counts.val_pairs) + " requested");
  }
  if (counts.train_pairs + counts.val_pairs < pool) {
    throw DataError("make_splits: train pool holds " + std::to_string(pool) + " pairs but train + val = " +
                    std::to_string(counts.train_pairs + counts.val_pairs));
  }
  std::mt19937_64 gen(mix64(seed));
  std::shuffle(primary.begin(), primary.end(), gen);
  for (std::size_t k = 0; k < primary.size(); ++k) {
    Split s = Split::test;
    if (k < counts.val_pairs) {
      s = Split::val;
    } else if (k < pool) {
      s = Split::train;
    }
    out.pairs[primary[k]].split = s;
  }
  return out;
}

DatasetManifest augment_manifest(const DatasetManifest& m, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  DatasetManifest out;
  out.base_dir = fs::absolute(out_dir);
  for (const auto& rec : m.pairs) {
    if (rec.split != Split::train) {
      PairRecord kept = rec;
      kept.cover_path = fs::absolute(m.resolve(rec.cover_path)).string();
      kept.stego_path = fs::absolute(m.resolve(rec.stego_path)).string();
      out.pairs.push_back(std::move(kept));
      continue;
    }
    const auto covers = augment8(load_pgm(m.resolve(rec.cover_path)));
    const auto stegos = augment8(load_pgm(m.resolve(rec.stego_path)));
    for (std::size_t k = 0; k < 8; ++k) {
      const std::string id = rec.id + "_d" + std::to_string(k);
      const std::string cover = id + "_cover.pgm";
      const std::string stego = id + "_stego.pgm";
      save_pgm(covers[k], out_dir / cover);
      save_pgm(stegos[k], out_dir / stego);
      out.pairs.push_back(PairRecord{id, cover, stego, Split::train, rec.source});
    }
  }
  // val/test paths were made absolute above; store them relative to out_dir
  for (auto& rec : out.pairs) {
    if (fs::path(rec.cover_path).is_absolute()) {
      rec.cover_path = fs::proximate(rec.cover_path, out.base_dir).generic_string();
      rec.stego_path = fs::proximate(rec.stego_path, out.base_dir).generic_string();
    }
  }
  return out;
}

void PairSet::add(std::string id, GrayImage cover, GrayImage stego) {
  if (cover.h != stego.h || cover.w != stego.w) throw DataError("pair " + id + ": cover and stego sizes differ");
  if (cover.h < kMinImageSide || cover.w < kMinImageSide) {
    throw DataError("pair " + id + ": images must be at least 32x32");
  }
  if (!covers.empty() && (cover.h != covers.front().h || cover.w != covers.front().w)) {
    throw DataError("pair " + id + ": all images of a split must share one size");
  }
  ids.push_back(std::move(id));
  covers.push_back(std::move(cover));
  stegos.push_back(std::move(stego));
}

PairSet load_split(const DatasetManifest& m, Split s) {
  PairSet set;
  for (const auto& rec : m.pairs) {
    if (rec.split != s) continue;
    set.add(rec.id, load_pgm(m.resolve(rec.cover_path)), load_pgm(m.resolve(rec.stego_path)));
  }
  return set;
}

Batch make_batch(const PairSet& set, std::span<const std::size_t> pair_indices) {
  if (pair_indices.empty()) throw std::invalid_argument("make_batch: no pairs");
  const std::size_t h = set.covers.front().h;
  const std::size_t w = set.covers.front().w;
  Batch b;
  b.images = TensorF(Shape4{2 * pair_indices.size(), 1, h, w});
  b.pairs.assign(pair_indices.begin(), pair_indices.end());
  float* dst = b.images.ptr();
  for (std::size_t idx : pair_indices) {
    for (const GrayImage* img : {&set.covers.at(idx), &set.stegos.at(idx)}) {
      dst = std::transform(img->pixels.begin(), img->pixels.end(), dst,
                           [](std::uint8_t v) { return static_cast<float>(v); });
    }
    b.labels.push_back(0);
    b.labels.push_back(1);
  }
  return b;
}

BatchStream::BatchStream(const PairSet& set, std::size_t batch_size, std::uint64_t seed, std::size_t epoch)
    : set_(&set), pairs_per_batch_(batch_size / 2) {
  if (batch_size == 0 || batch_size % 2 != 0) {
    throw std::invalid_argument("batch size must be a positive even number, got " + std::to_string(batch_size));
  }
  order_.resize(set.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::mt19937_64 gen(mix64(mix64(seed) ^ static_cast<std::uint64_t>(epoch)));
  std::shuffle(order_.begin(), order_.end(), gen);
}

std::optional<Batch> BatchStream::next() {
  if (cursor_ + pairs_per_batch_ > order_.size()) return std::nullopt;
  const std::span<const std::size_t> idx(order_.data() + cursor_, pairs_per_batch_);
  cursor_ += pairs_per_batch_;
  return make_batch(*set_, idx);
}

BatchStream batch_pairs(const PairSet& set, std::size_t batch_size, std::uint64_t seed, std::size_t epoch) {
  return BatchStream(set, batch_size, seed, epoch);
}

}  // namespace ynet
