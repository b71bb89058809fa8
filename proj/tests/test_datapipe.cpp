#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "oracles.hpp"
#include "ynet/datapipe.hpp"

using namespace ynet;
namespace fs = std::filesystem;

namespace {

GrayImage random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> px(0, 255);
  GrayImage img(h, w);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(px(gen));
  return img;
}

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::path(::testing::TempDir()) / ("ynet_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

DatasetManifest synthetic_manifest(std::size_t n, const std::string& source = "synthetic") {
  DatasetManifest m;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = "p" + std::to_string(i);
    m.pairs.push_back(PairRecord{id, "c/" + id + ".pgm", "s/" + id + ".pgm", Split::unassigned, source});
  }
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// PGM

TEST(Pgm, HandAssembledFixture) {
  const GrayImage img = load_pgm(fs::path(YNET_FIXTURE_DIR) / "tiny_3x2.pgm");
  ASSERT_EQ(img.w, 3u);
  ASSERT_EQ(img.h, 2u);
  EXPECT_EQ(img.at(0, 0), 0);
  EXPECT_EQ(img.at(0, 1), 1);
  EXPECT_EQ(img.at(0, 2), 128);
  EXPECT_EQ(img.at(1, 0), 127);
  EXPECT_EQ(img.at(1, 1), 254);
  EXPECT_EQ(img.at(1, 2), 255);
}

TEST(Pgm, RoundTripIsLossless) {
  const GrayImage img = random_image(37, 41, 1);
  EXPECT_EQ(decode_pgm(encode_pgm(img)), img);
  const fs::path p = fresh_dir("pgm") / "x.pgm";
  save_pgm(img, p);
  EXPECT_EQ(load_pgm(p), img);
}

TEST(Pgm, ErrorsAreDistinct) {
  auto kind = [](const std::string& s) {
    try {
      decode_pgm(bytes_of(s));
    } catch (const PgmError& e) {
      return e.kind();
    }
    ADD_FAILURE() << "accepted: " << s;
    return PgmError::Kind::io;
  };
  try {
    decode_pgm(bytes_of("P6\n2 2\n255\n............"));
    FAIL();
  } catch (const PgmError& e) {
    EXPECT_EQ(e.kind(), PgmError::Kind::unsupported_variant);
    EXPECT_NE(std::string(e.what()).find("unsupported PNM variant"), std::string::npos);
  }
  EXPECT_EQ(kind("P2\n2 2\n255\n1 2 3 4\n"), PgmError::Kind::unsupported_variant);
  EXPECT_EQ(kind("P5\n2 2\n65535\n12345678"), PgmError::Kind::unsupported_variant);
  EXPECT_EQ(kind("P5\n2 2\n15\n1234"), PgmError::Kind::unsupported_variant);
  EXPECT_EQ(kind("P5\n2 2\n255\n123"), PgmError::Kind::short_payload);
  EXPECT_EQ(kind("P5\n2\n"), PgmError::Kind::malformed_header);
  EXPECT_EQ(kind("Q5\n2 2\n255\n1234"), PgmError::Kind::malformed_header);
  EXPECT_EQ(kind(""), PgmError::Kind::malformed_header);
  EXPECT_THROW(load_pgm("/nonexistent/file.pgm"), PgmError);
}

// ---------------------------------------------------------------------------
// Embedding simulator

TEST(ChangeRate, EndpointsAndPinnedOracleValues) {
  EXPECT_EQ(change_rate_for_payload(0.0), 0.0);
  EXPECT_EQ(change_rate_for_payload(kMaxTernaryPayload), 2.0 / 3.0);
  EXPECT_EQ(kMaxTernaryPayload, std::log2(3.0));

  // pinned from an offline bisection of H2(b) + b = R
  const std::map<double, double> pinned{{0.2, 0.026013310361540844}, {0.4, 0.06254278797605223},
                                        {1.0, 0.22709219521934815}};
  for (const auto& [r, beta] : pinned) {
    const double b = change_rate_for_payload(r);
    EXPECT_NEAR(b, beta, 1e-9) << r;
    EXPECT_NEAR(b, oracle::bisect_beta(r), 1e-9) << r;
    EXPECT_LE(std::abs(oracle::ternary_payload(b) - r), 1e-9) << r;
  }
  const double b04 = change_rate_for_payload(0.4);
  EXPECT_GT(b04, 0.060);
  EXPECT_LT(b04, 0.066);
}

TEST(ChangeRate, MonotoneAndRangeChecked) {
  double prev = -1.0;
  for (int i = 0; i <= 100; ++i) {
    const double b = change_rate_for_payload(kMaxTernaryPayload * i / 100.0);
    EXPECT_GT(b, prev);
    prev = b;
  }
  EXPECT_THROW(change_rate_for_payload(-0.01), std::out_of_range);
  EXPECT_THROW(change_rate_for_payload(1.6), std::out_of_range);
  EXPECT_EQ(EmbedParams::for_payload(0.4, 9).change_rate, change_rate_for_payload(0.4));
}

TEST(Lsbm, ZeroRateIsIdentity) {
  const GrayImage c = random_image(64, 64, 2);
  EXPECT_EQ(lsbm_embed(c, EmbedParams::for_payload(0.0, 5)), c);
}

TEST(Lsbm, ChangesAreUnitAndInRange) {
  for (std::uint8_t fill : {std::uint8_t{0}, std::uint8_t{255}, std::uint8_t{128}}) {
    const GrayImage c(64, 64, fill);
    const GrayImage s = lsbm_embed(c, EmbedParams{1.0, 0.6, 3});
    std::size_t changed = 0;
    for (std::size_t i = 0; i < c.pixels.size(); ++i) {
      const int d = static_cast<int>(s.pixels[i]) - static_cast<int>(c.pixels[i]);
      ASSERT_LE(std::abs(d), 1);
      if (fill == 0) ASSERT_GE(d, 0);
      if (fill == 255) ASSERT_LE(d, 0);
      changed += d != 0 ? 1 : 0;
    }
    EXPECT_GT(changed, 0u);
  }
}

TEST(Lsbm, ChangeFractionWithinThreeSigma) {
  const GrayImage c = random_image(256, 256, 4);
  for (double r : {0.2, 0.4, 1.0}) {
    const EmbedParams p = EmbedParams::for_payload(r, 77);
    const GrayImage s = lsbm_embed(c, p);
    std::size_t changed = 0, up = 0;
    for (std::size_t i = 0; i < c.pixels.size(); ++i) {
      changed += s.pixels[i] != c.pixels[i] ? 1 : 0;
      up += s.pixels[i] > c.pixels[i] ? 1 : 0;
    }
    const double n = static_cast<double>(c.pixels.size());
    const double sigma = std::sqrt(p.change_rate * (1 - p.change_rate) / n);
    EXPECT_LE(std::abs(changed / n - p.change_rate), 3 * sigma) << r;
    // +1 and -1 equally likely
    const double half_sigma = std::sqrt(0.25 / static_cast<double>(changed));
    EXPECT_LE(std::abs(static_cast<double>(up) / changed - 0.5), 3 * half_sigma) << r;
  }
}

TEST(Lsbm, DeterministicPerSeed) {
  const GrayImage c = random_image(64, 64, 5);
  const EmbedParams p = EmbedParams::for_payload(0.4, 11);
  EXPECT_EQ(lsbm_embed(c, p), lsbm_embed(c, p));
  EXPECT_NE(lsbm_embed(c, p), lsbm_embed(c, EmbedParams::for_payload(0.4, 12)));
  // decisions depend on (seed, index) only, not on pixel values
  const GrayImage flat(64, 64, 100);
  const GrayImage a = lsbm_embed(c, p), b = lsbm_embed(flat, p);
  for (std::size_t i = 0; i < c.pixels.size(); ++i) {
    if (c.pixels[i] == 0 || c.pixels[i] == 255) continue;
    ASSERT_EQ(a.pixels[i] != c.pixels[i], b.pixels[i] != flat.pixels[i]);
  }
}

// ---------------------------------------------------------------------------
// Augmentation

TEST(Augment, GroupIdentities) {
  const GrayImage img = random_image(33, 47, 6);
  const Dihedral rot{1, false}, flip{0, true};
  GrayImage r = img;
  for (int i = 0; i < 4; ++i) r = transform(r, rot);
  EXPECT_EQ(r, img);
  EXPECT_EQ(transform(transform(img, flip), flip), img);
  const GrayImage r1 = transform(img, rot);
  EXPECT_EQ(r1.h, 47u);
  EXPECT_EQ(r1.w, 33u);
  // clockwise: the top-left pixel moves to the top-right corner
  EXPECT_EQ(r1.at(0, r1.w - 1), img.at(0, 0));
  EXPECT_EQ(transform(img, flip).at(0, img.w - 1), img.at(0, 0));
}

TEST(Augment, EightDistinctPermutations) {
  const GrayImage img = random_image(40, 40, 7);
  const auto all = augment8(img);
  std::vector<std::uint8_t> sorted = img.pixels;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(all[i], transform(img, Dihedral::from_index(static_cast<int>(i))));
    std::vector<std::uint8_t> s = all[i].pixels;
    std::sort(s.begin(), s.end());
    EXPECT_EQ(s, sorted);
    for (std::size_t j = 0; j < i; ++j) EXPECT_NE(all[i], all[j]) << i << " " << j;
  }
  EXPECT_EQ(all[0], img);
}

// ---------------------------------------------------------------------------
// Manifest and splits

TEST(Manifest, CsvRoundTripWithQuoting) {
  DatasetManifest m = synthetic_manifest(3);
  m.pairs[1].cover_path = "dir with, comma/c.pgm";
  m.pairs[1].source = "say \"hi\"";
  m.pairs[2].split = Split::test;
  const std::string csv = m.to_csv();
  EXPECT_EQ(csv.rfind("id,cover_path,stego_path,split,source\n", 0), 0u);
  const DatasetManifest back = DatasetManifest::parse(csv, "/base");
  ASSERT_EQ(back.pairs.size(), 3u);
  EXPECT_EQ(back.pairs[1].cover_path, "dir with, comma/c.pgm");
  EXPECT_EQ(back.pairs[1].source, "say \"hi\"");
  EXPECT_EQ(back.pairs[2].split, Split::test);
  EXPECT_EQ(back.to_csv(), csv);
  EXPECT_EQ(back.resolve("a/b.pgm"), fs::path("/base/a/b.pgm"));
  EXPECT_EQ(back.resolve("/abs/b.pgm"), fs::path("/abs/b.pgm"));
}

TEST(Manifest, ParseErrors) {
  EXPECT_THROW(DatasetManifest::parse("id,cover,stego,split,source\n", "."), DataError);
  const std::string h = "id,cover_path,stego_path,split,source\n";
  EXPECT_THROW(DatasetManifest::parse(h + "a,c,s,train\n", "."), DataError);
  EXPECT_THROW(DatasetManifest::parse(h + "a,c,s,holdout,x\n", "."), DataError);
  EXPECT_THROW(DatasetManifest::parse(h + "a,c,s,,x\na,c2,s2,,x\n", "."), DataError);
  EXPECT_THROW(DatasetManifest::parse(h + "a,\"c,s,,x\n", "."), DataError);
  EXPECT_NO_THROW(DatasetManifest::parse(h + "a,c,s,,x\r\n", "."));
}

TEST(Manifest, SaveRebasesRelativePaths) {
  const fs::path root = fresh_dir("rebase");
  fs::create_directories(root / "a" / "imgs");
  fs::create_directories(root / "b");
  DatasetManifest m = synthetic_manifest(1);
  m.base_dir = root / "a";
  m.pairs[0].cover_path = "imgs/c.pgm";
  m.pairs[0].stego_path = "/abs/s.pgm";
  m.save(root / "b" / "m.csv");
  const DatasetManifest back = DatasetManifest::load(root / "b" / "m.csv");
  EXPECT_EQ(back.pairs[0].cover_path, "../a/imgs/c.pgm");
  EXPECT_EQ(back.pairs[0].stego_path, "/abs/s.pgm");
  EXPECT_EQ(fs::weakly_canonical(back.resolve(back.pairs[0].cover_path)),
            fs::weakly_canonical(root / "a" / "imgs" / "c.pgm"));
}

TEST(Splits, DefaultCounts) {
  const DatasetManifest s = make_splits(synthetic_manifest(10000), 1);
  EXPECT_EQ(s.count(Split::train), 4000u);
  EXPECT_EQ(s.count(Split::val), 1000u);
  EXPECT_EQ(s.count(Split::test), 5000u);
  EXPECT_EQ(s.count(Split::unassigned), 0u);
}

TEST(Splits, PartitionAndDeterminism) {
  const DatasetManifest m = synthetic_manifest(100);
  const DatasetManifest a = make_splits(m, 5, SplitCounts{40, 10});
  const DatasetManifest b = make_splits(m, 5, SplitCounts{40, 10});
  const DatasetManifest c = make_splits(m, 6, SplitCounts{40, 10});
  EXPECT_EQ(a.to_csv(), b.to_csv());
  EXPECT_NE(a.to_csv(), c.to_csv());
  std::set<std::string> ids;
  for (const auto& p : a.pairs) {
    EXPECT_TRUE(ids.insert(p.id).second);
    EXPECT_NE(p.split, Split::unassigned);
  }
  EXPECT_EQ(ids.size(), 100u);
  EXPECT_EQ(a.count(Split::test), 50u);
}

TEST(Splits, CountErrors) {
  const DatasetManifest m = synthetic_manifest(100);
  EXPECT_THROW(make_splits(m, 1, SplitCounts{45, 10}), DataError);  // more than the pool of 50
  EXPECT_THROW(make_splits(m, 1, SplitCounts{30, 10}), DataError);  // pool not used up
  EXPECT_THROW(make_splits(synthetic_manifest(9999), 1), DataError);
}

TEST(Splits, TrainOnlySourcesNeverReachTest) {
  DatasetManifest m = synthetic_manifest(100, "boss");
  const DatasetManifest extra = synthetic_manifest(30, "bows2");
  for (auto p : extra.pairs) {
    p.id = "x" + p.id;
    m.pairs.push_back(p);
  }
  const DatasetManifest s = make_splits(m, 3, SplitCounts{40, 10}, {"bows2"});
  for (const auto& p : s.pairs) {
    if (p.source == "bows2") EXPECT_EQ(p.split, Split::train);
  }
  EXPECT_EQ(s.count(Split::train), 70u);
  EXPECT_EQ(s.count(Split::test), 50u);
}

// ---------------------------------------------------------------------------
// Materialized augmentation and loading

namespace {

// Writes n random 32x32 pairs plus a manifest under dir; returns the manifest path.
fs::path write_dataset(const fs::path& dir, std::size_t n, std::size_t side = 32) {
  DatasetManifest m;
  m.base_dir = dir;
  fs::create_directories(dir / "img");
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = "q" + std::to_string(i);
    const GrayImage c = random_image(side, side, 100 + i);
    save_pgm(c, dir / "img" / (id + "_c.pgm"));
    save_pgm(lsbm_embed(c, EmbedParams::for_payload(0.4, i)), dir / "img" / (id + "_s.pgm"));
    m.pairs.push_back(PairRecord{id, "img/" + id + "_c.pgm", "img/" + id + "_s.pgm", Split::unassigned, "synthetic"});
  }
  m = make_splits(m, 9, SplitCounts{n / 2 - 1, 1});
  m.save(dir / "manifest.csv");
  return dir / "manifest.csv";
}

}  // namespace

TEST(AugmentManifest, EightTransformsPerTrainPair) {
  const fs::path root = fresh_dir("aug");
  const DatasetManifest m = DatasetManifest::load(write_dataset(root / "src", 8));
  const DatasetManifest a = augment_manifest(m, root / "out");
  EXPECT_EQ(a.count(Split::train), 8 * m.count(Split::train));
  EXPECT_EQ(a.count(Split::val), m.count(Split::val));
  EXPECT_EQ(a.count(Split::test), m.count(Split::test));
  for (const auto& src : m.pairs) {
    if (src.split != Split::train) continue;
    const GrayImage c = load_pgm(m.resolve(src.cover_path));
    const GrayImage s = load_pgm(m.resolve(src.stego_path));
    for (int k = 0; k < 8; ++k) {
      const std::string id = src.id + "_d" + std::to_string(k);
      const auto it = std::find_if(a.pairs.begin(), a.pairs.end(), [&](const auto& p) { return p.id == id; });
      ASSERT_NE(it, a.pairs.end()) << id;
      EXPECT_EQ(it->split, Split::train);
      EXPECT_EQ(load_pgm(a.resolve(it->cover_path)), transform(c, Dihedral::from_index(k)));
      EXPECT_EQ(load_pgm(a.resolve(it->stego_path)), transform(s, Dihedral::from_index(k)));
    }
  }
  // the returned manifest resolves after a save/load cycle in its own directory
  a.save(root / "out" / "manifest.csv");
  const DatasetManifest back = DatasetManifest::load(root / "out" / "manifest.csv");
  EXPECT_EQ(load_split(back, Split::test).size(), m.count(Split::test));
}

TEST(LoadSplit, ValidatesImages) {
  const fs::path root = fresh_dir("load");
  const DatasetManifest m = DatasetManifest::load(write_dataset(root, 6));
  const PairSet train = load_split(m, Split::train);
  EXPECT_EQ(train.size(), 2u);
  EXPECT_EQ(train.covers[0].h, 32u);

  PairSet set;
  EXPECT_THROW(set.add("small", GrayImage(31, 40), GrayImage(31, 40)), DataError);
  EXPECT_THROW(set.add("mismatch", GrayImage(32, 32), GrayImage(32, 33)), DataError);
  set.add("ok", GrayImage(32, 32), GrayImage(32, 32));
  EXPECT_THROW(set.add("other", GrayImage(40, 40), GrayImage(40, 40)), DataError);
}

// ---------------------------------------------------------------------------
// Batching

namespace {

PairSet numbered_pairs(std::size_t n) {
  PairSet set;
  for (std::size_t i = 0; i < n; ++i) {
    // cover i is filled with 2i, its stego with 2i + 1, so pairing is visible in the batch
    set.add("p" + std::to_string(i), GrayImage(32, 32, static_cast<std::uint8_t>(2 * i)),
            GrayImage(32, 32, static_cast<std::uint8_t>(2 * i + 1)));
  }
  return set;
}

}  // namespace

TEST(Batching, EveryBatchHoldsEightCoResidentPairs) {
  const PairSet set = numbered_pairs(50);
  BatchStream stream(set, 16, 3, 0);
  EXPECT_EQ(stream.batches(), 6u);  // 50 pairs -> 6 full batches, 2 pairs dropped
  std::size_t count = 0;
  std::set<std::size_t> seen;
  while (auto b = stream.next()) {
    ++count;
    ASSERT_EQ(b->images.shape(), (Shape4{16, 1, 32, 32}));
    EXPECT_EQ(std::count(b->labels.begin(), b->labels.end(), 0), 8);
    EXPECT_EQ(std::count(b->labels.begin(), b->labels.end(), 1), 8);
    for (std::size_t k = 0; k < 8; ++k) {
      const float cover = b->images.at(2 * k, 0, 0, 0);
      const float stego = b->images.at(2 * k + 1, 0, 0, 0);
      EXPECT_EQ(b->labels[2 * k], 0);
      EXPECT_EQ(b->labels[2 * k + 1], 1);
      EXPECT_EQ(stego, cover + 1.0f);  // the cover's own stego
      EXPECT_EQ(cover, 2.0f * static_cast<float>(b->pairs[k]));
      EXPECT_TRUE(seen.insert(b->pairs[k]).second);
    }
  }
  EXPECT_EQ(count, 6u);
  EXPECT_EQ(seen.size(), 48u);
}

TEST(Batching, OrderDependsOnSeedAndEpoch) {
  const PairSet set = numbered_pairs(40);
  const auto e1 = batch_pairs(set, 16, 7, 1).order();
  EXPECT_EQ(batch_pairs(set, 16, 7, 1).order(), e1);
  EXPECT_NE(batch_pairs(set, 16, 7, 2).order(), e1);
  EXPECT_NE(batch_pairs(set, 16, 8, 1).order(), e1);
  std::vector<std::size_t> sorted = e1;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);
}

TEST(Batching, OddBatchSizeRejected) {
  const PairSet set = numbered_pairs(4);
  EXPECT_THROW(BatchStream(set, 15, 1, 0), std::invalid_argument);
  EXPECT_THROW(BatchStream(set, 0, 1, 0), std::invalid_argument);
}

TEST(Synth, DeterministicAndTextured) {
  const GrayImage a = synth_texture(64, 64, 1);
  EXPECT_EQ(a, synth_texture(64, 64, 1));
  EXPECT_NE(a, synth_texture(64, 64, 2));
  std::set<std::uint8_t> values(a.pixels.begin(), a.pixels.end());
  EXPECT_GT(values.size(), 20u);
}
