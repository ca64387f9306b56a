#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <random>
#include <set>

#include "support.hpp"

using namespace patchdesc;
using testing_support::TempDir;

namespace {

template <typename Fn>
ErrorKind kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected a patchdesc::Error";
  return ErrorKind::io;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

void put32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

/// Minimal independent BMP writer: 8-bit, gray palette, rows top-down when
/// `top_down` (negative height), bottom-up otherwise, 4-byte row padding.
std::vector<std::uint8_t> hand_bmp(std::size_t w, std::size_t h, const std::vector<std::uint8_t>& px, bool top_down) {
  const std::size_t stride = (w + 3) / 4 * 4;
  std::vector<std::uint8_t> b = {'B', 'M'};
  put32(b, static_cast<std::uint32_t>(1078 + stride * h));
  put32(b, 0);
  put32(b, 1078);
  put32(b, 40);
  put32(b, static_cast<std::uint32_t>(w));
  put32(b, top_down ? static_cast<std::uint32_t>(-static_cast<std::int32_t>(h)) : static_cast<std::uint32_t>(h));
  b.insert(b.end(), {1, 0, 8, 0});
  put32(b, 0);
  put32(b, static_cast<std::uint32_t>(stride * h));
  put32(b, 2835);
  put32(b, 2835);
  put32(b, 256);
  put32(b, 0);
  for (int i = 0; i < 256; ++i) b.insert(b.end(), {std::uint8_t(i), std::uint8_t(i), std::uint8_t(i), 0});
  for (std::size_t r = 0; r < h; ++r) {
    const std::size_t src = top_down ? r : h - 1 - r;
    for (std::size_t c = 0; c < stride; ++c) b.push_back(c < w ? px[src * w + c] : 0);
  }
  return b;
}

/// Mosaic whose patch k is filled with the constant value 10 * (k + 1).
std::vector<std::uint8_t> constant_patch_mosaic(std::size_t n_patches) {
  std::vector<std::uint8_t> px(kMosaicSide * kMosaicSide, 0);
  for (std::size_t k = 0; k < n_patches; ++k) {
    const std::size_t r0 = (k / 16) * 64, c0 = (k % 16) * 64;
    for (std::size_t r = 0; r < 64; ++r)
      for (std::size_t c = 0; c < 64; ++c) px[(r0 + r) * kMosaicSide + c0 + c] = static_cast<std::uint8_t>(10 * (k + 1));
  }
  return px;
}

/// One-mosaic, three-patch fixture: point ids 17, 17, 4.
void make_fixture(const std::filesystem::path& root) {
  std::filesystem::create_directories(root);
  write_file_bytes(root / "patches0000.bmp", hand_bmp(kMosaicSide, kMosaicSide, constant_patch_mosaic(3), false));
  write_text(root / "info.txt", "17 0\n17 3\n4 1\n");
}

}  // namespace

// ---------------------------------------------------------------------------
// Image IO

TEST(ImageIo, DecodesBottomUpAndTopDownBmpWithPadding) {
  const std::vector<std::uint8_t> px = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15};  // 5x3
  for (bool top_down : {false, true}) {
    const GrayImage img = decode_bmp(hand_bmp(5, 3, px, top_down), "fixture.bmp");
    ASSERT_EQ(img.width, 5u);
    ASSERT_EQ(img.height, 3u);
    EXPECT_EQ(img.pixels, px);
  }
}

TEST(ImageIo, BmpAndPgmRoundTrip) {
  std::mt19937_64 rng(1);
  GrayImage img(7, 5);
  for (auto& v : img.pixels) v = static_cast<std::uint8_t>(rng());
  EXPECT_EQ(decode_bmp(encode_bmp(img), "x.bmp").pixels, img.pixels);
  EXPECT_EQ(decode_pgm(encode_pgm(img), "x.pgm").pixels, img.pixels);
}

TEST(ImageIo, RejectsUnsupportedImages) {
  std::vector<std::uint8_t> bmp = hand_bmp(4, 4, std::vector<std::uint8_t>(16, 0), false);
  bmp[28] = 24;  // bits per pixel
  EXPECT_EQ(kind_of([&] { decode_bmp(bmp, "rgb.bmp"); }), ErrorKind::format);
  const std::string p2 = "P2\n2 2\n255\n0 0 0 0\n";
  EXPECT_EQ(kind_of([&] { decode_pgm({p2.begin(), p2.end()}, "ascii.pgm"); }), ErrorKind::format);
  const std::string truncated = "P5\n4 4\n255\nab";
  EXPECT_EQ(kind_of([&] { decode_pgm({truncated.begin(), truncated.end()}, "short.pgm"); }), ErrorKind::format);
}

// ---------------------------------------------------------------------------
// Ingestion

TEST(Ingest, HandBuiltFixture) {
  TempDir dir;
  make_fixture(dir.path());
  const PatchStore store = ingest_scene(dir.path());
  ASSERT_EQ(store.size(), 3u);
  EXPECT_EQ(store.point_ids(), (std::vector<std::uint32_t>{17, 17, 4}));
  EXPECT_EQ(store.point_count(), 2u);
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::uint8_t v : store.patch(k)) ASSERT_EQ(v, 10 * (k + 1));
  }
}

TEST(Ingest, MissingInfoFileIsStructureError) {
  TempDir dir;
  make_fixture(dir.path());
  std::filesystem::remove(dir / "info.txt");
  EXPECT_EQ(kind_of([&] { ingest_scene(dir.path()); }), ErrorKind::dataset_structure);
}

TEST(Ingest, RootThatIsAFileIsStructureError) {
  TempDir dir;
  write_text(dir / "file", "x");
  EXPECT_EQ(kind_of([&] { ingest_scene(dir / "file"); }), ErrorKind::dataset_structure);
}

TEST(Ingest, WrongMosaicSizeIsFormatError) {
  TempDir dir;
  make_fixture(dir.path());
  write_file_bytes(dir / "patches0000.bmp", hand_bmp(512, 512, std::vector<std::uint8_t>(512 * 512, 0), false));
  EXPECT_EQ(kind_of([&] { ingest_scene(dir.path()); }), ErrorKind::format);
}

TEST(Ingest, PatchCountMismatchIsConsistencyError) {
  TempDir dir;
  make_fixture(dir.path());
  std::string many;
  for (int i = 0; i < 300; ++i) many += "1 0\n";  // needs two mosaics
  write_text(dir / "info.txt", many);
  EXPECT_EQ(kind_of([&] { ingest_scene(dir.path()); }), ErrorKind::consistency);
}

TEST(Ingest, BadInfoTokenIsParseError) {
  TempDir dir;
  make_fixture(dir.path());
  write_text(dir / "info.txt", "17 0\nabc 0\n4 0\n");
  EXPECT_EQ(kind_of([&] { ingest_scene(dir.path()); }), ErrorKind::parse);
}

TEST(IngestProperty, ExportThenIngestIsBitIdentical) {
  SynthConfig cfg;
  cfg.n_points = 35;  // 280 patches: spans two mosaics with unused cells
  const PatchStore store = synth_scene(cfg);
  for (const char* ext : {".pgm", ".bmp"}) {
    TempDir dir;
    export_scene(store, dir.path(), ext);
    const PatchStore back = ingest_scene(dir.path());
    EXPECT_EQ(back, store) << ext;
  }
}

TEST(PackedStore, RoundTripAndCorruption) {
  TempDir dir;
  const PatchStore store = testing_support::random_store(3, 2, 5);
  write_packed_store(store, dir / "s.pdps");
  EXPECT_EQ(read_packed_store(dir / "s.pdps"), store);
  auto bytes = read_file_bytes(dir / "s.pdps");
  bytes.pop_back();
  write_file_bytes(dir / "bad.pdps", bytes);
  EXPECT_EQ(kind_of([&] { read_packed_store(dir / "bad.pdps"); }), ErrorKind::format);
}

// ---------------------------------------------------------------------------
// Match files

TEST(MatchFile, LabelsFollowPointIds) {
  TempDir dir;
  PatchStore store("m");
  std::vector<std::uint8_t> blank(kPatchPixels, 0);
  for (std::uint32_t id : {5u, 5u, 9u}) store.add(PatchView(blank.data(), kPatchPixels), id);
  write_text(dir / "m.txt", "0 5 0 1 5 0 0\r\n0 5 0 2 9 0 0\n\n");
  const auto pairs = load_match_file(dir / "m.txt", store);
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0], (PatchPair{0, 0, 1, 1}));
  EXPECT_EQ(pairs[1], (PatchPair{0, 0, 2, 0}));
}

TEST(MatchFile, ErrorsNameTheLine) {
  TempDir dir;
  const PatchStore store = testing_support::random_store(2, 2, 1);
  write_text(dir / "short.txt", "0 0 0 1 0 0 0\n0 0 0 1\n");
  try {
    load_match_file(dir / "short.txt", store);
    FAIL() << "expected parse error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::parse);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  write_text(dir / "range.txt", "0 0 0 9 1 0 0\n");
  EXPECT_EQ(kind_of([&] { load_match_file(dir / "range.txt", store); }), ErrorKind::consistency);
  write_text(dir / "ids.txt", "0 1 0 1 0 0 0\n");
  EXPECT_EQ(kind_of([&] { load_match_file(dir / "ids.txt", store); }), ErrorKind::consistency);
}

TEST(MatchFile, AgreesWithExhaustivePointIdOracle) {
  TempDir dir;
  const PatchStore store = testing_support::random_store(7, 3, 2);
  // Every unordered pair of the fixture, labels computed independently.
  std::string text;
  std::vector<int> oracle;
  for (std::size_t a = 0; a < store.size(); ++a)
    for (std::size_t b = a + 1; b < store.size(); ++b) {
      text += std::to_string(a) + " " + std::to_string(store.point_id(a)) + " 0 " + std::to_string(b) + " " +
              std::to_string(store.point_id(b)) + " 0 0\n";
      oracle.push_back(a / 3 == b / 3 ? 1 : 0);
    }
  write_text(dir / "all.txt", text);
  const auto pairs = load_match_file(dir / "all.txt", store);
  ASSERT_EQ(pairs.size(), oracle.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) EXPECT_EQ(pairs[i].y, oracle[i]);
}

// ---------------------------------------------------------------------------
// Pair sampling

TEST(SamplePairs, LabelsMatchExhaustiveOracle) {
  const PatchStore store = testing_support::random_store(10, 5, 3);  // 50 patches
  std::map<std::pair<std::size_t, std::size_t>, int> table;
  for (std::size_t a = 0; a < 50; ++a)
    for (std::size_t b = a + 1; b < 50; ++b) table[{a, b}] = store.point_id(a) == store.point_id(b);
  const auto pairs = sample_pairs(store, 60, 200, 11);
  std::size_t sim = 0, dis = 0;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& p : pairs) {
    ASSERT_LT(p.idx1, p.idx2);
    EXPECT_EQ(p.y, table.at({p.idx1, p.idx2}));
    EXPECT_TRUE(seen.insert({p.idx1, p.idx2}).second) << "duplicate pair";
    (p.y == 1 ? sim : dis)++;
  }
  EXPECT_EQ(sim, 60u);
  EXPECT_EQ(dis, 200u);
}

TEST(SamplePairs, DeterministicPerSeed) {
  const PatchStore store = testing_support::random_store(6, 4, 4);
  EXPECT_EQ(sample_pairs(store, 10, 10, 3), sample_pairs(store, 10, 10, 3));
  EXPECT_NE(sample_pairs(store, 10, 10, 3), sample_pairs(store, 10, 10, 4));
}

TEST(SamplePairs, InfeasibleCountsAreRejected) {
  const PatchStore one_point = testing_support::random_store(1, 5, 5);
  EXPECT_EQ(kind_of([&] { sample_pairs(one_point, 1, 1, 0); }), ErrorKind::sampling_infeasible);
  const PatchStore store = testing_support::random_store(3, 2, 6);  // 3 similar pairs exist
  EXPECT_EQ(kind_of([&] { sample_pairs(store, 4, 0, 0); }), ErrorKind::sampling_infeasible);
}

TEST(SamplePairs, MultiStoreNeverPairsAcrossStores) {
  const std::vector<PatchStore> stores = {testing_support::random_store(4, 3, 7),
                                          testing_support::random_store(5, 3, 8)};
  const auto pairs = sample_pairs(stores, 9, 11, 2);
  std::size_t per_store[2] = {0, 0};
  for (const auto& p : pairs) {
    ASSERT_LT(p.store, 2u);
    ++per_store[p.store];
    const PatchStore& s = stores[p.store];
    ASSERT_LT(p.idx2, s.size());
    EXPECT_EQ(p.y, s.point_id(p.idx1) == s.point_id(p.idx2) ? 1 : 0);
  }
  EXPECT_EQ(per_store[0] + per_store[1], 20u);
  EXPECT_EQ(per_store[0], 5u + 6u);  // remainders go to the first store
}

// ---------------------------------------------------------------------------
// Preprocessing

TEST(Preprocess, ConstantPatchBecomesZero) {
  std::vector<std::uint8_t> flat(kPatchPixels, 77);
  const auto t = preprocess<double>(PatchView(flat.data(), kPatchPixels));
  EXPECT_EQ(t.shape(), (Shape{1, 64, 64}));
  for (double v : t.values()) EXPECT_EQ(v, 0.0);
}

TEST(Preprocess, StandardizesAndIgnoresBrightnessOffset) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> px(0, 200);
  std::vector<std::uint8_t> patch(kPatchPixels), brighter(kPatchPixels);
  for (std::size_t i = 0; i < kPatchPixels; ++i) {
    patch[i] = static_cast<std::uint8_t>(px(rng));
    brighter[i] = static_cast<std::uint8_t>(patch[i] + 55);
  }
  const auto t = preprocess<double>(PatchView(patch.data(), kPatchPixels));
  double mean = 0, sq = 0;
  for (double v : t.values()) mean += v;
  mean /= kPatchPixels;
  for (double v : t.values()) sq += (v - mean) * (v - mean);
  EXPECT_NEAR(mean, 0.0, 1e-6);
  EXPECT_NEAR(std::sqrt(sq / kPatchPixels), 1.0, 1e-6);
  const auto u = preprocess<double>(PatchView(brighter.data(), kPatchPixels));
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_NEAR(t[i], u[i], 1e-6);
  const auto twice = standardize(t);
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_NEAR(twice[i], t[i], 1e-6);
}

// ---------------------------------------------------------------------------
// Synthetic scenes

TEST(Synth, NoiselessUnjitteredPatchesOfAPointAreIdentical) {
  SynthConfig cfg;
  cfg.n_points = 4;
  cfg.noise_std = 0;
  cfg.jitter_px = 0;
  const PatchStore store = synth_scene(cfg);
  ASSERT_EQ(store.size(), 32u);
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto first = store.patch(i - i % 8);
    const auto p = store.patch(i);
    EXPECT_TRUE(std::equal(p.begin(), p.end(), first.begin()));
  }
}

TEST(Synth, DifferentPointsDoNotCollide) {
  const PatchStore store = synth_scene(SynthConfig{});
  std::set<std::uint64_t> sums;
  for (std::size_t point = 0; point < 40; ++point) {
    std::uint64_t s = 0;
    for (std::uint8_t v : store.patch(point * 8)) s = s * 31 + v;
    EXPECT_TRUE(sums.insert(s).second) << "collision at point " << point;
  }
}

TEST(Synth, SameSeedIsBitIdentical) {
  EXPECT_EQ(synth_scene(SynthConfig{}), synth_scene(SynthConfig{}));
  SynthConfig other;
  other.seed = 2;
  EXPECT_FALSE(synth_scene(SynthConfig{}) == synth_scene(other));
}

TEST(Synth, ConfigValidation) {
  SynthConfig cfg;
  cfg.n_points = 0;
  EXPECT_EQ(kind_of([&] { synth_scene(cfg); }), ErrorKind::config);
}
