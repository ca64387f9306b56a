#pragma once

// Patch datasets: the multi-view stereo patch layout (1024x1024 mosaics of
// 16x16 patches of 64x64 pixels, plus info.txt with one point id per patch),
// match files, pair sampling, per-patch standardization and a synthetic scene
// generator.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "patchdesc/error.hpp"
#include "patchdesc/image_io.hpp"
#include "patchdesc/tensor.hpp"

namespace patchdesc {

inline constexpr std::size_t kPatchSide = 64;
inline constexpr std::size_t kPatchPixels = kPatchSide * kPatchSide;
inline constexpr std::size_t kMosaicSide = 1024;
inline constexpr std::size_t kPatchesPerRow = kMosaicSide / kPatchSide;
inline constexpr std::size_t kPatchesPerMosaic = kPatchesPerRow * kPatchesPerRow;

using PatchView = std::span<const std::uint8_t, kPatchPixels>;

class PatchStore {
 public:
  PatchStore() = default;
  explicit PatchStore(std::string scene_tag) : scene_tag_(std::move(scene_tag)) {}

  void add(PatchView patch, std::uint32_t point_id) {
    pixels_.insert(pixels_.end(), patch.begin(), patch.end());
    point_ids_.push_back(point_id);
  }

  std::size_t size() const noexcept { return point_ids_.size(); }
  bool empty() const noexcept { return point_ids_.empty(); }

  PatchView patch(std::size_t i) const {
    if (i >= size()) throw Error(ErrorKind::consistency, "patch index " + std::to_string(i) + " out of range");
    return PatchView(pixels_.data() + i * kPatchPixels, kPatchPixels);
  }
  std::uint32_t point_id(std::size_t i) const { return point_ids_.at(i); }
  const std::vector<std::uint32_t>& point_ids() const noexcept { return point_ids_; }
  const std::vector<std::uint8_t>& pixels() const noexcept { return pixels_; }
  const std::string& scene_tag() const noexcept { return scene_tag_; }
  void set_scene_tag(std::string tag) { scene_tag_ = std::move(tag); }

  std::size_t point_count() const {
    return std::unordered_set<std::uint32_t>(point_ids_.begin(), point_ids_.end()).size();
  }

  friend bool operator==(const PatchStore& a, const PatchStore& b) {
    return a.point_ids_ == b.point_ids_ && a.pixels_ == b.pixels_;
  }

 private:
  std::string scene_tag_;
  std::vector<std::uint8_t> pixels_;
  std::vector<std::uint32_t> point_ids_;
};

struct PatchPair {
  std::size_t store = 0;  // index into the store list the pair was drawn from
  std::size_t idx1 = 0;
  std::size_t idx2 = 0;
  int y = 0;

  friend bool operator==(const PatchPair&, const PatchPair&) = default;
};

// ---------------------------------------------------------------------------
// Dataset directory

inline std::filesystem::path mosaic_path(const std::filesystem::path& root, std::size_t index,
                                         const char* ext) {
  char name[32];
  std::snprintf(name, sizeof name, "patches%04zu%s", index, ext);
  return root / name;
}

/// Reads info.txt: the first integer token of every nonempty line.
inline std::vector<std::uint32_t> read_info_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::dataset_structure, "missing " + path.string());
  std::vector<std::uint32_t> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream tokens(line);
    long long id = 0;
    std::string first;
    if (!(tokens >> first)) continue;
    std::size_t used = 0;
    try {
      id = std::stoll(first, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != first.size() || id < 0 || id > static_cast<long long>(UINT32_MAX)) {
      throw Error(ErrorKind::parse, path.string() + " line " + std::to_string(line_no) + ": bad point id '" +
                                        first + "'");
    }
    ids.push_back(static_cast<std::uint32_t>(id));
  }
  return ids;
}

inline PatchStore ingest_scene(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) {
    throw Error(ErrorKind::dataset_structure, root.string() + " is not a directory");
  }
  const std::vector<std::uint32_t> ids = read_info_file(root / "info.txt");

  std::vector<fs::path> mosaics;
  for (std::size_t i = 0;; ++i) {
    const fs::path bmp = mosaic_path(root, i, ".bmp");
    const fs::path pgm = mosaic_path(root, i, ".pgm");
    if (fs::exists(bmp)) {
      mosaics.push_back(bmp);
    } else if (fs::exists(pgm)) {
      mosaics.push_back(pgm);
    } else {
      break;
    }
  }
  const std::size_t needed = (ids.size() + kPatchesPerMosaic - 1) / kPatchesPerMosaic;
  if (mosaics.size() != needed) {
    throw Error(ErrorKind::consistency, root.string() + ": info.txt lists " + std::to_string(ids.size()) +
                                            " patches, which needs " + std::to_string(needed) +
                                            " mosaics, found " + std::to_string(mosaics.size()));
  }

  PatchStore store(root.filename().string());
  std::array<std::uint8_t, kPatchPixels> patch{};
  for (std::size_t m = 0; m < mosaics.size(); ++m) {
    const GrayImage img = read_gray_image(mosaics[m]);
    if (img.width != kMosaicSide || img.height != kMosaicSide) {
      throw Error(ErrorKind::format, mosaics[m].string() + " is " + std::to_string(img.width) + "x" +
                                         std::to_string(img.height) + ", expected 1024x1024");
    }
    for (std::size_t k = 0; k < kPatchesPerMosaic; ++k) {
      const std::size_t global = m * kPatchesPerMosaic + k;
      if (global >= ids.size()) break;
      const std::size_t row0 = (k / kPatchesPerRow) * kPatchSide;
      const std::size_t col0 = (k % kPatchesPerRow) * kPatchSide;
      for (std::size_t r = 0; r < kPatchSide; ++r) {
        std::copy_n(img.pixels.begin() + static_cast<std::ptrdiff_t>((row0 + r) * kMosaicSide + col0), kPatchSide,
                    patch.begin() + static_cast<std::ptrdiff_t>(r * kPatchSide));
      }
      store.add(patch, ids[global]);
    }
  }
  return store;
}

/// Writes `store` as mosaics (ext ".pgm" or ".bmp") plus info.txt under `root`.
inline void export_scene(const PatchStore& store, const std::filesystem::path& root, const char* ext = ".pgm") {
  std::filesystem::create_directories(root);
  const std::size_t n_mosaics = (store.size() + kPatchesPerMosaic - 1) / kPatchesPerMosaic;
  for (std::size_t m = 0; m < n_mosaics; ++m) {
    GrayImage img(kMosaicSide, kMosaicSide);
    for (std::size_t k = 0; k < kPatchesPerMosaic; ++k) {
      const std::size_t global = m * kPatchesPerMosaic + k;
      if (global >= store.size()) break;
      const PatchView p = store.patch(global);
      const std::size_t row0 = (k / kPatchesPerRow) * kPatchSide;
      const std::size_t col0 = (k % kPatchesPerRow) * kPatchSide;
      for (std::size_t r = 0; r < kPatchSide; ++r) {
        std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(r * kPatchSide), kPatchSide,
                    img.pixels.begin() + static_cast<std::ptrdiff_t>((row0 + r) * kMosaicSide + col0));
      }
    }
    write_gray_image(mosaic_path(root, m, ext), img);
  }
  std::ofstream info(root / "info.txt", std::ios::trunc);
  if (!info) throw Error(ErrorKind::io, "cannot write " + (root / "info.txt").string());
  for (std::uint32_t id : store.point_ids()) info << id << " 0\n";
}

/// Match file: lines "patchID1 pointID1 _ patchID2 pointID2 _ ...".
inline std::vector<PatchPair> load_match_file(const std::filesystem::path& path, const PatchStore& store,
                                              std::size_t store_index = 0) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open match file " + path.string());
  std::vector<PatchPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream tokens(line);
    std::vector<long long> values;
    std::string token;
    while (tokens >> token) {
      std::size_t used = 0;
      long long v = 0;
      try {
        v = std::stoll(token, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != token.size()) {
        throw Error(ErrorKind::parse, path.string() + " line " + std::to_string(line_no) +
                                          ": non-integer token '" + token + "'");
      }
      values.push_back(v);
    }
    if (values.empty()) continue;
    if (values.size() < 6) {
      throw Error(ErrorKind::parse, path.string() + " line " + std::to_string(line_no) + ": expected at least 6 integers, got " +
                                        std::to_string(values.size()));
    }
    const long long p1 = values[0], pt1 = values[1], p2 = values[3], pt2 = values[4];
    const auto n = static_cast<long long>(store.size());
    if (p1 < 0 || p1 >= n || p2 < 0 || p2 >= n) {
      throw Error(ErrorKind::consistency, path.string() + " line " + std::to_string(line_no) +
                                              ": patch id out of range for a store of " + std::to_string(n));
    }
    if (pt1 != store.point_id(static_cast<std::size_t>(p1)) || pt2 != store.point_id(static_cast<std::size_t>(p2))) {
      throw Error(ErrorKind::consistency, path.string() + " line " + std::to_string(line_no) +
                                              ": point ids disagree with info.txt");
    }
    pairs.push_back({store_index, static_cast<std::size_t>(p1), static_cast<std::size_t>(p2), pt1 == pt2 ? 1 : 0});
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// Pair sampling

namespace detail {

inline std::uint64_t pair_key(std::size_t a, std::size_t b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
}

/// Pools larger than this are sampled by rejection instead of enumeration.
inline constexpr std::uint64_t kEnumerationLimit = 2'000'000;

template <typename Rng>
std::vector<std::pair<std::size_t, std::size_t>> choose_without_replacement(
    std::vector<std::pair<std::size_t, std::size_t>> pool, std::size_t n, Rng& rng) {
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(n);
  return pool;
}

template <typename Rng>
void sample_store_pairs(const PatchStore& store, std::size_t store_index, std::size_t n_similar,
                        std::size_t n_dissimilar, Rng& rng, std::vector<PatchPair>& out) {
  std::unordered_map<std::uint32_t, std::vector<std::size_t>> by_point;
  for (std::size_t i = 0; i < store.size(); ++i) by_point[store.point_id(i)].push_back(i);
  std::vector<std::vector<std::size_t>> groups;
  groups.reserve(by_point.size());
  for (auto& [id, members] : by_point) groups.push_back(std::move(members));
  // unordered_map iteration order is unspecified; sort for determinism
  std::sort(groups.begin(), groups.end());

  std::uint64_t total_similar = 0;
  for (const auto& g : groups) total_similar += g.size() * (g.size() - 1) / 2;
  const std::uint64_t n = store.size();
  const std::uint64_t total_dissimilar = n * (n - 1) / 2 - total_similar;

  const std::string where = store.scene_tag().empty() ? "store " + std::to_string(store_index) : store.scene_tag();
  if (n_similar > total_similar) {
    throw Error(ErrorKind::sampling_infeasible, where + ": " + std::to_string(n_similar) +
                                                    " similar pairs requested, only " +
                                                    std::to_string(total_similar) + " exist");
  }
  if (n_dissimilar > total_dissimilar) {
    throw Error(ErrorKind::sampling_infeasible, where + ": " + std::to_string(n_dissimilar) +
                                                    " dissimilar pairs requested, only " +
                                                    std::to_string(total_dissimilar) + " exist");
  }

  std::vector<std::pair<std::size_t, std::size_t>> similar;
  if (n_similar > 0) {
    if (total_similar <= kEnumerationLimit) {
      std::vector<std::pair<std::size_t, std::size_t>> pool;
      pool.reserve(total_similar);
      for (const auto& g : groups)
        for (std::size_t a = 0; a < g.size(); ++a)
          for (std::size_t b = a + 1; b < g.size(); ++b) pool.emplace_back(g[a], g[b]);
      similar = choose_without_replacement(std::move(pool), n_similar, rng);
    } else {
      std::vector<std::uint64_t> cumulative;
      cumulative.reserve(groups.size());
      std::uint64_t acc = 0;
      for (const auto& g : groups) cumulative.push_back(acc += g.size() * (g.size() - 1) / 2);
      std::uniform_int_distribution<std::uint64_t> pick_pair(0, total_similar - 1);
      std::unordered_set<std::uint64_t> seen;
      while (similar.size() < n_similar) {
        const std::uint64_t r = pick_pair(rng);
        const auto& g = groups[static_cast<std::size_t>(
            std::upper_bound(cumulative.begin(), cumulative.end(), r) - cumulative.begin())];
        std::uniform_int_distribution<std::size_t> pick(0, g.size() - 1);
        const std::size_t a = pick(rng);
        const std::size_t b = pick(rng);
        if (a == b || !seen.insert(pair_key(g[a], g[b])).second) continue;
        similar.emplace_back(std::min(g[a], g[b]), std::max(g[a], g[b]));
      }
    }
  }

  std::vector<std::pair<std::size_t, std::size_t>> dissimilar;
  if (n_dissimilar > 0) {
    if (total_dissimilar <= kEnumerationLimit) {
      std::vector<std::pair<std::size_t, std::size_t>> pool;
      pool.reserve(total_dissimilar);
      for (std::size_t a = 0; a < store.size(); ++a)
        for (std::size_t b = a + 1; b < store.size(); ++b)
          if (store.point_id(a) != store.point_id(b)) pool.emplace_back(a, b);
      dissimilar = choose_without_replacement(std::move(pool), n_dissimilar, rng);
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, store.size() - 1);
      std::unordered_set<std::uint64_t> seen;
      while (dissimilar.size() < n_dissimilar) {
        const std::size_t a = pick(rng);
        const std::size_t b = pick(rng);
        if (store.point_id(a) == store.point_id(b) || !seen.insert(pair_key(a, b)).second) continue;
        dissimilar.emplace_back(std::min(a, b), std::max(a, b));
      }
    }
  }

  for (const auto& [a, b] : similar) out.push_back({store_index, a, b, 1});
  for (const auto& [a, b] : dissimilar) out.push_back({store_index, a, b, 0});
}

}  // namespace detail

/// Draws labeled pairs within each store (never across stores). Counts are
/// split evenly over the stores, the remainder going to the first ones.
/// Output: per store, similar pairs then dissimilar pairs.
inline std::vector<PatchPair> sample_pairs(std::span<const PatchStore> stores, std::size_t n_similar,
                                           std::size_t n_dissimilar, std::uint64_t seed) {
  if (stores.empty()) throw Error(ErrorKind::sampling_infeasible, "no stores to sample from");
  std::mt19937_64 rng(seed);
  std::vector<PatchPair> out;
  out.reserve(n_similar + n_dissimilar);
  const std::size_t k = stores.size();
  for (std::size_t s = 0; s < k; ++s) {
    const std::size_t sim = n_similar / k + (s < n_similar % k ? 1 : 0);
    const std::size_t dis = n_dissimilar / k + (s < n_dissimilar % k ? 1 : 0);
    detail::sample_store_pairs(stores[s], s, sim, dis, rng, out);
  }
  return out;
}

inline std::vector<PatchPair> sample_pairs(const PatchStore& store, std::size_t n_similar, std::size_t n_dissimilar,
                                           std::uint64_t seed) {
  return sample_pairs(std::span<const PatchStore>(&store, 1), n_similar, n_dissimilar, seed);
}

// ---------------------------------------------------------------------------
// Preprocessing

/// Per-patch standardization: (x - mean) / (std + 1e-8), population std.
template <typename Real>
Tensor<Real> preprocess(PatchView patch) {
  double sum = 0;
  for (std::uint8_t v : patch) sum += v;
  const double mean = sum / kPatchPixels;
  double sq = 0;
  for (std::uint8_t v : patch) sq += (v - mean) * (v - mean);
  const double inv = 1.0 / (std::sqrt(sq / kPatchPixels) + 1e-8);
  Tensor<Real> out(Shape{1, kPatchSide, kPatchSide});
  for (std::size_t i = 0; i < kPatchPixels; ++i) out[i] = static_cast<Real>((patch[i] - mean) * inv);
  return out;
}

/// Network input for a `side` x `side` architecture: the standardized patch,
/// center-cropped when the network is smaller than a patch (reduced
/// verification nets only; the full network consumes the whole 64x64 patch).
template <typename Real>
Tensor<Real> network_input(PatchView patch, std::size_t side) {
  if (side == kPatchSide) return preprocess<Real>(patch);
  if (side == 0 || side > kPatchSide) {
    throw Error(ErrorKind::shape_mismatch, "network input side " + std::to_string(side) + " exceeds the patch");
  }
  const Tensor<Real> full = preprocess<Real>(patch);
  const std::size_t off = (kPatchSide - side) / 2;
  Tensor<Real> out(Shape{1, side, side});
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c) out[r * side + c] = full[(r + off) * kPatchSide + c + off];
  return out;
}

/// Same standardization on an already-real-valued 1x64x64 tensor.
template <typename Real>
Tensor<Real> standardize(const Tensor<Real>& x) {
  double sum = 0;
  for (Real v : x.values()) sum += v;
  const double mean = sum / static_cast<double>(x.size());
  double sq = 0;
  for (Real v : x.values()) sq += (v - mean) * (v - mean);
  const double inv = 1.0 / (std::sqrt(sq / static_cast<double>(x.size())) + 1e-8);
  Tensor<Real> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<Real>((x[i] - mean) * inv);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic scenes

struct SynthConfig {
  std::size_t n_points = 40;
  std::size_t patches_per_point = 8;
  double noise_std = 4.0;
  std::size_t jitter_px = 2;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_points < 1 || patches_per_point < 1) {
      throw Error(ErrorKind::config, "synthetic point and patch counts must be >= 1");
    }
    if (!(noise_std >= 0)) throw Error(ErrorKind::config, "noise_std must be >= 0");
  }
};

namespace detail {

/// Gaussian value noise on a lattice with spacing `cell`, bilinearly interpolated.
template <typename Rng>
std::vector<double> value_noise(std::size_t side, double cell, Rng& rng) {
  const std::size_t lattice = static_cast<std::size_t>(std::ceil(side / cell)) + 2;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> grid(lattice * lattice);
  for (double& g : grid) g = normal(rng);
  std::vector<double> out(side * side);
  for (std::size_t r = 0; r < side; ++r) {
    const double fy = r / cell;
    const auto y0 = static_cast<std::size_t>(fy);
    const double ty = fy - y0;
    for (std::size_t c = 0; c < side; ++c) {
      const double fx = c / cell;
      const auto x0 = static_cast<std::size_t>(fx);
      const double tx = fx - x0;
      const double a = grid[y0 * lattice + x0], b = grid[y0 * lattice + x0 + 1];
      const double d = grid[(y0 + 1) * lattice + x0], e = grid[(y0 + 1) * lattice + x0 + 1];
      out[r * side + c] = (1 - ty) * ((1 - tx) * a + tx * b) + ty * ((1 - tx) * d + tx * e);
    }
  }
  return out;
}

}  // namespace detail

/// Renders one random texture per point on a (64 + 2*jitter)^2 canvas: a
/// smooth low-frequency base plus a strong fixed per-pixel grain. Every patch
/// of the point is a randomly shifted 64x64 crop plus Gaussian pixel noise,
/// rounded and clamped to 8 bits. Patches are stored point-major.
///
/// The grain dominates raw pixel distances and does not survive a shift, so
/// matching crops of one point requires learning to look at the smooth base.
inline PatchStore synth_scene(const SynthConfig& cfg, std::string scene_tag = "synthetic") {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const std::size_t side = kPatchSide + 2 * cfg.jitter_px;
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> shift(0, 2 * cfg.jitter_px);
  PatchStore store(std::move(scene_tag));
  std::array<std::uint8_t, kPatchPixels> patch{};
  for (std::size_t point = 0; point < cfg.n_points; ++point) {
    const auto base = detail::value_noise(side, 16.0, rng);
    std::vector<double> canvas(side * side);
    for (std::size_t i = 0; i < canvas.size(); ++i) canvas[i] = 128.0 + 10.0 * base[i] + 60.0 * noise(rng);
    for (std::size_t k = 0; k < cfg.patches_per_point; ++k) {
      const std::size_t dy = shift(rng);
      const std::size_t dx = shift(rng);
      for (std::size_t r = 0; r < kPatchSide; ++r) {
        for (std::size_t c = 0; c < kPatchSide; ++c) {
          double v = canvas[(r + dy) * side + c + dx];
          if (cfg.noise_std > 0) v += cfg.noise_std * noise(rng);
          patch[r * kPatchSide + c] = static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
        }
      }
      store.add(patch, static_cast<std::uint32_t>(point));
    }
  }
  return store;
}

// ---------------------------------------------------------------------------
// Packed store cache: "PDPS", u32 version (1), u32 count, u32 point ids, raw 64x64 patches.

inline void write_packed_store(const PatchStore& store, const std::filesystem::path& path) {
  std::vector<std::uint8_t> b{'P', 'D', 'P', 'S'};
  detail::put_u32(b, 1);
  detail::put_u32(b, static_cast<std::uint32_t>(store.size()));
  for (std::uint32_t id : store.point_ids()) detail::put_u32(b, id);
  b.insert(b.end(), store.pixels().begin(), store.pixels().end());
  write_file_bytes(path, b);
}

inline PatchStore read_packed_store(const std::filesystem::path& path) {
  const auto b = read_file_bytes(path);
  auto fail = [&](const std::string& what) { return Error(ErrorKind::format, path.string() + ": " + what); };
  if (b.size() < 12 || b[0] != 'P' || b[1] != 'D' || b[2] != 'P' || b[3] != 'S') throw fail("bad magic");
  if (detail::le_u32(b, 4) != 1) throw fail("unsupported version");
  const std::size_t n = detail::le_u32(b, 8);
  if (b.size() != 12 + 4 * n + kPatchPixels * n) throw fail("size does not match patch count");
  PatchStore store(path.stem().string());
  const std::uint8_t* raster = b.data() + 12 + 4 * n;
  for (std::size_t i = 0; i < n; ++i) {
    store.add(PatchView(raster + i * kPatchPixels, kPatchPixels), detail::le_u32(b, 12 + 4 * i));
  }
  return store;
}

}  // namespace patchdesc
