#pragma once

// Descriptor distances over pair lists, ROC sweeps and the error rate at a
// fixed true-match recall (95% by default).

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "patchdesc/data.hpp"
#include "patchdesc/error.hpp"
#include "patchdesc/loss.hpp"
#include "patchdesc/model.hpp"

namespace patchdesc {

/// Descriptors of every patch referenced by `pairs`, each computed once.
template <typename Real>
class DescriptorTable {
 public:
  DescriptorTable(const NetworkParams<Real>& params, std::span<const PatchStore> stores,
                  std::span<const PatchPair> pairs) {
    for (const PatchPair& p : pairs) {
      if (p.store >= stores.size()) {
        throw Error(ErrorKind::consistency, "pair refers to store " + std::to_string(p.store) + " of " +
                                                std::to_string(stores.size()));
      }
      for (std::size_t idx : {p.idx1, p.idx2}) {
        const std::uint64_t k = key(p.store, idx);
        if (table_.count(k) == 0) {
          table_.emplace(k, embed(params, network_input<Real>(stores[p.store].patch(idx), params.arch.input_size)));
        }
      }
    }
  }

  const Tensor<Real>& at(std::size_t store, std::size_t idx) const { return table_.at(key(store, idx)); }
  std::size_t size() const { return table_.size(); }

 private:
  static std::uint64_t key(std::size_t store, std::size_t idx) {
    return (static_cast<std::uint64_t>(store) << 40) | static_cast<std::uint64_t>(idx);
  }
  std::unordered_map<std::uint64_t, Tensor<Real>> table_;
};

struct PairDistances {
  std::vector<double> distances;
  std::vector<int> labels;
};

template <typename Real>
PairDistances pair_distances(const NetworkParams<Real>& params, std::span<const PatchStore> stores,
                             std::span<const PatchPair> pairs) {
  const DescriptorTable<Real> table(params, stores, pairs);
  PairDistances out;
  out.distances.reserve(pairs.size());
  out.labels.reserve(pairs.size());
  for (const PatchPair& p : pairs) {
    out.distances.push_back(
        static_cast<double>(euclidean_distance(table.at(p.store, p.idx1), table.at(p.store, p.idx2))));
    out.labels.push_back(p.y);
  }
  return out;
}

/// Summed contrastive objective of `pairs` under `params`.
template <typename Real>
double pair_objective(const NetworkParams<Real>& params, std::span<const PatchStore> stores,
                      std::span<const PatchPair> pairs, const LossConfig& cfg) {
  const PairDistances pd = pair_distances(params, stores, pairs);
  double total = 0;
  for (std::size_t i = 0; i < pd.distances.size(); ++i) total += pair_loss({pd.distances[i], pd.labels[i]}, cfg);
  return total;
}

namespace detail {

inline void check_labels(std::span<const double> distances, std::span<const int> labels, std::size_t& n_pos,
                         std::size_t& n_neg) {
  if (distances.size() != labels.size()) {
    throw Error(ErrorKind::shape_mismatch, std::to_string(distances.size()) + " distances but " +
                                               std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < distances.size(); ++i) {
    if (std::isnan(distances[i])) {
      throw Error(ErrorKind::divergence, "distance of pair " + std::to_string(i) + " is NaN");
    }
  }
  n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw Error(ErrorKind::degenerate_labels, "need at least one matching and one non-matching pair (got " +
                                                  std::to_string(n_pos) + " matching, " + std::to_string(n_neg) +
                                                  " non-matching)");
  }
}

}  // namespace detail

/// Percentage of non-matching pairs accepted when the threshold t accepts
/// `target_tpr` of the matching pairs. A pair is accepted iff d <= t, and t is
/// the k-th smallest matching distance for the smallest k with k/n_pos >= target.
inline double fpr_at_tpr(std::span<const double> distances, std::span<const int> labels, double target_tpr = 0.95) {
  if (!(target_tpr > 0.0 && target_tpr <= 1.0)) {
    throw Error(ErrorKind::config, "target TPR must lie in (0, 1]");
  }
  std::size_t n_pos = 0, n_neg = 0;
  detail::check_labels(distances, labels, n_pos, n_neg);

  std::vector<double> pos;
  pos.reserve(n_pos);
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == 1) pos.push_back(distances[i]);
  std::sort(pos.begin(), pos.end());

  const double n = static_cast<double>(n_pos);
  auto k = static_cast<std::size_t>(std::ceil(target_tpr * n));
  k = std::clamp<std::size_t>(k, 1, n_pos);
  while (k > 1 && static_cast<double>(k - 1) / n >= target_tpr) --k;
  while (k < n_pos && static_cast<double>(k) / n < target_tpr) ++k;
  const double threshold = pos[k - 1];

  std::size_t false_pos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != 1 && distances[i] <= threshold) ++false_pos;
  return 100.0 * static_cast<double>(false_pos) / static_cast<double>(n_neg);
}

struct RocPoint {
  double threshold = 0;
  double tpr = 0;
  double fpr = 0;
};

struct RocReport {
  std::vector<RocPoint> points;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  double fpr_at_95 = 0;  // percent
};

inline RocReport roc(std::span<const double> distances, std::span<const int> labels) {
  RocReport report;
  detail::check_labels(distances, labels, report.n_pos, report.n_neg);
  std::vector<std::size_t> order(distances.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return distances[a] < distances[b]; });

  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = distances[order[i]];
    while (i < order.size() && distances[order[i]] == t) {
      (labels[order[i]] == 1 ? tp : fp) += 1;
      ++i;
    }
    report.points.push_back({t, static_cast<double>(tp) / static_cast<double>(report.n_pos),
                             static_cast<double>(fp) / static_cast<double>(report.n_neg)});
  }
  report.fpr_at_95 = fpr_at_tpr(distances, labels, 0.95);
  return report;
}

/// Shortest decimal text that parses back to the same double.
inline std::string exact_decimal(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string one_decimal(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

struct EvalReport {
  RocReport roc;
  std::string summary;
};

template <typename Real>
EvalReport evaluate(const NetworkParams<Real>& params, std::span<const PatchStore> stores,
                    std::span<const PatchPair> test_pairs) {
  const PairDistances pd = pair_distances(params, stores, test_pairs);
  EvalReport out;
  out.roc = roc(pd.distances, pd.labels);
  out.summary = "n_pos=" + std::to_string(out.roc.n_pos) + " n_neg=" + std::to_string(out.roc.n_neg) +
                " fpr95=" + one_decimal(out.roc.fpr_at_95) + "%";
  return out;
}

/// "threshold,tpr,fpr" then one sweep point per line, 6 significant digits.
inline std::string roc_csv(const RocReport& report) {
  std::string out = "threshold,tpr,fpr\n";
  char buf[128];
  for (const RocPoint& p : report.points) {
    std::snprintf(buf, sizeof buf, "%.6g,%.6g,%.6g\n", p.threshold, p.tpr, p.fpr);
    out += buf;
  }
  return out;
}

inline void write_roc_csv(const RocReport& report, const std::filesystem::path& path) {
  const std::string text = roc_csv(report);
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

// ---------------------------------------------------------------------------
// Descriptor file: "PDSC" | u32 version (1) | u32 count | u32 dim | f32 values, row-major.

inline constexpr std::uint32_t kDescriptorFileVersion = 1;

struct DescriptorSet {
  std::size_t dim = 0;
  std::vector<float> values;  // count x dim

  std::size_t count() const { return dim == 0 ? 0 : values.size() / dim; }
};

template <typename Real>
DescriptorSet extract_descriptors(const NetworkParams<Real>& params, const PatchStore& store) {
  DescriptorSet out;
  out.dim = params.arch.descriptor_dim;
  out.values.reserve(store.size() * out.dim);
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Tensor<Real> d = embed(params, network_input<Real>(store.patch(i), params.arch.input_size));
    for (Real v : d.values()) out.values.push_back(static_cast<float>(v));
  }
  return out;
}

inline std::vector<std::uint8_t> encode_descriptors(const DescriptorSet& set) {
  std::vector<std::uint8_t> b{'P', 'D', 'S', 'C'};
  detail::put_u32(b, kDescriptorFileVersion);
  detail::put_u32(b, static_cast<std::uint32_t>(set.count()));
  detail::put_u32(b, static_cast<std::uint32_t>(set.dim));
  for (float v : set.values) detail::put_u32(b, std::bit_cast<std::uint32_t>(v));
  return b;
}

inline DescriptorSet decode_descriptors(const std::vector<std::uint8_t>& b, const std::string& name) {
  auto fail = [&](const std::string& what) { return Error(ErrorKind::format, name + ": " + what); };
  if (b.size() < 16 || std::memcmp(b.data(), "PDSC", 4) != 0) throw fail("bad magic");
  if (detail::le_u32(b, 4) != kDescriptorFileVersion) throw fail("unsupported version");
  const std::size_t count = detail::le_u32(b, 8);
  DescriptorSet set;
  set.dim = detail::le_u32(b, 12);
  if (b.size() != 16 + 4 * count * set.dim) throw fail("size does not match header");
  set.values.resize(count * set.dim);
  for (std::size_t i = 0; i < set.values.size(); ++i) set.values[i] = std::bit_cast<float>(detail::le_u32(b, 16 + 4 * i));
  return set;
}

}  // namespace patchdesc
