#pragma once

// Cross-scene protocol: train on one scene (or on all but one, combined),
// evaluate on the test pairs of every other scene, with one shared config.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "patchdesc/data.hpp"
#include "patchdesc/eval.hpp"
#include "patchdesc/train.hpp"

namespace patchdesc {

struct Scene {
  std::string name;
  PatchStore store;
  std::vector<PatchPair> train_pairs;  // store index 0
  std::vector<PatchPair> test_pairs;   // store index 0
};

struct ProtocolRow {
  std::string train_set;        // "LY" or "ND+HD"
  std::vector<double> fpr95;    // per test scene, NaN where the scene was trained on
};

struct ProtocolReport {
  std::vector<std::string> scenes;
  std::vector<ProtocolRow> rows;
};

/// One row per single training scene, then (when `combined`) one row per
/// leave-one-out combination. Every run uses `cfg` unchanged.
template <typename Real>
ProtocolReport run_protocol(const std::vector<Scene>& scenes, const TrainConfig& cfg, bool combined = false,
                            const TrainObserver& observer = {}) {
  ProtocolReport report;
  for (const Scene& s : scenes) report.scenes.push_back(s.name);

  auto run = [&](const std::vector<std::size_t>& train_ids) {
    std::vector<PatchStore> stores;
    std::vector<PatchPair> pairs;
    ProtocolRow row;
    for (std::size_t k = 0; k < train_ids.size(); ++k) {
      const Scene& s = scenes[train_ids[k]];
      stores.push_back(s.store);
      for (PatchPair p : s.train_pairs) {
        p.store = k;
        pairs.push_back(p);
      }
      row.train_set += (k == 0 ? "" : "+") + s.name;
    }
    const TrainResult<Real> trained = train<Real>(stores, pairs, cfg, {}, Architecture::full(), observer);
    for (std::size_t t = 0; t < scenes.size(); ++t) {
      if (std::find(train_ids.begin(), train_ids.end(), t) != train_ids.end()) {
        row.fpr95.push_back(std::nan(""));
        continue;
      }
      const std::vector<PatchStore> test_store{scenes[t].store};
      row.fpr95.push_back(evaluate(trained.params, test_store, scenes[t].test_pairs).roc.fpr_at_95);
    }
    report.rows.push_back(std::move(row));
  };

  for (std::size_t i = 0; i < scenes.size(); ++i) run({i});
  if (combined && scenes.size() > 2) {
    for (std::size_t left_out = 0; left_out < scenes.size(); ++left_out) {
      std::vector<std::size_t> ids;
      for (std::size_t i = 0; i < scenes.size(); ++i)
        if (i != left_out) ids.push_back(i);
      run(ids);
    }
  }
  return report;
}

/// Error-rate table: rows are training sets, columns test scenes, "--" on
/// trained-on cells, one decimal like published FPR95 tables.
inline std::string format_protocol_table(const ProtocolReport& report) {
  std::size_t width = 8;
  for (const auto& row : report.rows) width = std::max(width, row.train_set.size() + 2);
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.insert(0, w - s.size(), ' ');
    return s;
  };
  std::string out = pad("Tr. set", width);
  for (const auto& s : report.scenes) out += pad(s, 8);
  out += "\n";
  for (const auto& row : report.rows) {
    out += pad(row.train_set, width);
    for (double v : row.fpr95) out += pad(std::isnan(v) ? "--" : one_decimal(v), 8);
    out += "\n";
  }
  return out;
}

/// Three synthetic scenes, each from its own seed, with sampled train/test pairs.
inline std::vector<Scene> synthetic_scenes(const SynthConfig& base, std::size_t train_similar,
                                           std::size_t train_dissimilar, std::size_t test_similar,
                                           std::size_t test_dissimilar, std::uint64_t pair_seed) {
  const char* const names[] = {"S1", "S2", "S3"};
  std::vector<Scene> scenes;
  for (std::size_t k = 0; k < 3; ++k) {
    SynthConfig cfg = base;
    cfg.seed = base.seed + 1000 * (k + 1);
    Scene s{names[k], synth_scene(cfg, names[k]), {}, {}};
    s.train_pairs = sample_pairs(s.store, train_similar, train_dissimilar, pair_seed + k);
    s.test_pairs = sample_pairs(s.store, test_similar, test_dissimilar, pair_seed + 100 + k);
    scenes.push_back(std::move(s));
  }
  return scenes;
}

}  // namespace patchdesc
