#pragma once

// Flat "key = value" run configuration with '#' comments. Unknown keys are
// rejected so typos cannot silently fall back to defaults.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "patchdesc/data.hpp"
#include "patchdesc/error.hpp"
#include "patchdesc/train.hpp"

namespace patchdesc {

/// How many pairs to draw for training and for the held-out set.
struct PairPlan {
  std::size_t similar = 300;
  std::size_t dissimilar = 300;
  std::size_t heldout_similar = 100;
  std::size_t heldout_dissimilar = 100;
  std::uint64_t seed = 7;
};

struct RunConfig {
  TrainConfig train;
  SynthConfig synth;
  PairPlan pairs;
  std::vector<std::string> data_roots;        // one per scene
  std::vector<std::string> test_match_files;  // aligned with data_roots (protocol runs)
  std::string match_file;                     // optional fixed training pairs
  std::string checkpoint_out = "patchdesc.ckpt";
  std::string history_out = "history.csv";
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

inline std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto res = std::from_chars(value.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end) {
    throw Error(ErrorKind::config, "key '" + key + "': cannot parse '" + value + "'");
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw Error(ErrorKind::config, "key '" + key + "': expected true or false, got '" + value + "'");
}

inline std::string parse_path(const std::string& key, const std::string& value) {
  if (value.empty() || value.find('\0') != std::string::npos) {
    throw Error(ErrorKind::config, "key '" + key + "': invalid path");
  }
  return value;
}

}  // namespace detail

inline RunConfig parse_run_config(std::string_view text, const std::string& source = "config") {
  using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;
  using detail::parse_bool;
  using detail::parse_number;
  using detail::parse_path;
  const std::map<std::string, Setter, std::less<>> setters = {
      {"learning_rate", [](RunConfig& c, auto& k, auto& v) { c.train.learning_rate = parse_number<double>(k, v); }},
      {"batch_size", [](RunConfig& c, auto& k, auto& v) { c.train.batch_size = parse_number<std::size_t>(k, v); }},
      {"max_epochs", [](RunConfig& c, auto& k, auto& v) { c.train.max_epochs = parse_number<std::size_t>(k, v); }},
      {"plateau_patience",
       [](RunConfig& c, auto& k, auto& v) { c.train.plateau_patience = parse_number<std::size_t>(k, v); }},
      {"plateau_rel_tol", [](RunConfig& c, auto& k, auto& v) { c.train.plateau_rel_tol = parse_number<double>(k, v); }},
      {"seed", [](RunConfig& c, auto& k, auto& v) { c.train.seed = parse_number<std::uint64_t>(k, v); }},
      {"precision", [](RunConfig& c, auto&, auto& v) { c.train.precision = parse_precision(v); }},
      {"balanced_batches", [](RunConfig& c, auto& k, auto& v) { c.train.balanced_batches = parse_bool(k, v); }},
      {"mean_reduction", [](RunConfig& c, auto& k, auto& v) { c.train.mean_reduction = parse_bool(k, v); }},
      {"objective_pairs",
       [](RunConfig& c, auto& k, auto& v) { c.train.objective_pairs = parse_number<std::size_t>(k, v); }},
      {"c_pll", [](RunConfig& c, auto& k, auto& v) { c.train.loss.c_pll = parse_number<double>(k, v); }},
      {"m_pll", [](RunConfig& c, auto& k, auto& v) { c.train.loss.m_pll = parse_number<double>(k, v); }},
      {"c_psh", [](RunConfig& c, auto& k, auto& v) { c.train.loss.c_psh = parse_number<double>(k, v); }},
      {"m_psh", [](RunConfig& c, auto& k, auto& v) { c.train.loss.m_psh = parse_number<double>(k, v); }},
      {"synth.points", [](RunConfig& c, auto& k, auto& v) { c.synth.n_points = parse_number<std::size_t>(k, v); }},
      {"synth.patches_per_point",
       [](RunConfig& c, auto& k, auto& v) { c.synth.patches_per_point = parse_number<std::size_t>(k, v); }},
      {"synth.noise_std", [](RunConfig& c, auto& k, auto& v) { c.synth.noise_std = parse_number<double>(k, v); }},
      {"synth.jitter_px", [](RunConfig& c, auto& k, auto& v) { c.synth.jitter_px = parse_number<std::size_t>(k, v); }},
      {"synth.seed", [](RunConfig& c, auto& k, auto& v) { c.synth.seed = parse_number<std::uint64_t>(k, v); }},
      {"pairs.similar", [](RunConfig& c, auto& k, auto& v) { c.pairs.similar = parse_number<std::size_t>(k, v); }},
      {"pairs.dissimilar",
       [](RunConfig& c, auto& k, auto& v) { c.pairs.dissimilar = parse_number<std::size_t>(k, v); }},
      {"pairs.heldout_similar",
       [](RunConfig& c, auto& k, auto& v) { c.pairs.heldout_similar = parse_number<std::size_t>(k, v); }},
      {"pairs.heldout_dissimilar",
       [](RunConfig& c, auto& k, auto& v) { c.pairs.heldout_dissimilar = parse_number<std::size_t>(k, v); }},
      {"pairs.seed", [](RunConfig& c, auto& k, auto& v) { c.pairs.seed = parse_number<std::uint64_t>(k, v); }},
      {"data.roots",
       [](RunConfig& c, auto& k, auto& v) {
         c.data_roots.clear();
         for (const auto& p : detail::split_list(v)) c.data_roots.push_back(parse_path(k, p));
       }},
      {"data.test_match_files",
       [](RunConfig& c, auto& k, auto& v) {
         c.test_match_files.clear();
         for (const auto& p : detail::split_list(v)) c.test_match_files.push_back(parse_path(k, p));
       }},
      {"data.match_file", [](RunConfig& c, auto& k, auto& v) { c.match_file = parse_path(k, v); }},
      {"out.checkpoint", [](RunConfig& c, auto& k, auto& v) { c.checkpoint_out = parse_path(k, v); }},
      {"out.history", [](RunConfig& c, auto& k, auto& v) { c.history_out = parse_path(k, v); }},
  };

  RunConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string stripped = detail::trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::config, source + " line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = detail::trim(std::string_view(stripped).substr(0, eq));
    const std::string value = detail::trim(std::string_view(stripped).substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) {
      throw Error(ErrorKind::config, source + " line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    it->second(cfg, key, value);
  }
  cfg.train.validate();
  cfg.synth.validate();
  return cfg;
}

struct PairSplit {
  std::vector<PatchPair> train;
  std::vector<PatchPair> heldout;
};

/// Draws training and held-out pairs in one sampling call, so the two sets
/// never share a pair, then splits each store's pairs by label quota.
inline PairSplit sample_train_heldout(std::span<const PatchStore> stores, const PairPlan& plan) {
  const std::vector<PatchPair> all = sample_pairs(stores, plan.similar + plan.heldout_similar,
                                                  plan.dissimilar + plan.heldout_dissimilar, plan.seed);
  const std::size_t k = stores.size();
  auto quota = [k](std::size_t n, std::size_t s) { return n / k + (s < n % k ? 1 : 0); };
  std::vector<std::size_t> used_sim(k, 0), used_dis(k, 0);
  PairSplit out;
  for (const PatchPair& p : all) {
    auto& used = p.y == 1 ? used_sim[p.store] : used_dis[p.store];
    const std::size_t limit = quota(p.y == 1 ? plan.similar : plan.dissimilar, p.store);
    (used < limit ? out.train : out.heldout).push_back(p);
    ++used;
  }
  return out;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::config, "cannot read config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str(), path.string());
}

}  // namespace patchdesc
