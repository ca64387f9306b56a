// patchdesc command-line tool.
//
// Exit codes: 0 success, 2 usage/config/data-format error, 3 runtime/numeric error.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "patchdesc/patchdesc.hpp"

namespace fs = std::filesystem;
using namespace patchdesc;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::divergence:
    case ErrorKind::degenerate_labels:
      return kExitRuntime;
    default:
      return kExitUsage;
  }
}

void write_text(const fs::path& path, const std::string& text) {
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string history_csv(const TrainHistory& history) {
  std::string out = "epoch,objective\n";
  char buf[64];
  for (std::size_t e = 0; e < history.objective.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g\n", e, history.objective[e]);
    out += buf;
  }
  return out;
}

/// Runs `body` with float or double as the scalar type.
template <typename Body>
int with_precision(Precision p, Body&& body) {
  if (p == Precision::f64) return body(double{});
  return body(float{});
}

std::vector<PatchStore> ingest_all(const std::vector<std::string>& roots) {
  std::vector<PatchStore> stores;
  for (const auto& root : roots) stores.push_back(ingest_scene(root));
  return stores;
}

// ---------------------------------------------------------------------------

int cmd_ingest(const std::string& root, const std::string& out) {
  if (!fs::is_directory(root)) {
    std::cerr << "usage error: --root must be a dataset directory, got '" << root << "'\n";
    return kExitUsage;
  }
  const PatchStore store = ingest_scene(root);
  if (!out.empty()) write_packed_store(store, out);
  std::cout << "patches=" << store.size() << " points=" << store.point_count() << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, bool synthetic) {
  RunConfig cfg = load_run_config(config_path);
  cfg.train.precision = precision_from_env(cfg.train.precision);

  std::vector<PatchStore> stores;
  PairSplit split;
  if (synthetic) {
    stores.push_back(synth_scene(cfg.synth));
    split = sample_train_heldout(stores, cfg.pairs);
  } else {
    if (cfg.data_roots.empty()) throw Error(ErrorKind::config, "data.roots is required without --synthetic");
    stores = ingest_all(cfg.data_roots);
    if (!cfg.match_file.empty()) {
      if (stores.size() != 1) throw Error(ErrorKind::config, "data.match_file needs exactly one data root");
      split.train = load_match_file(cfg.match_file, stores[0]);
    } else {
      split = sample_train_heldout(stores, cfg.pairs);
    }
  }

  return with_precision(cfg.train.precision, [&](auto tag) {
    using Real = decltype(tag);
    TrainObserver observer{[](std::size_t epoch, double objective, double heldout) {
      std::cerr << "epoch " << epoch << " objective " << objective;
      if (!std::isnan(heldout)) std::cerr << " heldout " << heldout;
      std::cerr << "\n";
    }};
    const TrainResult<Real> result =
        train<Real>(stores, split.train, cfg.train, split.heldout, Architecture::full(), observer);
    save_checkpoint(result.params, cfg.checkpoint_out);
    write_text(cfg.history_out, history_csv(result.history));
    std::cout << "epochs=" << result.history.objective.size() - 1 << " best_epoch=" << result.history.best_epoch
              << " objective=" << exact_decimal(result.history.objective[result.history.best_epoch]) << "\n";
    if (!split.heldout.empty()) {
      const EvalReport report = evaluate(result.params, stores, split.heldout);
      std::cout << "heldout " << report.summary << "\n";
    }
    return 0;
  });
}

int cmd_eval(const std::string& checkpoint, const std::string& pairs_path, const std::string& root,
             const std::string& roc_out) {
  const std::vector<PatchStore> stores{ingest_scene(root)};
  const std::vector<PatchPair> pairs = load_match_file(pairs_path, stores[0]);
  return with_precision(precision_from_env(), [&](auto tag) {
    using Real = decltype(tag);
    const NetworkParams<Real> params = load_checkpoint<Real>(checkpoint);
    const EvalReport report = evaluate(params, stores, pairs);
    if (!roc_out.empty()) write_roc_csv(report.roc, roc_out);
    std::cout << "fpr95=" << exact_decimal(report.roc.fpr_at_95) << "\n" << report.summary << "\n";
    return 0;
  });
}

int cmd_extract(const std::string& checkpoint, const std::string& root, const std::string& out) {
  const PatchStore store = ingest_scene(root);
  return with_precision(precision_from_env(), [&](auto tag) {
    using Real = decltype(tag);
    const NetworkParams<Real> params = load_checkpoint<Real>(checkpoint);
    const DescriptorSet set = extract_descriptors(params, store);
    write_file_bytes(out, encode_descriptors(set));
    std::cout << "count=" << set.count() << " dim=" << set.dim << "\n";
    return 0;
  });
}

int cmd_describe() {
  const Architecture arch = Architecture::full();
  std::cout << "input 1x" << arch.input_size << "x" << arch.input_size << "\n";
  for (const Stage& s : shape_plan(arch)) std::cout << s.name << " " << shape_string(s.shape) << "\n";
  std::cout << "parameters " << NetworkParams<float>::zeros(arch).parameter_count() << "\n";
  return 0;
}

int cmd_synth(const std::string& config_path, const std::string& out_dir) {
  const RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
  const std::vector<PatchStore> stores{synth_scene(cfg.synth)};
  const PairSplit split = sample_train_heldout(stores, cfg.pairs);
  export_scene(stores[0], out_dir);
  auto write_pairs = [&](const fs::path& path, const std::vector<PatchPair>& pairs) {
    std::string text;
    for (const PatchPair& p : pairs) {
      text += std::to_string(p.idx1) + " " + std::to_string(stores[0].point_id(p.idx1)) + " 0 " +
              std::to_string(p.idx2) + " " + std::to_string(stores[0].point_id(p.idx2)) + " 0 0\n";
    }
    write_text(path, text);
  };
  write_pairs(fs::path(out_dir) / "m50_train.txt", split.train);
  write_pairs(fs::path(out_dir) / "m50_heldout.txt", split.heldout);
  std::cout << "patches=" << stores[0].size() << " train_pairs=" << split.train.size()
            << " heldout_pairs=" << split.heldout.size() << "\n";
  return 0;
}

int cmd_protocol(const std::string& config_path, bool synthetic, bool combined, const std::string& report_out) {
  RunConfig cfg = load_run_config(config_path);
  cfg.train.precision = precision_from_env(cfg.train.precision);
  std::vector<Scene> scenes;
  if (synthetic) {
    scenes = synthetic_scenes(cfg.synth, cfg.pairs.similar, cfg.pairs.dissimilar, cfg.pairs.heldout_similar,
                              cfg.pairs.heldout_dissimilar, cfg.pairs.seed);
  } else {
    if (cfg.data_roots.size() < 2 || cfg.test_match_files.size() != cfg.data_roots.size()) {
      throw Error(ErrorKind::config, "protocol needs >= 2 data.roots and one data.test_match_files entry per root");
    }
    for (std::size_t i = 0; i < cfg.data_roots.size(); ++i) {
      Scene s;
      s.store = ingest_scene(cfg.data_roots[i]);
      s.name = s.store.scene_tag();
      s.train_pairs = sample_pairs(s.store, cfg.pairs.similar, cfg.pairs.dissimilar, cfg.pairs.seed + i);
      s.test_pairs = load_match_file(cfg.test_match_files[i], s.store);
      scenes.push_back(std::move(s));
    }
  }
  return with_precision(cfg.train.precision, [&](auto tag) {
    using Real = decltype(tag);
    const ProtocolReport report = run_protocol<Real>(scenes, cfg.train, combined);
    const std::string table = format_protocol_table(report);
    std::cout << table;
    if (!report_out.empty()) write_text(report_out, table);
    return 0;
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"patchdesc: learn and evaluate 32-d local patch descriptors"};
  app.require_subcommand(1);

  std::string root, out, config, checkpoint, pairs, roc_out;
  bool synthetic = false;
  bool combined = false;

  auto* ingest = app.add_subcommand("ingest", "validate a patch dataset directory");
  ingest->add_option("--root", root, "dataset directory")->required();
  ingest->add_option("--out", out, "write a packed store cache");

  auto* train_cmd = app.add_subcommand("train", "train a descriptor network");
  train_cmd->add_option("--config", config, "run config file")->required();
  train_cmd->add_flag("--synthetic", synthetic, "train on a generated scene");

  auto* eval = app.add_subcommand("eval", "FPR at 95% recall on a match file");
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--pairs", pairs, "match file")->required();
  eval->add_option("--root", root, "dataset directory")->required();
  eval->add_option("--roc-out", roc_out, "write the ROC sweep as CSV");

  auto* extract = app.add_subcommand("extract", "write descriptors of every patch");
  extract->add_option("--checkpoint", checkpoint)->required();
  extract->add_option("--root", root, "dataset directory")->required();
  extract->add_option("--out", out, "descriptor file")->required();

  auto* describe = app.add_subcommand("describe", "print the network shape chain");

  auto* synth = app.add_subcommand("synth", "export a synthetic scene with match files");
  synth->add_option("--config", config, "run config file (synth.* and pairs.* keys)");
  synth->add_option("--out", out, "output directory")->required();

  auto* protocol = app.add_subcommand("protocol", "train on each scene, evaluate on the others");
  protocol->add_option("--config", config, "run config file")->required();
  protocol->add_flag("--synthetic", synthetic, "use three generated scenes");
  protocol->add_flag("--combined", combined, "add leave-one-out combined training rows");
  protocol->add_option("--report", out, "write the table to a file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*ingest) return cmd_ingest(root, out);
    if (*train_cmd) return cmd_train(config, synthetic);
    if (*eval) return cmd_eval(checkpoint, pairs, root, roc_out);
    if (*extract) return cmd_extract(checkpoint, root, out);
    if (*describe) return cmd_describe();
    if (*synth) return cmd_synth(config, out);
    if (*protocol) return cmd_protocol(config, synthetic, combined, out);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
