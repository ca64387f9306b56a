#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "patchdesc/data.hpp"
#include "patchdesc/error.hpp"
#include "patchdesc/eval.hpp"
#include "patchdesc/loss.hpp"
#include "patchdesc/model.hpp"

namespace patchdesc {

struct TrainConfig {
  double learning_rate = 0.003;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 100;
  std::size_t plateau_patience = 10;
  double plateau_rel_tol = 1e-3;
  LossConfig loss;
  std::uint64_t seed = 1;
  Precision precision = Precision::f32;
  bool balanced_batches = true;
  bool mean_reduction = false;
  // Epoch objectives use a fixed subsample once the pair list is larger than this.
  std::size_t objective_pairs = 50'000;

  void validate() const {
    if (!(learning_rate > 0) || !std::isfinite(learning_rate)) {
      throw Error(ErrorKind::config, "learning_rate must be positive");
    }
    if (batch_size == 0) throw Error(ErrorKind::config, "batch_size must be positive");
    if (max_epochs == 0) throw Error(ErrorKind::config, "max_epochs must be positive");
    if (plateau_patience == 0) throw Error(ErrorKind::config, "plateau_patience must be positive");
    if (!(plateau_rel_tol > 0 && plateau_rel_tol < 1)) {
      throw Error(ErrorKind::config, "plateau_rel_tol must lie in (0, 1)");
    }
    if (objective_pairs == 0) throw Error(ErrorKind::config, "objective_pairs must be positive");
    loss.validate();
  }
};

/// Entry 0 is the objective of the initial parameters; entry e follows e epochs.
struct TrainHistory {
  std::vector<double> objective;
  std::vector<double> heldout_objective;  // empty without held-out pairs
  std::size_t best_epoch = 0;
};

/// True once max_epochs passes have run, or when none of the last
/// plateau_patience epochs beat the best earlier objective by more than
/// plateau_rel_tol relative. A zero objective also stops: every hinge is
/// inactive, so the gradient vanishes and parameters can no longer move.
inline bool should_stop(const TrainHistory& history, const TrainConfig& cfg) {
  const auto& obj = history.objective;
  if (obj.empty()) return false;
  if (obj.size() - 1 >= cfg.max_epochs) return true;
  if (obj.back() == 0.0) return true;
  double best = obj.front();
  std::size_t stale = 0;
  for (std::size_t e = 1; e < obj.size(); ++e) {
    if (obj[e] < best - cfg.plateau_rel_tol * std::abs(best)) {
      stale = 0;
    } else {
      ++stale;
    }
    best = std::min(best, obj[e]);
  }
  return stale >= cfg.plateau_patience;
}

/// One gradient-descent step on `batch`. Returns the batch objective at the
/// parameters before the update.
///
/// A patch that occurs in several pairs of the batch is embedded once; its
/// descriptor gradients are summed in pair order and pushed through a single
/// backward pass. By linearity of the backward pass in the descriptor gradient
/// this equals running one backward per pair member.
template <typename Real>
double sgd_step(NetworkParams<Real>& params, std::span<const PatchPair> batch, std::span<const PatchStore> stores,
                const TrainConfig& cfg) {
  if (batch.empty()) throw Error(ErrorKind::empty_batch, "sgd_step needs at least one pair");

  struct Slot {
    Tensor<Real> descriptor;
    NetworkCache<Real> cache;
    Tensor<Real> grad;
    bool active = false;
  };
  std::vector<Slot> slots;
  std::unordered_map<std::uint64_t, std::size_t> slot_of;
  auto slot_for = [&](std::size_t store, std::size_t idx) {
    if (store >= stores.size()) {
      throw Error(ErrorKind::consistency, "pair refers to missing store " + std::to_string(store));
    }
    const std::uint64_t key = (static_cast<std::uint64_t>(store) << 40) | idx;
    auto [it, inserted] = slot_of.try_emplace(key, slots.size());
    if (inserted) {
      auto [d, cache] = forward(params, network_input<Real>(stores[store].patch(idx), params.arch.input_size));
      Tensor<Real> grad(d.shape());
      slots.push_back({std::move(d), std::move(cache), std::move(grad)});
    }
    return it->second;
  };

  double objective = 0;
  for (const PatchPair& pair : batch) {
    const std::size_t a = slot_for(pair.store, pair.idx1);
    const std::size_t b = slot_for(pair.store, pair.idx2);
    const PairGrad<Real> pg = pair_loss_grad(slots[a].descriptor, slots[b].descriptor, pair.y, cfg.loss);
    objective += pg.loss;
    if (pair_loss_slope(pg.distance, pair.y, cfg.loss) == 0.0) continue;
    axpy(slots[a].grad, Real(1), pg.g1);
    axpy(slots[b].grad, Real(1), pg.g2);
    slots[a].active = slots[b].active = true;
  }

  ParamGrads<Real> grads = ParamGrads<Real>::zeros(params.arch);
  for (const Slot& slot : slots) {
    if (slot.active) accumulate(grads, backward(params, slot.cache, slot.grad).grads);
  }
  if (cfg.mean_reduction) objective /= static_cast<double>(batch.size());
  if (!std::isfinite(objective) || !grads.all_finite()) {
    throw Error(ErrorKind::divergence, "non-finite objective or gradient (batch objective " +
                                           std::to_string(objective) + "); lower learning_rate");
  }
  Real step = static_cast<Real>(-cfg.learning_rate);
  if (cfg.mean_reduction) step /= static_cast<Real>(batch.size());
  accumulate(params, grads, step);
  if (!params.all_finite()) {
    throw Error(ErrorKind::divergence, "parameters became non-finite after a step; lower learning_rate");
  }
  return objective;
}

/// Splits shuffled pair indices into minibatches. With balancing, each batch
/// takes half its pairs from the matching and half from the non-matching pool,
/// topping up from whichever pool is left once the other runs out.
inline std::vector<std::vector<std::size_t>> make_batches(std::span<const PatchPair> pairs, const TrainConfig& cfg,
                                                          std::mt19937_64& rng) {
  std::vector<std::vector<std::size_t>> batches;
  if (!cfg.balanced_batches) {
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < order.size(); i += cfg.batch_size) {
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                           order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + cfg.batch_size)));
    }
    return batches;
  }
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < pairs.size(); ++i) (pairs[i].y == 1 ? pos : neg).push_back(i);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  std::size_t ip = 0, in = 0;
  while (ip < pos.size() || in < neg.size()) {
    std::vector<std::size_t> batch;
    const std::size_t want_pos = cfg.batch_size / 2;
    while (batch.size() < want_pos && ip < pos.size()) batch.push_back(pos[ip++]);
    while (batch.size() < cfg.batch_size && in < neg.size()) batch.push_back(neg[in++]);
    while (batch.size() < cfg.batch_size && ip < pos.size()) batch.push_back(pos[ip++]);
    batches.push_back(std::move(batch));
  }
  return batches;
}

template <typename Real>
struct TrainResult {
  NetworkParams<Real> params;
  TrainHistory history;
};

struct TrainObserver {
  std::function<void(std::size_t epoch, double objective, double heldout)> on_epoch;
};

/// Trains from `init_params<Real>(cfg.seed, arch)` and returns the parameters
/// of the epoch with the lowest recorded training objective.
template <typename Real>
TrainResult<Real> train(std::span<const PatchStore> stores, std::span<const PatchPair> pairs, const TrainConfig& cfg,
                        std::span<const PatchPair> heldout = {}, const Architecture& arch = Architecture::full(),
                        const TrainObserver& observer = {}) {
  cfg.validate();
  if (pairs.empty()) throw Error(ErrorKind::empty_batch, "no training pairs");
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  std::vector<PatchPair> objective_set(pairs.begin(), pairs.end());
  if (objective_set.size() > cfg.objective_pairs) {
    std::mt19937_64 sub_rng(cfg.seed + 1);
    std::shuffle(objective_set.begin(), objective_set.end(), sub_rng);
    objective_set.resize(cfg.objective_pairs);
  }

  TrainResult<Real> result{init_params<Real>(cfg.seed, arch), {}};
  NetworkParams<Real> current = result.params;
  auto record = [&](std::size_t epoch) {
    const double obj = pair_objective(current, stores, objective_set, cfg.loss);
    if (!std::isfinite(obj)) throw Error(ErrorKind::divergence, "non-finite objective at epoch " + std::to_string(epoch));
    double held = std::nan("");
    if (!heldout.empty()) {
      held = pair_objective(current, stores, heldout, cfg.loss);
      result.history.heldout_objective.push_back(held);
    }
    result.history.objective.push_back(obj);
    if (obj < result.history.objective[result.history.best_epoch]) {
      result.history.best_epoch = epoch;
      result.params = current;
    }
    if (observer.on_epoch) observer.on_epoch(epoch, obj, held);
  };

  record(0);
  std::vector<PatchPair> batch;
  for (std::size_t epoch = 1; !should_stop(result.history, cfg); ++epoch) {
    for (const auto& indices : make_batches(pairs, cfg, rng)) {
      batch.clear();
      for (std::size_t i : indices) batch.push_back(pairs[i]);
      sgd_step(current, std::span<const PatchPair>(batch), stores, cfg);
    }
    record(epoch);
  }
  return result;
}

}  // namespace patchdesc
