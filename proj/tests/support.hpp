#pragma once

// Shared helpers for the test suites: temporary directories, random tensors,
// finite-difference gradient checks and independent brute-force oracles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "patchdesc/patchdesc.hpp"

namespace testing_support {

namespace fs = std::filesystem;
using patchdesc::Tensor;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "patchdesc") {
    std::random_device rd;
    path_ = fs::temp_directory_path() / (tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline Tensor<double> random_tensor(patchdesc::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.values()) v = u(rng);
  return t;
}

/// |a - b| relative to the larger magnitude, with an absolute floor so that
/// entries that are both essentially zero compare as equal.
inline double rel_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Largest relative error between an analytic gradient and central
/// differences of `objective` with respect to every entry of `x`.
inline double max_fd_error(Tensor<double>& x, const Tensor<double>& analytic, const std::function<double()>& objective,
                           double step = 1e-5, double floor = 1e-8) {
  double worst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double up = objective();
    x[i] = saved - step;
    const double down = objective();
    x[i] = saved;
    worst = std::max(worst, rel_error(analytic[i], (up - down) / (2 * step), floor));
  }
  return worst;
}

/// Sum of w ⊙ t: a scalar probe objective whose gradient with respect to t is w.
inline double weighted_sum(const Tensor<double>& t, const Tensor<double>& w) {
  double s = 0;
  for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * w[i];
  return s;
}

/// O(n²) threshold oracle for FPR at a target TPR: tries every distinct
/// distance as a threshold and keeps the smallest one reaching the target.
inline double brute_force_fpr(const std::vector<double>& d, const std::vector<int>& y, double target) {
  std::size_t n_pos = 0, n_neg = 0;
  for (int label : y) (label == 1 ? n_pos : n_neg)++;
  double best_t = INFINITY;
  for (double t : d) {
    std::size_t tp = 0;
    for (std::size_t j = 0; j < d.size(); ++j) tp += (y[j] == 1 && d[j] <= t);
    if (static_cast<double>(tp) >= target * static_cast<double>(n_pos) - 1e-12 * static_cast<double>(n_pos) &&
        t < best_t) {
      best_t = t;
    }
  }
  std::size_t fp = 0;
  for (std::size_t j = 0; j < d.size(); ++j) fp += (y[j] == 0 && d[j] <= best_t);
  return 100.0 * static_cast<double>(fp) / static_cast<double>(n_neg);
}

/// A store of `points` points with `per_point` distinct random patches each,
/// laid out point-major with point ids 0, 1, 2, ...
inline patchdesc::PatchStore random_store(std::size_t points, std::size_t per_point, std::uint64_t seed,
                                          const std::string& tag = "fixture") {
  patchdesc::PatchStore store(tag);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> px(0, 255);
  std::vector<std::uint8_t> buf(patchdesc::kPatchPixels);
  for (std::size_t p = 0; p < points; ++p) {
    for (std::size_t k = 0; k < per_point; ++k) {
      for (auto& v : buf) v = static_cast<std::uint8_t>(px(rng));
      store.add(patchdesc::PatchView(buf.data(), patchdesc::kPatchPixels), static_cast<std::uint32_t>(p));
    }
  }
  return store;
}

/// Reduced-net patch: a random 16×16 input of the verification network.
inline Tensor<double> reduced_patch(std::mt19937_64& rng) {
  const std::size_t s = patchdesc::Architecture::reduced().input_size;
  return random_tensor({1, s, s}, rng);
}

/// Full DrLim objective of a pair list on the reduced net, with descriptors
/// computed from raw input tensors instead of stored patches.
struct ReducedProblem {
  std::vector<Tensor<double>> inputs;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<int> labels;
  patchdesc::LossConfig loss;

  double objective(const patchdesc::NetworkParams<double>& params) const {
    std::vector<Tensor<double>> f;
    for (const auto& x : inputs) f.push_back(patchdesc::embed(params, x));
    double total = 0;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const double d = patchdesc::euclidean_distance(f[pairs[k].first], f[pairs[k].second]);
      total += patchdesc::pair_loss({d, labels[k]}, loss);
    }
    return total;
  }

  /// Analytic gradient assembled through the siamese chain rule.
  patchdesc::ParamGrads<double> gradient(const patchdesc::NetworkParams<double>& params) const {
    using namespace patchdesc;
    std::vector<Tensor<double>> f;
    std::vector<NetworkCache<double>> caches;
    for (const auto& x : inputs) {
      auto [d, cache] = forward(params, x);
      f.push_back(std::move(d));
      caches.push_back(std::move(cache));
    }
    ParamGrads<double> grads = ParamGrads<double>::zeros(params.arch);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const auto [a, b] = pairs[k];
      const PairGrad<double> pg = pair_loss_grad(f[a], f[b], labels[k], loss);
      accumulate(grads, backward(params, caches[a], pg.g1).grads);
      accumulate(grads, backward(params, caches[b], pg.g2).grads);
    }
    return grads;
  }

  /// Smallest distance from any pair's d to a hinge point of its partial loss.
  double hinge_clearance(const patchdesc::NetworkParams<double>& params) const {
    std::vector<Tensor<double>> f;
    for (const auto& x : inputs) f.push_back(patchdesc::embed(params, x));
    double clearance = INFINITY;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const double d = patchdesc::euclidean_distance(f[pairs[k].first], f[pairs[k].second]);
      const double hinge = labels[k] == 1 ? loss.m_pll : loss.m_psh;
      clearance = std::min({clearance, std::abs(d - hinge), d});
    }
    return clearance;
  }
};

/// Largest relative FD error of ReducedProblem's objective over every
/// parameter entry of `params`.
inline double max_network_fd_error(patchdesc::NetworkParams<double>& params, const ReducedProblem& problem,
                                   double step = 1e-5) {
  using namespace patchdesc;
  const ParamGrads<double> analytic = problem.gradient(params);
  std::vector<const Tensor<double>*> expected;
  analytic.for_each_tensor([&](const char*, const Tensor<double>& t) { expected.push_back(&t); });
  std::vector<Tensor<double>*> mutable_tensors;
  params.for_each_tensor([&](const char*, Tensor<double>& t) { mutable_tensors.push_back(&t); });
  double worst = 0;
  for (std::size_t k = 0; k < mutable_tensors.size(); ++k) {
    worst = std::max(worst, max_fd_error(*mutable_tensors[k], *expected[k],
                                         [&] { return problem.objective(params); }, step, 1e-6));
  }
  return worst;
}

/// Builds a reduced-net problem whose pairs all sit at least `clearance`
/// away from the hinge points (re-drawing inputs until they do).
inline ReducedProblem make_reduced_problem(const patchdesc::NetworkParams<double>& params, std::uint64_t seed,
                                           std::size_t n_inputs = 6, double clearance = 1e-3) {
  std::mt19937_64 rng(seed);
  ReducedProblem p;
  // Margins sized to the reduced net's descriptor spread so both hinges are active.
  p.loss = patchdesc::LossConfig{1.0, 0.05, 1.0, 3.0};
  for (int attempt = 0; attempt < 100; ++attempt) {
    p.inputs.clear();
    p.pairs.clear();
    p.labels.clear();
    for (std::size_t i = 0; i < n_inputs; ++i) p.inputs.push_back(reduced_patch(rng));
    for (std::size_t i = 0; i + 1 < n_inputs; ++i) {
      p.pairs.emplace_back(i, i + 1);
      p.labels.push_back(static_cast<int>(i % 2));
    }
    if (p.hinge_clearance(params) > clearance) return p;
  }
  return p;
}

}  // namespace testing_support
