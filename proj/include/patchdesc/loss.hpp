#pragma once

// Contrastive pair objective: a hinge pull term for corresponding pairs and a
// squared-hinge push term for non-corresponding pairs, on the Euclidean
// distance between descriptors.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "patchdesc/error.hpp"
#include "patchdesc/tensor.hpp"

namespace patchdesc {

struct LossConfig {
  double c_pll = 1.0;  // pull scale
  double m_pll = 0.5;  // pull margin
  double c_psh = 1.0;  // push scale
  double m_psh = 2.0;  // push margin

  void validate() const {
    if (!(c_pll >= 0 && m_pll >= 0 && c_psh >= 0)) {
      throw Error(ErrorKind::config, "c_pll, m_pll and c_psh must be nonnegative");
    }
    if (!(m_psh > 0)) throw Error(ErrorKind::config, "m_psh must be positive");
  }

  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

/// A pair known by its descriptor distance.
struct LabeledDistance {
  double d = 0;
  int y = 0;  // 1 corresponding, 0 not
};

template <typename Real>
Real euclidean_distance(std::span<const Real> f1, std::span<const Real> f2) {
  if (f1.size() != f2.size()) {
    throw Error(ErrorKind::shape_mismatch,
                "descriptor lengths " + std::to_string(f1.size()) + " and " + std::to_string(f2.size()));
  }
  Real acc = 0;
  for (std::size_t i = 0; i < f1.size(); ++i) {
    const Real diff = f1[i] - f2[i];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

template <typename Real>
Real euclidean_distance(const Tensor<Real>& f1, const Tensor<Real>& f2) {
  return euclidean_distance<Real>(f1.values(), f2.values());
}

// The hinges are written so that a NaN distance yields a NaN loss instead of
// being clamped to zero, which would hide a diverged network.
inline double pull_loss(double d, const LossConfig& cfg) {
  return cfg.c_pll * (d > cfg.m_pll || std::isnan(d) ? d - cfg.m_pll : 0.0);
}

inline double push_loss(double d, const LossConfig& cfg) {
  const double gap = d < cfg.m_psh || std::isnan(d) ? cfg.m_psh - d : 0.0;
  return cfg.c_psh * gap * gap;
}

inline double pair_loss(const LabeledDistance& pair, const LossConfig& cfg) {
  return pair.y == 1 ? pull_loss(pair.d, cfg) : push_loss(pair.d, cfg);
}

/// dLoss/dd at distance d; zero at the hinge points.
inline double pair_loss_slope(double d, int y, const LossConfig& cfg) {
  if (y == 1) return d > cfg.m_pll ? cfg.c_pll : 0.0;
  return d < cfg.m_psh ? -2.0 * cfg.c_psh * (cfg.m_psh - d) : 0.0;
}

template <typename Real>
struct PairGrad {
  double loss = 0;
  double distance = 0;
  Tensor<Real> g1;
  Tensor<Real> g2;
};

/// Loss of one descriptor pair and its gradients. Below d = 1e-12 the
/// direction (f1 - f2)/d is undefined and both gradients are zero.
template <typename Real>
PairGrad<Real> pair_loss_grad(const Tensor<Real>& f1, const Tensor<Real>& f2, int y, const LossConfig& cfg) {
  PairGrad<Real> r;
  r.distance = static_cast<double>(euclidean_distance(f1, f2));
  r.loss = pair_loss({r.distance, y}, cfg);
  r.g1 = Tensor<Real>(f1.shape());
  r.g2 = Tensor<Real>(f2.shape());
  constexpr double eps = 1e-12;
  const double slope = pair_loss_slope(r.distance, y, cfg);
  if (r.distance < eps || slope == 0.0) return r;
  const Real k = static_cast<Real>(slope / r.distance);
  for (std::size_t i = 0; i < f1.size(); ++i) {
    const Real g = k * (f1[i] - f2[i]);
    r.g1[i] = g;
    r.g2[i] = -g;
  }
  return r;
}

struct BatchLoss {
  double total = 0;
  std::vector<double> per_pair;
};

/// Sum of pair losses, accumulated in index order.
inline BatchLoss batch_loss(std::span<const LabeledDistance> pairs, const LossConfig& cfg) {
  if (pairs.empty()) throw Error(ErrorKind::empty_batch, "batch_loss needs at least one pair");
  BatchLoss out;
  out.per_pair.reserve(pairs.size());
  for (const auto& p : pairs) {
    out.per_pair.push_back(pair_loss(p, cfg));
    out.total += out.per_pair.back();
  }
  return out;
}

}  // namespace patchdesc
