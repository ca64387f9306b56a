#include <gtest/gtest.h>

#include <algorithm>
#include <limits>
#include <random>

#include "support.hpp"

using namespace patchdesc;
using testing_support::random_tensor;

namespace {

LossConfig cfg(double c_pll, double m_pll, double c_psh, double m_psh) { return {c_pll, m_pll, c_psh, m_psh}; }

}  // namespace

// Closed-form values are compared with EXPECT_EQ when the decimal is exactly
// representable and with EXPECT_DOUBLE_EQ (4 ulp) when it is not, e.g. 0.3.

TEST(Distance, Examples) {
  const auto f = Tensor<double>::vector({0.3, -1.2, 4.0});
  EXPECT_EQ(euclidean_distance(f, f), 0.0);
  Tensor<double> a({32}), zero({32});
  a[0] = 3;
  a[1] = 4;
  EXPECT_EQ(euclidean_distance(a, zero), 5.0);
}

TEST(Distance, TranslationInvariant) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_tensor({32}, rng);
    const auto b = random_tensor({32}, rng);
    const auto c = random_tensor({32}, rng);
    EXPECT_NEAR(euclidean_distance(add(a, c), add(b, c)), euclidean_distance(a, b), 1e-12);
  }
}

TEST(Distance, LengthMismatchIsRejected) {
  EXPECT_THROW(euclidean_distance(Tensor<double>({3}), Tensor<double>({4})), Error);
}

TEST(PullLoss, Examples) {
  EXPECT_EQ(pull_loss(0.5, cfg(1, 0.5, 1, 2)), 0.0);
  EXPECT_EQ(pull_loss(0.2, cfg(1, 0.5, 1, 2)), 0.0);
  EXPECT_DOUBLE_EQ(pull_loss(0.8, cfg(1, 0.5, 1, 2)), 0.3);
  EXPECT_EQ(pull_loss(1.0, cfg(2, 0, 1, 2)), 2.0);
}

TEST(PushLoss, Examples) {
  EXPECT_EQ(push_loss(1.0, cfg(1, 0.5, 1, 1)), 0.0);
  EXPECT_EQ(push_loss(1.5, cfg(1, 0.5, 1, 1)), 0.0);
  EXPECT_EQ(push_loss(0.0, cfg(1, 0.5, 1, 1)), 1.0);
  EXPECT_DOUBLE_EQ(push_loss(0.4, cfg(1, 0.5, 1, 1)), 0.36);
}

TEST(PairLoss, Examples) {
  const auto c = cfg(1, 0.5, 1, 2);
  EXPECT_EQ(pair_loss({0.5, 1}, c), 0.0);
  EXPECT_EQ(pair_loss({2.0, 0}, c), 0.0);
  EXPECT_EQ(pair_loss({1.0, 0}, cfg(1, 0.5, 3, 2)), 3.0);
  EXPECT_EQ(pair_loss({1.5, 1}, c), pull_loss(1.5, c));
  EXPECT_EQ(pair_loss({1.5, 0}, c), push_loss(1.5, c));
}

TEST(PairLossGrad, InactivePullHingeGivesZero) {
  const auto f1 = Tensor<double>::vector({0.1, 0.2});
  const auto f2 = Tensor<double>::vector({0.2, 0.1});
  const auto g = pair_loss_grad(f1, f2, 1, cfg(1, 0.5, 1, 2));
  EXPECT_EQ(g.loss, 0.0);
  EXPECT_EQ(g.g1, Tensor<double>({2}));
  EXPECT_EQ(g.g2, Tensor<double>({2}));
}

TEST(PairLossGrad, CoincidentDescriptorsGiveZero) {
  const auto f = Tensor<double>::vector({0.4, -0.3});
  const auto g = pair_loss_grad(f, f, 0, cfg(1, 0.5, 1, 2));
  EXPECT_EQ(g.loss, 4.0);
  EXPECT_EQ(g.g1, Tensor<double>({2}));
}

TEST(PairLossGrad, ClosedFormDirection) {
  Tensor<double> f1({32}), f2({32});
  f1[0] = 3;
  f1[1] = 4;  // d = 5, u = (0.6, 0.8, 0, ...)
  const auto pull = pair_loss_grad(f1, f2, 1, cfg(2, 1, 1, 8));
  EXPECT_DOUBLE_EQ(pull.g1[0], 1.2);
  EXPECT_DOUBLE_EQ(pull.g1[1], 1.6);
  const auto push = pair_loss_grad(f1, f2, 0, cfg(2, 1, 1, 8));  // -2·1·(8-5)·u
  EXPECT_DOUBLE_EQ(push.g1[0], -3.6);
  EXPECT_DOUBLE_EQ(push.g1[1], -4.8);
}

TEST(PairLossGrad, GradientsAreAntisymmetric) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = random_tensor({32}, rng, -0.3, 0.3);
    const auto b = random_tensor({32}, rng, -0.3, 0.3);
    const auto g = pair_loss_grad(a, b, trial % 2, LossConfig{});
    for (std::size_t i = 0; i < 32; ++i) EXPECT_EQ(g.g1[i], -g.g2[i]);
  }
}

TEST(PairLossGrad, MatchesFiniteDifferencesAwayFromHinges) {
  std::mt19937_64 rng(3);
  const LossConfig c = cfg(1.5, 0.5, 0.7, 2.0);
  int checked = 0;
  while (checked < 40) {
    auto a = random_tensor({32}, rng, -0.4, 0.4);
    const auto b = random_tensor({32}, rng, -0.4, 0.4);
    const int y = checked % 2;
    const double d = euclidean_distance(a, b);
    if (std::abs(d - (y == 1 ? c.m_pll : c.m_psh)) < 1e-3) continue;
    const auto g = pair_loss_grad(a, b, y, c);
    const double err = testing_support::max_fd_error(
        a, g.g1, [&] { return pair_loss({euclidean_distance(a, b), y}, c); }, 1e-5, 1e-9);
    EXPECT_LE(err, 1e-6) << "d=" << d << " y=" << y;
    ++checked;
  }
}

TEST(BatchLoss, Examples) {
  const auto c = cfg(1, 0.5, 1, 2);
  const std::vector<LabeledDistance> at_margins = {{0.5, 1}, {2.0, 0}, {0.1, 1}, {3.0, 0}};
  EXPECT_EQ(batch_loss(at_margins, c).total, 0.0);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> dist(0.0, 3.0);
  std::vector<LabeledDistance> batch;
  for (int i = 0; i < 30; ++i) batch.push_back({dist(rng), i % 3 == 0 ? 1 : 0});
  double oracle = 0;
  for (const auto& p : batch) oracle += pair_loss(p, c);
  const BatchLoss once = batch_loss(batch, c);
  EXPECT_EQ(once.total, oracle);
  ASSERT_EQ(once.per_pair.size(), batch.size());

  // Listing every pair twice doubles the total up to summation rounding.
  std::vector<LabeledDistance> doubled;
  for (const auto& p : batch) doubled.insert(doubled.end(), {p, p});
  EXPECT_NEAR(batch_loss(doubled, c).total, 2 * once.total, 1e-12 * once.total);
}

TEST(PairLoss, NanDistanceGivesNanLoss) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  EXPECT_TRUE(std::isnan(pull_loss(nan, LossConfig{})));
  EXPECT_TRUE(std::isnan(push_loss(nan, LossConfig{})));
}

TEST(BatchLoss, EmptyBatchIsRejected) {
  try {
    batch_loss({}, LossConfig{});
    FAIL() << "expected empty-batch error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::empty_batch);
  }
}

TEST(LossProperty, MonotoneAndNonnegative) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dist(0.0, 4.0);
  std::vector<double> grid(500);
  for (double& d : grid) d = dist(rng);
  std::sort(grid.begin(), grid.end());
  const LossConfig c = cfg(1.3, 0.5, 0.9, 2.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    EXPECT_GE(pull_loss(grid[i], c), 0.0);
    EXPECT_GE(push_loss(grid[i], c), 0.0);
    if (i > 0) {
      EXPECT_GE(pull_loss(grid[i], c), pull_loss(grid[i - 1], c));
      EXPECT_LE(push_loss(grid[i], c), push_loss(grid[i - 1], c));
    }
  }
}

TEST(LossProperty, ZeroExactlyWhenEveryPairSatisfiesItsMargin) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> dist(0.0, 3.0);
  const LossConfig c = LossConfig{};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<LabeledDistance> batch;
    bool satisfied = true;
    for (int i = 0; i < 4; ++i) {
      const LabeledDistance p{dist(rng), static_cast<int>(rng() % 2)};
      satisfied = satisfied && (p.y == 1 ? p.d <= c.m_pll : p.d >= c.m_psh);
      batch.push_back(p);
    }
    EXPECT_EQ(batch_loss(batch, c).total == 0.0, satisfied);
  }
}

TEST(LossProperty, ScalingCoefficientsScalesLoss) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> dist(0.0, 3.0);
  std::vector<LabeledDistance> batch;
  for (int i = 0; i < 40; ++i) batch.push_back({dist(rng), i % 2});
  const LossConfig base = cfg(1.0, 0.5, 1.0, 2.0);
  const double total = batch_loss(batch, base).total;
  // Powers of two keep the comparison exact.
  for (double k : {0.25, 2.0, 8.0}) {
    const LossConfig scaled = cfg(k * base.c_pll, base.m_pll, k * base.c_psh, base.m_psh);
    EXPECT_EQ(batch_loss(batch, scaled).total, k * total);
  }
}

TEST(LossConfig, Validation) {
  EXPECT_NO_THROW(LossConfig{}.validate());
  EXPECT_THROW(cfg(-1, 0.5, 1, 2).validate(), Error);
  EXPECT_THROW(cfg(1, 0.5, 1, 0).validate(), Error);
}
