#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "probreg/error.hpp"
#include "probreg/meta.hpp"
#include "probreg/numeric.hpp"
#include "test_util.hpp"

using namespace probreg;

namespace {

Dataset linear(std::size_t n, std::uint64_t seed, double noise = 1.0) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> z(0, 1);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 1);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    X(i, 0) = z(g);
    y[i] = 1.5 * X(i, 0) + noise * z(g);
  }
  return Dataset(X, y);
}

std::unique_ptr<ProbEstimator> lr_normal() {
  return std::make_unique<ParametricEstimator>(Shape::normal, std::make_unique<Ols>(),
                                               std::make_unique<Constant>(Constant::stddev()));
}

std::unique_ptr<ProbEstimator> knn_normal(double k) {
  return std::make_unique<ParametricEstimator>(Shape::normal, std::make_unique<Knn>(k),
                                               std::make_unique<ResidualLearner>(std::make_unique<Knn>(k)));
}

}  // namespace

TEST(Bagging, SingleFullMemberEqualsBase) {
  auto d = linear(50, 1);
  Bagging bag(lr_normal(), 1, 1.0, false);
  auto base = lr_normal();
  bag.fit(d, 3);
  base->fit(d, 3);
  const auto a = bag.predict(d.X), b = base->predict(d.X);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Bagging, IdenticalMembersGiveMemberPdf) {
  auto d = linear(30, 2);
  Bagging bag(lr_normal(), 4, 1.0, false);
  bag.fit(d, 5);
  const auto member = bag.members()[0]->predict(d.X);
  const auto mix = bag.predict(d.X);
  for (std::size_t i = 0; i < mix.size(); ++i)
    for (double y : {-1.0, 0.0, 2.0}) EXPECT_NEAR(mix[i].pdf(y), member[i].pdf(y), 1e-15);
}

TEST(Bagging, JensenGainPerPoint) {
  for (int seed = 0; seed < 5; ++seed) {
    auto train = linear(80, 10 + seed), test = linear(40, 100 + seed);
    Bagging bag(knn_normal(5), 6, 0.7, true);
    bag.fit(train, seed);
    const auto mix = bag.predict(test.X);
    std::vector<PredictedBatch> members;
    for (const auto& m : bag.members()) members.push_back(m->predict(test.X));
    for (std::size_t i = 0; i < mix.size(); ++i) {
      const double y = test.y[static_cast<Eigen::Index>(i)];
      double avg = 0;
      for (const auto& m : members) avg += log_loss(m[i], y) / members.size();
      EXPECT_LE(log_loss(mix[i], y), avg + 1e-12);
    }
  }
}

TEST(Bagging, MemberOrderIrrelevant) {
  auto d = linear(40, 3);
  Bagging bag(knn_normal(3), 5, 0.8, true);
  bag.fit(d, 7);
  const auto mix = bag.predict(d.X);
  std::vector<PredictedBatch> members;
  for (const auto& m : bag.members()) members.push_back(m->predict(d.X));
  for (std::size_t i = 0; i < 5; ++i) {
    std::vector<Distribution> comps;
    for (auto it = members.rbegin(); it != members.rend(); ++it) comps.push_back((*it)[i]);
    const std::vector<double> w(comps.size(), 0.2);
    const auto rev = mixture(comps, w);
    for (double y : {-2.0, 0.3, 1.1}) EXPECT_NEAR(rev.pdf(y), mix[i].pdf(y), 1e-15);
  }
}

TEST(Bagging, SeedDeterminism) {
  auto d = linear(40, 4);
  Bagging a(knn_normal(3), 4, 0.5, true), b(knn_normal(3), 4, 0.5, true);
  a.fit(d, 11);
  b.fit(d, 11);
  const auto pa = a.predict(d.X), pb = b.predict(d.X);
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i], pb[i]);
}

TEST(GreedyBoosting, ZeroLevelsIsUninformed) {
  auto d = linear(60, 5);
  GreedyBoosting gb(nullptr, 0, 0.1);
  gb.fit(d, 1);
  const auto p = gb.predict(d.X);
  for (const auto& q : p) EXPECT_EQ(q, gb.start());
  EXPECT_NEAR(gb.start().mean(), d.y.mean(), 1e-9);
}

TEST(GreedyBoosting, PerSampleIdentity) {
  auto d = linear(100, 6);
  GreedyBoosting gb(nullptr, 1, 0.2);
  gb.fit(d, 2);
  auto test = linear(50, 7);
  const auto stages = gb.stages(test.X);
  const auto g = gb.residual_predictions(1, test.X);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double y = test.y[static_cast<Eigen::Index>(i)];
    const double lhs = -log_loss(g[i], stages[0][i].cdf(y));
    const double rhs = log_loss(stages[0][i], y) - log_loss(stages[1][i], y);
    EXPECT_NEAR(lhs, rhs, 1e-10);
  }
}

TEST(GreedyBoosting, ChainAssociativity) {
  auto d = linear(80, 8);
  GreedyBoosting gb(nullptr, 2, 0.1);
  gb.fit(d, 3);
  auto test = linear(10, 9);
  const auto stages = gb.stages(test.X);
  const auto g1 = gb.residual_predictions(1, test.X), g2 = gb.residual_predictions(2, test.X);
  for (std::size_t i = 0; i < g1.size(); ++i) {
    // compose the maps first, then push g2 through once
    const Diffeomorphism q1 = QuantileOf{stages[0][i]};
    const Diffeomorphism q2 = QuantileOf{stages[1][i]};
    const auto composed = pushforward(g2[i], q2);
    for (double y : {-1.0, 0.0, 1.5}) {
      // p_2(y) = g2(F1(y)) g1(F0(y)) f0(y)
      const double f0 = stages[0][i].pdf(y);
      const double chain = g2[i].pdf(g1[i].cdf(stages[0][i].cdf(y))) * g1[i].pdf(stages[0][i].cdf(y)) * f0;
      EXPECT_NEAR(stages[2][i].pdf(y), chain, 1e-9 * std::max(1.0, chain));
      EXPECT_NEAR(composed.pdf(y), chain, 1e-9 * std::max(1.0, chain));
      EXPECT_NEAR(q1.inverse(q1.forward(0.3)), 0.3, 1e-9);
    }
  }
}

TEST(GreedyBoosting, ImprovesWhenResidualLearnerBeatsUniform) {
  // informative features: boosted held-out log-loss falls below the start
  auto train = linear(300, 11, 0.5), test = linear(300, 12, 0.5);
  GreedyBoosting gb(nullptr, 1, 0.05);
  gb.fit(train, 4);
  const auto st = gb.stages(test.X);
  const auto g = gb.residual_predictions(1, test.X);
  double base = 0, boosted = 0, g_loss = 0;
  for (std::size_t i = 0; i < st[0].size(); ++i) {
    const double y = test.y[static_cast<Eigen::Index>(i)];
    base += log_loss(st[0][i], y);
    boosted += log_loss(st[1][i], y);
    g_loss += log_loss(g[i], st[0][i].cdf(y));
  }
  // g beats the uniform baseline (loss 0) exactly when boosting helps
  EXPECT_LT(g_loss, 0.0);
  EXPECT_LT(boosted, base);
  EXPECT_NEAR(boosted - base, g_loss, 1e-8);
}

TEST(GentleBoosting, ZeroRoundsOrZeroGammaIsStart) {
  auto d = linear(60, 13);
  GentleBoosting m0(nullptr, 0, 0.1, 0.5);
  m0.fit(d, 1);
  GentleBoosting g0(nullptr, 4, 0.1, 0.0);
  g0.fit(d, 1);
  const auto a = m0.predict(d.X), b = g0.predict(d.X);
  const Distribution b0 = Normal{d.y.mean(), std::sqrt((d.y.array() - d.y.mean()).square().mean())};
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i], b0);
    EXPECT_EQ(b[i], b0);
  }
}

TEST(GentleBoosting, TrainingLossNonincreasingAndWeightsOnSimplex) {
  auto d = linear(120, 14);
  GentleBoosting gb(nullptr, 6, 0.05, 0.5);
  gb.fit(d, 2);
  const auto& tl = gb.training_losses();
  ASSERT_EQ(tl.size(), 7u);
  for (std::size_t i = 1; i < tl.size(); ++i) EXPECT_LE(tl[i], tl[i - 1] + 1e-12);
  EXPECT_LT(tl.back(), tl.front());
  for (const auto& w : gb.weight_history()) {
    double s = 0;
    for (double v : w) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(GentleBoosting, WeightCollapse) {
  // large negative log-loss and big alpha drive every weight to zero
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(10, 1);
  Eigen::VectorXd y = Eigen::VectorXd::Constant(10, 1.0);
  y[0] = 1.0 + 1e-6;
  GentleBoosting gb(nullptr, 2, 100.0, 0.5);
  EXPECT_THROW(gb.fit(Dataset(X, y), 1), WeightCollapse);
}

TEST(Residuals, Examples) {
  PredictedBatch b{{Normal{0, 1}, Uniform{0, 1}}, "", 0};
  const std::vector<double> y{0.0, 0.3};
  const auto r = probability_residuals(b, y);
  EXPECT_DOUBLE_EQ(r[0], 0.5);
  EXPECT_DOUBLE_EQ(loss_residuals(b, y, LogLoss{})[1], 0.0);
}

TEST(Residuals, PerfectPredictionsAreUniform) {
  std::mt19937_64 g(15);
  std::normal_distribution<double> z(0, 1);
  PredictedBatch b;
  std::vector<double> y;
  for (int i = 0; i < 10000; ++i) {
    const double x = z(g);
    b.items.push_back(Normal{x, 0.5 + x * x});
    y.push_back(x + (0.5 + x * x) * z(g));
  }
  auto r = probability_residuals(b, y);
  const double ks = probreg::testing::ks_distance(r, [](double u) { return std::clamp(u, 0.0, 1.0); });
  EXPECT_GT(probreg::testing::ks_pvalue(ks, r.size()), 0.01);
}

TEST(Diagnostics, Table) {
  auto d = linear(25, 16);
  auto m = lr_normal();
  m->fit(d);
  DensityBaseline base;
  base.fit(d);
  const auto p = m->predict(d.X), pb = base.predict(d.X);
  const std::vector<double> y(d.y.data(), d.y.data() + d.y.size());
  const auto t = diagnostics_export(p, y, LogLoss{}, &pb);
  ASSERT_EQ(t.rows.size(), 25u);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    for (std::size_t q = 1; q < 5; ++q) EXPECT_LE(r.quantiles[q - 1], r.quantiles[q]);
    EXPECT_NEAR(r.zeroed_loss, log_loss(p[i], y[i]) - log_loss(pb[i], y[i]), 1e-12);
  }
  const auto csv = t.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "y,point,loss,zeroed_loss,prob_residual,q05,q25,q50,q75,q95");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 26);
}
