#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "probreg/adaptors.hpp"
#include "probreg/error.hpp"
#include "probreg/loss.hpp"
#include "probreg/numeric.hpp"
#include "test_util.hpp"

using namespace probreg;
using probreg::testing::phi;

TEST(LogLoss, Examples) {
  EXPECT_DOUBLE_EQ(log_loss(Uniform{0, 1}, 0.5), 0.0);
  EXPECT_NEAR(log_loss(Normal{0, 1}, 0.0), 0.918939, 1e-6);
  EXPECT_NEAR(log_loss(Categorical{{0, 1, 2}, {1. / 3, 1. / 3, 1. / 3}}, 1), std::log(3.0), 1e-12);
  EXPECT_EQ(log_loss(Uniform{0, 1}, 2.0), kInf);
  EXPECT_THROW(log_loss(Mixture{{Normal{0, 1}, Empirical{{0.0}, {1.0}}}, {.5, .5}}, 0.0), UnsupportedKind);
}

TEST(CappedLogLoss, Examples) {
  EXPECT_NEAR(capped_log_loss(Uniform{0, 1}, 3.0, 1e-10), 23.025851, 1e-6);
  EXPECT_DOUBLE_EQ(capped_log_loss(Uniform{0, 1}, 0.5, 1e-10), 0.0);
  EXPECT_THROW(capped_log_loss(Uniform{0, 1}, 0.5, 0.0), DomainError);
}

TEST(CappedLogLoss, CloseToMixtureWhereDensityAtLeastOne) {
  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> u(0, 1);
  const Distribution ref = Uniform{0, 1};
  int checked = 0;
  while (checked < 100) {
    const double eps = std::pow(10.0, -1 - 9 * u(g));
    const Distribution p = Normal{0.3 + 0.4 * u(g), 0.02 + 0.35 * u(g)};
    const double y = 0.3 + 0.4 * u(g);
    if (p.pdf(y) < 1.0) continue;
    const double cap = capped_log_loss(p, y, eps);
    const double mix = eps_mixture_log_loss(p, y, eps, ref);
    EXPECT_LE(std::abs(cap - mix), std::max(-std::log(1 - eps), eps * std::abs(mix)) + 1e-15);
    ++checked;
  }
}

TEST(CappedLogLoss, MixtureBoundFailsForSmallDensity) {
  // at p(y) = eps the two losses differ by about log 2, far above the bound
  const double eps = 1e-3;
  const Distribution p = Uniform{0, 1 / eps};
  const double cap = capped_log_loss(p, 0.5, eps);
  const double mix = eps_mixture_log_loss(p, 0.5, eps, Uniform{0, 1});
  EXPECT_NEAR(cap - mix, std::log(2.0 - eps), 1e-12);
  EXPECT_GT(std::abs(cap - mix), std::max(-std::log(1 - eps), eps * std::abs(mix)));
}

TEST(GneitingLoss, Examples) {
  EXPECT_DOUBLE_EQ(gneiting_loss(Uniform{0, 1}, 0.5), -1.0);
  EXPECT_DOUBLE_EQ(gneiting_loss(Categorical{{0, 1}, {.5, .5}}, 0), -0.5);
  const double l2 = probreg::testing::simpson_fixed([](double y) { return phi(y) * phi(y); }, -12, 12);
  EXPECT_NEAR(gneiting_loss(Normal{0, 1}, 0), -2 * phi(0) + l2, 1e-10);
  EXPECT_NEAR(gneiting_loss(Normal{0, 1}, 0), -2 * phi(0) + 0.5 / std::sqrt(M_PI), 1e-12);
}

TEST(MeanVarianceLoss, Examples) {
  EXPECT_DOUBLE_EQ(mean_variance_loss(0, 1, 0), 0.0);
  EXPECT_NEAR(mean_variance_loss(1, 2, 3), 2 + std::log(2.0), 1e-15);
  EXPECT_THROW(mean_variance_loss(0, 0, 0), DomainError);
}

TEST(MeanVarianceLoss, GridMinimizerIsTrueMoments) {
  Rng rng(1);
  const auto ys = Distribution(Normal{0, 1}).sample(rng, 20000);
  double best = kInf, bm = 0, bv = 0;
  for (double mu = -0.5; mu <= 0.5001; mu += 0.05)
    for (double nu = 0.5; nu <= 1.5001; nu += 0.05) {
      double s = 0;
      for (double y : ys) s += mean_variance_loss(mu, nu, y);
      if (s < best) {
        best = s;
        bm = mu;
        bv = nu;
      }
    }
  EXPECT_NEAR(bm, 0.0, 0.05 + 1e-9);
  EXPECT_NEAR(bv, 1.0, 0.05 + 1e-9);
}

TEST(Crps, PointMassIsZero) {
  EXPECT_DOUBLE_EQ(crps(Empirical{{0.3}, {1.0}}, 0.3, Normal{0, 1}), 0.0);
  EXPECT_DOUBLE_EQ(crps(Empirical{{-2.0}, {1.0}}, -2.0, Uniform{-5, 5}), 0.0);
}

TEST(Crps, MatchesFineGridOracle) {
  const Distribution F = Uniform{0, 1};
  const double got = crps(F, 0.5, Uniform{0, 1}, 100000);
  // midpoint rule on 4e6 cells
  const int n = 4000000;
  const double lo = 1e-6, hi = 1 - 1e-6, h = (hi - lo) / n;
  double oracle = 0;
  for (int i = 0; i < n; ++i) {
    const double t = lo + (i + 0.5) * h;
    oracle += (0.5 <= t ? (1 - t) * (1 - t) : t * t) * h;
  }
  EXPECT_NEAR(got, oracle, 1e-5);
  EXPECT_NEAR(got, 1.0 / 12.0, 1e-5);
}

TEST(Crps, ShiftingPointMassAwayNeverDecreases) {
  const Distribution w = Normal{0, 2};
  double prev = -1;
  for (double s = 0; s <= 5; s += 0.25) {
    const double v = crps(Empirical{{0.4 + s}, {1.0}}, 0.4, w);
    EXPECT_GE(v, prev - 1e-12);
    prev = v;
  }
  prev = -1;
  for (double s = 0; s <= 5; s += 0.25) {
    const double v = crps(Empirical{{0.4 - s}, {1.0}}, 0.4, w);
    EXPECT_GE(v, prev - 1e-12);
    prev = v;
  }
}

TEST(KernelLoss, Examples) {
  EXPECT_DOUBLE_EQ(kernel_loss(Normal{0, 1}, 3.0, KernelFn::constant(42)), -42.0);
  const auto k = KernelFn::gaussian(1.0);
  EXPECT_DOUBLE_EQ(kernel_loss(Empirical{{2.0}, {1.0}}, 2.0, k), -1.0);
  const double k00 = k(0, 0), k01 = k(0, 1), k11 = k(1, 1);
  EXPECT_NEAR(kernel_loss(Empirical{{0.0, 1.0}, {.5, .5}}, 0.0, k),
              -(k00 + k01) + 0.25 * (k00 + 2 * k01 + k11), 1e-15);
}

TEST(KernelLoss, MonteCarloMatchesGaussianClosedForm) {
  // N(m, s) with Gaussian kernel width l: k(p,y) and k(p,p) are Gaussian integrals
  const double m = 0.5, s = 1.3, l = 0.8, y = 1.1;
  const double kpy = l / std::sqrt(l * l + s * s) * std::exp(-(y - m) * (y - m) / (2 * (l * l + s * s)));
  const double kpp = l / std::sqrt(l * l + 2 * s * s);
  const double exact = -2 * kpy + kpp;
  double sum = 0, sum2 = 0;
  const int reps = 40;
  for (int r = 0; r < reps; ++r) {
    const double v = kernel_loss(Normal{m, s}, y, KernelFn::gaussian(l), 2000, r);
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / reps, sd = std::sqrt(sum2 / reps - mean * mean);
  EXPECT_NEAR(mean, exact, 4 * sd / std::sqrt(reps));
  EXPECT_EQ(kernel_loss(Normal{m, s}, y, KernelFn::gaussian(l), 100, 9),
            kernel_loss(Normal{m, s}, y, KernelFn::gaussian(l), 100, 9));
}

TEST(KernelFn, SymmetryAndFlags) {
  for (const auto& k : {KernelFn::gaussian(0.7), KernelFn::laplace(2.0), KernelFn::constant(3.0)})
    EXPECT_DOUBLE_EQ(k(0.3, -1.2), k(-1.2, 0.3));
  EXPECT_TRUE(KernelFn::gaussian(1).characteristic());
  EXPECT_TRUE(KernelFn::laplace(1).characteristic());
  EXPECT_FALSE(KernelFn::constant(1).characteristic());
}

TEST(ConvolutionAdaptor, PureAtomsAreExact) {
  Rng rng(0);
  const Distribution p = Empirical{{0.0, 2.0, 3.5}, {0.2, 0.5, 0.3}};
  const auto f = convolution_adaptor(p, Normal{0, 0.7}, 0, rng);
  for (double y : {-1.0, 0.5, 2.2, 4.0}) {
    const double exact = (0.2 * phi(y / 0.7) + 0.5 * phi((y - 2) / 0.7) + 0.3 * phi((y - 3.5) / 0.7)) / 0.7;
    EXPECT_NEAR(f.pdf(y), exact, 1e-15);
  }
}

TEST(ConvolutionAdaptor, GaussianConvolutionWithinMcError) {
  const std::size_t m = 400;
  Rng rng(3);
  const auto f = convolution_adaptor(Normal{0, 1}, Normal{0, 1}, m, rng);
  const double target = phi(0.0 / std::sqrt(2.0)) / std::sqrt(2.0);
  // Var[q(-Z)] for q, Z standard normal
  const double e2 = 1.0 / (2 * M_PI) / std::sqrt(3.0);
  const double se = std::sqrt((e2 - target * target) / m);
  EXPECT_NEAR(f.pdf(0.0), target, 3 * se);
}

TEST(ConvolutionAdaptor, UnbiasedOverSeeds) {
  double s = 0;
  const int seeds = 200;
  for (int r = 0; r < seeds; ++r) {
    Rng rng(r);
    s += convolution_adaptor(Laplace{0, 1}, Normal{0, 0.5}, 10, rng).pdf(0.7);
  }
  // Laplace(0,1) * N(0,0.5) at 0.7 by quadrature
  const double exact = probreg::testing::simpson_fixed(
      [](double x) { return 0.5 * std::exp(-std::abs(x)) * phi((0.7 - x) / 0.5) / 0.5; }, -30, 30, 600000);
  EXPECT_NEAR(s / seeds, exact, 0.005);
}

TEST(ConvolutionAdaptor, RejectsZeroDrawsWithContinuousPart) {
  Rng rng(0);
  EXPECT_THROW(convolution_adaptor(Normal{0, 1}, Normal{0, 1}, 0, rng), DomainError);
}

TEST(ConvolutionLoss, GaussianMatchesClosedForm) {
  const Loss base = LogLoss{};
  // E[-log N(y+Z; 0, sqrt 2)] with Z ~ N(0,1)
  const double y = 0.4;
  const double exact = 0.5 * std::log(2 * M_PI * 2) + (y * y + 1) / 4;
  double s = 0;
  for (int r = 0; r < 20; ++r) s += convolution_loss(base, Normal{0, 1}, y, Normal{0, 1}, 400, r);
  EXPECT_NEAR(s / 20, exact, 0.02);
}

TEST(ConvolutionLoss, FourfoldDrawsHalveError) {
  const Loss base = LogLoss{};
  auto spread = [&](std::size_t m) {
    double s = 0, s2 = 0;
    for (int r = 0; r < 50; ++r) {
      const double v = convolution_loss(base, Normal{0, 1}, 0.3, Normal{0, 1}, m, 1000 + r);
      s += v;
      s2 += v * v;
    }
    return std::sqrt(s2 / 50 - (s / 50) * (s / 50));
  };
  const double ratio = spread(200) / spread(50);
  EXPECT_GT(ratio, 0.35);
  EXPECT_LT(ratio, 0.7);
}

TEST(ConvolutionLoss, ZeroDrawsRejected) {
  EXPECT_THROW(convolution_loss(LogLoss{}, Normal{0, 1}, 0.0, Normal{0, 1}, 0), DomainError);
}

TEST(SplitMixedLoss, PureContinuousReducesToContinuousLoss) {
  SplitMixedLoss spec;
  spec.alpha_c = 0.7;
  const Distribution p = Normal{1, 2};
  EXPECT_NEAR(split_mixed_loss(p, 0.3, spec), 0.7 * log_loss(p, 0.3), 1e-15);
}

TEST(SplitMixedLoss, PointMassOnLocus) {
  SplitMixedLoss spec;
  spec.locus = {0.0};
  EXPECT_DOUBLE_EQ(split_mixed_loss(Empirical{{0.0}, {1.0}}, 0.0, spec), 0.0);
  EXPECT_EQ(split_mixed_loss(Normal{0, 1}, 0.0, spec), kInf);
}

TEST(SplitMixedLoss, ProperOnAtomsPlusUniformFamily) {
  // truth: 0.3 on {0,1} with masses (0.4,0.6), 0.7 Uniform(0,1)
  SplitMixedLoss spec;
  spec.locus = {0.0, 1.0};
  const double tau = 0.3, w0 = 0.4;
  auto expected = [&](double t, double w, double c) {
    const Distribution p = Mixture{{Uniform{0, c}, Empirical{{0.0, 1.0}, {w, 1 - w}}}, {1 - t, t}};
    double e = tau * (w0 * split_mixed_loss(p, 0.0, spec) + (1 - w0) * split_mixed_loss(p, 1.0, spec));
    // continuous part of the truth: average over Uniform(0,1) by midpoint rule
    double c_part = 0;
    const int n = 200;
    for (int i = 0; i < n; ++i) c_part += split_mixed_loss(p, (i + 0.5) / n, spec) / n;
    return e + (1 - tau) * c_part;
  };
  double best = kInf, bt = 0, bw = 0, bc = 0;
  for (double t = 0.1; t <= 0.9001; t += 0.1)
    for (double w = 0.1; w <= 0.9001; w += 0.1)
      for (double c : {1.0, 1.25, 1.5, 2.0}) {
        const double e = expected(t, w, c);
        if (e < best) {
          best = e;
          bt = t;
          bw = w;
          bc = c;
        }
      }
  EXPECT_NEAR(bt, tau, 1e-9);
  EXPECT_NEAR(bw, w0, 1e-9);
  EXPECT_EQ(bc, 1.0);
}

TEST(Properness, LogAndGneitingMinimizedAtTruth) {
  for (const Loss& l : {Loss(LogLoss{}), Loss(GneitingLoss{})}) {
    const auto r = properness_probe(l, 3, 0.02, 20, 17);
    EXPECT_TRUE(r.proper()) << l.id() << " gap " << r.min_gap;
    EXPECT_TRUE(r.minimizer_at_truth()) << l.id() << " dist " << r.max_argmin_distance;
    EXPECT_FALSE(r.flat);
  }
}

TEST(Properness, ConstantKernelIsFlat) {
  const auto r = properness_probe(KernelLoss{KernelFn::constant(42)}, 3, 0.1, 5, 1);
  EXPECT_TRUE(r.flat);
  EXPECT_TRUE(r.proper());
}

TEST(Properness, GaussianKernelProper) {
  const auto r = properness_probe(KernelLoss{KernelFn::gaussian(1.0)}, 3, 0.05, 10, 2);
  EXPECT_TRUE(r.proper());
  EXPECT_TRUE(r.minimizer_at_truth());
}

TEST(Metadata, FlagsMatchTheory) {
  EXPECT_TRUE(Loss(LogLoss{}).properties().strictly_local);
  EXPECT_TRUE(Loss(LogLoss{}).properties().strictly_proper);
  EXPECT_FALSE(Loss(GneitingLoss{}).properties().strictly_local);
  EXPECT_TRUE(Loss(GneitingLoss{}).properties().strictly_proper);
  EXPECT_FALSE(Loss(KernelLoss{KernelFn::constant(1)}).properties().strictly_proper);
}

TEST(Parse, Identifiers) {
  for (const char* id : {"log", "gneiting", "crps", "meanvar"}) EXPECT_EQ(parse_loss(id).id(), id);
  EXPECT_DOUBLE_EQ(std::get<CappedLogLoss>(parse_loss("log_capped:1e-10").variant()).eps, 1e-10);
  EXPECT_EQ(std::get<KernelLoss>(parse_loss("kernel:gauss:0.5").variant()).kernel.param(), 0.5);
  const auto c = std::get<ConvolutionLoss>(parse_loss("conv:log:0.1:50").variant());
  EXPECT_EQ(c.m, 50u);
  EXPECT_THROW(parse_loss("nope"), ParseError);
  EXPECT_THROW(parse_loss("kernel:gauss:x"), ParseError);
}

TEST(Invariants, ClassicalCorrespondence) {
  std::mt19937_64 g(8);
  std::uniform_real_distribution<double> u(-10, 10), s(0.1, 5);
  for (int i = 0; i < 10000; ++i) {
    const double gx = u(g), sigma = s(g), y = u(g);
    const double lhs = log_loss(Normal{gx, sigma}, y);
    const double rhs = (gx - y) * (gx - y) / (2 * sigma * sigma) + 0.5 * std::log(2 * M_PI * sigma * sigma);
    ASSERT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(rhs)));
  }
}

TEST(Invariants, MeanVarianceBridge) {
  std::mt19937_64 g(9);
  std::uniform_real_distribution<double> u(-5, 5), s(0.1, 3);
  for (int i = 0; i < 1000; ++i) {
    const double mu = u(g), sd = s(g), y = u(g);
    EXPECT_NEAR(log_loss(Normal{mu, sd}, y), 0.5 * mean_variance_loss(mu, sd * sd, y) + 0.5 * std::log(2 * M_PI),
                1e-12 * std::max(1.0, std::abs(log_loss(Normal{mu, sd}, y))));
  }
}

TEST(Invariants, PushforwardLossIdentity) {
  std::mt19937_64 g(10);
  std::uniform_real_distribution<double> u(-2, 2), pos(0.3, 2);
  for (int i = 0; i < 100; ++i) {
    const std::vector<Distribution> ps{Normal{u(g), pos(g)}, Laplace{u(g), pos(g)},
                                       mixture(std::vector<Distribution>{Normal{u(g), pos(g)}, Normal{u(g), pos(g)}},
                                               std::vector<double>{0.4, 0.6})};
    const std::vector<Diffeomorphism> ts{Affine{pos(g) * (i % 2 ? 1 : -1), u(g)},
                                         Diffeomorphism(Affine{pos(g), u(g)}).then(Sigmoid{}),
                                         CdfOf{Distribution(Laplace{u(g), pos(g)})}};
    const auto& p = ps[i % 3];
    const auto& t = ts[(i / 3) % 3];
    const double y = u(g);
    const double lhs = log_loss(pushforward(p, t), t.forward(y));
    const double rhs = log_loss(p, y) + std::log(std::abs(t.derivative(y)));
    EXPECT_NEAR(lhs, rhs, 1e-10);
  }
}

TEST(Invariants, LogLossConvexInMixture) {
  std::mt19937_64 g(12);
  std::uniform_real_distribution<double> u(-2, 2), pos(0.3, 2), w(0.05, 1);
  for (int i = 0; i < 200; ++i) {
    const std::vector<Distribution> ps{Normal{u(g), pos(g)}, Laplace{u(g), pos(g)}, Uniform{-3, 3}};
    std::vector<double> ws{w(g), w(g), w(g)};
    const double s = ws[0] + ws[1] + ws[2];
    for (auto& x : ws) x /= s;
    const double y = u(g);
    double avg = 0;
    for (int k = 0; k < 3; ++k) avg += ws[k] * log_loss(ps[k], y);
    EXPECT_LE(log_loss(mixture(ps, ws), y), avg + 1e-12);
  }
}

TEST(Invariants, ExpectedGapIsKl) {
  std::mt19937_64 g(13);
  std::uniform_real_distribution<double> u(0.05, 1);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> p(4), q(4);
    double sp = 0, sq = 0;
    for (int k = 0; k < 4; ++k) {
      sp += p[k] = u(g);
      sq += q[k] = u(g);
    }
    double kl = 0, gap = 0;
    for (int k = 0; k < 4; ++k) {
      p[k] /= sp;
      q[k] /= sq;
    }
    const Distribution P = Categorical{{0, 1, 2, 3}, p}, Q = Categorical{{0, 1, 2, 3}, q};
    for (int k = 0; k < 4; ++k) {
      kl += p[k] * std::log(p[k] / q[k]);
      gap += p[k] * (log_loss(Q, k) - log_loss(P, k));
    }
    EXPECT_NEAR(gap, kl, 1e-10);
  }
}

TEST(Crps, LabelRangeBindsWeight) {
  const Loss l = Crps{};
  const auto bound = l.with_label_range(0, 10);
  const auto& c = std::get<Crps>(bound.variant());
  ASSERT_TRUE(c.weight.has_value());
  EXPECT_DOUBLE_EQ(c.weight->mean(), 5.0);
  EXPECT_DOUBLE_EQ(c.weight->stddev(), 5.0);
}
