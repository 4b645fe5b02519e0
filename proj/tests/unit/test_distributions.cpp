#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "probreg/distribution.hpp"
#include "probreg/error.hpp"
#include "test_util.hpp"

using namespace probreg;
using probreg::testing::phi;

namespace {

std::vector<Distribution> continuous_zoo() {
  return {
      Normal{0.3, 1.7},
      Laplace{-1.0, 0.6},
      Uniform{-2.0, 5.0},
      KernelDensity{{-1.0, 0.5, 3.0}, {0.4, 0.8, 0.3}, {0.2, 0.5, 0.3}, KernelShape::gaussian},
      KernelDensity{{0.0, 2.0}, {0.5, 0.5}, {0.5, 0.5}, KernelShape::laplace},
      Histogram{{0.0, 1.0, 1.5, 4.0}, {0.2, 0.5, 0.3}},
      mixture(std::vector<Distribution>{Normal{0, 1}, Normal{4, 0.5}}, std::vector<double>{0.3, 0.7}),
      logistic(1.0, 2.0),
      pushforward(Normal{0, 1}, Sigmoid{}),
      pullback(Uniform{0, 1}, Sigmoid{}),
  };
}

}  // namespace

TEST(Pdf, Examples) {
  EXPECT_NEAR(Distribution(Normal{0, 1}).pdf(0), 1.0 / std::sqrt(2 * M_PI), 1e-15);
  EXPECT_DOUBLE_EQ(Distribution(Uniform{0, 1}).pdf(0.5), 1.0);
  const auto m = mixture(std::vector<Distribution>{Normal{0, 1}, Normal{4, 1}}, std::vector<double>{.5, .5});
  EXPECT_NEAR(m.pdf(2), 0.5 * phi(2) + 0.5 * phi(-2), 1e-15);
}

TEST(Pdf, AtomsUseMassSemantics) {
  const Distribution e = Empirical{{1, 2, 2, 3}, {0.25, 0.25, 0.25, 0.25}};
  EXPECT_DOUBLE_EQ(e.pdf(2), 0.5);
  EXPECT_DOUBLE_EQ(e.pdf(2.5), 0.0);
  const Distribution mixed = Mixture{{Normal{0, 1}, Empirical{{0.0}, {1.0}}}, {0.6, 0.4}};
  EXPECT_EQ(mixed.kind(), Kind::mixed);
  EXPECT_DOUBLE_EQ(mixed.pdf(0.0), 0.4);
  EXPECT_NEAR(mixed.pdf(1.0), 0.6 * phi(1.0), 1e-15);
}

TEST(Cdf, Examples) {
  EXPECT_DOUBLE_EQ(Distribution(Normal{0, 1}).cdf(0), 0.5);
  EXPECT_NEAR(Distribution(Empirical{{1, 2, 3}, {1. / 3, 1. / 3, 1. / 3}}).cdf(2), 2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(Distribution(Uniform{0, 2}).cdf(0.5), 0.25);
}

TEST(Cdf, RightContinuousAtAtoms) {
  const Distribution e = Empirical{{0.0, 1.0}, {0.3, 0.7}};
  EXPECT_DOUBLE_EQ(e.cdf(0.0), 0.3);
  EXPECT_DOUBLE_EQ(e.cdf(std::nextafter(0.0, -1.0)), 0.0);
}

TEST(Lp2, ClosedForms) {
  EXPECT_DOUBLE_EQ(Distribution(Uniform{0, 2}).lp2_norm_sq(), 0.5);
  EXPECT_DOUBLE_EQ(Distribution(Categorical{{0, 1}, {.5, .5}}).lp2_norm_sq(), 0.5);
  const double oracle = probreg::testing::simpson_fixed([](double y) { return phi(y) * phi(y); }, -12, 12);
  EXPECT_NEAR(Distribution(Normal{0, 1}).lp2_norm_sq(), oracle, 1e-10);
  EXPECT_NEAR(oracle, 0.282095, 1e-6);
}

TEST(Lp2, NumericMatchesOracleForEveryContinuousVariant) {
  for (const auto& d : continuous_zoo()) {
    const auto r = d.effective_range();
    const double oracle = probreg::testing::simpson_fixed([&](double y) { return d.pdf(y) * d.pdf(y); }, r.lo, r.hi, 400000);
    EXPECT_NEAR(d.lp2_norm_sq(), oracle, 1e-5) << d.variant_name();
  }
}

TEST(Lp2, MixedRejected) {
  const Distribution mixed = Mixture{{Normal{0, 1}, Empirical{{0.0}, {1.0}}}, {0.5, 0.5}};
  EXPECT_THROW(mixed.lp2_norm_sq(), UnsupportedKind);
}

TEST(Moments, UniformAndQuantile) {
  const auto m = Distribution(Uniform{0, 1}).moments();
  EXPECT_DOUBLE_EQ(m.mean, 0.5);
  EXPECT_NEAR(m.std, 1 / std::sqrt(12.0), 1e-15);
  EXPECT_NEAR(Distribution(Normal{0, 1}).quantile(0.5), 0.0, 1e-15);
  EXPECT_THROW(Distribution(Normal{0, 1}).quantile(0.0), DomainError);
  EXPECT_THROW(Distribution(Normal{0, 1}).quantile(1.0), DomainError);
}

TEST(Moments, NumericAgreesWithQuadratureOracle) {
  for (const auto& d : continuous_zoo()) {
    const auto r = d.effective_range();
    const double m = probreg::testing::simpson_fixed([&](double y) { return y * d.pdf(y); }, r.lo, r.hi, 400000);
    const double v = probreg::testing::simpson_fixed([&](double y) { return (y - m) * (y - m) * d.pdf(y); }, r.lo, r.hi, 400000);
    EXPECT_NEAR(d.mean(), m, 1e-5) << d.variant_name();
    EXPECT_NEAR(d.stddev(), std::sqrt(v), 1e-5) << d.variant_name();
  }
}

TEST(Sample, MeanOfNormal) {
  Rng rng(0);
  const auto xs = Distribution(Normal{3, 1}).sample(rng, 100000);
  double s = 0;
  for (double x : xs) s += x;
  EXPECT_NEAR(s / xs.size(), 3.0, 0.02);
}

TEST(Sample, ReproducibleUnderSeed) {
  Rng a(7), b(7);
  const auto d = continuous_zoo()[6];
  EXPECT_EQ(d.sample(a, 50), d.sample(b, 50));
}

TEST(Quantile, LowerInverseReturnsAtom) {
  const Distribution e = Empirical{{1, 2, 3}, {0.25, 0.5, 0.25}};
  EXPECT_EQ(e.quantile(0.25), 1.0);
  EXPECT_EQ(e.quantile(0.26), 2.0);
  EXPECT_EQ(e.quantile(0.75), 2.0);
  const Distribution mixed = Mixture{{Uniform{0, 1}, Empirical{{0.5}, {1.0}}}, {0.5, 0.5}};
  // cdf jumps from 0.25 to 0.75 at 0.5
  EXPECT_EQ(mixed.quantile(0.3), 0.5);
  EXPECT_EQ(mixed.quantile(0.75), 0.5);
}

TEST(Quantile, InvertsCdfForContinuousVariants) {
  for (const auto& d : continuous_zoo())
    for (double a : {0.01, 0.2, 0.5, 0.77, 0.99}) EXPECT_NEAR(d.cdf(d.quantile(a)), a, 1e-9) << d.variant_name();
}

TEST(Mixture, Examples) {
  const Distribution d = Laplace{1, 2};
  const auto m = mixture(std::vector<Distribution>{d, d, d}, std::vector<double>{1. / 3, 1. / 3, 1. / 3});
  const auto one = mixture(std::vector<Distribution>{Normal{0, 1}}, std::vector<double>{1.0});
  for (double y : {-3.0, 0.0, 0.7, 5.0}) {
    EXPECT_EQ(m.pdf(y), d.pdf(y));
    EXPECT_EQ(one.pdf(y), Distribution(Normal{0, 1}).pdf(y));
  }
  const Distribution raw = Mixture{{Normal{0, 1}, Uniform{0, 2}}, {0.25, 0.75}};
  for (double y : {-1.0, 0.3, 1.9})
    EXPECT_NEAR(raw.cdf(y), 0.25 * 0.5 * std::erfc(-y / std::sqrt(2.0)) + 0.75 * std::clamp(y / 2, 0.0, 1.0), 1e-15);
}

TEST(Mixture, RejectsBadWeights) {
  std::vector<Distribution> c{Normal{0, 1}, Normal{1, 1}};
  EXPECT_THROW(mixture(c, std::vector<double>{0.5, 0.6}), InvalidWeights);
  EXPECT_THROW(mixture(c, std::vector<double>{-0.5, 1.5}), InvalidWeights);
  EXPECT_THROW(mixture(c, std::vector<double>{1.0}), ShapeError);
}

TEST(Mixture, PdfIsWeightedSum) {
  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> u(-3, 3);
  const auto zoo = continuous_zoo();
  const std::vector<double> w{0.1, 0.2, 0.3, 0.4};
  const std::vector<Distribution> comps{zoo[0], zoo[1], zoo[3], zoo[5]};
  const auto m = mixture(comps, w);
  for (int i = 0; i < 100; ++i) {
    const double y = u(g);
    double s = 0;
    for (std::size_t k = 0; k < 4; ++k) s += w[k] * comps[k].pdf(y);
    EXPECT_NEAR(m.pdf(y), s, 1e-12);
  }
}

TEST(Pushforward, AffineSimplifies) {
  const auto p = pushforward(Normal{1, 2}, Affine{-3, 1});
  ASSERT_NE(p.get_if<Normal>(), nullptr);
  EXPECT_DOUBLE_EQ(p.get_if<Normal>()->mu, -2.0);
  EXPECT_DOUBLE_EQ(p.get_if<Normal>()->sigma, 6.0);
  EXPECT_NE(pushforward(Laplace{0, 1}, Affine{2, 0}).get_if<Laplace>(), nullptr);
  EXPECT_NE(pushforward(Uniform{0, 1}, Affine{-1, 0}).get_if<Uniform>(), nullptr);
}

TEST(Pushforward, SigmoidPullbackOfUniform) {
  const auto p = pullback(Uniform{0, 1}, Sigmoid{});
  for (double x : {-4.0, -0.5, 0.0, 1.3, 6.0}) {
    const double s = 1 / (1 + std::exp(-x));
    EXPECT_NEAR(p.pdf(x), s * (1 - s), 1e-15);
  }
}

TEST(Pushforward, RoundTrip) {
  const Diffeomorphism t = Diffeomorphism(Affine{2, 1}).then(Sigmoid{});
  for (const auto& d : continuous_zoo()) {
    const auto back = pullback(pushforward(d, t), t);
    for (double y : {-1.5, 0.1, 0.9, 2.2}) EXPECT_NEAR(back.pdf(y), d.pdf(y), 1e-10) << d.variant_name();
  }
}

TEST(Pushforward, CompositionMatchesComposedMap) {
  std::mt19937_64 g(11);
  std::uniform_real_distribution<double> u(-4, 4);
  const Diffeomorphism t = Sigmoid{};
  const Diffeomorphism uu = CdfOf{Distribution(Uniform{0, 1})};
  const Diffeomorphism t2 = Diffeomorphism(Affine{0.5, -1}).then(Sigmoid{});
  const Diffeomorphism u2 = Logit{};
  for (const auto& p : continuous_zoo()) {
    const Distribution nested = Pushforward{Pushforward{p, t2}, u2};
    const Distribution composed = Pushforward{p, Composed{{t2, u2}}};
    for (int i = 0; i < 100; ++i) {
      const double z = u(g);
      EXPECT_NEAR(nested.pdf(z), composed.pdf(z), 1e-9);
    }
    const Distribution n2 = Pushforward{Pushforward{p, t}, uu};
    const Distribution c2 = Pushforward{p, Composed{{t, uu}}};
    for (int i = 0; i < 20; ++i) {
      const double z = 0.05 + 0.9 * (u(g) + 4) / 8;
      EXPECT_NEAR(n2.pdf(z), c2.pdf(z), 1e-9);
    }
  }
}

TEST(Pushforward, DiscreteMapsAtoms) {
  const auto p = pushforward(Empirical{{0.0, 1.0}, {0.4, 0.6}}, Sigmoid{});
  EXPECT_DOUBLE_EQ(p.pdf(0.5), 0.4);
  EXPECT_EQ(p.kind(), Kind::discrete);
}

TEST(Pushforward, SingularTransformDetected) {
  const Distribution gap = Histogram{{0, 1, 2, 3}, {0.5, 0.0, 0.5}};
  const Distribution p = Pushforward{Uniform{0, 3}, CdfOf{gap}};
  EXPECT_THROW(p.pdf(0.5), SingularTransform);
}

TEST(Invariants, DensityIntegratesToOne) {
  for (const auto& d : continuous_zoo()) {
    const auto r = d.effective_range();
    const double total = probreg::testing::simpson_fixed([&](double y) { return d.pdf(y); }, r.lo, r.hi, 1000000);
    EXPECT_NEAR(total, 1.0, 1e-6) << d.variant_name();
    EXPECT_NEAR(integrate_over(d, [&](double y) { return d.pdf(y); }), 1.0, 1e-6) << d.variant_name();
  }
}

TEST(Invariants, CdfMonotoneWithLimits) {
  auto zoo = continuous_zoo();
  zoo.push_back(Categorical{{0, 1, 2}, {.2, .3, .5}});
  zoo.push_back(Mixture{{Normal{0, 1}, Empirical{{0.0, 2.0}, {.5, .5}}}, {.5, .5}});
  for (const auto& d : zoo) {
    const auto r = d.effective_range();
    double prev = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const double y = r.lo - 1 + (r.hi - r.lo + 2) * i / 999.0;
      const double c = d.cdf(y);
      EXPECT_GE(c, prev - 1e-15);
      EXPECT_GE(c, 0.0);
      EXPECT_LE(c, 1.0);
      prev = c;
    }
    EXPECT_NEAR(d.cdf(-1e300), 0.0, 1e-9) << d.variant_name();
    EXPECT_NEAR(d.cdf(1e300), 1.0, 1e-9) << d.variant_name();
  }
}

TEST(Invariants, SamplesMatchCdf) {
  auto zoo = continuous_zoo();
  zoo.push_back(Mixture{{Normal{0, 1}, Uniform{3, 4}}, {.5, .5}});
  for (const auto& d : zoo) {
    Rng rng(2024);
    const auto xs = d.sample(rng, 100000);
    EXPECT_LT(probreg::testing::ks_distance(xs, [&](double y) { return d.cdf(y); }), 0.01) << d.variant_name();
  }
}

TEST(Invariants, SingleComponentMixtureIdentical) {
  for (const auto& d : continuous_zoo()) {
    const Distribution raw = Mixture{{d}, {1.0}};
    for (double y : {-2.0, 0.0, 0.4, 3.3}) {
      EXPECT_EQ(raw.pdf(y), d.pdf(y));
      EXPECT_EQ(raw.cdf(y), d.cdf(y));
    }
  }
}

TEST(Diffeomorphism, InverseAndDerivative) {
  const Distribution lap = Laplace{0.5, 1.5};
  const std::vector<Diffeomorphism> maps{
      Affine{-2, 3},
      Sigmoid{},
      CdfOf{Distribution(Normal{1, 2})},
      Diffeomorphism(Affine{0.5, 0}).then(Sigmoid{}).then(QuantileOf{lap}),
      Diffeomorphism(CdfOf{Distribution(logistic(0, 1))}).then(Logit{}).then(Affine{3, -1}),
  };
  for (const auto& t : maps)
    for (double x : {-2.5, -0.3, 0.0, 0.8, 2.0}) {
      EXPECT_NEAR(t.inverse(t.forward(x)), x, 1e-9) << t.variant_name();
      const double h = 1e-5;
      const double fd = (t.forward(x + h) - t.forward(x - h)) / (2 * h);
      EXPECT_NEAR(t.derivative(x), fd, 1e-5 * std::abs(fd)) << t.variant_name();
      EXPECT_NEAR(t.inverse_derivative(t.forward(x)) * t.derivative(x), 1.0, 1e-9);
    }
  const Diffeomorphism lg = Logit{};
  for (double x : {0.1, 0.5, 0.93}) EXPECT_NEAR(lg.inverse(lg.forward(x)), x, 1e-12);
}

TEST(Diffeomorphism, ThenCancelsInverse) {
  const Diffeomorphism t = Diffeomorphism(Affine{2, 1}).then(Sigmoid{});
  const auto id = t.then(t.inverted());
  ASSERT_NE(id.get_if<Composed>(), nullptr);
  EXPECT_TRUE(id.get_if<Composed>()->maps.empty());
}

TEST(Json, SeventeenDigits) {
  EXPECT_EQ(Distribution(Normal{0.1, 1}).to_json(),
            "{\"variant\":\"Normal\",\"params\":{\"mu\":0.10000000000000001,\"sigma\":1}}");
  const auto j = pushforward(Uniform{0, 1}, Logit{}).to_json();
  EXPECT_NE(j.find("\"map\":\"Logit\""), std::string::npos);
}

TEST(Construction, Validation) {
  EXPECT_THROW(Distribution(Normal{0, 0}), DomainError);
  EXPECT_THROW(Distribution(Uniform{1, 1}), DomainError);
  EXPECT_THROW(Diffeomorphism(Affine{0, 1}), DomainError);
  EXPECT_THROW(Distribution(Histogram{{0, 1}, {0.5, 0.5}}), ShapeError);
  EXPECT_THROW(Distribution(Pushforward{Distribution(Empirical{{0.0}, {1.0}}), Sigmoid{}}), UnsupportedKind);
}

TEST(Decompose, SplitsMixedLaw) {
  const Distribution m = Mixture{{Normal{0, 1}, Empirical{{0.0, 1.0}, {.5, .5}}, Uniform{0, 1}}, {.2, .4, .4}};
  const auto dec = decompose(m);
  EXPECT_NEAR(dec.alpha_c, 0.6, 1e-15);
  EXPECT_NEAR(dec.alpha_d, 0.4, 1e-15);
  ASSERT_EQ(dec.atoms.size(), 2u);
  EXPECT_NEAR(dec.continuous->pdf(0.5), (0.2 * phi(0.5) + 0.4) / 0.6, 1e-14);
}
