#include <gtest/gtest.h>

#include "probreg/composite.hpp"
#include "probreg/error.hpp"
#include "probreg/meta.hpp"
#include "probreg/model_spec.hpp"

using namespace probreg;

namespace {

std::size_t error_offset(std::string_view text) {
  try {
    parse_estimator(text);
  } catch (const ParseError& e) {
    return e.offset();
  }
  ADD_FAILURE() << "no ParseError for " << text;
  return std::string::npos;
}

const std::vector<std::string> kVocabulary{
    "N(p=C(mean(y)), s=C(std(y)))",
    "N(p=LR, s=C(std(y)))",
    "N(p=LR, s=RE(p, C(mean(y))))",
    "N(p=LR, s=Min(RE(p, C(std(y)))))",
    "N(p=LR, s=Min(RE(p, LR, abs), 0;0.5;1))",
    "Laplace(p=KNN(k=5;10;20), s=RE(p, KNN(k=10), log))",
    "Uniform(p=KRR(lambda=0.1;1, gamma=0.5, scale=true), s=C(2.5))",
    "N(p=C(median(y)), s=C(quantile(y, 0.75)))",
    "Cap(N(p=LR, s=C(std(y))), eps=1e-10, ref=uniform01)",
    "Cap(N(p=LR, s=C(std(y))), eps=0.01, ref=sigmoid)",
    "Baseline(kernel)",
    "Baseline(hist)",
    "Baseline(normal)",
    "Classical(LR, kernel)",
    "Elicit(Laplace, KNN(k=7))",
    "Elicit(Uniform, KNN(k=9), alpha=0.2)",
    "Bag(N(p=LR, s=C(std(y))), n=10, frac=0.8, boot=false)",
    "BoostGreedy(k=3, alpha=0.1)",
    "BoostGreedy(N(p=LR, s=C(1)), k=2, alpha=0.05)",
    "BoostGentle(M=4, alpha=0.5, gamma=0.3)",
};

}  // namespace

TEST(ModelSpec, ParsesConstantPair) {
  auto e = parse_estimator("N(p=C(mean(y)), s=C(std(y)))");
  Eigen::MatrixXd X(2, 1);
  X << 0, 1;
  e->fit(Dataset(X, Eigen::Vector2d(0, 2)));
  const auto b = e->predict(X);
  EXPECT_NEAR(b[0].mean(), 1.0, 1e-14);
  EXPECT_NEAR(b[1].stddev(), 1.0, 1e-14);
  EXPECT_FALSE(e->tuned());
}

TEST(ModelSpec, NestedMinResidualConstant) {
  auto e = parse_estimator("N(p=LR, s=Min(RE(p, C(std(y)))))");
  const auto* pe = dynamic_cast<const ParametricEstimator*>(e.get());
  ASSERT_NE(pe, nullptr);
  EXPECT_NE(dynamic_cast<const Ols*>(&pe->location()), nullptr);
  const auto* min = dynamic_cast<const MinWrapper*>(&pe->dispersion());
  ASSERT_NE(min, nullptr);
  const auto* re = dynamic_cast<const ResidualLearner*>(&min->inner());
  ASSERT_NE(re, nullptr);
  EXPECT_NE(dynamic_cast<const Constant*>(&re->learner()), nullptr);
  EXPECT_TRUE(e->tuned());
}

TEST(ModelSpec, ErrorOffsets) {
  EXPECT_EQ(error_offset("N(p=)"), 4u);
  EXPECT_EQ(error_offset(""), 0u);
  EXPECT_EQ(error_offset("N(p=LR, s=C(1)"), 14u);
  EXPECT_EQ(error_offset("Foo(p=LR)"), 0u);
  EXPECT_EQ(error_offset("N(p=LR, s=QQ)"), 10u);
  EXPECT_EQ(error_offset("N(p=LR, s=C(1)) x"), 16u);
  EXPECT_EQ(error_offset("N(p=LR, s=C(1), q=2)"), 16u);
  EXPECT_EQ(error_offset("N(p=LR)"), 0u);
  EXPECT_EQ(error_offset("Baseline(kernel, hist)"), 17u);
  EXPECT_EQ(error_offset("N(p=KNN(k=0), s=C(1))"), 4u);
  EXPECT_EQ(error_offset("LR"), 0u);
}

TEST(ModelSpec, ResidualOnlyInDispersionSlot) {
  EXPECT_EQ(error_offset("N(p=RE(p, LR), s=C(1))"), 4u);
  EXPECT_EQ(error_offset("RE(p, LR)"), 0u);
  EXPECT_EQ(error_offset("N(p=Min(RE(p, LR)), s=C(1))"), 8u);
  EXPECT_EQ(error_offset("N(p=LR, s=RE(p, RE(p, LR)))"), 16u);
  EXPECT_EQ(error_offset("Classical(RE(p, LR))"), 10u);
  EXPECT_NO_THROW(parse_estimator("N(p=LR, s=Min(RE(p, LR)))"));
}

TEST(ModelSpec, WhitespaceInsensitive) {
  EXPECT_EQ(parse_model_spec(" N ( p = LR ,s=C( std ( y ) ) ) "), parse_model_spec("N(p=LR, s=C(std(y)))"));
  EXPECT_FALSE(parse_model_spec("N(p=LR, s=C(1))") == parse_model_spec("N(p=LR, s=C(2))"));
}

TEST(ModelSpec, RenderRoundTrip) {
  for (const auto& s : kVocabulary) {
    SCOPED_TRACE(s);
    const auto tree = parse_model_spec(s);
    EXPECT_EQ(parse_model_spec(render(tree)), tree);
    EXPECT_EQ(render(tree), s);
    const auto e = build_estimator(tree);
    EXPECT_EQ(parse_model_spec(e->render()), tree);
    EXPECT_EQ(parse_estimator(e->render())->render(), e->render());
  }
}

TEST(ModelSpec, DefaultsRenderExplicitly) {
  EXPECT_EQ(parse_estimator("N(p=KNN, s=C(1))")->render(), "N(p=KNN(k=5), s=C(1))");
  EXPECT_EQ(parse_estimator("Classical(LR)")->render(), "Classical(LR, normal)");
}

TEST(ModelSpec, StdDenominator) {
  Eigen::MatrixXd X(2, 1);
  X << 0, 1;
  const Dataset d(X, Eigen::Vector2d(0, 2));
  auto e = parse_estimator("N(p=C(mean(y)), s=C(std(y)))", {.ddof = 1});
  e->fit(d);
  EXPECT_NEAR(e->predict(X)[0].stddev(), std::sqrt(2.0), 1e-14);
}

TEST(ModelSpec, SplitList) {
  const auto v = split_specs("N(p=LR, s=C(std(y))), Baseline(kernel) ,LR");
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v[0], "N(p=LR, s=C(std(y)))");
  EXPECT_EQ(v[1], "Baseline(kernel)");
  EXPECT_EQ(v[2], "LR");
  EXPECT_THROW(split_specs("LR,,LR"), ParseError);
}
