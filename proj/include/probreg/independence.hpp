#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "probreg/learners.hpp"
#include "probreg/validation.hpp"

namespace probreg {

/// Tests "the informed predictor is no better than the uninformed one" on a held-out set:
/// one-sided test of L_uninformed - L_informed > 0. Rejection certifies dependence of Y on X.
/// All-zero differences are reported with p = 1 and `degenerate` set.
ComparisonResult predictive_independence_test(const Dataset& train, const Dataset& test,
                                              const ProbEstimator& informed, const ProbEstimator& uninformed,
                                              const Loss& loss = LogLoss{}, TestKind kind = TestKind::wilcoxon,
                                              std::uint64_t seed = 0);

/// Default pair: N(p=LR, s=RE(p, C(mean(y)))) against N(p=C(mean(y)), s=C(std(y))).
ComparisonResult predictive_independence_test(const Dataset& train, const Dataset& test,
                                              TestKind kind = TestKind::wilcoxon, std::uint64_t seed = 0);

/// Probability of class +1 for each test row, given training rows labelled +1 / -1.
using ClassProbFn = std::function<std::vector<double>(const Eigen::MatrixXd& X_train, std::span<const int> labels,
                                                      const Eigen::MatrixXd& X_test, std::uint64_t seed)>;

/// kNN class-frequency classifier with (count + 1) / (k + 2) smoothing, k chosen from `ks`
/// by inner `folds`-fold CV log-loss (earlier k wins ties).
ClassProbFn knn_class_frequency(std::vector<std::size_t> ks = {5, 15, 31}, std::size_t folds = 5);

/// P(+1) equal to the training class frequency for every row.
ClassProbFn class_frequency_only();

struct TwoSampleOptions {
  double split = 0.5;
  TestKind test = TestKind::paired_t;
  ClassProbFn classifier;  // empty means knn_class_frequency()
};

/// Merges the samples with source labels +1 / -1, splits them stratified, trains the classifier
/// and tests the informed log-losses against the training-frequency entropy (one-sided).
ComparisonResult two_sample_test(const Eigen::MatrixXd& s1, const Eigen::MatrixXd& s2, std::uint64_t seed,
                                 const TwoSampleOptions& opt = {});

/// (1/N1^2) sum k(a,a') + (1/N2^2) sum k(b,b') - (2/(N1 N2)) sum k(a,b).
double mmd_statistic(std::span<const double> s1, std::span<const double> s2, const KernelFn& k);

struct MmdIdentity {
  /// In-sample kernel-loss of the class-conditional empirical predictor minus that of the pooled one.
  double predictive_difference = 0.0;
  double mmd = 0.0;
  /// -(N1 N2 / N^2) * mmd, the value the predictive difference actually takes.
  double scaled_mmd = 0.0;
};

/// Evaluates both sides of the predictive MMD identity on the pooled sample, class = source.
MmdIdentity mmd_identity_check(std::span<const double> s1, std::span<const double> s2, const KernelFn& k);

}  // namespace probreg
