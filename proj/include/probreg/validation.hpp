#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "probreg/learners.hpp"

namespace probreg {

/// Per-point losses with mean and standard error sqrt(sum (L_i - mean)^2 / (M (M - 1))).
struct LossSample {
  std::vector<double> losses;
  double mean = 0.0;
  double stderr_ = 0.0;
  std::string model;
  int fold = -1;
  /// Number of +inf losses; when nonzero the mean is +inf.
  std::size_t n_infinite = 0;

  bool infinite() const { return n_infinite > 0; }
};

LossSample summarize(std::vector<double> losses, std::string model = {}, int fold = -1);

/// Out-of-sample loss estimate of a batch against its labels.
LossSample estimate_generalization(const PredictedBatch& batch, std::span<const double> y, const Loss& loss);

struct CvOptions {
  /// Aggregate stderr from all pooled per-point losses instead of the mean of fold stderrs.
  bool pooled_se = false;
  bool parallel = true;
};

struct CvResult {
  std::vector<LossSample> folds;
  LossSample aggregate;
  /// Per-row losses in dataset order (each row is tested exactly once).
  std::vector<double> pointwise;
  /// Per-row out-of-fold predictions in dataset order.
  std::vector<Distribution> predictions;
  std::vector<std::vector<std::size_t>> fold_indices;
};

/// k-fold CV: splits from `split_seed` (shared across models), fold f fitted with derive_seed(fit_seed, {f}).
CvResult kfold_cv(const ProbEstimator& e, const Dataset& d, std::size_t k, const Loss& loss, std::uint64_t split_seed,
                  std::uint64_t fit_seed, const CvOptions& opt = {});

enum class Alternative { two_sided, less, greater };
enum class TestKind { wilcoxon, paired_t };

std::string to_string(TestKind t);
std::string to_string(Alternative a);

struct ComparisonResult {
  TestKind test = TestKind::wilcoxon;
  Alternative alternative = Alternative::two_sided;
  double statistic = 0.0;
  double p_value = 1.0;
  /// Sign of the mean difference (+1: first argument has larger loss).
  int direction = 0;
  std::size_t n = 0;
  /// Pairs excluded because the difference was not finite.
  std::size_t n_dropped = 0;
  bool exact = false;
  /// All differences zero; reported with p = 1.
  bool degenerate = false;
};

/// Signed-rank test on W+ (sum of ranks of positive differences). Zero and non-finite
/// differences are dropped; ties get average ranks. Exact for n <= 25, normal approximation
/// with tie and continuity correction beyond. All-zero input raises DegenerateSample.
ComparisonResult wilcoxon_signed_rank(std::span<const double> diffs, Alternative alt = Alternative::two_sided);

/// One-sample t-test of the mean difference, n - 1 degrees of freedom.
ComparisonResult paired_t_test(std::span<const double> diffs, Alternative alt = Alternative::two_sided);

/// Dispatches on `kind`; degenerate input is reported as p = 1 instead of raising.
ComparisonResult paired_test(std::span<const double> diffs, TestKind kind, Alternative alt);

/// Pairwise two-sided tests of L_i - L_j for all model pairs; entry [i][i] is empty.
struct ComparisonMatrix {
  std::vector<std::string> models;
  std::vector<std::vector<std::optional<ComparisonResult>>> cells;
};

ComparisonMatrix compare_models(const std::vector<PredictedBatch>& batches, std::span<const double> y,
                                const Loss& loss, TestKind test = TestKind::wilcoxon);
ComparisonMatrix compare_losses(const std::vector<std::string>& models, const std::vector<std::vector<double>>& losses,
                                TestKind test = TestKind::wilcoxon);

struct ResultCell {
  std::string model;
  std::string task;
  double mean = 0.0;
  double stderr_ = 0.0;
  bool tuned = false;
  bool failed = false;
  int rank = 0;
};

/// Ranked results: rank 1 is the lowest loss per task, failed cells rank last; rows ordered
/// by mean rank across tasks.
struct ResultTable {
  std::vector<std::string> tasks;
  std::vector<std::string> models;
  /// cells[row][task], rows in ranked order.
  std::vector<std::vector<ResultCell>> cells;
  std::vector<double> mean_rank;

  std::string to_markdown() const;
};

ResultTable result_table(const std::vector<ResultCell>& cells);

/// "(rank) mean±stderr" with 4 significant digits and a trailing '*' for tuned models.
std::string format_cell(const ResultCell& c);

struct EntropyEstimates {
  LossSample h_y;
  LossSample h_y_given_x;
  double gap = 0.0;
  double gap_stderr = 0.0;
};

EntropyEstimates entropy_estimates(const PredictedBatch& informed, const PredictedBatch& uninformed,
                                   std::span<const double> y, const Loss& loss);

/// Synthetic truth for the bias-variance probe.
struct SyntheticTruth {
  std::function<Eigen::MatrixXd(std::size_t, Rng&)> features;
  std::function<Distribution(const Eigen::RowVectorXd&)> conditional;
};

struct BiasVarianceReport {
  double total = 0, err = 0, var = 0, bias = 0, dbias = 0, pbias = 0;
  double err_se = 0, var_se = 0, bias_se = 0, dbias_se = 0, pbias_se = 0;
  /// Label shift a minimizing the loss of the averaged prediction at y - a.
  double shift = 0;
  std::size_t replicates = 0, n_test = 0;
};

/// Monte Carlo decomposition total = Err + Var + Bias over `replicates` training sets of size
/// n_train and n_test test draws; Bias = DBias + PBias with DBias from the best label shift.
BiasVarianceReport bias_variance_probe(const ProbEstimator& strategy, const SyntheticTruth& truth,
                                       std::size_t n_train, std::size_t replicates, std::size_t n_test,
                                       const Loss& loss, std::uint64_t seed);

}  // namespace probreg
