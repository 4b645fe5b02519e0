#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "probreg/composite.hpp"

namespace probreg {

/// Uniform mixture of members fitted on seeded resamples.
class Bagging final : public ProbEstimator {
 public:
  Bagging(std::unique_ptr<ProbEstimator> base, std::size_t n_estimators, double max_samples = 1.0,
          bool bootstrap = true);

  std::unique_ptr<ProbEstimator> clone() const override { return std::make_unique<Bagging>(*this); }
  ParamMap get_params() const override;
  void set_params(const ParamMap& p) override;
  ParamGrid grid() const override { return with_prefix(base_->grid(), "base."); }
  std::string render() const override;
  const std::vector<Box<ProbEstimator>>& members() const { return members_; }

 private:
  void fit_impl(const Dataset& d, std::uint64_t seed) override;
  std::vector<Distribution> predict_impl(const Eigen::MatrixXd& X) const override;

  Box<ProbEstimator> base_;
  std::size_t n_;
  double frac_;
  bool boot_;
  std::vector<Box<ProbEstimator>> members_;
};

/// Greedy residual boosting: each level fits a weak learner to the logit of the previous
/// level's probability residuals and pulls its [0,1] prediction back through that level's cdf.
class GreedyBoosting final : public ProbEstimator {
 public:
  /// `weak` predicts on the logit scale; its push-forward through the sigmoid is mixed with alpha*Uniform(0,1).
  GreedyBoosting(std::unique_ptr<ProbEstimator> weak, std::size_t levels, double alpha);
  static std::unique_ptr<ProbEstimator> default_weak();

  std::unique_ptr<ProbEstimator> clone() const override { return std::make_unique<GreedyBoosting>(*this); }
  ParamMap get_params() const override;
  void set_params(const ParamMap& p) override;
  ParamGrid grid() const override { return with_prefix(weak_->grid(), "weak."); }
  std::string render() const override;

  /// Predictions of levels 0..k (level 0 is the uninformed start).
  std::vector<PredictedBatch> stages(const Eigen::MatrixXd& X) const;
  /// The [0,1] residual predictions g of level j >= 1.
  PredictedBatch residual_predictions(std::size_t level, const Eigen::MatrixXd& X) const;
  const Distribution& start() const { return *f0_; }

 private:
  void fit_impl(const Dataset& d, std::uint64_t seed) override;
  std::vector<Distribution> predict_impl(const Eigen::MatrixXd& X) const override;
  Distribution unit_prediction(const Distribution& logit_scale) const;

  Box<ProbEstimator> weak_;
  std::size_t levels_;
  double alpha_;
  std::optional<Distribution> f0_;
  std::vector<Box<ProbEstimator>> members_;
};

/// Gentle boosting: weighted-bootstrap weak learners mixed in by line search on the training loss.
class GentleBoosting final : public ProbEstimator {
 public:
  GentleBoosting(std::unique_ptr<ProbEstimator> weak, std::size_t rounds, double alpha, double gamma,
                 Loss loss = LogLoss{});

  std::unique_ptr<ProbEstimator> clone() const override { return std::make_unique<GentleBoosting>(*this); }
  ParamMap get_params() const override;
  void set_params(const ParamMap& p) override;
  ParamGrid grid() const override { return with_prefix(weak_->grid(), "weak."); }
  std::string render() const override;

  /// Training loss after each round, starting with the uninformed start.
  const std::vector<double>& training_losses() const { return train_loss_; }
  /// Weight vectors after each round.
  const std::vector<std::vector<double>>& weight_history() const { return weights_; }
  /// Mixing weight gamma*beta chosen in each round.
  const std::vector<double>& steps() const { return steps_; }

 private:
  void fit_impl(const Dataset& d, std::uint64_t seed) override;
  std::vector<Distribution> predict_impl(const Eigen::MatrixXd& X) const override;

  Box<ProbEstimator> weak_;
  std::size_t rounds_;
  double alpha_, gamma_;
  Loss loss_;
  std::optional<Distribution> b0_;
  std::vector<Box<ProbEstimator>> members_;
  std::vector<double> steps_, train_loss_;
  std::vector<std::vector<double>> weights_;
};

/// R_i = F_i(y_i).
std::vector<double> probability_residuals(const PredictedBatch& batch, std::span<const double> y);
/// L(p_i, y_i).
std::vector<double> loss_residuals(const PredictedBatch& batch, std::span<const double> y, const Loss& loss);

struct DiagnosticRow {
  double y = 0, point = 0, loss = 0, zeroed_loss = 0, prob_residual = 0;
  std::array<double, 5> quantiles{};
};

struct Diagnostics {
  static constexpr std::array<double, 5> levels{0.05, 0.25, 0.5, 0.75, 0.95};
  std::vector<DiagnosticRow> rows;
  std::string to_csv() const;
};

/// Plot-ready per-row table; zeroed_loss subtracts the paired baseline loss when a baseline is given
/// (NaN otherwise).
Diagnostics diagnostics_export(const PredictedBatch& batch, std::span<const double> y, const Loss& loss,
                               const PredictedBatch* baseline = nullptr);

}  // namespace probreg
