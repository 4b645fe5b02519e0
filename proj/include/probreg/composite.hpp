#pragma once

#include <memory>
#include <string>
#include <vector>

#include "probreg/learners.hpp"

namespace probreg {

enum class Shape { normal, laplace, uniform };

/// Shape with given location and standard deviation (Laplace b = sd/sqrt 2, Uniform half-width sqrt(3) sd).
Distribution make_shape(Shape shape, double location, double sd);
std::string shape_token(Shape shape);

enum class ResidualTransform { squared, abs, log };

/// Dispersion learner fitted on transformed residuals of the enclosing location learner.
class ResidualLearner final : public PointLearner {
 public:
  explicit ResidualLearner(std::unique_ptr<PointLearner> learner,
                           ResidualTransform t = ResidualTransform::squared);

  std::unique_ptr<PointLearner> clone() const override { return std::make_unique<ResidualLearner>(*this); }
  ParamMap get_params() const override { return with_prefix(learner_->get_params(), "learner."); }
  void set_params(const ParamMap& p) override;
  ParamGrid grid() const override { return with_prefix(learner_->grid(), "learner."); }
  std::string render() const override;
  ResidualTransform transform() const { return transform_; }
  const PointLearner& learner() const { return *learner_; }

 private:
  void fit_impl(const Dataset& d, const FitContext& ctx) override;
  Eigen::VectorXd predict_impl(const Eigen::MatrixXd& X) const override;

  Box<PointLearner> learner_;
  ResidualTransform transform_;
};

/// Predicts max(kappa, inner(x)); kappa carries the tuning grid.
class MinWrapper final : public PointLearner {
 public:
  static std::vector<double> default_grid() { return {0, 1, 2, 4, 8, 32}; }

  explicit MinWrapper(std::unique_ptr<PointLearner> inner, Tunable kappa = Tunable(default_grid()));

  std::unique_ptr<PointLearner> clone() const override { return std::make_unique<MinWrapper>(*this); }
  ParamMap get_params() const override;
  void set_params(const ParamMap& p) override;
  ParamGrid grid() const override;
  std::string render() const override;
  double kappa() const { return kappa_.value; }
  const PointLearner& inner() const { return *inner_; }

 private:
  void fit_impl(const Dataset& d, const FitContext& ctx) override;
  Eigen::VectorXd predict_impl(const Eigen::MatrixXd& X) const override;

  Box<PointLearner> inner_;
  Tunable kappa_;
};

/// shape(p(x), s(x)) with s clamped at 1e-12.
class ParametricEstimator final : public ProbEstimator {
 public:
  ParametricEstimator(Shape shape, std::unique_ptr<PointLearner> location, std::unique_ptr<PointLearner> dispersion);

  std::unique_ptr<ProbEstimator> clone() const override { return std::make_unique<ParametricEstimator>(*this); }
  ParamMap get_params() const override;
  void set_params(const ParamMap& p) override;
  ParamGrid grid() const override;
  std::string render() const override;
  const PointLearner& location() const { return *p_; }
  const PointLearner& dispersion() const { return *s_; }

 private:
  void fit_impl(const Dataset& d, std::uint64_t seed) override;
  std::vector<Distribution> predict_impl(const Eigen::MatrixXd& X) const override;

  Shape shape_;
  Box<PointLearner> p_, s_;
};

enum class CapReference { uniform01, sigmoid };

/// eps * reference + (1 - eps) * f(x).
class CappedEstimator final : public ProbEstimator {
 public:
  CappedEstimator(std::unique_ptr<ProbEstimator> base, double eps, CapReference ref = CapReference::uniform01);

  std::unique_ptr<ProbEstimator> clone() const override { return std::make_unique<CappedEstimator>(*this); }
  ParamMap get_params() const override;
  void set_params(const ParamMap& p) override;
  ParamGrid grid() const override { return with_prefix(base_->grid(), "base."); }
  std::string render() const override;
  static Distribution reference_density(CapReference ref);

 private:
  void fit_impl(const Dataset& d, std::uint64_t seed) override { base_->fit(d, seed); }
  std::vector<Distribution> predict_impl(const Eigen::MatrixXd& X) const override;

  Box<ProbEstimator> base_;
  double eps_;
  CapReference ref_;
};

/// Point prediction g(x) plus a density estimate of the signed training residuals.
class ClassicalBaseline final : public ProbEstimator {
 public:
  ClassicalBaseline(std::unique_ptr<PointLearner> g, DensityBaseline::Method h, int ddof = 0);

  std::unique_ptr<ProbEstimator> clone() const override { return std::make_unique<ClassicalBaseline>(*this); }
  ParamMap get_params() const override { return with_prefix(g_->get_params(), "g."); }
  void set_params(const ParamMap& p) override;
  ParamGrid grid() const override { return with_prefix(g_->grid(), "g."); }
  std::string render() const override;
  const Distribution& residual_density() const { return *residuals_; }
  /// True when the residual spread collapsed and the dispersion was clamped.
  bool degenerate() const { return degenerate_; }

 private:
  void fit_impl(const Dataset& d, std::uint64_t seed) override;
  std::vector<Distribution> predict_impl(const Eigen::MatrixXd& X) const override;

  Box<PointLearner> g_;
  DensityBaseline::Method h_;
  int ddof_;
  std::optional<Distribution> residuals_;
  bool degenerate_ = false;
};

/// Throws DomainError for functionals without an eliciting point loss.
void require_elicitable(Target t);

/// Shape parameters learned as elicitable functionals: Laplace from (median, mean absolute
/// deviation), Uniform from the alpha and 1-alpha quantiles.
class ElicitationEstimator final : public ProbEstimator {
 public:
  ElicitationEstimator(Shape shape, std::unique_ptr<PointLearner> learner, std::vector<Target> functionals);
  static std::vector<Target> default_functionals(Shape shape, double alpha = 0.25);

  std::unique_ptr<ProbEstimator> clone() const override { return std::make_unique<ElicitationEstimator>(*this); }
  std::string render() const override;

 private:
  void fit_impl(const Dataset& d, std::uint64_t seed) override;
  std::vector<Distribution> predict_impl(const Eigen::MatrixXd& X) const override;

  Shape shape_;
  std::string base_;
  std::vector<Target> functionals_;
  std::vector<Box<PointLearner>> learners_;
};

/// Per-row point summary: the mean, or the minimizer of the expected eliciting loss.
std::vector<double> point_adaptor(const PredictedBatch& batch, Target t = {});

}  // namespace probreg
