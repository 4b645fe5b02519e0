#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "probreg/dataset.hpp"
#include "probreg/distribution.hpp"
#include "probreg/loss.hpp"

namespace probreg {

/// Flat parameter view; nested estimators use dotted paths such as "s.inner.kappa".
using ParamMap = std::map<std::string, double>;
/// Ordered candidate lists; expansion keeps the first key slowest.
using ParamGrid = std::vector<std::pair<std::string, std::vector<double>>>;

ParamMap with_prefix(const ParamMap& p, const std::string& prefix);
ParamGrid with_prefix(const ParamGrid& g, const std::string& prefix);
/// Entries below `prefix`, with the prefix stripped.
ParamMap under_prefix(const ParamMap& p, const std::string& prefix);
std::vector<ParamMap> expand(const ParamGrid& g);
std::size_t grid_size(const ParamGrid& g);

/// Owning pointer with deep copy through clone().
template <class T>
class Box {
 public:
  Box() = default;
  Box(std::unique_ptr<T> p) : p_(std::move(p)) {}
  Box(const Box& o) : p_(o.p_ ? o.p_->clone() : nullptr) {}
  Box(Box&&) noexcept = default;
  Box& operator=(const Box& o) {
    if (this != &o) p_ = o.p_ ? o.p_->clone() : nullptr;
    return *this;
  }
  Box& operator=(Box&&) noexcept = default;

  T& operator*() const { return *p_; }
  T* operator->() const { return p_.get(); }
  T* get() const { return p_.get(); }
  explicit operator bool() const { return static_cast<bool>(p_); }

 private:
  std::unique_ptr<T> p_;
};

/// A numeric hyperparameter, optionally carrying a tuning grid.
struct Tunable {
  double value = 0.0;
  std::vector<double> candidates;

  Tunable() = default;
  Tunable(double v) : value(v) {}
  Tunable(std::vector<double> grid) : value(grid.at(0)), candidates(std::move(grid)) {}
  bool tuned() const { return candidates.size() > 1; }
  std::string render() const;
};

/// Statistical functional a point learner targets.
enum class Functional { mean, median, quantile, variance, stddev };

struct Target {
  Functional kind = Functional::mean;
  double alpha = 0.5;
};

/// Empirical minimizer of the eliciting loss; the lower order statistic on ties.
double elicit(std::span<const double> values, Target t);

class PointLearner;

/// Side information passed down a fit: the fitted location learner of the enclosing composite.
struct FitContext {
  const PointLearner* location = nullptr;
};

class PointLearner {
 public:
  virtual ~PointLearner() = default;

  void fit(const Dataset& d, const FitContext& ctx = {});
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
  bool fitted() const { return fitted_; }

  virtual std::unique_ptr<PointLearner> clone() const = 0;
  virtual ParamMap get_params() const { return {}; }
  /// Unknown keys raise DomainError.
  virtual void set_params(const ParamMap& p);
  virtual ParamGrid grid() const { return {}; }
  virtual std::string render() const = 0;
  virtual bool supports(Target t) const { return t.kind == Functional::mean; }
  virtual void set_target(Target t);

 protected:
  static void reject_unknown(const ParamMap& p, std::initializer_list<const char*> known);

 private:
  virtual void fit_impl(const Dataset& d, const FitContext& ctx) = 0;
  virtual Eigen::VectorXd predict_impl(const Eigen::MatrixXd& X) const = 0;

  bool fitted_ = false;
  Eigen::Index n_features_ = 0;
};

/// C(c), C(mean(y)), C(std(y)); also targets the median or a quantile for elicitation.
class Constant final : public PointLearner {
 public:
  enum class Source { literal, mean, stddev, median, quantile };

  static Constant literal(Tunable c);
  static Constant mean();
  /// Standard deviation with denominator n - ddof.
  static Constant stddev(int ddof = 0);
  static Constant of(Target t);

  std::unique_ptr<PointLearner> clone() const override { return std::make_unique<Constant>(*this); }
  ParamMap get_params() const override;
  void set_params(const ParamMap& p) override;
  ParamGrid grid() const override;
  std::string render() const override;
  bool supports(Target t) const override;
  void set_target(Target t) override;
  double value() const { return value_; }
  Source source() const { return source_; }

 private:
  Constant(Source s, Tunable c, int ddof, double alpha) : source_(s), literal_(std::move(c)), ddof_(ddof), alpha_(alpha) {}
  void fit_impl(const Dataset& d, const FitContext& ctx) override;
  Eigen::VectorXd predict_impl(const Eigen::MatrixXd& X) const override;

  Source source_;
  Tunable literal_;
  int ddof_ = 0;
  double alpha_ = 0.5;
  double value_ = 0.0;
};

/// Ordinary least squares with intercept.
class Ols final : public PointLearner {
 public:
  std::unique_ptr<PointLearner> clone() const override { return std::make_unique<Ols>(*this); }
  std::string render() const override { return "LR"; }
  const Eigen::VectorXd& coefficients() const { return beta_; }
  /// True when the design was rank deficient and the 1e-8 ridge fallback was used.
  bool regularized() const { return regularized_; }

 private:
  void fit_impl(const Dataset& d, const FitContext& ctx) override;
  Eigen::VectorXd predict_impl(const Eigen::MatrixXd& X) const override;

  Eigen::VectorXd beta_;
  bool regularized_ = false;
};

/// k nearest neighbours, Euclidean on raw features, distance ties broken by row index.
class Knn final : public PointLearner {
 public:
  explicit Knn(Tunable k = Tunable(5.0), Target t = {});

  std::unique_ptr<PointLearner> clone() const override { return std::make_unique<Knn>(*this); }
  ParamMap get_params() const override { return {{"k", k_.value}}; }
  void set_params(const ParamMap& p) override;
  ParamGrid grid() const override;
  std::string render() const override;
  bool supports(Target t) const override;
  void set_target(Target t) override { target_ = t; }
  /// True when k exceeded the training size and was clamped.
  bool clamped() const { return clamped_; }
  /// Indices of the k nearest training rows, nearest first.
  std::vector<std::size_t> neighbours(const Eigen::RowVectorXd& x) const;

 private:
  void fit_impl(const Dataset& d, const FitContext& ctx) override;
  Eigen::VectorXd predict_impl(const Eigen::MatrixXd& X) const override;

  Tunable k_;
  Target target_;
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  std::size_t k_used_ = 0;
  bool clamped_ = false;
};

/// Kernel ridge regression mu(x) = k(x)'(K + lambda I)^-1 y with RBF kernel exp(-gamma |x-x'|^2).
class KernelRidge final : public PointLearner {
 public:
  KernelRidge(Tunable lambda = Tunable(1.0), Tunable gamma = Tunable(1.0), bool scale = false);

  std::unique_ptr<PointLearner> clone() const override { return std::make_unique<KernelRidge>(*this); }
  ParamMap get_params() const override;
  void set_params(const ParamMap& p) override;
  ParamGrid grid() const override;
  std::string render() const override;

 private:
  void fit_impl(const Dataset& d, const FitContext& ctx) override;
  Eigen::VectorXd predict_impl(const Eigen::MatrixXd& X) const override;
  Eigen::MatrixXd standardized(const Eigen::MatrixXd& X) const;

  Tunable lambda_, gamma_;
  bool scale_;
  Eigen::RowVectorXd centre_, spread_;
  Eigen::MatrixXd X_;
  Eigen::VectorXd alpha_;
};

/// Point learner tuned by inner k-fold CV on squared error over its declared grid.
class TunedPointLearner final : public PointLearner {
 public:
  TunedPointLearner(std::unique_ptr<PointLearner> inner, ParamGrid grid, std::size_t folds, std::uint64_t seed);

  std::unique_ptr<PointLearner> clone() const override { return std::make_unique<TunedPointLearner>(*this); }
  std::string render() const override { return inner_->render(); }
  const ParamMap& chosen() const { return chosen_; }

 private:
  void fit_impl(const Dataset& d, const FitContext& ctx) override;
  Eigen::VectorXd predict_impl(const Eigen::MatrixXd& X) const override { return inner_->predict(X); }

  Box<PointLearner> inner_;
  ParamGrid grid_;
  std::size_t folds_;
  std::uint64_t seed_;
  ParamMap chosen_;
};

/// Predictions for the rows of a query matrix, in row order.
struct PredictedBatch {
  std::vector<Distribution> items;
  std::string model;
  std::uint64_t seed = 0;

  std::size_t size() const { return items.size(); }
  const Distribution& operator[](std::size_t i) const { return items[i]; }
  auto begin() const { return items.begin(); }
  auto end() const { return items.end(); }
};

class ProbEstimator {
 public:
  virtual ~ProbEstimator() = default;

  void fit(const Dataset& d, std::uint64_t seed = 0);
  PredictedBatch predict(const Eigen::MatrixXd& X) const;
  bool fitted() const { return fitted_; }

  virtual std::unique_ptr<ProbEstimator> clone() const = 0;
  virtual ParamMap get_params() const { return {}; }
  virtual void set_params(const ParamMap& p);
  virtual ParamGrid grid() const { return {}; }
  virtual std::string render() const = 0;
  /// True when any node is tuned by nested cross-validation.
  bool tuned() const { return !grid().empty(); }

 private:
  virtual void fit_impl(const Dataset& d, std::uint64_t seed) = 0;
  virtual std::vector<Distribution> predict_impl(const Eigen::MatrixXd& X) const = 0;

  bool fitted_ = false;
  std::uint64_t seed_ = 0;
  Eigen::Index n_features_ = 0;
};

/// Uninformed density estimate of the training labels, returned for every row.
class DensityBaseline final : public ProbEstimator {
 public:
  enum class Method { kernel, histogram, normal };

  explicit DensityBaseline(Method m = Method::normal, int ddof = 0) : method_(m), ddof_(ddof) {}

  std::unique_ptr<ProbEstimator> clone() const override { return std::make_unique<DensityBaseline>(*this); }
  std::string render() const override;
  const Distribution& estimate() const { return *density_; }

 private:
  void fit_impl(const Dataset& d, std::uint64_t seed) override;
  std::vector<Distribution> predict_impl(const Eigen::MatrixXd& X) const override;

  Method method_;
  int ddof_;
  std::optional<Distribution> density_;
};

/// Density of a label sample by the given method (shared with residual baselines).
Distribution estimate_density(std::span<const double> sample, DensityBaseline::Method m, int ddof);

/// Exhaustive grid search by inner k-fold CV mean loss; earlier candidates win ties.
class TunedEstimator final : public ProbEstimator {
 public:
  TunedEstimator(std::unique_ptr<ProbEstimator> inner, ParamGrid grid, std::size_t folds = 5,
                 Loss loss = LogLoss{});

  std::unique_ptr<ProbEstimator> clone() const override { return std::make_unique<TunedEstimator>(*this); }
  std::string render() const override { return inner_->render(); }
  ParamGrid grid() const override { return grid_; }
  const ParamMap& chosen() const { return chosen_; }
  /// Inner-CV mean loss per candidate, in grid expansion order.
  const std::vector<double>& scores() const { return scores_; }

 private:
  void fit_impl(const Dataset& d, std::uint64_t seed) override;
  std::vector<Distribution> predict_impl(const Eigen::MatrixXd& X) const override;

  Box<ProbEstimator> inner_;
  ParamGrid grid_;
  std::size_t folds_;
  Loss loss_;
  ParamMap chosen_;
  std::vector<double> scores_;
};

/// Wraps `e` in a TunedEstimator when it declares a grid; returns it unchanged otherwise.
std::unique_ptr<ProbEstimator> with_tuning(std::unique_ptr<ProbEstimator> e, std::size_t folds = 5,
                                           Loss loss = LogLoss{});

/// Tunes a point learner over `grid` by inner CV squared error.
std::unique_ptr<PointLearner> grid_search(const PointLearner& learner, ParamGrid grid, std::size_t folds,
                                          std::uint64_t seed);

}  // namespace probreg
