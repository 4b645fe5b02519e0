#include "probreg/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "probreg/adaptors.hpp"
#include "probreg/error.hpp"
#include "probreg/numeric.hpp"
#include "probreg/random.hpp"

namespace probreg {

ParamMap with_prefix(const ParamMap& p, const std::string& prefix) {
  ParamMap out;
  for (const auto& [k, v] : p) out.emplace(prefix + k, v);
  return out;
}

ParamGrid with_prefix(const ParamGrid& g, const std::string& prefix) {
  ParamGrid out;
  for (const auto& [k, v] : g) out.emplace_back(prefix + k, v);
  return out;
}

ParamMap under_prefix(const ParamMap& p, const std::string& prefix) {
  ParamMap out;
  for (const auto& [k, v] : p)
    if (k.size() > prefix.size() && k.compare(0, prefix.size(), prefix) == 0) out.emplace(k.substr(prefix.size()), v);
  return out;
}

std::size_t grid_size(const ParamGrid& g) {
  std::size_t n = 1;
  for (const auto& [k, v] : g) n *= v.size();
  return n;
}

std::vector<ParamMap> expand(const ParamGrid& g) {
  std::vector<ParamMap> out{ParamMap{}};
  for (const auto& [key, values] : g) {
    if (values.empty()) throw DomainError("empty candidate list for " + key);
    std::vector<ParamMap> next;
    next.reserve(out.size() * values.size());
    for (const auto& partial : out)
      for (double v : values) {
        auto m = partial;
        m[key] = v;
        next.push_back(std::move(m));
      }
    out = std::move(next);
  }
  return out;
}

std::string Tunable::render() const {
  if (!tuned()) return format_shortest(value);
  std::string s;
  for (std::size_t i = 0; i < candidates.size(); ++i) s += (i ? ";" : "") + format_shortest(candidates[i]);
  return s;
}

double elicit(std::span<const double> values, Target t) {
  if (values.empty()) throw DomainError("cannot elicit a functional of an empty sample");
  switch (t.kind) {
    case Functional::mean:
      return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    case Functional::median:
    case Functional::quantile: {
      const double alpha = t.kind == Functional::median ? 0.5 : t.alpha;
      if (!(alpha > 0 && alpha < 1)) throw DomainError("quantile level must lie in (0,1)");
      std::vector<double> v(values.begin(), values.end());
      const double pos = std::ceil(alpha * static_cast<double>(v.size()) - 1e-12);
      const auto idx = static_cast<std::size_t>(std::max(1.0, pos)) - 1;
      std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(idx), v.end());
      return v[idx];
    }
    case Functional::variance:
    case Functional::stddev:
      break;
  }
  throw DomainError("the variance of a distribution cannot be elicited by a point loss; use a residual learner");
}

// ---------------------------------------------------------------- PointLearner

void PointLearner::fit(const Dataset& d, const FitContext& ctx) {
  if (d.rows() == 0) throw DomainError("cannot fit on an empty dataset");
  fit_impl(d, ctx);
  n_features_ = d.X.cols();
  fitted_ = true;
}

Eigen::VectorXd PointLearner::predict(const Eigen::MatrixXd& X) const {
  if (!fitted_) throw NotFitted(render() + " used before fit");
  if (X.cols() != n_features_)
    throw ShapeError("expected " + std::to_string(n_features_) + " features, got " + std::to_string(X.cols()));
  return predict_impl(X);
}

void PointLearner::reject_unknown(const ParamMap& p, std::initializer_list<const char*> known) {
  for (const auto& [k, v] : p)
    if (std::none_of(known.begin(), known.end(), [&](const char* n) { return k == n; }))
      throw DomainError("unknown parameter '" + k + "'");
}

void PointLearner::set_params(const ParamMap& p) { reject_unknown(p, {}); }

void PointLearner::set_target(Target t) {
  if (!supports(t)) throw DomainError(render() + " cannot target the requested functional");
}

// ---------------------------------------------------------------- Constant

Constant Constant::literal(Tunable c) { return Constant(Source::literal, std::move(c), 0, 0.5); }
Constant Constant::mean() { return Constant(Source::mean, {}, 0, 0.5); }
Constant Constant::stddev(int ddof) { return Constant(Source::stddev, {}, ddof, 0.5); }
Constant Constant::of(Target t) {
  Constant c = mean();
  c.set_target(t);
  return c;
}

ParamMap Constant::get_params() const {
  if (source_ == Source::literal) return {{"c", literal_.value}};
  if (source_ == Source::quantile) return {{"alpha", alpha_}};
  return {};
}

void Constant::set_params(const ParamMap& p) {
  if (source_ == Source::literal) {
    reject_unknown(p, {"c"});
    if (auto it = p.find("c"); it != p.end()) literal_.value = it->second;
  } else if (source_ == Source::quantile) {
    reject_unknown(p, {"alpha"});
    if (auto it = p.find("alpha"); it != p.end()) alpha_ = it->second;
  } else {
    reject_unknown(p, {});
  }
}

ParamGrid Constant::grid() const {
  if (source_ == Source::literal && literal_.tuned()) return {{"c", literal_.candidates}};
  return {};
}

std::string Constant::render() const {
  switch (source_) {
    case Source::literal: return "C(" + literal_.render() + ")";
    case Source::mean: return "C(mean(y))";
    case Source::stddev: return "C(std(y))";
    case Source::median: return "C(median(y))";
    case Source::quantile: return "C(quantile(y," + format_shortest(alpha_) + "))";
  }
  return "C()";
}

bool Constant::supports(Target t) const {
  return t.kind == Functional::mean || t.kind == Functional::median || t.kind == Functional::quantile;
}

void Constant::set_target(Target t) {
  PointLearner::set_target(t);
  if (t.kind == Functional::mean) source_ = Source::mean;
  if (t.kind == Functional::median) source_ = Source::median;
  if (t.kind == Functional::quantile) {
    source_ = Source::quantile;
    alpha_ = t.alpha;
  }
}

void Constant::fit_impl(const Dataset& d, const FitContext&) {
  const std::span<const double> y(d.y.data(), d.rows());
  switch (source_) {
    case Source::literal: value_ = literal_.value; break;
    case Source::mean: value_ = elicit(y, {}); break;
    case Source::median: value_ = elicit(y, {Functional::median}); break;
    case Source::quantile: value_ = elicit(y, {Functional::quantile, alpha_}); break;
    case Source::stddev: {
      const double m = elicit(y, {});
      double ss = 0.0;
      for (double v : y) ss += (v - m) * (v - m);
      const double denom = static_cast<double>(y.size()) - ddof_;
      value_ = denom > 0 ? std::sqrt(ss / denom) : 0.0;
      break;
    }
  }
}

Eigen::VectorXd Constant::predict_impl(const Eigen::MatrixXd& X) const {
  return Eigen::VectorXd::Constant(X.rows(), value_);
}

// ---------------------------------------------------------------- Ols

void Ols::fit_impl(const Dataset& d, const FitContext&) {
  Eigen::MatrixXd A(d.X.rows(), d.X.cols() + 1);
  A.col(0).setOnes();
  A.rightCols(d.X.cols()) = d.X;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  if (qr.rank() < A.cols()) {
    const Eigen::MatrixXd G = A.transpose() * A + 1e-8 * Eigen::MatrixXd::Identity(A.cols(), A.cols());
    beta_ = G.ldlt().solve(A.transpose() * d.y);
    regularized_ = true;
  } else {
    beta_ = qr.solve(d.y);
    regularized_ = false;
  }
}

Eigen::VectorXd Ols::predict_impl(const Eigen::MatrixXd& X) const {
  return (X * beta_.tail(X.cols())).array() + beta_[0];
}

// ---------------------------------------------------------------- Knn

Knn::Knn(Tunable k, Target t) : k_(std::move(k)), target_(t) {
  for (double v : k_.candidates.empty() ? std::vector<double>{k_.value} : k_.candidates)
    if (!(v >= 1) || v != std::floor(v)) throw DomainError("KNN needs a positive integer k");
  if (!supports(t)) throw DomainError("KNN cannot target the requested functional");
}

void Knn::set_params(const ParamMap& p) {
  reject_unknown(p, {"k"});
  if (auto it = p.find("k"); it != p.end()) {
    if (!(it->second >= 1) || it->second != std::floor(it->second)) throw DomainError("KNN needs a positive integer k");
    k_.value = it->second;
  }
}

ParamGrid Knn::grid() const {
  if (k_.tuned()) return {{"k", k_.candidates}};
  return {};
}

std::string Knn::render() const { return "KNN(k=" + k_.render() + ")"; }

bool Knn::supports(Target t) const {
  return t.kind == Functional::mean || t.kind == Functional::median || t.kind == Functional::quantile;
}

void Knn::fit_impl(const Dataset& d, const FitContext&) {
  X_ = d.X;
  y_ = d.y;
  const auto k = static_cast<std::size_t>(k_.value);
  clamped_ = k > d.rows();
  k_used_ = std::min(k, d.rows());
}

std::vector<std::size_t> Knn::neighbours(const Eigen::RowVectorXd& x) const {
  const auto n = static_cast<std::size_t>(X_.rows());
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t i = 0; i < n; ++i) dist[i] = {(X_.row(static_cast<Eigen::Index>(i)) - x).squaredNorm(), i};
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_used_), dist.end());
  std::vector<std::size_t> out(k_used_);
  for (std::size_t i = 0; i < k_used_; ++i) out[i] = dist[i].second;
  return out;
}

Eigen::VectorXd Knn::predict_impl(const Eigen::MatrixXd& X) const {
  Eigen::VectorXd out(X.rows());
  std::vector<double> labels(k_used_);
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const auto nb = neighbours(X.row(r));
    for (std::size_t i = 0; i < nb.size(); ++i) labels[i] = y_[static_cast<Eigen::Index>(nb[i])];
    out[r] = elicit(labels, target_);
  }
  return out;
}

// ---------------------------------------------------------------- KernelRidge

KernelRidge::KernelRidge(Tunable lambda, Tunable gamma, bool scale)
    : lambda_(std::move(lambda)), gamma_(std::move(gamma)), scale_(scale) {
  if (lambda_.value < 0 || gamma_.value <= 0) throw DomainError("KRR needs lambda >= 0 and gamma > 0");
}

ParamMap KernelRidge::get_params() const {
  return {{"lambda", lambda_.value}, {"gamma", gamma_.value}, {"scale", scale_ ? 1.0 : 0.0}};
}

void KernelRidge::set_params(const ParamMap& p) {
  reject_unknown(p, {"lambda", "gamma", "scale"});
  if (auto it = p.find("lambda"); it != p.end()) lambda_.value = it->second;
  if (auto it = p.find("gamma"); it != p.end()) gamma_.value = it->second;
  if (auto it = p.find("scale"); it != p.end()) scale_ = it->second != 0.0;
  if (lambda_.value < 0 || gamma_.value <= 0) throw DomainError("KRR needs lambda >= 0 and gamma > 0");
}

ParamGrid KernelRidge::grid() const {
  ParamGrid g;
  if (lambda_.tuned()) g.emplace_back("lambda", lambda_.candidates);
  if (gamma_.tuned()) g.emplace_back("gamma", gamma_.candidates);
  return g;
}

std::string KernelRidge::render() const {
  return "KRR(lambda=" + lambda_.render() + ",gamma=" + gamma_.render() + ",scale=" + (scale_ ? "true" : "false") + ")";
}

Eigen::MatrixXd KernelRidge::standardized(const Eigen::MatrixXd& X) const {
  if (!scale_) return X;
  return (X.rowwise() - centre_).array().rowwise() / spread_.array();
}

void KernelRidge::fit_impl(const Dataset& d, const FitContext&) {
  if (scale_) {
    centre_ = d.X.colwise().mean();
    spread_ = ((d.X.rowwise() - centre_).array().square().colwise().sum() / static_cast<double>(d.rows())).sqrt();
    for (Eigen::Index j = 0; j < spread_.size(); ++j)
      if (!(spread_[j] > 0)) spread_[j] = 1.0;
  }
  X_ = standardized(d.X);
  const auto n = X_.rows();
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) K(i, j) = K(j, i) = std::exp(-gamma_.value * (X_.row(i) - X_.row(j)).squaredNorm());
  K.diagonal().array() += lambda_.value;
  alpha_ = K.ldlt().solve(d.y);
}

Eigen::VectorXd KernelRidge::predict_impl(const Eigen::MatrixXd& X) const {
  const Eigen::MatrixXd Z = standardized(X);
  Eigen::VectorXd out(Z.rows());
  for (Eigen::Index r = 0; r < Z.rows(); ++r) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < X_.rows(); ++i) s += std::exp(-gamma_.value * (X_.row(i) - Z.row(r)).squaredNorm()) * alpha_[i];
    out[r] = s;
  }
  return out;
}

// ---------------------------------------------------------------- TunedPointLearner

namespace {

/// Index of the smallest score; later scores must beat the incumbent by a relative 1e-12.
std::size_t best_index(const std::vector<double>& scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] < scores[best] - 1e-12 * std::max(1.0, std::abs(scores[best]))) best = i;
  return best;
}

}  // namespace

TunedPointLearner::TunedPointLearner(std::unique_ptr<PointLearner> inner, ParamGrid grid, std::size_t folds,
                                     std::uint64_t seed)
    : inner_(std::move(inner)), grid_(std::move(grid)), folds_(folds), seed_(seed) {
  if (grid_.empty() || grid_size(grid_) == 0) throw DomainError("grid search needs a nonempty grid");
  if (folds_ < 2) throw DomainError("grid search needs at least 2 inner folds");
}

void TunedPointLearner::fit_impl(const Dataset& d, const FitContext& ctx) {
  const auto candidates = expand(grid_);
  std::vector<double> scores(candidates.size(), 0.0);
  if (candidates.size() > 1 && d.rows() >= 2) {
    const auto folds = kfold_indices(d.rows(), std::min(folds_, d.rows()), seed_);
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      double sse = 0.0;
      for (const auto& test : folds) {
        const auto train = complement(test, d.rows());
        auto m = inner_->clone();
        m->set_params(candidates[c]);
        m->fit(d.subset(train), ctx);
        const Eigen::VectorXd pred = m->predict(rows_of(d.X, test));
        sse += (pred - rows_of(d.y, test)).squaredNorm();
      }
      scores[c] = std::isfinite(sse) ? sse / static_cast<double>(d.rows()) : kInf;
    }
    if (std::all_of(scores.begin(), scores.end(), [](double s) { return !std::isfinite(s); }))
      throw TuningFailed("every candidate produced a non-finite score");
  }
  chosen_ = candidates[best_index(scores)];
  inner_->set_params(chosen_);
  inner_->fit(d, ctx);
}

std::unique_ptr<PointLearner> grid_search(const PointLearner& learner, ParamGrid grid, std::size_t folds,
                                          std::uint64_t seed) {
  return std::make_unique<TunedPointLearner>(learner.clone(), std::move(grid), folds, seed);
}

// ---------------------------------------------------------------- ProbEstimator

void ProbEstimator::fit(const Dataset& d, std::uint64_t seed) {
  if (d.rows() == 0) throw DomainError("cannot fit on an empty dataset");
  fit_impl(d, seed);
  seed_ = seed;
  n_features_ = d.X.cols();
  fitted_ = true;
}

PredictedBatch ProbEstimator::predict(const Eigen::MatrixXd& X) const {
  if (!fitted_) throw NotFitted(render() + " used before fit");
  if (X.cols() != n_features_)
    throw ShapeError("expected " + std::to_string(n_features_) + " features, got " + std::to_string(X.cols()));
  PredictedBatch b{predict_impl(X), render(), seed_};
  if (b.size() != static_cast<std::size_t>(X.rows())) throw ShapeError("prediction count differs from query rows");
  return b;
}

void ProbEstimator::set_params(const ParamMap& p) {
  if (!p.empty()) throw DomainError("unknown parameter '" + p.begin()->first + "'");
}

// ---------------------------------------------------------------- DensityBaseline

Distribution estimate_density(std::span<const double> sample, DensityBaseline::Method m, int ddof) {
  if (sample.empty()) throw DomainError("density estimate of an empty sample");
  switch (m) {
    case DensityBaseline::Method::normal: {
      const double mu = elicit(sample, {});
      double ss = 0.0;
      for (double v : sample) ss += (v - mu) * (v - mu);
      const double denom = static_cast<double>(sample.size()) - ddof;
      const double sd = denom > 0 ? std::sqrt(ss / denom) : 0.0;
      return Normal{mu, std::max(sd, 1e-12)};
    }
    case DensityBaseline::Method::kernel:
      return kernel_density(sample, silverman_bandwidth(sample));
    case DensityBaseline::Method::histogram: {
      const auto [lo_it, hi_it] = std::minmax_element(sample.begin(), sample.end());
      double lo = *lo_it, hi = *hi_it;
      const double pad = hi > lo ? 0.05 * (hi - lo) : 0.5;
      lo -= pad;
      hi += pad;
      const auto bins = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(sample.size()))));
      std::vector<double> edges(bins + 1);
      for (std::size_t i = 0; i <= bins; ++i) edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
      edges.back() = hi;
      const std::vector<double> w(sample.size(), 1.0);
      return histogram_adaptor(sample, w, edges);
    }
  }
  throw DomainError("unknown density method");
}

std::string DensityBaseline::render() const {
  switch (method_) {
    case Method::kernel: return "Baseline(kernel)";
    case Method::histogram: return "Baseline(hist)";
    case Method::normal: return "Baseline(normal)";
  }
  return "Baseline()";
}

void DensityBaseline::fit_impl(const Dataset& d, std::uint64_t) {
  density_ = estimate_density(std::span<const double>(d.y.data(), d.rows()), method_, ddof_);
}

std::vector<Distribution> DensityBaseline::predict_impl(const Eigen::MatrixXd& X) const {
  return std::vector<Distribution>(static_cast<std::size_t>(X.rows()), *density_);
}

// ---------------------------------------------------------------- TunedEstimator

TunedEstimator::TunedEstimator(std::unique_ptr<ProbEstimator> inner, ParamGrid grid, std::size_t folds, Loss loss)
    : inner_(std::move(inner)), grid_(std::move(grid)), folds_(folds), loss_(std::move(loss)) {
  if (grid_.empty() || grid_size(grid_) == 0) throw DomainError("grid search needs a nonempty grid");
  if (folds_ < 2) throw DomainError("grid search needs at least 2 inner folds");
}

void TunedEstimator::fit_impl(const Dataset& d, std::uint64_t seed) {
  const auto candidates = expand(grid_);
  scores_.assign(candidates.size(), 0.0);
  if (candidates.size() > 1 && d.rows() >= 2) {
    const auto folds = kfold_indices(d.rows(), std::min(folds_, d.rows()), derive_seed(seed, {0x74756e65}));
    const Loss loss = loss_.with_label_range(d.y.minCoeff(), d.y.maxCoeff());
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      double total = 0.0;
      try {
        for (std::size_t f = 0; f < folds.size(); ++f) {
          const auto& test = folds[f];
          const auto train = complement(test, d.rows());
          auto m = inner_->clone();
          m->set_params(candidates[c]);
          m->fit(d.subset(train), derive_seed(seed, {1, f}));
          const auto batch = m->predict(rows_of(d.X, test));
          for (std::size_t i = 0; i < test.size(); ++i) total += loss(batch[i], d.y[static_cast<Eigen::Index>(test[i])]);
        }
      } catch (const Error&) {
        total = kInf;
      }
      scores_[c] = std::isnan(total) ? kInf : total / static_cast<double>(d.rows());
    }
    if (std::all_of(scores_.begin(), scores_.end(), [](double s) { return !std::isfinite(s); }))
      throw TuningFailed("every candidate of " + inner_->render() + " has infinite inner-CV loss");
  }
  chosen_ = candidates[best_index(scores_)];
  inner_->set_params(chosen_);
  inner_->fit(d, seed);
}

std::vector<Distribution> TunedEstimator::predict_impl(const Eigen::MatrixXd& X) const {
  return inner_->predict(X).items;
}

std::unique_ptr<ProbEstimator> with_tuning(std::unique_ptr<ProbEstimator> e, std::size_t folds, Loss loss) {
  auto g = e->grid();
  if (g.empty()) return e;
  return std::make_unique<TunedEstimator>(std::move(e), std::move(g), folds, std::move(loss));
}

}  // namespace probreg
