#include "probreg/meta.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "probreg/error.hpp"
#include "probreg/numeric.hpp"
#include "probreg/parallel.hpp"
#include "probreg/random.hpp"

namespace probreg {

namespace {

double sample_mean(const Eigen::VectorXd& y) { return y.mean(); }

double sample_sd(const Eigen::VectorXd& y) {
  return std::sqrt((y.array() - y.mean()).square().sum() / static_cast<double>(y.size()));
}

void reject_outside(const ParamMap& p, std::initializer_list<const char*> keys, const char* prefix) {
  for (const auto& [k, v] : p) {
    if (k.starts_with(prefix)) continue;
    if (std::none_of(keys.begin(), keys.end(), [&](const char* n) { return k == n; }))
      throw DomainError("unknown parameter '" + k + "'");
  }
}

}  // namespace

// ---------------------------------------------------------------- Bagging

Bagging::Bagging(std::unique_ptr<ProbEstimator> base, std::size_t n_estimators, double max_samples, bool bootstrap)
    : base_(std::move(base)), n_(n_estimators), frac_(max_samples), boot_(bootstrap) {
  if (!base_) throw DomainError("Bag needs a base model");
  if (n_ < 1) throw DomainError("Bag needs n >= 1");
  if (!(frac_ > 0 && frac_ <= 1)) throw DomainError("Bag needs frac in (0,1]");
}

ParamMap Bagging::get_params() const {
  auto p = with_prefix(base_->get_params(), "base.");
  p["frac"] = frac_;
  return p;
}

void Bagging::set_params(const ParamMap& p) {
  reject_outside(p, {"frac"}, "base.");
  if (auto it = p.find("frac"); it != p.end()) {
    if (!(it->second > 0 && it->second <= 1)) throw DomainError("Bag needs frac in (0,1]");
    frac_ = it->second;
  }
  base_->set_params(under_prefix(p, "base."));
}

std::string Bagging::render() const {
  return "Bag(" + base_->render() + ", n=" + std::to_string(n_) + ", frac=" + format_shortest(frac_) +
         ", boot=" + (boot_ ? "true" : "false") + ")";
}

void Bagging::fit_impl(const Dataset& d, std::uint64_t seed) {
  const std::size_t n = d.rows();
  const auto m = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(frac_ * static_cast<double>(n))));
  std::vector<Box<ProbEstimator>> members(n_);
  parallel_for(n_, [&](std::size_t b) {
    Rng rng(derive_seed(seed, {0x626167, b}));
    std::vector<std::size_t> idx;
    if (boot_) {
      idx.resize(m);
      for (auto& i : idx) i = bounded(rng, n);
    } else {
      idx = iota_indices(n);
      for (std::size_t i = 0; i < m; ++i) std::swap(idx[i], idx[i + bounded(rng, n - i)]);
      idx.resize(m);
    }
    std::sort(idx.begin(), idx.end());
    auto member = base_->clone();
    member->fit(d.subset(idx), derive_seed(seed, {0x626167, b, 1}));
    members[b] = std::move(member);
  });
  members_ = std::move(members);
}

std::vector<Distribution> Bagging::predict_impl(const Eigen::MatrixXd& X) const {
  std::vector<PredictedBatch> batches;
  batches.reserve(members_.size());
  for (const auto& m : members_) batches.push_back(m->predict(X));
  const std::vector<double> w(members_.size(), 1.0 / static_cast<double>(members_.size()));
  std::vector<Distribution> out;
  out.reserve(static_cast<std::size_t>(X.rows()));
  std::vector<Distribution> comps;
  comps.reserve(members_.size());
  for (std::size_t i = 0; i < static_cast<std::size_t>(X.rows()); ++i) {
    comps.clear();
    for (const auto& batch : batches) comps.push_back(batch[i]);
    out.push_back(mixture(comps, w));
  }
  return out;
}

// ---------------------------------------------------------------- GreedyBoosting

std::unique_ptr<ProbEstimator> GreedyBoosting::default_weak() {
  return std::make_unique<ParametricEstimator>(Shape::normal, std::make_unique<Ols>(),
                                               std::make_unique<Constant>(Constant::stddev()));
}

GreedyBoosting::GreedyBoosting(std::unique_ptr<ProbEstimator> weak, std::size_t levels, double alpha)
    : weak_(weak ? std::move(weak) : default_weak()), levels_(levels), alpha_(alpha) {
  if (!(alpha_ >= 0 && alpha_ <= 1)) throw DomainError("BoostGreedy needs alpha in [0,1]");
}

ParamMap GreedyBoosting::get_params() const {
  auto p = with_prefix(weak_->get_params(), "weak.");
  p["alpha"] = alpha_;
  return p;
}

void GreedyBoosting::set_params(const ParamMap& p) {
  reject_outside(p, {"alpha"}, "weak.");
  if (auto it = p.find("alpha"); it != p.end()) {
    if (!(it->second >= 0 && it->second <= 1)) throw DomainError("BoostGreedy needs alpha in [0,1]");
    alpha_ = it->second;
  }
  weak_->set_params(under_prefix(p, "weak."));
}

std::string GreedyBoosting::render() const {
  std::string s = "BoostGreedy(";
  const auto w = weak_->render();
  if (w != default_weak()->render()) s += w + ", ";
  return s + "k=" + std::to_string(levels_) + ", alpha=" + format_shortest(alpha_) + ")";
}

Distribution GreedyBoosting::unit_prediction(const Distribution& logit_scale) const {
  const Distribution unit = pushforward(logit_scale, Sigmoid{});
  if (alpha_ == 0.0) return unit;
  const Distribution comps[2] = {unit, Uniform{0.0, 1.0}};
  const double w[2] = {1.0 - alpha_, alpha_};
  return mixture(comps, w);
}

void GreedyBoosting::fit_impl(const Dataset& d, std::uint64_t seed) {
  f0_ = logistic(sample_mean(d.y), std::max(sample_sd(d.y), 1e-12) * std::sqrt(3.0) / kPi);
  members_.clear();
  std::vector<Distribution> current(d.rows(), *f0_);
  for (std::size_t j = 0; j < levels_; ++j) {
    Eigen::VectorXd z(d.y.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double rho = std::clamp(current[static_cast<std::size_t>(i)].cdf(d.y[i]), 1e-12, 1 - 1e-12);
      z[i] = std::log(rho / (1 - rho));
    }
    auto weak = weak_->clone();
    weak->fit(d.with_targets(z), derive_seed(seed, {0x6772, j}));
    const auto g = weak->predict(d.X);
    for (std::size_t i = 0; i < current.size(); ++i)
      current[i] = pushforward(unit_prediction(g[i]), QuantileOf{current[i]});
    members_.push_back(std::move(weak));
  }
}

std::vector<PredictedBatch> GreedyBoosting::stages(const Eigen::MatrixXd& X) const {
  const auto rows = static_cast<std::size_t>(X.rows());
  std::vector<PredictedBatch> out;
  out.push_back(PredictedBatch{std::vector<Distribution>(rows, *f0_), render(), 0});
  for (const auto& m : members_) {
    const auto g = m->predict(X);
    PredictedBatch next{{}, render(), 0};
    for (std::size_t i = 0; i < rows; ++i)
      next.items.push_back(pushforward(unit_prediction(g[i]), QuantileOf{out.back()[i]}));
    out.push_back(std::move(next));
  }
  return out;
}

PredictedBatch GreedyBoosting::residual_predictions(std::size_t level, const Eigen::MatrixXd& X) const {
  if (level < 1 || level > members_.size()) throw OutOfRange("boosting level out of range");
  const auto g = members_[level - 1]->predict(X);
  PredictedBatch out{{}, render(), 0};
  for (const auto& p : g) out.items.push_back(unit_prediction(p));
  return out;
}

std::vector<Distribution> GreedyBoosting::predict_impl(const Eigen::MatrixXd& X) const {
  return stages(X).back().items;
}

// ---------------------------------------------------------------- GentleBoosting

GentleBoosting::GentleBoosting(std::unique_ptr<ProbEstimator> weak, std::size_t rounds, double alpha, double gamma,
                               Loss loss)
    : weak_(weak ? std::move(weak) : GreedyBoosting::default_weak()),
      rounds_(rounds),
      alpha_(alpha),
      gamma_(gamma),
      loss_(std::move(loss)) {
  if (!(alpha_ >= 0)) throw DomainError("BoostGentle needs alpha >= 0");
  if (!(gamma_ >= 0)) throw DomainError("BoostGentle needs gamma >= 0");
}

ParamMap GentleBoosting::get_params() const {
  auto p = with_prefix(weak_->get_params(), "weak.");
  p["alpha"] = alpha_;
  p["gamma"] = gamma_;
  return p;
}

void GentleBoosting::set_params(const ParamMap& p) {
  reject_outside(p, {"alpha", "gamma"}, "weak.");
  if (auto it = p.find("alpha"); it != p.end()) alpha_ = it->second;
  if (auto it = p.find("gamma"); it != p.end()) gamma_ = it->second;
  if (!(alpha_ >= 0 && gamma_ >= 0)) throw DomainError("BoostGentle needs alpha, gamma >= 0");
  weak_->set_params(under_prefix(p, "weak."));
}

std::string GentleBoosting::render() const {
  std::string s = "BoostGentle(";
  const auto w = weak_->render();
  if (w != GreedyBoosting::default_weak()->render()) s += w + ", ";
  return s + "M=" + std::to_string(rounds_) + ", alpha=" + format_shortest(alpha_) +
         ", gamma=" + format_shortest(gamma_) + ")";
}

void GentleBoosting::fit_impl(const Dataset& d, std::uint64_t seed) {
  const std::size_t n = d.rows();
  b0_ = Normal{sample_mean(d.y), std::max(sample_sd(d.y), 1e-12)};
  members_.clear();
  steps_.clear();
  weights_.clear();
  train_loss_.clear();
  const Loss loss = loss_.with_label_range(d.y.minCoeff(), d.y.maxCoeff());
  const double cap = -std::log(1e-10);

  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  std::vector<Distribution> current(n, *b0_);
  auto mean_loss = [&](const std::vector<Distribution>& ps) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += loss(ps[i], d.y[static_cast<Eigen::Index>(i)]);
    return s / static_cast<double>(n);
  };
  train_loss_.push_back(mean_loss(current));
  weights_.push_back(w);

  for (std::size_t m = 0; m < rounds_; ++m) {
    std::vector<double> cumulative(n);
    std::partial_sum(w.begin(), w.end(), cumulative.begin());
    Rng rng(derive_seed(seed, {0x67656e, m}));
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = draw_index(cumulative, rng);
    std::sort(idx.begin(), idx.end());
    auto weak = weak_->clone();
    weak->fit(d.subset(idx), derive_seed(seed, {0x67656e, m, 1}));
    const auto b = weak->predict(d.X);

    // line search over beta in [0,1] on a 101-point grid; mixing weight gamma*beta capped at 1
    double best_t = 0.0, best = train_loss_.back();
    std::vector<Distribution> trial = current;
    for (int j = 1; j <= 100; ++j) {
      const double t = std::min(1.0, gamma_ * j / 100.0);
      if (t == 0.0) break;
      for (std::size_t i = 0; i < n; ++i) {
        const Distribution c[2] = {current[i], b[i]};
        const double wt[2] = {1.0 - t, t};
        trial[i] = mixture(c, wt);
      }
      const double v = mean_loss(trial);
      if (v < best) {
        best = v;
        best_t = t;
      }
    }
    if (best_t > 0.0)
      for (std::size_t i = 0; i < n; ++i) {
        const Distribution c[2] = {current[i], b[i]};
        const double wt[2] = {1.0 - best_t, best_t};
        current[i] = mixture(c, wt);
      }
    steps_.push_back(best_t);
    members_.push_back(std::move(weak));
    train_loss_.push_back(best_t > 0.0 ? best : train_loss_.back());

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double l = loss(current[i], d.y[static_cast<Eigen::Index>(i)]);
      if (!std::isfinite(l)) l = cap;
      w[i] = std::max(0.0, w[i] + alpha_ * w[i] * l);
      total += w[i];
    }
    if (!(total > 0)) throw WeightCollapse("all boosting weights vanished");
    for (auto& v : w) v /= total;
    weights_.push_back(w);
  }
}

std::vector<Distribution> GentleBoosting::predict_impl(const Eigen::MatrixXd& X) const {
  std::vector<Distribution> out(static_cast<std::size_t>(X.rows()), *b0_);
  for (std::size_t m = 0; m < members_.size(); ++m) {
    if (steps_[m] == 0.0) continue;
    const auto b = members_[m]->predict(X);
    const double wt[2] = {1.0 - steps_[m], steps_[m]};
    for (std::size_t i = 0; i < out.size(); ++i) {
      const Distribution c[2] = {out[i], b[i]};
      out[i] = mixture(c, wt);
    }
  }
  return out;
}

// ---------------------------------------------------------------- residuals and diagnostics

std::vector<double> probability_residuals(const PredictedBatch& batch, std::span<const double> y) {
  if (batch.size() != y.size()) throw ShapeError("predictions and labels differ in length");
  std::vector<double> r(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) r[i] = batch[i].cdf(y[i]);
  return r;
}

std::vector<double> loss_residuals(const PredictedBatch& batch, std::span<const double> y, const Loss& loss) {
  if (batch.size() != y.size()) throw ShapeError("predictions and labels differ in length");
  std::vector<double> r(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) r[i] = loss(batch[i], y[i]);
  return r;
}

Diagnostics diagnostics_export(const PredictedBatch& batch, std::span<const double> y, const Loss& loss,
                               const PredictedBatch* baseline) {
  if (batch.size() != y.size()) throw ShapeError("predictions and labels differ in length");
  if (baseline && baseline->size() != y.size()) throw ShapeError("baseline and labels differ in length");
  Diagnostics out;
  out.rows.reserve(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto& p = batch[i];
    DiagnosticRow r;
    r.y = y[i];
    for (std::size_t q = 0; q < Diagnostics::levels.size(); ++q) r.quantiles[q] = p.quantile(Diagnostics::levels[q]);
    double mean = std::numeric_limits<double>::quiet_NaN();
    try {
      mean = p.mean();
    } catch (const DomainError&) {
    }
    r.point = std::isfinite(mean) ? mean : r.quantiles[2];
    r.loss = loss(p, y[i]);
    r.zeroed_loss = baseline ? r.loss - loss((*baseline)[i], y[i]) : std::numeric_limits<double>::quiet_NaN();
    r.prob_residual = p.cdf(y[i]);
    out.rows.push_back(r);
  }
  return out;
}

std::string Diagnostics::to_csv() const {
  std::ostringstream s;
  s << "y,point,loss,zeroed_loss,prob_residual,q05,q25,q50,q75,q95\n";
  for (const auto& r : rows) {
    s << format17(r.y) << ',' << format17(r.point) << ',' << format17(r.loss) << ',' << format17(r.zeroed_loss) << ','
      << format17(r.prob_residual);
    for (double q : r.quantiles) s << ',' << format17(q);
    s << '\n';
  }
  return s.str();
}

}  // namespace probreg
