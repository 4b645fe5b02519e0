#include "probreg/composite.hpp"

#include <algorithm>
#include <cmath>

#include "probreg/error.hpp"
#include "probreg/numeric.hpp"

namespace probreg {

namespace {
constexpr double kTiny = 1e-12;
const double kSqrt2 = std::sqrt(2.0);
const double kSqrt3 = std::sqrt(3.0);
}  // namespace

Distribution make_shape(Shape shape, double location, double sd) {
  sd = std::max(sd, kTiny);
  switch (shape) {
    case Shape::normal: return Normal{location, sd};
    case Shape::laplace: return Laplace{location, sd / kSqrt2};
    case Shape::uniform: return Uniform{location - kSqrt3 * sd, location + kSqrt3 * sd};
  }
  throw DomainError("unknown shape");
}

std::string shape_token(Shape shape) {
  switch (shape) {
    case Shape::normal: return "N";
    case Shape::laplace: return "Laplace";
    case Shape::uniform: return "Uniform";
  }
  return "?";
}

// ---------------------------------------------------------------- ResidualLearner

ResidualLearner::ResidualLearner(std::unique_ptr<PointLearner> learner, ResidualTransform t)
    : learner_(std::move(learner)), transform_(t) {
  if (!learner_) throw DomainError("RE needs a residual learner");
}

void ResidualLearner::set_params(const ParamMap& p) {
  if (auto inner = under_prefix(p, "learner."); inner.size() != p.size())
    throw DomainError("unknown parameter for RE");
  learner_->set_params(under_prefix(p, "learner."));
}

std::string ResidualLearner::render() const {
  std::string s = "RE(p, " + learner_->render();
  if (transform_ == ResidualTransform::abs) s += ", abs";
  if (transform_ == ResidualTransform::log) s += ", log";
  return s + ")";
}

void ResidualLearner::fit_impl(const Dataset& d, const FitContext& ctx) {
  if (!ctx.location) throw DomainError("RE needs the location learner of an enclosing composite");
  const Eigen::VectorXd r = d.y - ctx.location->predict(d.X);
  Eigen::VectorXd rho(r.size());
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    switch (transform_) {
      case ResidualTransform::squared: rho[i] = r[i] * r[i]; break;
      case ResidualTransform::abs: rho[i] = std::abs(r[i]); break;
      case ResidualTransform::log: rho[i] = std::log(std::abs(r[i]) + 1e-12); break;
    }
  }
  learner_->fit(d.with_targets(rho), ctx);
}

Eigen::VectorXd ResidualLearner::predict_impl(const Eigen::MatrixXd& X) const {
  Eigen::VectorXd v = learner_->predict(X);
  for (auto& x : v) {
    switch (transform_) {
      case ResidualTransform::squared: x = std::sqrt(std::max(x, 0.0)); break;
      case ResidualTransform::abs: x = std::max(x, 0.0); break;
      case ResidualTransform::log: x = std::exp(x); break;
    }
  }
  return v;
}

// ---------------------------------------------------------------- MinWrapper

MinWrapper::MinWrapper(std::unique_ptr<PointLearner> inner, Tunable kappa)
    : inner_(std::move(inner)), kappa_(std::move(kappa)) {
  if (!inner_) throw DomainError("Min needs an inner learner");
  for (double k : kappa_.candidates.empty() ? std::vector<double>{kappa_.value} : kappa_.candidates)
    if (!(k >= 0)) throw DomainError("Min lower bounds must be nonnegative");
}

ParamMap MinWrapper::get_params() const {
  auto p = with_prefix(inner_->get_params(), "inner.");
  p["kappa"] = kappa_.value;
  return p;
}

void MinWrapper::set_params(const ParamMap& p) {
  auto inner = under_prefix(p, "inner.");
  for (const auto& [k, v] : p)
    if (k != "kappa" && !k.starts_with("inner.")) throw DomainError("unknown parameter '" + k + "'");
  if (auto it = p.find("kappa"); it != p.end()) {
    if (!(it->second >= 0)) throw DomainError("Min lower bound must be nonnegative");
    kappa_.value = it->second;
  }
  inner_->set_params(inner);
}

ParamGrid MinWrapper::grid() const {
  ParamGrid g;
  if (kappa_.tuned()) g.emplace_back("kappa", kappa_.candidates);
  for (auto& e : with_prefix(inner_->grid(), "inner.")) g.push_back(std::move(e));
  return g;
}

std::string MinWrapper::render() const {
  if (kappa_.candidates == default_grid()) return "Min(" + inner_->render() + ")";
  return "Min(" + inner_->render() + ", " + kappa_.render() + ")";
}

void MinWrapper::fit_impl(const Dataset& d, const FitContext& ctx) { inner_->fit(d, ctx); }

Eigen::VectorXd MinWrapper::predict_impl(const Eigen::MatrixXd& X) const {
  return inner_->predict(X).cwiseMax(kappa_.value);
}

// ---------------------------------------------------------------- ParametricEstimator

ParametricEstimator::ParametricEstimator(Shape shape, std::unique_ptr<PointLearner> location,
                                         std::unique_ptr<PointLearner> dispersion)
    : shape_(shape), p_(std::move(location)), s_(std::move(dispersion)) {
  if (!p_ || !s_) throw DomainError("parametric estimator needs location and dispersion learners");
}

ParamMap ParametricEstimator::get_params() const {
  auto out = with_prefix(p_->get_params(), "p.");
  for (auto& [k, v] : with_prefix(s_->get_params(), "s.")) out.emplace(k, v);
  return out;
}

void ParametricEstimator::set_params(const ParamMap& p) {
  for (const auto& [k, v] : p)
    if (!k.starts_with("p.") && !k.starts_with("s.")) throw DomainError("unknown parameter '" + k + "'");
  p_->set_params(under_prefix(p, "p."));
  s_->set_params(under_prefix(p, "s."));
}

ParamGrid ParametricEstimator::grid() const {
  auto g = with_prefix(p_->grid(), "p.");
  for (auto& e : with_prefix(s_->grid(), "s.")) g.push_back(std::move(e));
  return g;
}

std::string ParametricEstimator::render() const {
  return shape_token(shape_) + "(p=" + p_->render() + ", s=" + s_->render() + ")";
}

void ParametricEstimator::fit_impl(const Dataset& d, std::uint64_t) {
  p_->fit(d);
  s_->fit(d, FitContext{p_.get()});
}

std::vector<Distribution> ParametricEstimator::predict_impl(const Eigen::MatrixXd& X) const {
  const Eigen::VectorXd loc = p_->predict(X), disp = s_->predict(X);
  std::vector<Distribution> out;
  out.reserve(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) out.push_back(make_shape(shape_, loc[i], std::max(disp[i], kTiny)));
  return out;
}

// ---------------------------------------------------------------- CappedEstimator

CappedEstimator::CappedEstimator(std::unique_ptr<ProbEstimator> base, double eps, CapReference ref)
    : base_(std::move(base)), eps_(eps), ref_(ref) {
  if (!base_) throw DomainError("Cap needs a base model");
  if (!(eps_ >= 0 && eps_ < 1)) throw DomainError("Cap needs eps in [0,1)");
}

Distribution CappedEstimator::reference_density(CapReference ref) {
  if (ref == CapReference::sigmoid) return logistic(0.0, 1.0);
  return Uniform{0.0, 1.0};
}

ParamMap CappedEstimator::get_params() const {
  auto p = with_prefix(base_->get_params(), "base.");
  p["eps"] = eps_;
  return p;
}

void CappedEstimator::set_params(const ParamMap& p) {
  for (const auto& [k, v] : p)
    if (k != "eps" && !k.starts_with("base.")) throw DomainError("unknown parameter '" + k + "'");
  if (auto it = p.find("eps"); it != p.end()) {
    if (!(it->second >= 0 && it->second < 1)) throw DomainError("Cap needs eps in [0,1)");
    eps_ = it->second;
  }
  base_->set_params(under_prefix(p, "base."));
}

std::string CappedEstimator::render() const {
  return "Cap(" + base_->render() + ", eps=" + format_shortest(eps_) +
         ", ref=" + (ref_ == CapReference::sigmoid ? "sigmoid" : "uniform01") + ")";
}

std::vector<Distribution> CappedEstimator::predict_impl(const Eigen::MatrixXd& X) const {
  auto out = base_->predict(X).items;
  if (eps_ == 0.0) return out;
  const Distribution ref = reference_density(ref_);
  const double w[2] = {eps_, 1.0 - eps_};
  for (auto& d : out) {
    const Distribution c[2] = {ref, d};
    d = mixture(c, w);
  }
  return out;
}

// ---------------------------------------------------------------- ClassicalBaseline

ClassicalBaseline::ClassicalBaseline(std::unique_ptr<PointLearner> g, DensityBaseline::Method h, int ddof)
    : g_(std::move(g)), h_(h), ddof_(ddof) {
  if (!g_) throw DomainError("classical baseline needs a point learner");
}

void ClassicalBaseline::set_params(const ParamMap& p) {
  for (const auto& [k, v] : p)
    if (!k.starts_with("g.")) throw DomainError("unknown parameter '" + k + "'");
  g_->set_params(under_prefix(p, "g."));
}

std::string ClassicalBaseline::render() const {
  const char* h = h_ == DensityBaseline::Method::normal ? "normal" : h_ == DensityBaseline::Method::kernel ? "kernel" : "hist";
  return std::string("Classical(") + g_->render() + ", " + h + ")";
}

void ClassicalBaseline::fit_impl(const Dataset& d, std::uint64_t) {
  g_->fit(d);
  const Eigen::VectorXd r = d.y - g_->predict(d.X);
  const double spread = r.size() > 1 ? (r.array() - r.mean()).abs().maxCoeff() : 0.0;
  degenerate_ = !(spread > kTiny);
  residuals_ = estimate_density(std::span<const double>(r.data(), static_cast<std::size_t>(r.size())), h_, ddof_);
}

std::vector<Distribution> ClassicalBaseline::predict_impl(const Eigen::MatrixXd& X) const {
  const Eigen::VectorXd g = g_->predict(X);
  std::vector<Distribution> out;
  out.reserve(static_cast<std::size_t>(g.size()));
  for (double v : g) out.push_back(pushforward(*residuals_, Affine{1.0, v}));
  return out;
}

// ---------------------------------------------------------------- ElicitationEstimator

void require_elicitable(Target t) {
  if (t.kind == Functional::variance || t.kind == Functional::stddev)
    throw DomainError(
        "the variance of a distribution cannot be elicited by a point loss; "
        "learn a dispersion from residuals instead");
  if (t.kind == Functional::quantile && !(t.alpha > 0 && t.alpha < 1))
    throw DomainError("quantile level must lie in (0,1)");
}

std::vector<Target> ElicitationEstimator::default_functionals(Shape shape, double alpha) {
  switch (shape) {
    case Shape::laplace: return {{Functional::median}, {Functional::mean}};
    case Shape::uniform: return {{Functional::quantile, alpha}, {Functional::quantile, 1 - alpha}};
    case Shape::normal: return {{Functional::mean}, {Functional::mean}};
  }
  return {};
}

ElicitationEstimator::ElicitationEstimator(Shape shape, std::unique_ptr<PointLearner> learner,
                                           std::vector<Target> functionals)
    : shape_(shape), functionals_(std::move(functionals)) {
  if (!learner) throw DomainError("elicitation needs a point learner");
  base_ = learner->render();
  if (functionals_.size() != 2) throw DomainError("elicitation needs one functional per shape parameter (2)");
  for (const auto& t : functionals_) require_elicitable(t);
  if (shape_ == Shape::uniform) {
    const auto& [a, b] = std::pair{functionals_[0], functionals_[1]};
    if (a.kind != Functional::quantile || b.kind != Functional::quantile || !(a.alpha < b.alpha) ||
        std::abs(a.alpha + b.alpha - 1.0) > 1e-12)
      throw DomainError("Uniform elicitation needs symmetric quantiles alpha < 1 - alpha");
  }
  for (const auto& t : functionals_) {
    auto l = learner->clone();
    l->set_target(t);
    learners_.emplace_back(std::move(l));
  }
}

std::string ElicitationEstimator::render() const {
  std::string s = "Elicit(" + shape_token(shape_) + ", " + base_;
  if (shape_ == Shape::uniform) s += ", alpha=" + format_shortest(functionals_[0].alpha);
  return s + ")";
}

void ElicitationEstimator::fit_impl(const Dataset& d, std::uint64_t) {
  learners_[0]->fit(d);
  if (shape_ == Shape::uniform) {
    learners_[1]->fit(d);
    return;
  }
  // dispersion from absolute deviations around the location functional
  const Eigen::VectorXd dev = (d.y - learners_[0]->predict(d.X)).cwiseAbs();
  learners_[1]->fit(d.with_targets(dev));
}

std::vector<Distribution> ElicitationEstimator::predict_impl(const Eigen::MatrixXd& X) const {
  const Eigen::VectorXd a = learners_[0]->predict(X), b = learners_[1]->predict(X);
  std::vector<Distribution> out;
  out.reserve(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    switch (shape_) {
      case Shape::laplace: out.push_back(Laplace{a[i], std::max(b[i], kTiny)}); break;
      case Shape::normal: out.push_back(Normal{a[i], std::max(b[i] * std::sqrt(kPi / 2), kTiny)}); break;
      case Shape::uniform: {
        const double alpha = functionals_[0].alpha;
        const double width = std::max((b[i] - a[i]) / (1 - 2 * alpha), kTiny);
        const double lo = a[i] - alpha * width;
        out.push_back(Uniform{lo, lo + width});
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------- point adaptor

namespace {

double expectation(const Distribution& p, const std::function<double(double)>& f) {
  const auto dec = decompose(p);
  double s = 0.0;
  if (dec.continuous && dec.alpha_c > 0)
    s += dec.alpha_c * integrate_over(*dec.continuous, [&](double y) { return f(y) * dec.continuous->pdf(y); });
  for (std::size_t i = 0; i < dec.atoms.size(); ++i) s += dec.alpha_d * dec.weights[i] * f(dec.atoms[i]);
  return s;
}

}  // namespace

std::vector<double> point_adaptor(const PredictedBatch& batch, Target t) {
  require_elicitable(t);
  std::vector<double> out;
  out.reserve(batch.size());
  for (const auto& p : batch) {
    if (t.kind == Functional::mean) {
      const double m = p.mean();
      if (!std::isfinite(m)) throw DomainError("prediction has no finite mean");
      out.push_back(m);
      continue;
    }
    const double alpha = t.kind == Functional::median ? 0.5 : t.alpha;
    auto pinball = [alpha](double r) { return r >= 0 ? alpha * r : (alpha - 1) * r; };
    const double lo = p.quantile(1e-9), hi = p.quantile(1 - 1e-9);
    out.push_back(golden_section_min([&](double th) { return expectation(p, [&](double y) { return pinball(y - th); }); },
                                     lo, hi, 1e-9 * std::max(1.0, hi - lo)));
  }
  return out;
}

}  // namespace probreg
