#include "probreg/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "probreg/error.hpp"
#include "probreg/numeric.hpp"

namespace probreg {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool operator==(const Normal& a, const Normal& b) { return a.mu == b.mu && a.sigma == b.sigma; }
bool operator==(const Laplace& a, const Laplace& b) { return a.mu == b.mu && a.b == b.b; }
bool operator==(const Uniform& a, const Uniform& b) { return a.lo == b.lo && a.hi == b.hi; }
bool operator==(const Categorical& a, const Categorical& b) {
  return a.labels == b.labels && a.probs == b.probs;
}
bool operator==(const Empirical& a, const Empirical& b) {
  return a.atoms == b.atoms && a.weights == b.weights;
}
bool operator==(const Mixture& a, const Mixture& b) {
  return a.weights == b.weights && a.components == b.components;
}
bool operator==(const KernelDensity& a, const KernelDensity& b) {
  return a.shape == b.shape && a.atoms == b.atoms && a.bandwidths == b.bandwidths &&
         a.weights == b.weights;
}
bool operator==(const Histogram& a, const Histogram& b) {
  return a.edges == b.edges && a.masses == b.masses;
}
bool operator==(const Pushforward& a, const Pushforward& b) {
  return a.base == b.base && a.map == b.map;
}
bool operator==(const Affine& a, const Affine& b) { return a.a == b.a && a.b == b.b; }
bool operator==(const Sigmoid&, const Sigmoid&) { return true; }
bool operator==(const Logit&, const Logit&) { return true; }
bool operator==(const CdfOf& a, const CdfOf& b) { return a.d == b.d; }
bool operator==(const QuantileOf& a, const QuantileOf& b) { return a.d == b.d; }
bool operator==(const Composed& a, const Composed& b) { return a.maps == b.maps; }

bool operator==(const Distribution& a, const Distribution& b) {
  if (a.node_ == b.node_) return true;
  return a.node_->v == b.node_->v;
}

bool operator==(const Diffeomorphism& a, const Diffeomorphism& b) {
  if (a.node_ == b.node_) return true;
  return a.node_->v == b.node_->v;
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kSqrt2 = 1.41421356237309504880;

std::vector<double> checked_simplex(std::vector<double> w, const char* what) {
  if (w.empty()) throw ShapeError(std::string(what) + ": empty weight vector");
  double s = 0.0;
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x))
      throw InvalidWeights(std::string(what) + ": weights must be finite and nonnegative");
    s += x;
  }
  if (std::abs(s - 1.0) > 1e-9) throw InvalidWeights(std::string(what) + ": weights must sum to 1");
  for (double& x : w) x /= s;
  return w;
}

void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw DomainError(std::string(what) + " must be finite");
}

/// Sort atoms, merge duplicates, drop zero masses.
void sort_merge(std::vector<double>& atoms, std::vector<double>& w) {
  std::vector<std::size_t> idx = iota_indices(atoms.size());
  std::stable_sort(idx.begin(), idx.end(), [&](auto i, auto j) { return atoms[i] < atoms[j]; });
  std::vector<double> a2, w2;
  for (auto i : idx) {
    require_finite(atoms[i], "atom");
    if (w[i] == 0.0) continue;
    if (!a2.empty() && a2.back() == atoms[i])
      w2.back() += w[i];
    else {
      a2.push_back(atoms[i]);
      w2.push_back(w[i]);
    }
  }
  atoms = std::move(a2);
  w = std::move(w2);
}

double mass_at(const std::vector<double>& atoms, const std::vector<double>& w, double y) {
  const auto it = std::lower_bound(atoms.begin(), atoms.end(), y);
  if (it != atoms.end() && *it == y) return w[static_cast<std::size_t>(it - atoms.begin())];
  return 0.0;
}

double discrete_cdf(const std::vector<double>& atoms, const std::vector<double>& w, double y) {
  const auto n = static_cast<std::size_t>(std::upper_bound(atoms.begin(), atoms.end(), y) - atoms.begin());
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += w[i];
  return std::min(1.0, s);
}

double discrete_quantile(const std::vector<double>& atoms, const std::vector<double>& w, double a) {
  double s = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    s += w[i];
    if (s >= a) return atoms[i];
  }
  return atoms.back();
}

Moments discrete_moments(const std::vector<double>& atoms, const std::vector<double>& w) {
  double m = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) m += w[i] * atoms[i];
  double v = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) v += w[i] * (atoms[i] - m) * (atoms[i] - m);
  return {m, std::sqrt(v)};
}

std::size_t discrete_index(const std::vector<double>& w, Rng& rng) {
  double u = uniform01(rng), s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    s += w[i];
    if (u <= s) return i;
  }
  return w.size() - 1;
}

double discrete_sample(const std::vector<double>& atoms, const std::vector<double>& w, Rng& rng) {
  return atoms[discrete_index(w, rng)];
}

double kernel_pdf(KernelShape shape, double z) {
  // z already divided by the bandwidth (kernel standard deviation)
  if (shape == KernelShape::gaussian) return normal_pdf(z);
  return std::exp(-kSqrt2 * std::abs(z)) / kSqrt2;
}

double kernel_cdf(KernelShape shape, double z) {
  if (shape == KernelShape::gaussian) return normal_cdf(z);
  return z < 0 ? 0.5 * std::exp(kSqrt2 * z) : 1.0 - 0.5 * std::exp(-kSqrt2 * z);
}

double kernel_sample(KernelShape shape, Rng& rng) {
  const double u = uniform01(rng);
  if (shape == KernelShape::gaussian) return normal_quantile(u);
  return u < 0.5 ? std::log(2.0 * u) / kSqrt2 : -std::log(2.0 * (1.0 - u)) / kSqrt2;
}

Kind kind_of_mixture(const std::vector<Distribution>& comps) {
  bool any_c = false, any_d = false;
  for (const auto& c : comps) {
    switch (c.kind()) {
      case Kind::continuous: any_c = true; break;
      case Kind::discrete: any_d = true; break;
      case Kind::mixed: any_c = any_d = true; break;
    }
  }
  if (any_c && any_d) return Kind::mixed;
  return any_c ? Kind::continuous : Kind::discrete;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

std::string num(double x) {
  const auto s = format17(x);
  return std::isfinite(x) ? s : "\"" + s + "\"";
}

std::string num_array(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += num(v[i]);
  }
  return s + "]";
}

/// Smallest x with cdf(x) >= a by bisection.
double bisect_quantile(const Distribution& d, double a) {
  Interval r = d.effective_range();
  const Interval sup = d.support();
  double lo = r.lo, hi = r.hi;
  double width = std::max(1.0, hi - lo);
  for (int i = 0; i < 200 && d.cdf(lo) >= a && lo > sup.lo; ++i) {
    lo -= width;
    width *= 2;
  }
  width = std::max(1.0, hi - lo);
  for (int i = 0; i < 200 && d.cdf(hi) < a && hi < sup.hi; ++i) {
    hi += width;
    width *= 2;
  }
  if (d.cdf(lo) >= a) return lo;
  for (int i = 0; i < 400; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (d.cdf(mid) >= a)
      hi = mid;
    else
      lo = mid;
  }
  if (d.kind() != Kind::continuous) {
    const auto dec = decompose(d);
    for (double atom : dec.atoms)
      if (atom >= lo && atom <= hi) return atom;
  }
  return hi;
}

std::vector<double> thin(std::vector<double> pts, std::size_t cap) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() <= cap) return pts;
  std::vector<double> out;
  out.reserve(cap);
  for (std::size_t i = 0; i < cap; ++i) out.push_back(pts[i * pts.size() / cap]);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// construction

Distribution::Distribution(Normal v) {
  require_finite(v.mu, "Normal mu");
  if (!(v.sigma > 0) || !std::isfinite(v.sigma)) throw DomainError("Normal sigma must be positive");
  node_ = std::make_shared<detail::DistNode>(v, Kind::continuous);
}

Distribution::Distribution(Laplace v) {
  require_finite(v.mu, "Laplace mu");
  if (!(v.b > 0) || !std::isfinite(v.b)) throw DomainError("Laplace scale must be positive");
  node_ = std::make_shared<detail::DistNode>(v, Kind::continuous);
}

Distribution::Distribution(Uniform v) {
  require_finite(v.lo, "Uniform lo");
  require_finite(v.hi, "Uniform hi");
  if (!(v.hi > v.lo)) throw DomainError("Uniform needs hi > lo");
  node_ = std::make_shared<detail::DistNode>(v, Kind::continuous);
}

Distribution::Distribution(Categorical v) {
  if (v.labels.size() != v.probs.size()) throw ShapeError("Categorical: labels and probs differ in length");
  v.probs = checked_simplex(std::move(v.probs), "Categorical");
  sort_merge(v.labels, v.probs);
  node_ = std::make_shared<detail::DistNode>(std::move(v), Kind::discrete);
}

Distribution::Distribution(Empirical v) {
  if (v.atoms.size() != v.weights.size()) throw ShapeError("Empirical: atoms and weights differ in length");
  v.weights = checked_simplex(std::move(v.weights), "Empirical");
  sort_merge(v.atoms, v.weights);
  node_ = std::make_shared<detail::DistNode>(std::move(v), Kind::discrete);
}

Distribution::Distribution(Mixture v) {
  if (v.components.size() != v.weights.size()) throw ShapeError("Mixture: components and weights differ in length");
  v.weights = checked_simplex(std::move(v.weights), "Mixture");
  const Kind k = kind_of_mixture(v.components);
  node_ = std::make_shared<detail::DistNode>(std::move(v), k);
}

Distribution::Distribution(KernelDensity v) {
  const auto n = v.atoms.size();
  if (n == 0) throw ShapeError("KernelDensity: no atoms");
  if (v.bandwidths.size() == 1 && n > 1) v.bandwidths.assign(n, v.bandwidths[0]);
  if (v.weights.empty()) v.weights.assign(n, 1.0 / static_cast<double>(n));
  if (v.bandwidths.size() != n || v.weights.size() != n) throw ShapeError("KernelDensity: length mismatch");
  for (double h : v.bandwidths)
    if (!(h > 0) || !std::isfinite(h)) throw DomainError("KernelDensity: bandwidths must be positive");
  for (double a : v.atoms) require_finite(a, "KernelDensity atom");
  v.weights = checked_simplex(std::move(v.weights), "KernelDensity");
  node_ = std::make_shared<detail::DistNode>(std::move(v), Kind::continuous);
}

Distribution::Distribution(Histogram v) {
  if (v.edges.size() < 2 || v.masses.size() + 1 != v.edges.size())
    throw ShapeError("Histogram: need edges.size() == masses.size() + 1 >= 2");
  for (std::size_t i = 0; i + 1 < v.edges.size(); ++i)
    if (!(v.edges[i + 1] > v.edges[i]) || !std::isfinite(v.edges[i + 1]) || !std::isfinite(v.edges[i]))
      throw DomainError("Histogram: edges must be finite and increasing");
  v.masses = checked_simplex(std::move(v.masses), "Histogram");
  node_ = std::make_shared<detail::DistNode>(std::move(v), Kind::continuous);
}

Distribution::Distribution(Pushforward v) {
  if (v.base.kind() != Kind::continuous)
    throw UnsupportedKind("Pushforward node needs a continuous base; use pushforward()");
  node_ = std::make_shared<detail::DistNode>(std::move(v), Kind::continuous);
}

Kind Distribution::kind() const { return node_->kind; }

std::string Distribution::variant_name() const {
  static const char* names[] = {"Normal",  "Laplace",       "Uniform",   "Categorical", "Empirical",
                                "Mixture", "KernelDensity", "Histogram", "Pushforward"};
  return names[node_->v.index()];
}

// ---------------------------------------------------------------------------
// evaluation

double Distribution::pdf(double y) const {
  if (std::isnan(y)) return 0.0;
  return std::visit(
      overloaded{
          [&](const Normal& d) { return normal_pdf((y - d.mu) / d.sigma) / d.sigma; },
          [&](const Laplace& d) { return std::exp(-std::abs(y - d.mu) / d.b) / (2.0 * d.b); },
          [&](const Uniform& d) { return (y >= d.lo && y <= d.hi) ? 1.0 / (d.hi - d.lo) : 0.0; },
          [&](const Categorical& d) { return mass_at(d.labels, d.probs, y); },
          [&](const Empirical& d) { return mass_at(d.atoms, d.weights, y); },
          [&](const Mixture& d) {
            if (kind() == Kind::mixed) {
              double mass = 0.0;
              for (std::size_t i = 0; i < d.components.size(); ++i)
                if (d.components[i].kind() != Kind::continuous) {
                  const auto dec = decompose(d.components[i]);
                  mass += d.weights[i] * dec.alpha_d * mass_at(dec.atoms, dec.weights, y);
                }
              if (mass > 0) return mass;
              double dens = 0.0;
              for (std::size_t i = 0; i < d.components.size(); ++i)
                if (d.components[i].kind() != Kind::discrete) {
                  const auto dec = decompose(d.components[i]);
                  if (dec.continuous) dens += d.weights[i] * dec.alpha_c * dec.continuous->pdf(y);
                }
              return dens;
            }
            double s = 0.0;
            for (std::size_t i = 0; i < d.components.size(); ++i) s += d.weights[i] * d.components[i].pdf(y);
            return s;
          },
          [&](const KernelDensity& d) {
            double s = 0.0;
            for (std::size_t i = 0; i < d.atoms.size(); ++i)
              s += d.weights[i] * kernel_pdf(d.shape, (y - d.atoms[i]) / d.bandwidths[i]) / d.bandwidths[i];
            return s;
          },
          [&](const Histogram& d) {
            if (y < d.edges.front() || y > d.edges.back()) return 0.0;
            auto i = static_cast<std::size_t>(std::upper_bound(d.edges.begin(), d.edges.end(), y) -
                                              d.edges.begin());
            i = std::min(i, d.masses.size()) - 1;
            return d.masses[i] / (d.edges[i + 1] - d.edges[i]);
          },
          [&](const Pushforward& d) {
            const Interval im = d.map.image();
            if (!(y > im.lo && y < im.hi)) return 0.0;
            const double x = d.map.inverse(y);
            const double p = d.base.pdf(x);
            if (p == 0.0) return 0.0;
            const double jac = std::abs(d.map.inverse_derivative(y));
            if (!std::isfinite(jac)) throw SingularTransform("map derivative vanishes at an interior point");
            return p * jac;
          },
      },
      node_->v);
}

double Distribution::log_pdf(double y) const {
  auto log_sum = [](std::vector<double>& terms) {
    const double mx = *std::max_element(terms.begin(), terms.end());
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (double t : terms) s += std::exp(t - mx);
    return mx + std::log(s);
  };
  if (std::isnan(y)) return -kInf;
  return std::visit(
      overloaded{
          [&](const Normal& d) {
            const double z = (y - d.mu) / d.sigma;
            return -0.5 * z * z - std::log(d.sigma) - 0.5 * std::log(2.0 * kPi);
          },
          [&](const Laplace& d) { return -std::abs(y - d.mu) / d.b - std::log(2.0 * d.b); },
          [&](const Mixture& d) {
            if (kind() != Kind::continuous) return std::log(pdf(y));
            std::vector<double> t;
            for (std::size_t i = 0; i < d.components.size(); ++i)
              t.push_back(std::log(d.weights[i]) + d.components[i].log_pdf(y));
            return log_sum(t);
          },
          [&](const KernelDensity& d) {
            std::vector<double> t;
            for (std::size_t i = 0; i < d.atoms.size(); ++i) {
              const double z = (y - d.atoms[i]) / d.bandwidths[i];
              const double lk = d.shape == KernelShape::gaussian ? -0.5 * z * z - 0.5 * std::log(2.0 * kPi)
                                                                 : -kSqrt2 * std::abs(z) - 0.5 * std::log(2.0);
              t.push_back(std::log(d.weights[i]) + lk - std::log(d.bandwidths[i]));
            }
            return log_sum(t);
          },
          [&](const Pushforward& d) {
            const Interval im = d.map.image();
            if (!(y > im.lo && y < im.hi)) return -kInf;
            const double x = d.map.inverse(y);
            const double lp = d.base.log_pdf(x);
            if (lp == -kInf) return -kInf;
            const double jac = std::abs(d.map.inverse_derivative(y));
            if (!std::isfinite(jac)) throw SingularTransform("map derivative vanishes at an interior point");
            return lp + std::log(jac);
          },
          [&](const auto&) { return std::log(pdf(y)); },
      },
      node_->v);
}

double Distribution::cdf(double y) const {
  if (std::isnan(y)) throw DomainError("cdf at NaN");
  return std::visit(
      overloaded{
          [&](const Normal& d) { return normal_cdf((y - d.mu) / d.sigma); },
          [&](const Laplace& d) {
            const double z = (y - d.mu) / d.b;
            return z < 0 ? 0.5 * std::exp(z) : 1.0 - 0.5 * std::exp(-z);
          },
          [&](const Uniform& d) { return std::clamp((y - d.lo) / (d.hi - d.lo), 0.0, 1.0); },
          [&](const Categorical& d) { return discrete_cdf(d.labels, d.probs, y); },
          [&](const Empirical& d) { return discrete_cdf(d.atoms, d.weights, y); },
          [&](const Mixture& d) {
            double s = 0.0;
            for (std::size_t i = 0; i < d.components.size(); ++i) s += d.weights[i] * d.components[i].cdf(y);
            return std::clamp(s, 0.0, 1.0);
          },
          [&](const KernelDensity& d) {
            double s = 0.0;
            for (std::size_t i = 0; i < d.atoms.size(); ++i)
              s += d.weights[i] * kernel_cdf(d.shape, (y - d.atoms[i]) / d.bandwidths[i]);
            return std::clamp(s, 0.0, 1.0);
          },
          [&](const Histogram& d) {
            if (y <= d.edges.front()) return 0.0;
            if (y >= d.edges.back()) return 1.0;
            double s = 0.0;
            for (std::size_t i = 0; i < d.masses.size(); ++i) {
              if (y >= d.edges[i + 1])
                s += d.masses[i];
              else {
                s += d.masses[i] * (y - d.edges[i]) / (d.edges[i + 1] - d.edges[i]);
                break;
              }
            }
            return std::clamp(s, 0.0, 1.0);
          },
          [&](const Pushforward& d) {
            const Interval im = d.map.image();
            const bool inc = d.map.increasing();
            if (y <= im.lo) return inc ? 0.0 : 1.0;
            if (y >= im.hi) return inc ? 1.0 : 0.0;
            const double c = d.base.cdf(d.map.inverse(y));
            return inc ? c : 1.0 - c;
          },
      },
      node_->v);
}

double Distribution::quantile(double a) const {
  if (!(a > 0.0 && a < 1.0)) throw DomainError("quantile level must lie strictly inside (0,1)");
  return std::visit(
      overloaded{
          [&](const Normal& d) { return d.mu + d.sigma * normal_quantile(a); },
          [&](const Laplace& d) {
            return a < 0.5 ? d.mu + d.b * std::log(2.0 * a) : d.mu - d.b * std::log(2.0 * (1.0 - a));
          },
          [&](const Uniform& d) { return d.lo + a * (d.hi - d.lo); },
          [&](const Categorical& d) { return discrete_quantile(d.labels, d.probs, a); },
          [&](const Empirical& d) { return discrete_quantile(d.atoms, d.weights, a); },
          [&](const Histogram& d) {
            double s = 0.0;
            for (std::size_t i = 0; i < d.masses.size(); ++i) {
              if (d.masses[i] > 0 && s + d.masses[i] >= a)
                return d.edges[i] + (a - s) / d.masses[i] * (d.edges[i + 1] - d.edges[i]);
              s += d.masses[i];
            }
            return d.edges.back();
          },
          [&](const Pushforward& d) {
            const double q = d.base.quantile(d.map.increasing() ? a : 1.0 - a);
            return d.map.forward(q);
          },
          [&](const auto&) { return bisect_quantile(*this, a); },
      },
      node_->v);
}

Moments Distribution::moments() const {
  std::call_once(node_->moments_once, [this] {
    node_->moments = std::visit(
        overloaded{
            [](const Normal& d) { return Moments{d.mu, d.sigma}; },
            [](const Laplace& d) { return Moments{d.mu, kSqrt2 * d.b}; },
            [](const Uniform& d) { return Moments{0.5 * (d.lo + d.hi), (d.hi - d.lo) / std::sqrt(12.0)}; },
            [](const Categorical& d) { return discrete_moments(d.labels, d.probs); },
            [](const Empirical& d) { return discrete_moments(d.atoms, d.weights); },
            [](const Mixture& d) {
              double m = 0.0, m2 = 0.0;
              for (std::size_t i = 0; i < d.components.size(); ++i) {
                const auto c = d.components[i].moments();
                m += d.weights[i] * c.mean;
                m2 += d.weights[i] * (c.std * c.std + c.mean * c.mean);
              }
              return Moments{m, std::sqrt(std::max(0.0, m2 - m * m))};
            },
            [](const KernelDensity& d) {
              double m = 0.0;
              for (std::size_t i = 0; i < d.atoms.size(); ++i) m += d.weights[i] * d.atoms[i];
              double v = 0.0;
              for (std::size_t i = 0; i < d.atoms.size(); ++i)
                v += d.weights[i] * ((d.atoms[i] - m) * (d.atoms[i] - m) + d.bandwidths[i] * d.bandwidths[i]);
              return Moments{m, std::sqrt(v)};
            },
            [](const Histogram& d) {
              double m = 0.0, m2 = 0.0;
              for (std::size_t i = 0; i < d.masses.size(); ++i) {
                const double l = d.edges[i], r = d.edges[i + 1];
                m += d.masses[i] * 0.5 * (l + r);
                m2 += d.masses[i] * (l * l + l * r + r * r) / 3.0;
              }
              return Moments{m, std::sqrt(std::max(0.0, m2 - m * m))};
            },
            [this](const Pushforward&) {
              const double m = integrate_over(*this, [this](double z) { return z * pdf(z); });
              const double v = integrate_over(*this, [&](double z) { return (z - m) * (z - m) * pdf(z); });
              if (!std::isfinite(m) || !std::isfinite(v)) throw DomainError("moments do not exist");
              return Moments{m, std::sqrt(std::max(0.0, v))};
            },
        },
        node_->v);
  });
  return node_->moments;
}

double Distribution::sample_one(Rng& rng) const {
  return std::visit(
      overloaded{
          [&](const Normal& d) { return d.mu + d.sigma * normal_quantile(uniform01(rng)); },
          [&](const Laplace& d) { return d.mu + d.b * kSqrt2 * kernel_sample(KernelShape::laplace, rng); },
          [&](const Uniform& d) { return d.lo + uniform01(rng) * (d.hi - d.lo); },
          [&](const Categorical& d) { return discrete_sample(d.labels, d.probs, rng); },
          [&](const Empirical& d) { return discrete_sample(d.atoms, d.weights, rng); },
          [&](const Mixture& d) { return d.components[discrete_index(d.weights, rng)].sample_one(rng); },
          [&](const KernelDensity& d) {
            const auto i = discrete_index(d.weights, rng);
            return d.atoms[i] + d.bandwidths[i] * kernel_sample(d.shape, rng);
          },
          [&](const Histogram& d) {
            double u = uniform01(rng), s = 0.0;
            std::size_t i = 0;
            for (; i + 1 < d.masses.size(); ++i) {
              s += d.masses[i];
              if (u <= s) break;
            }
            return d.edges[i] + uniform01(rng) * (d.edges[i + 1] - d.edges[i]);
          },
          [&](const Pushforward& d) { return d.map.forward(d.base.sample_one(rng)); },
      },
      node_->v);
}

std::vector<double> Distribution::sample(Rng& rng, std::size_t n) const {
  std::vector<double> out(n);
  for (auto& x : out) x = sample_one(rng);
  return out;
}

double Distribution::lp2_norm_sq() const {
  if (kind() == Kind::mixed) throw UnsupportedKind("squared L2 norm of a mixed law");
  std::call_once(node_->lp2_once, [this] {
    node_->lp2 = std::visit(
        overloaded{
            [](const Normal& d) { return 1.0 / (2.0 * d.sigma * std::sqrt(kPi)); },
            [](const Laplace& d) { return 1.0 / (4.0 * d.b); },
            [](const Uniform& d) { return 1.0 / (d.hi - d.lo); },
            [](const Categorical& d) {
              double s = 0.0;
              for (double p : d.probs) s += p * p;
              return s;
            },
            [](const Empirical& d) {
              double s = 0.0;
              for (double p : d.weights) s += p * p;
              return s;
            },
            [](const Histogram& d) {
              double s = 0.0;
              for (std::size_t i = 0; i < d.masses.size(); ++i)
                s += d.masses[i] * d.masses[i] / (d.edges[i + 1] - d.edges[i]);
              return s;
            },
            [this](const Mixture& d) {
              if (kind() == Kind::discrete) {
                const auto dec = decompose(*this);
                double s = 0.0;
                for (double p : dec.weights) s += p * p;
                return s;
              }
              bool all_normal = true;
              for (const auto& c : d.components) all_normal = all_normal && c.get_if<Normal>() != nullptr;
              if (all_normal) {
                double s = 0.0;
                for (std::size_t i = 0; i < d.components.size(); ++i)
                  for (std::size_t j = 0; j < d.components.size(); ++j) {
                    const auto* a = d.components[i].get_if<Normal>();
                    const auto* b = d.components[j].get_if<Normal>();
                    const double sd = std::sqrt(a->sigma * a->sigma + b->sigma * b->sigma);
                    s += d.weights[i] * d.weights[j] * normal_pdf((a->mu - b->mu) / sd) / sd;
                  }
                return s;
              }
              return integrate_over(*this, [this](double y) {
                const double p = pdf(y);
                return p * p;
              }, 1e-10);
            },
            [this](const KernelDensity& d) {
              if (d.shape == KernelShape::gaussian && d.atoms.size() <= 2000) {
                double s = 0.0;
                for (std::size_t i = 0; i < d.atoms.size(); ++i)
                  for (std::size_t j = 0; j < d.atoms.size(); ++j) {
                    const double sd = std::sqrt(d.bandwidths[i] * d.bandwidths[i] + d.bandwidths[j] * d.bandwidths[j]);
                    s += d.weights[i] * d.weights[j] * normal_pdf((d.atoms[i] - d.atoms[j]) / sd) / sd;
                  }
                return s;
              }
              return integrate_over(*this, [this](double y) {
                const double p = pdf(y);
                return p * p;
              }, 1e-10);
            },
            [this](const Pushforward&) {
              return integrate_over(*this, [this](double y) {
                const double p = pdf(y);
                return p * p;
              }, 1e-10);
            },
        },
        node_->v);
  });
  return node_->lp2;
}

// ---------------------------------------------------------------------------
// ranges

Interval Distribution::support() const {
  constexpr double inf = kInf;
  return std::visit(
      overloaded{
          [](const Normal&) { return Interval{-inf, inf}; },
          [](const Laplace&) { return Interval{-inf, inf}; },
          [](const Uniform& d) { return Interval{d.lo, d.hi}; },
          [](const Categorical& d) { return Interval{d.labels.front(), d.labels.back()}; },
          [](const Empirical& d) { return Interval{d.atoms.front(), d.atoms.back()}; },
          [](const Mixture& d) {
            Interval r{inf, -inf};
            for (const auto& c : d.components) {
              const auto s = c.support();
              r.lo = std::min(r.lo, s.lo);
              r.hi = std::max(r.hi, s.hi);
            }
            return r;
          },
          [](const KernelDensity&) { return Interval{-inf, inf}; },
          [](const Histogram& d) { return Interval{d.edges.front(), d.edges.back()}; },
          [](const Pushforward& d) {
            const auto s = d.base.support();
            double a = d.map.forward(s.lo), b = d.map.forward(s.hi);
            if (a > b) std::swap(a, b);
            const auto im = d.map.image();
            return Interval{std::max(a, im.lo), std::min(b, im.hi)};
          },
      },
      node_->v);
}

Interval Distribution::effective_range() const {
  return std::visit(
      overloaded{
          [](const Normal& d) { return Interval{d.mu - 12 * d.sigma, d.mu + 12 * d.sigma}; },
          [](const Laplace& d) { return Interval{d.mu - 12 * kSqrt2 * d.b, d.mu + 12 * kSqrt2 * d.b}; },
          [](const Uniform& d) { return Interval{d.lo, d.hi}; },
          [](const Categorical& d) { return Interval{d.labels.front(), d.labels.back()}; },
          [](const Empirical& d) { return Interval{d.atoms.front(), d.atoms.back()}; },
          [](const Mixture& d) {
            Interval r{kInf, -kInf};
            for (const auto& c : d.components) {
              const auto s = c.effective_range();
              r.lo = std::min(r.lo, s.lo);
              r.hi = std::max(r.hi, s.hi);
            }
            return r;
          },
          [](const KernelDensity& d) {
            const auto [mn, mx] = std::minmax_element(d.atoms.begin(), d.atoms.end());
            const double h = *std::max_element(d.bandwidths.begin(), d.bandwidths.end());
            const double w = d.shape == KernelShape::gaussian ? 12 * h : 17 * h;
            return Interval{*mn - w, *mx + w};
          },
          [](const Histogram& d) { return Interval{d.edges.front(), d.edges.back()}; },
          [](const Pushforward& d) {
            constexpr double tail = 1e-13;
            double a = d.map.forward(d.base.quantile(tail)), b = d.map.forward(d.base.quantile(1 - tail));
            if (a > b) std::swap(a, b);
            const auto s = d.base.effective_range();
            double c = d.map.forward(s.lo), e = d.map.forward(s.hi);
            if (c > e) std::swap(c, e);
            // the quantile range is finite; widen with the mapped base range when that is finite too
            if (std::isfinite(c)) a = std::min(a, c);
            if (std::isfinite(e)) b = std::max(b, e);
            return Interval{a, b};
          },
      },
      node_->v);
}

std::vector<double> Distribution::breakpoints() const {
  return std::visit(
      overloaded{
          [](const Normal& d) { return std::vector<double>{d.mu - d.sigma, d.mu, d.mu + d.sigma}; },
          [](const Laplace& d) { return std::vector<double>{d.mu - d.b, d.mu, d.mu + d.b}; },
          [](const Uniform& d) { return std::vector<double>{d.lo, d.hi}; },
          [](const Categorical& d) { return d.labels; },
          [](const Empirical& d) { return d.atoms; },
          [](const Mixture& d) {
            std::vector<double> pts;
            for (const auto& c : d.components) {
              const auto b = c.breakpoints();
              pts.insert(pts.end(), b.begin(), b.end());
            }
            return thin(std::move(pts), 2000);
          },
          [](const KernelDensity& d) { return thin(d.atoms, d.shape == KernelShape::laplace ? 2000 : 256); },
          [](const Histogram& d) { return d.edges; },
          [](const Pushforward& d) {
            std::vector<double> pts;
            for (double x : d.base.breakpoints()) {
              const double z = d.map.forward(x);
              if (std::isfinite(z)) pts.push_back(z);
            }
            for (double a : {1e-6, 1e-3, 0.02, 0.1, 0.25, 0.5, 0.75, 0.9, 0.98, 1 - 1e-3, 1 - 1e-6})
              pts.push_back(d.map.forward(d.base.quantile(a)));
            return thin(std::move(pts), 2000);
          },
      },
      node_->v);
}

// ---------------------------------------------------------------------------
// serialization

std::string Distribution::to_json() const {
  const std::string head = "{\"variant\":\"" + variant_name() + "\",\"params\":";
  const std::string params = std::visit(
      overloaded{
          [](const Normal& d) { return "{\"mu\":" + num(d.mu) + ",\"sigma\":" + num(d.sigma) + "}"; },
          [](const Laplace& d) { return "{\"mu\":" + num(d.mu) + ",\"b\":" + num(d.b) + "}"; },
          [](const Uniform& d) { return "{\"lo\":" + num(d.lo) + ",\"hi\":" + num(d.hi) + "}"; },
          [](const Categorical& d) {
            return "{\"labels\":" + num_array(d.labels) + ",\"probs\":" + num_array(d.probs) + "}";
          },
          [](const Empirical& d) {
            return "{\"atoms\":" + num_array(d.atoms) + ",\"weights\":" + num_array(d.weights) + "}";
          },
          [](const Mixture& d) {
            std::string s = "{\"weights\":" + num_array(d.weights) + ",\"components\":[";
            for (std::size_t i = 0; i < d.components.size(); ++i) {
              if (i) s += ",";
              s += d.components[i].to_json();
            }
            return s + "]}";
          },
          [](const KernelDensity& d) {
            return std::string("{\"shape\":\"") + (d.shape == KernelShape::gaussian ? "gaussian" : "laplace") +
                   "\",\"atoms\":" + num_array(d.atoms) + ",\"bandwidths\":" + num_array(d.bandwidths) +
                   ",\"weights\":" + num_array(d.weights) + "}";
          },
          [](const Histogram& d) {
            return "{\"edges\":" + num_array(d.edges) + ",\"masses\":" + num_array(d.masses) + "}";
          },
          [](const Pushforward& d) { return "{\"base\":" + d.base.to_json() + ",\"map\":" + d.map.to_json() + "}"; },
      },
      node_->v);
  return head + params + "}";
}

// ---------------------------------------------------------------------------
// Diffeomorphism

Diffeomorphism::Diffeomorphism(Affine v) {
  if (!(v.a != 0.0) || !std::isfinite(v.a) || !std::isfinite(v.b))
    throw DomainError("Affine map needs finite a != 0 and finite b");
  node_ = std::make_shared<detail::MapNode>(detail::MapNode{v});
}
Diffeomorphism::Diffeomorphism(Sigmoid v) : node_(std::make_shared<detail::MapNode>(detail::MapNode{v})) {}
Diffeomorphism::Diffeomorphism(Logit v) : node_(std::make_shared<detail::MapNode>(detail::MapNode{v})) {}
Diffeomorphism::Diffeomorphism(CdfOf v) {
  if (v.d.kind() != Kind::continuous) throw UnsupportedKind("CdfOf needs a continuous law");
  node_ = std::make_shared<detail::MapNode>(detail::MapNode{std::move(v)});
}
Diffeomorphism::Diffeomorphism(QuantileOf v) {
  if (v.d.kind() != Kind::continuous) throw UnsupportedKind("QuantileOf needs a continuous law");
  node_ = std::make_shared<detail::MapNode>(detail::MapNode{std::move(v)});
}
Diffeomorphism::Diffeomorphism(Composed v) : node_(std::make_shared<detail::MapNode>(detail::MapNode{std::move(v)})) {}

namespace {

double quantile_clamped(const Distribution& d, double u) {
  if (u <= 0.0) return d.support().lo;
  if (u >= 1.0) return d.support().hi;
  return d.quantile(u);
}

}  // namespace

double Diffeomorphism::forward(double x) const {
  return std::visit(overloaded{
                        [&](const Affine& m) { return m.a * x + m.b; },
                        [&](const Sigmoid&) { return sigmoid(x); },
                        [&](const Logit&) { return logit(x); },
                        [&](const CdfOf& m) { return m.d.cdf(x); },
                        [&](const QuantileOf& m) { return quantile_clamped(m.d, x); },
                        [&](const Composed& m) {
                          for (const auto& t : m.maps) x = t.forward(x);
                          return x;
                        },
                    },
                    node_->v);
}

double Diffeomorphism::inverse(double z) const {
  return std::visit(overloaded{
                        [&](const Affine& m) { return (z - m.b) / m.a; },
                        [&](const Sigmoid&) { return logit(z); },
                        [&](const Logit&) { return sigmoid(z); },
                        [&](const CdfOf& m) { return quantile_clamped(m.d, z); },
                        [&](const QuantileOf& m) { return m.d.cdf(z); },
                        [&](const Composed& m) {
                          for (auto it = m.maps.rbegin(); it != m.maps.rend(); ++it) z = it->inverse(z);
                          return z;
                        },
                    },
                    node_->v);
}

double Diffeomorphism::derivative(double x) const {
  return std::visit(overloaded{
                        [&](const Affine& m) { return m.a; },
                        [&](const Sigmoid&) {
                          const double s = sigmoid(x);
                          return s * (1.0 - s);
                        },
                        [&](const Logit&) { return 1.0 / (x * (1.0 - x)); },
                        [&](const CdfOf& m) { return m.d.pdf(x); },
                        [&](const QuantileOf& m) { return 1.0 / m.d.pdf(quantile_clamped(m.d, x)); },
                        [&](const Composed& m) {
                          double d = 1.0;
                          for (const auto& t : m.maps) {
                            d *= t.derivative(x);
                            x = t.forward(x);
                          }
                          return d;
                        },
                    },
                    node_->v);
}

double Diffeomorphism::inverse_derivative(double z) const {
  return std::visit(overloaded{
                        [&](const Affine& m) { return 1.0 / m.a; },
                        [&](const Sigmoid&) { return 1.0 / (z * (1.0 - z)); },
                        [&](const Logit&) {
                          const double s = sigmoid(z);
                          return s * (1.0 - s);
                        },
                        [&](const CdfOf& m) { return 1.0 / m.d.pdf(quantile_clamped(m.d, z)); },
                        [&](const QuantileOf& m) { return m.d.pdf(z); },
                        [&](const Composed& m) {
                          double d = 1.0;
                          for (auto it = m.maps.rbegin(); it != m.maps.rend(); ++it) {
                            d *= it->inverse_derivative(z);
                            z = it->inverse(z);
                          }
                          return d;
                        },
                    },
                    node_->v);
}

bool Diffeomorphism::increasing() const {
  return std::visit(overloaded{
                        [](const Affine& m) { return m.a > 0; },
                        [](const Composed& m) {
                          bool inc = true;
                          for (const auto& t : m.maps) inc = (inc == t.increasing());
                          return inc;
                        },
                        [](const auto&) { return true; },
                    },
                    node_->v);
}

Interval Diffeomorphism::domain() const {
  return std::visit(overloaded{
                        [](const Logit&) { return Interval{0.0, 1.0}; },
                        [](const CdfOf& m) { return m.d.support(); },
                        [](const QuantileOf&) { return Interval{0.0, 1.0}; },
                        [](const Composed& m) {
                          return m.maps.empty() ? Interval{-kInf, kInf} : m.maps.front().domain();
                        },
                        [](const auto&) { return Interval{-kInf, kInf}; },
                    },
                    node_->v);
}

Interval Diffeomorphism::image() const {
  return std::visit(overloaded{
                        [](const Sigmoid&) { return Interval{0.0, 1.0}; },
                        [](const CdfOf&) { return Interval{0.0, 1.0}; },
                        [](const QuantileOf& m) { return m.d.support(); },
                        [](const Composed& m) {
                          // map the domain through every stage, tracking the open image
                          Interval r = m.maps.empty() ? Interval{-kInf, kInf} : m.maps.front().domain();
                          for (const auto& t : m.maps) {
                            const Interval dom = t.domain();
                            const double lo = std::max(r.lo, dom.lo), hi = std::min(r.hi, dom.hi);
                            double a = t.forward(lo), b = t.forward(hi);
                            if (a > b) std::swap(a, b);
                            const Interval im = t.image();
                            r = {std::max(a, im.lo), std::min(b, im.hi)};
                          }
                          return r;
                        },
                        [](const auto&) { return Interval{-kInf, kInf}; },
                    },
                    node_->v);
}

Diffeomorphism Diffeomorphism::inverted() const {
  return std::visit(overloaded{
                        [](const Affine& m) { return Diffeomorphism(Affine{1.0 / m.a, -m.b / m.a}); },
                        [](const Sigmoid&) { return Diffeomorphism(Logit{}); },
                        [](const Logit&) { return Diffeomorphism(Sigmoid{}); },
                        [](const CdfOf& m) { return Diffeomorphism(QuantileOf{m.d}); },
                        [](const QuantileOf& m) { return Diffeomorphism(CdfOf{m.d}); },
                        [](const Composed& m) {
                          Composed r;
                          for (auto it = m.maps.rbegin(); it != m.maps.rend(); ++it) r.maps.push_back(it->inverted());
                          return Diffeomorphism(std::move(r));
                        },
                    },
                    node_->v);
}

Diffeomorphism Diffeomorphism::then(const Diffeomorphism& next) const {
  std::vector<Diffeomorphism> maps;
  std::function<void(const Diffeomorphism&)> append = [&](const Diffeomorphism& s) {
    if (const auto* c = s.get_if<Composed>()) {
      for (const auto& sub : c->maps) append(sub);
      return;
    }
    if (!maps.empty()) {
      if (maps.back().inverted() == s) {
        maps.pop_back();
        return;
      }
      const auto* a1 = maps.back().get_if<Affine>();
      const auto* a2 = s.get_if<Affine>();
      if (a1 && a2) {
        const Affine m{a2->a * a1->a, a2->a * a1->b + a2->b};
        maps.pop_back();
        if (!(m.a == 1.0 && m.b == 0.0)) maps.emplace_back(m);
        return;
      }
    }
    maps.push_back(s);
  };
  append(*this);
  append(next);
  if (maps.size() == 1) return maps.front();
  return Diffeomorphism(Composed{std::move(maps)});
}

std::string Diffeomorphism::variant_name() const {
  static const char* names[] = {"Affine", "Sigmoid", "Logit", "CdfOf", "QuantileOf", "Composed"};
  return names[node_->v.index()];
}

std::string Diffeomorphism::to_json() const {
  const std::string head = "{\"map\":\"" + variant_name() + "\"";
  return head +
         std::visit(overloaded{
                        [](const Affine& m) { return ",\"a\":" + num(m.a) + ",\"b\":" + num(m.b) + "}"; },
                        [](const CdfOf& m) { return ",\"of\":" + m.d.to_json() + "}"; },
                        [](const QuantileOf& m) { return ",\"of\":" + m.d.to_json() + "}"; },
                        [](const Composed& m) {
                          std::string s = ",\"maps\":[";
                          for (std::size_t i = 0; i < m.maps.size(); ++i) {
                            if (i) s += ",";
                            s += m.maps[i].to_json();
                          }
                          return s + "]}";
                        },
                        [](const auto&) { return std::string("}"); },
                    },
                    node_->v);
}

// ---------------------------------------------------------------------------
// free functions

Distribution mixture(std::span<const Distribution> components, std::span<const double> weights) {
  if (components.empty() || components.size() != weights.size())
    throw ShapeError("mixture: components and weights must be nonempty and of equal length");
  const auto w = checked_simplex(std::vector<double>(weights.begin(), weights.end()), "mixture");
  std::vector<Distribution> comps;
  std::vector<double> ws;
  for (std::size_t i = 0; i < components.size(); ++i) {
    if (w[i] == 0.0) continue;
    const auto it = std::find(comps.begin(), comps.end(), components[i]);
    if (it != comps.end())
      ws[static_cast<std::size_t>(it - comps.begin())] += w[i];
    else {
      comps.push_back(components[i]);
      ws.push_back(w[i]);
    }
  }
  if (comps.size() == 1) return comps.front();
  return Distribution(Mixture{std::move(comps), std::move(ws)});
}

Distribution pushforward(const Distribution& d, const Diffeomorphism& t) {
  if (const auto* c = t.get_if<Composed>(); c && c->maps.empty()) return d;
  if (const auto* v = d.get_if<Categorical>()) {
    Categorical r{v->labels, v->probs};
    for (auto& x : r.labels) x = t.forward(x);
    return Distribution(std::move(r));
  }
  if (const auto* v = d.get_if<Empirical>()) {
    Empirical r{v->atoms, v->weights};
    for (auto& x : r.atoms) x = t.forward(x);
    return Distribution(std::move(r));
  }
  if (const auto* v = d.get_if<Pushforward>()) {
    const auto composed = v->map.then(t);
    if (const auto* c = composed.get_if<Composed>(); c && c->maps.empty()) return v->base;
    if (composed.get_if<Affine>()) return pushforward(v->base, composed);
    return Distribution(Pushforward{v->base, composed});
  }
  if (const auto* v = d.get_if<Mixture>(); v && (d.kind() != Kind::continuous || t.get_if<Affine>())) {
    Mixture r{{}, v->weights};
    for (const auto& comp : v->components) r.components.push_back(pushforward(comp, t));
    return Distribution(std::move(r));
  }
  if (const auto* a = t.get_if<Affine>()) {
    const double s = std::abs(a->a);
    if (const auto* v = d.get_if<Normal>()) return Normal{a->a * v->mu + a->b, s * v->sigma};
    if (const auto* v = d.get_if<Laplace>()) return Laplace{a->a * v->mu + a->b, s * v->b};
    if (const auto* v = d.get_if<Uniform>()) {
      double lo = t.forward(v->lo), hi = t.forward(v->hi);
      if (lo > hi) std::swap(lo, hi);
      return Uniform{lo, hi};
    }
    if (const auto* v = d.get_if<KernelDensity>()) {
      KernelDensity r = *v;
      for (auto& x : r.atoms) x = t.forward(x);
      for (auto& h : r.bandwidths) h *= s;
      return r;
    }
    if (const auto* v = d.get_if<Histogram>()) {
      Histogram r = *v;
      for (auto& e : r.edges) e = t.forward(e);
      if (a->a < 0) {
        std::reverse(r.edges.begin(), r.edges.end());
        std::reverse(r.masses.begin(), r.masses.end());
      }
      return r;
    }
  }
  return Distribution(Pushforward{d, t});
}

Distribution pullback(const Distribution& d, const Diffeomorphism& u) { return pushforward(d, u.inverted()); }

Decomposition decompose(const Distribution& d) {
  Decomposition out;
  if (d.kind() == Kind::continuous) {
    out.alpha_c = 1.0;
    out.continuous = d;
    return out;
  }
  if (const auto* v = d.get_if<Categorical>()) {
    out.alpha_d = 1.0;
    out.atoms = v->labels;
    out.weights = v->probs;
    return out;
  }
  if (const auto* v = d.get_if<Empirical>()) {
    out.alpha_d = 1.0;
    out.atoms = v->atoms;
    out.weights = v->weights;
    return out;
  }
  const auto& m = *d.get_if<Mixture>();
  std::vector<Distribution> cont;
  std::vector<double> cont_w, atoms, atom_w;
  for (std::size_t i = 0; i < m.components.size(); ++i) {
    const auto sub = decompose(m.components[i]);
    if (sub.alpha_c > 0) {
      cont.push_back(*sub.continuous);
      cont_w.push_back(m.weights[i] * sub.alpha_c);
    }
    for (std::size_t j = 0; j < sub.atoms.size(); ++j) {
      atoms.push_back(sub.atoms[j]);
      atom_w.push_back(m.weights[i] * sub.alpha_d * sub.weights[j]);
    }
  }
  out.alpha_c = std::accumulate(cont_w.begin(), cont_w.end(), 0.0);
  out.alpha_d = std::accumulate(atom_w.begin(), atom_w.end(), 0.0);
  if (out.alpha_c > 0) {
    for (auto& w : cont_w) w /= out.alpha_c;
    out.continuous = cont.size() == 1 ? cont.front() : Distribution(Mixture{cont, cont_w});
  }
  if (out.alpha_d > 0) {
    for (auto& w : atom_w) w /= out.alpha_d;
    sort_merge(atoms, atom_w);
    out.atoms = std::move(atoms);
    out.weights = std::move(atom_w);
  }
  const double total = out.alpha_c + out.alpha_d;
  out.alpha_c /= total;
  out.alpha_d /= total;
  return out;
}

double integrate_over(const Distribution& d, const std::function<double(double)>& f, double tol) {
  const auto r = d.effective_range();
  const auto bp = d.breakpoints();
  return integrate_pieces(f, r.lo, r.hi, bp, tol);
}

Distribution logistic(double location, double scale) {
  if (!(scale > 0)) throw DomainError("logistic scale must be positive");
  const Diffeomorphism t = Diffeomorphism(Affine{1.0 / scale, -location / scale}).then(Sigmoid{});
  return pullback(Uniform{0.0, 1.0}, t);
}

}  // namespace probreg
