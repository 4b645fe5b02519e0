#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "probreg/random.hpp"

namespace probreg {

enum class Kind { continuous, discrete, mixed };
enum class KernelShape { gaussian, laplace };

struct Interval {
  double lo;
  double hi;
};

struct Moments {
  double mean;
  double std;
};

class Diffeomorphism;

namespace detail {
struct DistNode;
struct MapNode;
}  // namespace detail

struct Normal;
struct Laplace;
struct Uniform;
struct Categorical;
struct Empirical;
struct Mixture;
struct KernelDensity;
struct Histogram;
struct Pushforward;

/// Immutable predicted law on the reals (or on a finite label set).
///
/// Cheap to copy; copies share the underlying node.  Continuous variants
/// report densities, discrete ones report masses (also under pdf()).
class Distribution {
 public:
  Distribution(Normal v);
  Distribution(Laplace v);
  Distribution(Uniform v);
  Distribution(Categorical v);
  Distribution(Empirical v);
  Distribution(Mixture v);
  Distribution(KernelDensity v);
  Distribution(Histogram v);
  Distribution(Pushforward v);

  Kind kind() const;
  double pdf(double y) const;
  /// log pdf(y), evaluated in log space where a closed form exists.
  double log_pdf(double y) const;
  double cdf(double y) const;
  /// Lower generalized inverse of the cdf; alpha in (0,1).
  double quantile(double alpha) const;
  Moments moments() const;
  double mean() const { return moments().mean; }
  double stddev() const { return moments().std; }
  double sample_one(Rng& rng) const;
  std::vector<double> sample(Rng& rng, std::size_t n) const;
  /// Squared L2 norm of the density (or sum of squared masses).
  double lp2_norm_sq() const;

  /// Closure of the set where the law puts mass.
  Interval support() const;
  /// Finite range holding all but a negligible amount of mass; used for quadrature.
  Interval effective_range() const;
  /// Points where the density may bend or jump, plus component centres.
  std::vector<double> breakpoints() const;

  std::string variant_name() const;
  std::string to_json() const;

  template <class T>
  const T* get_if() const;

  friend bool operator==(const Distribution& a, const Distribution& b);

  const detail::DistNode& node() const { return *node_; }

 private:
  explicit Distribution(std::shared_ptr<const detail::DistNode> n) : node_(std::move(n)) {}
  std::shared_ptr<const detail::DistNode> node_;
};

struct Normal {
  double mu = 0.0;
  double sigma = 1.0;
};

/// Laplace law with location mu and scale b (variance 2 b^2).
struct Laplace {
  double mu = 0.0;
  double b = 1.0;
};

struct Uniform {
  double lo = 0.0;
  double hi = 1.0;
};

/// Law on a finite set of labels (encoded as reals).
struct Categorical {
  std::vector<double> labels;
  std::vector<double> probs;
};

/// Weighted atoms.
struct Empirical {
  std::vector<double> atoms;
  std::vector<double> weights;
};

struct Mixture {
  std::vector<Distribution> components;
  std::vector<double> weights;
};

/// Weighted sum of kernels centred at atoms; bandwidth is the kernel standard deviation.
struct KernelDensity {
  std::vector<double> atoms;
  std::vector<double> bandwidths;
  std::vector<double> weights;
  KernelShape shape = KernelShape::gaussian;
};

struct Histogram {
  std::vector<double> edges;
  std::vector<double> masses;
};

// ---------------------------------------------------------------------------

struct Affine {
  double a = 1.0;
  double b = 0.0;
};
struct Sigmoid {};
struct Logit {};
/// The cdf of a continuous law with positive density on its support.
struct CdfOf;
struct QuantileOf;
struct Composed;

/// Strictly monotone differentiable bijection between open intervals.
class Diffeomorphism {
 public:
  Diffeomorphism(Affine v);
  Diffeomorphism(Sigmoid v);
  Diffeomorphism(Logit v);
  Diffeomorphism(CdfOf v);
  Diffeomorphism(QuantileOf v);
  Diffeomorphism(Composed v);

  double forward(double x) const;
  double inverse(double z) const;
  double derivative(double x) const;
  /// Derivative of the inverse map at z.
  double inverse_derivative(double z) const;
  bool increasing() const;
  Interval domain() const;
  Interval image() const;
  Diffeomorphism inverted() const;
  /// next o this
  Diffeomorphism then(const Diffeomorphism& next) const;

  std::string variant_name() const;
  std::string to_json() const;

  template <class T>
  const T* get_if() const;

  friend bool operator==(const Diffeomorphism& a, const Diffeomorphism& b);

  const detail::MapNode& node() const { return *node_; }

 private:
  std::shared_ptr<const detail::MapNode> node_;
};

struct CdfOf {
  Distribution d;
};
struct QuantileOf {
  Distribution d;
};
/// Maps applied left to right.
struct Composed {
  std::vector<Diffeomorphism> maps;
};

struct Pushforward {
  Distribution base;
  Diffeomorphism map;
};

namespace detail {

using DistVariant = std::variant<Normal, Laplace, Uniform, Categorical, Empirical, Mixture,
                                 KernelDensity, Histogram, Pushforward>;
using MapVariant = std::variant<Affine, Sigmoid, Logit, CdfOf, QuantileOf, Composed>;

struct DistNode {
  DistNode(DistVariant value, Kind k) : v(std::move(value)), kind(k) {}
  DistVariant v;
  Kind kind;
  // lazily computed, guarded for concurrent readers
  mutable std::once_flag lp2_once;
  mutable double lp2 = 0.0;
  mutable std::once_flag moments_once;
  mutable Moments moments{};
};

struct MapNode {
  MapVariant v;
};

}  // namespace detail

template <class T>
const T* Distribution::get_if() const {
  return std::get_if<T>(&node_->v);
}

template <class T>
const T* Diffeomorphism::get_if() const {
  return std::get_if<T>(&node_->v);
}

/// Split of a law into alpha_c * continuous + alpha_d * atoms.
struct Decomposition {
  double alpha_c = 0.0;
  std::optional<Distribution> continuous;
  double alpha_d = 0.0;
  std::vector<double> atoms;
  std::vector<double> weights;  // sum to 1 when alpha_d > 0
};

/// Weighted mixture; structurally equal components are merged and a single
/// remaining component is returned unwrapped.
Distribution mixture(std::span<const Distribution> components, std::span<const double> weights);

Distribution pushforward(const Distribution& d, const Diffeomorphism& t);
Distribution pullback(const Distribution& d, const Diffeomorphism& u);

Decomposition decompose(const Distribution& d);

/// Integral of f over the effective range of d, split at its breakpoints.
double integrate_over(const Distribution& d, const std::function<double(double)>& f,
                      double tol = 1e-10);

/// Logistic law, the pull-back of Uniform(0,1) through the sigmoid.
Distribution logistic(double location = 0.0, double scale = 1.0);

}  // namespace probreg
