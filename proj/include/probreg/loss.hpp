#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "probreg/distribution.hpp"

namespace probreg {

/// Symmetric kernel on the reals.
class KernelFn {
 public:
  enum class Tag { gaussian, laplace, constant };

  static KernelFn gaussian(double sigma);
  static KernelFn laplace(double lambda);
  static KernelFn constant(double c);

  double operator()(double y, double y2) const;
  bool characteristic() const { return tag_ != Tag::constant; }
  Tag tag() const { return tag_; }
  double param() const { return param_; }
  std::string id() const;

 private:
  KernelFn(Tag t, double p) : tag_(t), param_(p) {}
  Tag tag_;
  double param_;
};

struct LossProperties {
  bool proper;
  bool strictly_proper;
  bool strictly_local;
};

class Loss;

struct LogLoss {};
struct CappedLogLoss {
  double eps = 1e-10;
};
/// Log-loss of eps * reference + (1 - eps) * p.
struct EpsMixtureLogLoss {
  double eps = 1e-10;
  Distribution reference = Uniform{0.0, 1.0};
};
struct GneitingLoss {};
/// Weighted integral of Brier losses over cut-offs; unset weight means N(0,1)
/// until bound to a label range.
struct Crps {
  std::optional<Distribution> weight;
  std::size_t grid = 2000;
};
struct KernelLoss {
  KernelFn kernel = KernelFn::gaussian(1.0);
  std::size_t mc = 2000;
  std::uint64_t seed = 0;
};
struct ConvolutionLoss {
  std::shared_ptr<const Loss> base;
  Distribution noise = Normal{0.0, 1.0};
  std::size_t m = 100;
  std::uint64_t seed = 0;
};
/// alpha_b * Lb(on/off locus) + (alpha_c * Lc off locus | alpha_d * Ld on locus).
struct SplitMixedLoss {
  double alpha_b = 1.0, alpha_c = 1.0, alpha_d = 1.0;
  std::vector<double> locus;
  std::shared_ptr<const Loss> lb, lc, ld;  // null means log-loss
};
/// (mu - y)^2 / nu + log nu with mu, nu the predicted mean and variance.
struct MeanVarianceLoss {};

class Loss {
 public:
  using Variant = std::variant<LogLoss, CappedLogLoss, EpsMixtureLogLoss, GneitingLoss, Crps, KernelLoss,
                               ConvolutionLoss, SplitMixedLoss, MeanVarianceLoss>;

  Loss(Variant v);
  template <class T, class = std::enable_if_t<std::is_constructible_v<Variant, T>>>
  Loss(T v) : Loss(Variant(std::move(v))) {}

  double operator()(const Distribution& p, double y) const;
  LossProperties properties() const;
  /// Identifier in the CLI syntax.
  std::string id() const;
  /// Binds the CRPS default weight to a label range; other losses are returned unchanged.
  Loss with_label_range(double lo, double hi) const;
  const Variant& variant() const { return v_; }

 private:
  Variant v_;
};

/// Parses `log`, `log_capped:EPS`, `gneiting`, `crps`, `kernel:gauss:SIGMA`,
/// `conv:log:SIGMA:M`, `meanvar`.
Loss parse_loss(std::string_view id);

double log_loss(const Distribution& p, double y);
double capped_log_loss(const Distribution& p, double y, double eps = 1e-10);
double eps_mixture_log_loss(const Distribution& p, double y, double eps, const Distribution& reference);
double gneiting_loss(const Distribution& p, double y);
double mean_variance_loss(double mu, double nu, double y);
double crps(const Distribution& f, double y, const Distribution& weight, std::size_t grid = 2000);
double kernel_loss(const Distribution& p, double y, const KernelFn& k, std::size_t mc = 2000,
                   std::uint64_t seed = 0);
double convolution_loss(const Loss& base, const Distribution& p, double y, const Distribution& noise,
                        std::size_t m, std::uint64_t seed = 0);
double split_mixed_loss(const Distribution& p, double y, const SplitMixedLoss& spec);

struct PropernessReport {
  std::size_t truths = 0;
  std::size_t grid_points = 0;
  double step = 0.0;
  /// min over truths and grid q of E[L(q,Y)] - E[L(p_Y,Y)]; negative means improper
  double min_gap = 0.0;
  /// worst max-norm distance between a grid minimizer and the truth
  double max_argmin_distance = 0.0;
  /// expected loss constant in q up to 1e-9 for every truth
  bool flat = false;
  bool proper() const { return min_gap >= -1e-9; }
  bool minimizer_at_truth() const { return max_argmin_distance <= step + 1e-12; }
};

/// Expected-loss scan over the simplex grid with the given step for random pmfs on n labels.
PropernessReport properness_probe(const Loss& loss, std::size_t n, double step, std::size_t truths,
                                  std::uint64_t seed);

}  // namespace probreg
