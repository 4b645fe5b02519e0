#include "probreg/loss.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "probreg/adaptors.hpp"
#include "probreg/error.hpp"
#include "probreg/numeric.hpp"

namespace probreg {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// ---------------------------------------------------------------------------
// kernels

KernelFn KernelFn::gaussian(double sigma) {
  if (!(sigma > 0)) throw DomainError("Gaussian kernel needs sigma > 0");
  return {Tag::gaussian, sigma};
}
KernelFn KernelFn::laplace(double lambda) {
  if (!(lambda > 0)) throw DomainError("Laplace kernel needs lambda > 0");
  return {Tag::laplace, lambda};
}
KernelFn KernelFn::constant(double c) { return {Tag::constant, c}; }

double KernelFn::operator()(double y, double y2) const {
  const double d = y - y2;
  switch (tag_) {
    case Tag::gaussian: return std::exp(-d * d / (2.0 * param_ * param_));
    case Tag::laplace: return std::exp(-param_ * std::abs(d));
    case Tag::constant: return param_;
  }
  return 0.0;
}

std::string KernelFn::id() const {
  switch (tag_) {
    case Tag::gaussian: return "gauss:" + format17(param_);
    case Tag::laplace: return "laplace:" + format17(param_);
    case Tag::constant: return "const:" + format17(param_);
  }
  return {};
}

// ---------------------------------------------------------------------------
// loss functions

double log_loss(const Distribution& p, double y) {
  if (p.kind() == Kind::mixed) throw UnsupportedKind("log-loss is undefined for mixed predictions");
  return -p.log_pdf(y);
}

double capped_log_loss(const Distribution& p, double y, double eps) {
  if (!(eps > 0 && eps < 1)) throw DomainError("cap eps must lie in (0,1)");
  return std::min(-std::log(eps), log_loss(p, y));
}

double eps_mixture_log_loss(const Distribution& p, double y, double eps, const Distribution& reference) {
  if (!(eps >= 0 && eps < 1)) throw DomainError("mixture eps must lie in [0,1)");
  if (p.kind() == Kind::mixed || reference.kind() != p.kind())
    throw UnsupportedKind("mixture log-loss needs prediction and reference of the same pure kind");
  const double d = eps * reference.pdf(y) + (1.0 - eps) * p.pdf(y);
  return d > 0 ? -std::log(d) : kInf;
}

double gneiting_loss(const Distribution& p, double y) {
  if (p.kind() == Kind::mixed) throw UnsupportedKind("Gneiting loss is undefined for mixed predictions");
  return -2.0 * p.pdf(y) + p.lp2_norm_sq();
}

double mean_variance_loss(double mu, double nu, double y) {
  if (!(nu > 0)) throw DomainError("mean-variance loss needs nu > 0");
  return (mu - y) * (mu - y) / nu + std::log(nu);
}

double crps(const Distribution& f, double y, const Distribution& weight, std::size_t grid) {
  if (weight.kind() != Kind::continuous) throw UnsupportedKind("CRPS weight must be continuous");
  if (grid < 4) throw DomainError("CRPS grid needs at least 4 points");
  const double lo = weight.quantile(1e-6), hi = weight.quantile(1.0 - 1e-6);
  // the integrand jumps at tau = y and at atoms of f; integrate piecewise with one-sided limits
  std::vector<double> cuts{lo, hi};
  if (y > lo && y < hi) cuts.push_back(y);
  for (double x : f.breakpoints())
    if (x > lo && x < hi) cuts.push_back(x);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  auto g = [&](double t, double F) {
    const double v = t >= y ? (1.0 - F) * (1.0 - F) : F * F;
    return v == 0.0 ? 0.0 : weight.pdf(t) * v;
  };
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double a = cuts[k], b = cuts[k + 1];
    const auto n = std::max<std::size_t>(
        2, static_cast<std::size_t>(std::llround(static_cast<double>(grid) * (b - a) / (hi - lo))));
    const double h = (b - a) / static_cast<double>(n);
    const double before_b = std::nextafter(b, a);
    double s = 0.5 * (g(a, f.cdf(a)) + g(before_b, f.cdf(before_b)));
    for (std::size_t i = 1; i < n; ++i) {
      const double t = a + h * static_cast<double>(i);
      s += g(t, f.cdf(t));
    }
    total += s * h;
  }
  return total;
}

double kernel_loss(const Distribution& p, double y, const KernelFn& k, std::size_t mc, std::uint64_t seed) {
  if (k.tag() == KernelFn::Tag::constant) return -k.param();
  if (p.kind() == Kind::discrete) {
    const auto dec = decompose(p);
    double kpy = 0.0, kpp = 0.0;
    for (std::size_t i = 0; i < dec.atoms.size(); ++i) {
      kpy += dec.weights[i] * k(dec.atoms[i], y);
      for (std::size_t j = 0; j < dec.atoms.size(); ++j)
        kpp += dec.weights[i] * dec.weights[j] * k(dec.atoms[i], dec.atoms[j]);
    }
    return -2.0 * kpy + kpp;
  }
  if (mc == 0) throw DomainError("kernel loss needs mc >= 1 draws");
  Rng rng(seed);
  const auto a = p.sample(rng, mc);
  const auto b = p.sample(rng, mc);
  double kpy = 0.0, kpp = 0.0;
  for (std::size_t i = 0; i < mc; ++i) {
    kpy += k(a[i], y);
    kpp += k(a[i], b[i]);
  }
  return (-2.0 * kpy + kpp) / static_cast<double>(mc);
}

double convolution_loss(const Loss& base, const Distribution& p, double y, const Distribution& noise,
                        std::size_t m, std::uint64_t seed) {
  if (m == 0) throw DomainError("convolution loss needs m >= 1");
  Rng adapt_rng(derive_seed(seed, {1})), eval_rng(derive_seed(seed, {2}));
  const auto conv = convolution_adaptor(p, noise, m, adapt_rng);
  double s = 0.0;
  for (std::size_t j = 0; j < m; ++j) s += base(conv, y + noise.sample_one(eval_rng));
  return s / static_cast<double>(m);
}

double split_mixed_loss(const Distribution& p, double y, const SplitMixedLoss& spec) {
  const Loss log_l = LogLoss{};
  const Loss& lb = spec.lb ? *spec.lb : log_l;
  const Loss& lc = spec.lc ? *spec.lc : log_l;
  const Loss& ld = spec.ld ? *spec.ld : log_l;
  const auto dec = decompose(p);
  const auto on_locus = [&](double v) { return std::find(spec.locus.begin(), spec.locus.end(), v) != spec.locus.end(); };

  std::vector<double> atoms, w;
  double locus_mass = 0.0;
  for (std::size_t i = 0; i < dec.atoms.size(); ++i)
    if (on_locus(dec.atoms[i])) {
      atoms.push_back(dec.atoms[i]);
      w.push_back(dec.weights[i]);
      locus_mass += dec.alpha_d * dec.weights[i];
    }
  locus_mass = std::clamp(locus_mass, 0.0, 1.0);
  const bool hit = on_locus(y);
  const Distribution pb = Categorical{{0.0, 1.0}, {1.0 - locus_mass, locus_mass}};
  const double binary = spec.alpha_b * lb(pb, hit ? 1.0 : 0.0);
  if (hit) {
    if (atoms.empty()) return kInf;
    const double s = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& x : w) x /= s;
    return binary + spec.alpha_d * ld(Distribution(Empirical{atoms, w}), y);
  }
  if (!dec.continuous) return kInf;
  return binary + spec.alpha_c * lc(*dec.continuous, y);
}

// ---------------------------------------------------------------------------
// Loss

Loss::Loss(Variant v) : v_(std::move(v)) {
  std::visit(overloaded{
                 [](const CappedLogLoss& l) {
                   if (!(l.eps > 0 && l.eps < 1)) throw DomainError("cap eps must lie in (0,1)");
                 },
                 [](const EpsMixtureLogLoss& l) {
                   if (!(l.eps >= 0 && l.eps < 1)) throw DomainError("mixture eps must lie in [0,1)");
                 },
                 [](const ConvolutionLoss& l) {
                   if (!l.base) throw DomainError("convolution loss needs a base loss");
                   if (l.m == 0) throw DomainError("convolution loss needs m >= 1");
                   if (l.noise.kind() != Kind::continuous) throw UnsupportedKind("convolution noise must be continuous");
                 },
                 [](const SplitMixedLoss& l) {
                   if (!(l.alpha_b > 0 && l.alpha_c > 0 && l.alpha_d > 0))
                     throw DomainError("split loss weights must be positive");
                 },
                 [](const auto&) {},
             },
             v_);
}

double Loss::operator()(const Distribution& p, double y) const {
  return std::visit(
      overloaded{
          [&](const LogLoss&) { return log_loss(p, y); },
          [&](const CappedLogLoss& l) { return capped_log_loss(p, y, l.eps); },
          [&](const EpsMixtureLogLoss& l) { return eps_mixture_log_loss(p, y, l.eps, l.reference); },
          [&](const GneitingLoss&) { return gneiting_loss(p, y); },
          [&](const Crps& l) { return crps(p, y, l.weight ? *l.weight : Distribution(Normal{0, 1}), l.grid); },
          [&](const KernelLoss& l) { return kernel_loss(p, y, l.kernel, l.mc, l.seed); },
          [&](const ConvolutionLoss& l) { return convolution_loss(*l.base, p, y, l.noise, l.m, l.seed); },
          [&](const SplitMixedLoss& l) { return split_mixed_loss(p, y, l); },
          [&](const MeanVarianceLoss&) {
            const auto m = p.moments();
            return mean_variance_loss(m.mean, m.std * m.std, y);
          },
      },
      v_);
}

LossProperties Loss::properties() const {
  return std::visit(
      overloaded{
          [](const LogLoss&) { return LossProperties{true, true, true}; },
          [](const CappedLogLoss&) { return LossProperties{false, false, true}; },
          [](const EpsMixtureLogLoss&) { return LossProperties{false, false, true}; },
          [](const GneitingLoss&) { return LossProperties{true, true, false}; },
          [](const Crps&) { return LossProperties{true, true, false}; },
          [](const KernelLoss& l) { return LossProperties{true, l.kernel.characteristic(), false}; },
          [](const ConvolutionLoss& l) {
            const auto b = l.base->properties();
            return LossProperties{b.proper, b.strictly_proper && l.noise.get_if<Normal>() != nullptr, false};
          },
          [](const SplitMixedLoss& l) {
            LossProperties r{true, true, false};
            for (const auto& part : {l.lb, l.lc, l.ld})
              if (part) {
                const auto q = part->properties();
                r.proper = r.proper && q.proper;
                r.strictly_proper = r.strictly_proper && q.strictly_proper;
              }
            return r;
          },
          [](const MeanVarianceLoss&) { return LossProperties{true, false, false}; },
      },
      v_);
}

std::string Loss::id() const {
  return std::visit(overloaded{
                        [](const LogLoss&) { return std::string("log"); },
                        [](const CappedLogLoss& l) { return "log_capped:" + format17(l.eps); },
                        [](const EpsMixtureLogLoss& l) { return "log_mix:" + format17(l.eps); },
                        [](const GneitingLoss&) { return std::string("gneiting"); },
                        [](const Crps&) { return std::string("crps"); },
                        [](const KernelLoss& l) { return "kernel:" + l.kernel.id(); },
                        [](const ConvolutionLoss& l) {
                          const auto* n = l.noise.get_if<Normal>();
                          return "conv:" + l.base->id() + ":" + (n ? format17(n->sigma) : l.noise.variant_name()) +
                                 ":" + std::to_string(l.m);
                        },
                        [](const SplitMixedLoss&) { return std::string("split"); },
                        [](const MeanVarianceLoss&) { return std::string("meanvar"); },
                    },
                    v_);
}

Loss Loss::with_label_range(double lo, double hi) const {
  if (const auto* c = std::get_if<Crps>(&v_); c && !c->weight) {
    const double centre = 0.5 * (lo + hi);
    const double scale = hi > lo ? 0.5 * (hi - lo) : 1.0;
    return Crps{Distribution(Normal{centre, scale}), c->grid};
  }
  return *this;
}

// ---------------------------------------------------------------------------
// parsing

namespace {

double parse_number(std::string_view s, std::size_t offset) {
  double x = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) throw ParseError(offset, "expected a number");
  return x;
}

}  // namespace

Loss parse_loss(std::string_view id) {
  std::vector<std::string_view> parts;
  std::vector<std::size_t> offsets;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= id.size(); ++i)
    if (i == id.size() || id[i] == ':') {
      parts.push_back(id.substr(start, i - start));
      offsets.push_back(start);
      start = i + 1;
    }
  const auto head = parts[0];
  auto arity = [&](std::size_t lo, std::size_t hi) {
    if (parts.size() < lo || parts.size() > hi) throw ParseError(0, "wrong number of fields in loss id '" + std::string(id) + "'");
  };
  if (head == "log") {
    arity(1, 1);
    return LogLoss{};
  }
  if (head == "log_capped") {
    arity(1, 2);
    return CappedLogLoss{parts.size() == 2 ? parse_number(parts[1], offsets[1]) : 1e-10};
  }
  if (head == "log_mix") {
    arity(1, 2);
    return EpsMixtureLogLoss{parts.size() == 2 ? parse_number(parts[1], offsets[1]) : 1e-10, Uniform{0, 1}};
  }
  if (head == "gneiting") {
    arity(1, 1);
    return GneitingLoss{};
  }
  if (head == "crps") {
    arity(1, 2);
    Crps c;
    if (parts.size() == 2) c.grid = static_cast<std::size_t>(parse_number(parts[1], offsets[1]));
    return c;
  }
  if (head == "meanvar") {
    arity(1, 1);
    return MeanVarianceLoss{};
  }
  if (head == "kernel") {
    arity(3, 3);
    const double v = parse_number(parts[2], offsets[2]);
    if (parts[1] == "gauss") return KernelLoss{KernelFn::gaussian(v)};
    if (parts[1] == "laplace") return KernelLoss{KernelFn::laplace(v)};
    if (parts[1] == "const") return KernelLoss{KernelFn::constant(v)};
    throw ParseError(offsets[1], "unknown kernel '" + std::string(parts[1]) + "'");
  }
  if (head == "conv") {
    arity(4, 4);
    const auto base = std::make_shared<const Loss>(parse_loss(parts[1]));
    const double sigma = parse_number(parts[2], offsets[2]);
    const auto m = static_cast<std::size_t>(parse_number(parts[3], offsets[3]));
    return ConvolutionLoss{base, Normal{0.0, sigma}, m, 0};
  }
  throw ParseError(0, "unknown loss '" + std::string(id) + "'");
}

// ---------------------------------------------------------------------------
// properness probe

PropernessReport properness_probe(const Loss& loss, std::size_t n, double step, std::size_t truths,
                                  std::uint64_t seed) {
  if (n < 2 || n > 5) throw DomainError("properness probe supports 2 to 5 labels");
  const auto K = static_cast<int>(std::llround(1.0 / step));
  if (K < 1 || std::abs(K * step - 1.0) > 1e-9) throw DomainError("grid step must divide 1");
  std::vector<double> labels(n);
  std::iota(labels.begin(), labels.end(), 0.0);

  // all compositions of K into n parts
  std::vector<std::vector<double>> grid;
  std::vector<int> c(n, 0);
  std::function<void(std::size_t, int)> rec = [&](std::size_t i, int left) {
    if (i + 1 == n) {
      c[i] = left;
      std::vector<double> q(n);
      for (std::size_t k = 0; k < n; ++k) q[k] = c[k] * step;
      grid.push_back(std::move(q));
      return;
    }
    for (int v = 0; v <= left; ++v) {
      c[i] = v;
      rec(i + 1, left - v);
    }
  };
  rec(0, K);

  // loss table L(q, label) is independent of the truth
  std::vector<std::vector<double>> table(grid.size(), std::vector<double>(n));
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const Distribution q = Categorical{labels, grid[g]};
    for (std::size_t k = 0; k < n; ++k) table[g][k] = loss(q, labels[k]);
  }

  PropernessReport rep;
  rep.truths = truths;
  rep.grid_points = grid.size();
  rep.step = step;
  rep.min_gap = kInf;
  rep.flat = true;
  Rng rng(seed);
  for (std::size_t t = 0; t < truths; ++t) {
    std::vector<double> p(n);
    double s = 0.0;
    for (auto& x : p) s += (x = -std::log(uniform01(rng)));
    for (auto& x : p) x /= s;
    const Distribution truth = Categorical{labels, p};
    double at_truth = 0.0;
    for (std::size_t k = 0; k < n; ++k) at_truth += p[k] * loss(truth, labels[k]);

    double best = kInf, worst = -kInf;
    std::size_t arg = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      double e = 0.0;
      for (std::size_t k = 0; k < n; ++k)
        if (p[k] > 0) e += p[k] * table[g][k];
      if (e < best) {
        best = e;
        arg = g;
      }
      worst = std::max(worst, e);
    }
    rep.min_gap = std::min(rep.min_gap, best - at_truth);
    double dist = 0.0;
    for (std::size_t k = 0; k < n; ++k) dist = std::max(dist, std::abs(grid[arg][k] - p[k]));
    rep.max_argmin_distance = std::max(rep.max_argmin_distance, dist);
    if (!(worst - best <= 1e-9)) rep.flat = false;
  }
  return rep;
}

}  // namespace probreg
