#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

namespace probreg::testing {

/// Composite Simpson with a fixed number of panels; independent of the library quadrature.
inline double simpson_fixed(const std::function<double(double)>& f, double a, double b, int n = 200000) {
  if (n % 2) ++n;
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

/// sup |F_n - F| of a sample against a reference cdf.
inline double ks_distance(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, std::abs((i + 1) / n - f), std::abs(f - i / n)});
  }
  return d;
}

/// Asymptotic Kolmogorov p-value for distance d at sample size n.
inline double ks_pvalue(double d, std::size_t n) {
  const double t = (std::sqrt(static_cast<double>(n)) + 0.12 + 0.11 / std::sqrt(static_cast<double>(n))) * d;
  double p = 0.0;
  for (int k = 1; k < 100; ++k) p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * t * t);
  return std::clamp(p, 0.0, 1.0);
}

/// Signed-rank tail probabilities (P(W+ >= w), P(W+ <= w)) by enumerating all 2^n sign flips
/// of the nonzero differences, ranks recomputed from scratch for every flip.
inline std::pair<double, double> signed_rank_enumeration(const std::vector<double>& diffs) {
  std::vector<double> d;
  for (double x : diffs)
    if (x != 0.0) d.push_back(x);
  const std::size_t n = d.size();
  auto wplus = [&](const std::vector<double>& v) {
    double w = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (v[i] <= 0) continue;
      double below = 0.0, equal = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (std::abs(v[j]) < std::abs(v[i])) below += 1.0;
        if (std::abs(v[j]) == std::abs(v[i])) equal += 1.0;
      }
      w += below + (equal + 1.0) / 2.0;
    }
    return w;
  };
  const double w0 = wplus(d);
  double ge = 0.0, le = 0.0;
  std::vector<double> v(n);
  for (unsigned long mask = 0; mask < (1UL << n); ++mask) {
    for (std::size_t i = 0; i < n; ++i) v[i] = (mask >> i & 1UL) ? std::abs(d[i]) : -std::abs(d[i]);
    const double w = wplus(v);
    if (w >= w0 - 1e-9) ge += 1.0;
    if (w <= w0 + 1e-9) le += 1.0;
  }
  const double all = static_cast<double>(1UL << n);
  return {ge / all, le / all};
}

inline double phi(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }

}  // namespace probreg::testing
