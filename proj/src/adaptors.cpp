#include "probreg/adaptors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "probreg/error.hpp"

namespace probreg {

namespace {

std::vector<double> weights_or_uniform(std::span<const double> atoms, std::span<const double> weights) {
  if (atoms.empty()) throw ShapeError("adaptor needs a nonempty sample");
  if (weights.empty()) return std::vector<double>(atoms.size(), 1.0 / static_cast<double>(atoms.size()));
  if (weights.size() != atoms.size()) throw ShapeError("adaptor: atoms and weights differ in length");
  return {weights.begin(), weights.end()};
}

}  // namespace

double silverman_bandwidth(std::span<const double> sample) {
  const auto n = static_cast<double>(sample.size());
  if (sample.size() < 2) return 1.0;
  const double m = std::accumulate(sample.begin(), sample.end(), 0.0) / n;
  double v = 0.0;
  for (double x : sample) v += (x - m) * (x - m);
  const double sd = std::sqrt(v / n);
  const double h = 1.06 * sd * std::pow(n, -0.2);
  return h > 0 ? h : 1.0;
}

Distribution kernel_density(std::span<const double> atoms, double bandwidth, KernelShape shape) {
  const std::vector<double> a(atoms.begin(), atoms.end());
  return KernelDensity{a, {bandwidth}, {}, shape};
}

Distribution kernel_density_adaptor(std::span<const double> atoms, std::span<const double> weights,
                                    std::size_t B, std::size_t b, KernelShape shape,
                                    double fallback_sigma, Rng& rng) {
  const auto w = weights_or_uniform(atoms, weights);
  const std::size_t m = atoms.size();
  if (B == 0 || b == 0 || b > m) throw DomainError("kernel density adaptor needs B >= 1 and 1 <= b <= sample size");
  if (!(fallback_sigma > 0)) fallback_sigma = 1.0;

  std::vector<std::vector<std::size_t>> subsets;
  if (B * b == m) {
    auto idx = iota_indices(m);
    shuffle(std::span<std::size_t>(idx), rng);
    for (std::size_t i = 0; i < B; ++i) subsets.emplace_back(idx.begin() + i * b, idx.begin() + (i + 1) * b);
  } else {
    for (std::size_t i = 0; i < B; ++i) {
      auto idx = iota_indices(m);
      // partial Fisher-Yates: first b entries are a uniform subset
      for (std::size_t k = 0; k < b; ++k) std::swap(idx[k], idx[k + bounded(rng, m - k)]);
      subsets.emplace_back(idx.begin(), idx.begin() + b);
    }
  }

  KernelDensity kd;
  kd.shape = shape;
  for (const auto& s : subsets) {
    std::vector<double> sw;
    for (auto i : s) sw.push_back(w[i]);
    double ws = std::accumulate(sw.begin(), sw.end(), 0.0);
    if (!(ws > 0)) {
      sw.assign(s.size(), 1.0);
      ws = static_cast<double>(s.size());
    }
    double mean = 0.0, var = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) mean += sw[k] * atoms[s[k]];
    mean /= ws;
    for (std::size_t k = 0; k < s.size(); ++k) var += sw[k] * (atoms[s[k]] - mean) * (atoms[s[k]] - mean);
    var /= ws;
    const double sigma = (s.size() > 1 && var > 0) ? std::sqrt(var) : fallback_sigma;
    for (std::size_t k = 0; k < s.size(); ++k) {
      kd.atoms.push_back(atoms[s[k]]);
      kd.bandwidths.push_back(sigma);
      kd.weights.push_back(sw[k] / ws / static_cast<double>(B));
    }
  }
  return kd;
}

Distribution histogram_adaptor(std::span<const double> atoms, std::span<const double> weights,
                               std::span<const double> edges) {
  const auto w = weights_or_uniform(atoms, weights);
  if (edges.size() < 2) throw ShapeError("histogram adaptor needs at least one bin");
  std::vector<double> mass(edges.size() - 1, 0.0);
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    const double y = atoms[i];
    if (y < edges.front() || y > edges.back()) throw OutOfRange("sample point outside all bins");
    auto k = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), y) - edges.begin());
    k = std::min(k, mass.size()) - 1;
    mass[k] += w[i];
  }
  const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
  for (auto& x : mass) x /= total;
  return Histogram{{edges.begin(), edges.end()}, mass};
}

Distribution convolution_adaptor(const Distribution& p, const Distribution& z, std::size_t m, Rng& rng) {
  if (z.kind() != Kind::continuous) throw UnsupportedKind("convolution noise must be continuous");
  const auto dec = decompose(p);
  std::vector<Distribution> comps;
  std::vector<double> ws;
  if (dec.alpha_d > 0) {
    const auto* zn = z.get_if<Normal>();
    const auto* zl = z.get_if<Laplace>();
    if (zn || zl) {
      const double shift = zn ? zn->mu : zl->mu;
      const double bw = zn ? zn->sigma : zl->b * std::sqrt(2.0);
      std::vector<double> a = dec.atoms;
      for (auto& x : a) x += shift;
      comps.push_back(KernelDensity{a, {bw}, dec.weights, zn ? KernelShape::gaussian : KernelShape::laplace});
      ws.push_back(dec.alpha_d);
    } else {
      for (std::size_t i = 0; i < dec.atoms.size(); ++i) {
        comps.push_back(pushforward(z, Affine{1.0, dec.atoms[i]}));
        ws.push_back(dec.alpha_d * dec.weights[i]);
      }
    }
  }
  if (dec.alpha_c > 0) {
    if (m == 0) throw DomainError("convolution adaptor needs m >= 1 draws");
    for (std::size_t j = 0; j < m; ++j) {
      comps.push_back(pushforward(*dec.continuous, Affine{1.0, z.sample_one(rng)}));
      ws.push_back(dec.alpha_c / static_cast<double>(m));
    }
  }
  return Distribution(Mixture{std::move(comps), std::move(ws)});
}

}  // namespace probreg
