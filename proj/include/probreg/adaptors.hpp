#pragma once

#include <cstddef>
#include <span>

#include "probreg/distribution.hpp"

namespace probreg {

/// Kernel smoothing of weighted atoms with B subsets of size b.
///
/// When B*b equals the number of atoms the subsets partition a seeded shuffle;
/// otherwise each subset is drawn without replacement.  Each subset gets its
/// own bandwidth (its standard deviation, or `fallback_sigma` when that is zero
/// or b == 1) and weight 1/B, split over its atoms by their weights.
Distribution kernel_density_adaptor(std::span<const double> atoms, std::span<const double> weights,
                                    std::size_t B, std::size_t b, KernelShape shape,
                                    double fallback_sigma, Rng& rng);

/// Classical KDE: one atom per kernel, common bandwidth.
Distribution kernel_density(std::span<const double> atoms, double bandwidth,
                            KernelShape shape = KernelShape::gaussian);

/// Rule-of-thumb Gaussian bandwidth 1.06 * std * n^(-1/5); 1.0 when the sample has no spread.
double silverman_bandwidth(std::span<const double> sample);

/// Histogram with bins [e_i, e_{i+1}) (last bin closed) holding the weighted fraction of atoms.
Distribution histogram_adaptor(std::span<const double> atoms, std::span<const double> weights,
                               std::span<const double> edges);

/// Approximation of p * p_Z: atoms become shifted copies of Z (exact), the
/// continuous part becomes an average of m copies of q shifted by fixed draws of Z.
Distribution convolution_adaptor(const Distribution& p, const Distribution& z, std::size_t m, Rng& rng);

}  // namespace probreg
