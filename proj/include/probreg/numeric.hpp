#pragma once

#include <functional>
#include <limits>
#include <span>
#include <string>

namespace probreg {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kPi = 3.14159265358979323846;

double normal_pdf(double z) noexcept;
double normal_cdf(double z) noexcept;
/// Standard normal quantile; alpha in (0,1).
double normal_quantile(double alpha);

/// P(T <= t) for Student t with df degrees of freedom.
double student_t_cdf(double t, double df);

/// Adaptive Simpson on [a,b] with absolute tolerance tol.
double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-10);

/// Adaptive Simpson split at the sorted breakpoints inside [a,b].
double integrate_pieces(const std::function<double(double)>& f, double a, double b,
                        std::span<const double> breakpoints, double tol = 1e-10);

/// Minimizer of a unimodal f on [lo,hi] by golden-section search.
double golden_section_min(const std::function<double(double)>& f, double lo, double hi,
                          double tol = 1e-8);

/// "%.17g" formatting, with inf/nan spelled as JSON-friendly strings.
std::string format17(double x);

/// Shortest decimal text that parses back to the same double.
std::string format_shortest(double x);

}  // namespace probreg
