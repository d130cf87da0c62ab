#pragma once

#include <functional>
#include <span>
#include <vector>

namespace varstable::quad {

struct Result {
  double value = 0.0;
  double error = 0.0;  // estimated absolute error
};

using Integrand = std::function<double(double)>;

/// Adaptive 15-point Gauss-Kronrod on [a, b]. Throws NumericalError when the
/// error estimate stays above max(abs_tol, rel_tol * |integral|) * 1e3.
Result integrate(const Integrand& f, double a, double b, double rel_tol = 1e-10,
                 double abs_tol = 1e-14, unsigned max_depth = 12);

/// Sums integrate() over consecutive panels [breaks[i], breaks[i+1]].
Result integrate_panels(const Integrand& f, std::span<const double> breaks,
                        double rel_tol = 1e-10, double abs_tol = 1e-14,
                        unsigned max_depth = 10);

/// integral of f over [a, inf) for non-oscillatory integrands with at most
/// algebraic decay.
Result integrate_tail(const Integrand& f, double a, double rel_tol = 1e-10);

/// A singular point and the length scale over which the integrand varies
/// near it. Panels are graded geometrically toward `at`.
struct Feature {
  double at;
  double scale;
};

/// Breakpoints on [lo, hi] that grade geometrically (ratio 2) toward every
/// feature, from scale * 2^-depth up to the interval ends.
std::vector<double> graded_breaks(double lo, double hi, std::span<const Feature> features,
                                  int depth = 34);

/// integral_a^inf cos(omega h) h^-p dh for a > 0, p > 0 (Ooura's double
/// exponential Fourier quadrature on the shifted integrand).
double cos_power_tail(double omega, double p, double a);

/// Gauss-Legendre nodes and weights on [a, b].
void gauss_legendre(int n, double a, double b, std::vector<double>& nodes,
                    std::vector<double>& weights);

}  // namespace varstable::quad
