#include "varstable/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/ooura_fourier_integrals.hpp>
#include <boost/math/special_functions/legendre.hpp>

#include "varstable/error.hpp"

namespace varstable::quad {

namespace bq = boost::math::quadrature;

namespace {

struct Raw {
  double value;
  double error;
  double l1;
};

Raw gauss_kronrod(const Integrand& f, double a, double b, double rel_tol, unsigned max_depth) {
  Raw r{0.0, 0.0, 0.0};
  if (a == b) return r;
  // Boost 1.74 reports the recursive error estimate without the interval's
  // half-width factor, so integrate on [-1, 1] with the Jacobian folded in.
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const auto g = [&](double s) { return half * f(mid + half * s); };
  r.value = bq::gauss_kronrod<double, 15>::integrate(g, -1.0, 1.0, max_depth, rel_tol, &r.error,
                                                     &r.l1);
  r.error = std::fabs(r.error);
  r.l1 = std::fabs(r.l1);
  if (!std::isfinite(r.value)) {
    std::ostringstream os;
    os << "non-finite integral on [" << a << ", " << b << "]";
    throw NumericalError("quadrature", os.str());
  }
  return r;
}

void require_converged(double err, double l1, double rel_tol, double abs_tol, double a, double b) {
  const double allowed = std::max(abs_tol, rel_tol * l1) * 1e3;
  if (err > allowed && err > 1e-12 * std::max(1.0, l1)) {
    std::ostringstream os;
    os << "Gauss-Kronrod did not converge on [" << a << ", " << b << "]: error estimate "
       << err << " vs allowed " << allowed;
    throw NumericalError("quadrature", os.str());
  }
}

}  // namespace

Result integrate(const Integrand& f, double a, double b, double rel_tol, double abs_tol,
                 unsigned max_depth) {
  const Raw r = gauss_kronrod(f, a, b, rel_tol, max_depth);
  require_converged(r.error, r.l1, rel_tol, abs_tol, a, b);
  return {r.value, r.error};
}

// Convergence is judged on the summed error against the whole integral, so
// slivers next to integrable singularities need not converge on their own.
Result integrate_panels(const Integrand& f, std::span<const double> breaks, double rel_tol,
                        double abs_tol, unsigned max_depth) {
  Result total;
  double l1 = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const Raw r = gauss_kronrod(f, breaks[i], breaks[i + 1], rel_tol, max_depth);
    total.value += r.value;
    total.error += r.error;
    l1 += r.l1;
  }
  if (breaks.size() >= 2)
    require_converged(total.error, l1, rel_tol, abs_tol, breaks.front(), breaks.back());
  return total;
}

Result integrate_tail(const Integrand& f, double a, double rel_tol) {
  thread_local bq::exp_sinh<double> integrator(9);
  double err = 0.0;
  double l1 = 0.0;
  std::size_t levels = 0;
  const auto shifted = [&](double s) { return f(a + s); };
  const double value = integrator.integrate(shifted, rel_tol, &err, &l1, &levels);
  if (!std::isfinite(value)) throw NumericalError("quadrature", "non-finite tail integral");
  return {value, err * std::max(1.0, std::fabs(value))};
}

std::vector<double> graded_breaks(double lo, double hi, std::span<const Feature> features,
                                  int depth) {
  std::vector<double> out{lo, hi};
  for (const Feature& ft : features) {
    if (ft.at >= lo && ft.at <= hi) out.push_back(ft.at);
    if (!(ft.scale > 0.0)) continue;
    const double fine = ft.scale * std::ldexp(1.0, -depth);
    for (double s = fine; ; s *= 2.0) {
      const double left = ft.at - s;
      const double right = ft.at + s;
      bool any = false;
      if (left > lo && left < hi) { out.push_back(left); any = true; }
      if (right > lo && right < hi) { out.push_back(right); any = true; }
      if (!any && (left <= lo && right >= hi)) break;
      if (s > 4.0 * (hi - lo)) break;
    }
  }
  std::sort(out.begin(), out.end());
  // Merge breakpoints closer than a few ulps of their own size, so grading
  // toward a feature at 0 survives.
  std::vector<double> merged;
  merged.reserve(out.size());
  for (double b : out) {
    if (merged.empty() || b - merged.back() > 4e-16 * std::max(std::fabs(b), std::fabs(merged.back())))
      merged.push_back(b);
  }
  return merged;
}

double cos_power_tail(double omega, double p, double a) {
  if (!(a > 0.0) || !(p > 0.0)) throw InputError("quadrature", "cos_power_tail needs a, p > 0");
  if (omega == 0.0) {
    if (p <= 1.0) throw InputError("quadrature", "divergent power tail");
    return std::pow(a, 1.0 - p) / (p - 1.0);
  }
  omega = std::fabs(omega);
  // Fresh integrators: a long-lived one keeps every level a hard frequency
  // forced and slows all later calls.
  bq::ooura_fourier_cos<double> cosine(1e-12, 4);
  bq::ooura_fourier_sin<double> sine(1e-12, 4);
  const auto g = [p, a](double s) { return std::pow(s + a, -p); };
  const double c = cosine.integrate(g, omega).first;
  const double s = sine.integrate(g, omega).first;
  return std::cos(omega * a) * c - std::sin(omega * a) * s;
}

void gauss_legendre(int n, double a, double b, std::vector<double>& nodes,
                    std::vector<double>& weights) {
  nodes.clear();
  weights.clear();
  if (n <= 0) return;
  const std::vector<double> zeros = boost::math::legendre_p_zeros<double>(n);
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  const auto weight = [n](double x) {
    const double dp = boost::math::legendre_p_prime<double>(n, x);
    return 2.0 / ((1.0 - x * x) * dp * dp);
  };
  for (auto it = zeros.rbegin(); it != zeros.rend(); ++it) {
    if (*it == 0.0) continue;
    nodes.push_back(mid - half * *it);
    weights.push_back(half * weight(*it));
  }
  if (n % 2 == 1) {
    nodes.push_back(mid);
    weights.push_back(half * weight(0.0));
  }
  for (double z : zeros) {
    if (z == 0.0) continue;
    nodes.push_back(mid + half * z);
    weights.push_back(half * weight(z));
  }
}

}  // namespace varstable::quad
