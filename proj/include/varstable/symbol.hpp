#pragma once

#include <span>
#include <vector>

#include "varstable/coeffs.hpp"
#include "varstable/report.hpp"

namespace varstable {

/// The constant-coefficient jump kernel K(h) = n(y, h) |h|^{-d-alpha(y)}
/// obtained by freezing the field at y, and its Levy symbol
///   psi^y(u) = integral (1 - cos(u.h)) K(h) dh.
/// Keeps a reference to the field, which must outlive it.
class FrozenSymbol {
 public:
  FrozenSymbol(const CoefficientField& field, std::vector<double> y);

  const CoefficientField& field() const { return *field_; }
  const std::vector<double>& y() const { return y_; }
  int dim() const { return field_->dim(); }
  double alpha() const { return alpha_; }
  double lambda1() const { return field_->params().kappa1; }
  double lambda2() const { return field_->params().kappa2; }
  /// C_alpha for alpha = alpha(y), from stable_constant().
  double c_alpha() const { return c_alpha_; }
  const TrigIntensity& intensity() const { return trig_; }

  double kernel(std::span<const double> h) const;

  /// psi^y(u) through the cosine-series form of n(y, .): with
  /// n = a0 + a1 cos(2 h_1),
  ///   psi(u) = C_alpha (a0 |u|^a + a1 (|u + 2e_1|^a + |u - 2e_1|^a)/2 - a1 2^a).
  /// Agrees with char_exponent() to quadrature tolerance; used on FFT grids.
  double exponent(std::span<const double> u) const;
  double exponent(double u) const;

 private:
  const CoefficientField* field_;
  std::vector<double> y_;
  double alpha_;
  double c_alpha_;
  TrigIntensity trig_;
};

/// psi^y(u) by direct quadrature of (1 - cos(u.h)) K(h) over R^d (graded
/// radial panels, analytic power tail; tensor (r, theta) panels for d = 2).
/// Throws NumericalError when the estimated error exceeds tol.
double char_exponent(const FrozenSymbol& sym, std::span<const double> u, double tol = 1e-8);

/// C_alpha = integral (1 - cos h_1) |h|^{-d-alpha} dh, by quadrature; memoized.
/// Throws InputError for alpha outside (0, 2).
double stable_constant(double alpha, int d);

struct DecayCheck {
  double min_slack = 0.0;           // min over grid of psi(u) - lambda1 C_alpha |u|^alpha
  std::vector<double> witness_u;    // where the minimum occurred
  bool passed = false;
  BoundReport bounds;               // lhs = lambda1 C |u|^a, rhs = psi(u)
};

/// Checks psi^y(u) >= Lambda1 C_alpha |u|^alpha on the grid (d = 1 points
/// are scalars; for d = 2 pass pairs flattened). Throws InputError when empty.
DecayCheck decay_bound_check(const FrozenSymbol& sym, std::span<const double> u_grid,
                             double tol = 1e-8);

}  // namespace varstable
