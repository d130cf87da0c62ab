#pragma once

#include <span>
#include <string>
#include <vector>

#include "varstable/report.hpp"

namespace varstable {

/// Comparison kernel rho_alpha^{beta,gamma}(t, x)
///   = t^{gamma/alpha} (|x|^beta ^ 1) (t^{1/alpha} + |x|)^{-d-alpha}.
struct RhoKernel {
  double alpha = 1.0;
  double beta_exp = 0.0;
  double gamma_exp = 0.0;
  int d = 1;
};

/// Throws InputError for t <= 0 or alpha outside (0, 2).
double rho_eval(const RhoKernel& k, double t, std::span<const double> x);
/// Radial form: x given by its norm.
double rho_eval(const RhoKernel& k, double t, double x_norm);

/// The sampled grid for the convolution-inequality checks.
struct ConvolutionGrid {
  double alpha1 = 1.0;
  double alpha2 = 1.5;
  int alpha_points = 5;              // per axis of the (alpha, alpha~) grid
  int t_exp_min = -10;               // t = 2^k, k in [t_exp_min, t_exp_max]
  int t_exp_max = -1;
  std::vector<double> tau_ratios{0.1, 0.5, 0.9};
  double w_min = 1e-3;
  double w_max = 1.0;
  int w_points = 7;                  // log-spaced |w|
  int d = 1;
  unsigned workers = 1;
};

/// Verifies one of the convolution inequalities on the grid:
///  "L2.1": integral of rho_alpha^{0,alpha}(t,.) <= C and the log-weighted
///          version <= C (1 + |ln t|);
///  "L2.2": convolution of rho kernels with different orders;
///  "L2.3": the same with the far-field log weight 1{|w-eta|>=2} ln|w-eta|.
/// The coarse sub-grid takes every other t exponent, |w| value and alpha,
/// keeping the ends of each axis.
BoundReport check_convolution_bound(const std::string& lemma_id, const ConvolutionGrid& grid);

/// Integral over R^d of rho_alpha^{0,alpha}(t, x), times |ln|x|| when
/// log_weight is set.
double rho_mass(double alpha, double t, int d, bool log_weight);

/// Left side of the L2.2 / L2.3 convolution (d = 1).
double rho_convolution(double alpha_tilde, double alpha, double t, double tau, double w,
                       bool far_log_weight);

}  // namespace varstable
