#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace varstable {

/// Bounds on the operator's coefficients: order in [alpha_lower, alpha_upper]
/// inside (0, 2) and intensity in [kappa1, kappa2].
struct ModelParams {
  int d = 1;
  double alpha_lower = 1.0;
  double alpha_upper = 1.0;
  double kappa1 = 1.0;
  double kappa2 = 1.0;

  /// Throws InputError naming the violated bound.
  void validate() const;
};

namespace family {

struct ConstantAlpha {
  double value;
};

/// alpha(x) = a0 + a1 * (1 + tanh(c * x_1)) / 2
struct TanhAlpha {
  double a0;
  double a1;
  double c;
};

/// alpha(x) = a0 + jump * 1{x_1 > 0}. Declares a Lipschitz modulus it cannot
/// honour; exists so validation has a family to reject.
struct StepAlpha {
  double a0;
  double jump;
  double claimed_lipschitz;
};

struct ConstantN {
  double value;
};

/// n(x, h) = 1 + eps * sin^2(x_1) * cos^2(h_1)
struct SinCosN {
  double eps;
};

}  // namespace family

using AlphaFamily = std::variant<family::ConstantAlpha, family::TanhAlpha, family::StepAlpha>;
using NFamily = std::variant<family::ConstantN, family::SinCosN>;

/// n(y, h) written as a0 + a1 * cos(2 h_1); every built-in n family has this
/// form at a frozen point, which gives its symbol in closed form.
struct TrigIntensity {
  double a0;
  double a1;
};

/// The pair x -> alpha(x), (x, h) -> n(x, h) together with declared moduli of
/// continuity: beta(r) >= sup_{|x-y|<=r} |alpha(x) - alpha(y)| and
/// omega(r) >= sup_{h, |x-y|<=r} |n(x,h) - n(y,h)|. omega is the intensity
/// modulus usually written psi(r); it is renamed to keep psi for symbols.
/// Immutable after construction.
class CoefficientField {
 public:
  /// Throws InputError if the family leaves the declared bounds.
  CoefficientField(ModelParams params, AlphaFamily alpha, NFamily n);

  const ModelParams& params() const { return params_; }
  int dim() const { return params_.d; }
  const AlphaFamily& alpha_family() const { return alpha_; }
  const NFamily& n_family() const { return n_; }

  /// alpha(x); throws InputError for non-finite x.
  double eval_alpha(std::span<const double> x) const;
  /// n(x, h); throws InputError for h = 0.
  double eval_n(std::span<const double> x, std::span<const double> h) const;
  /// n(y, .) as a0 + a1 cos(2 h_1).
  TrigIntensity trig_intensity(std::span<const double> y) const;

  double beta_modulus(double r) const;
  double omega_modulus(double r) const;

  bool alpha_is_constant() const;
  bool n_is_constant() const;
  bool is_constant() const { return alpha_is_constant() && n_is_constant(); }

  /// integral over |h| > radius of n(x, h) |h|^{-d-alpha} dh.
  double kernel_tail(std::span<const double> x, double alpha, double radius) const;
  /// integral over |h| > radius of |n(x,h) - n(y,h)| |h|^{-d-alpha} dh.
  double kernel_difference_tail(std::span<const double> x, std::span<const double> y,
                                double alpha, double radius) const;

  /// Canonical text form of the model, used for hashing and report echoes.
  std::string describe() const;
  /// FNV-1a hash of describe().
  std::uint64_t hash() const;

 private:
  ModelParams params_;
  AlphaFamily alpha_;
  NFamily n_;
};

/// Convenience constructors for the built-in families.
CoefficientField make_constant_field(int d, double alpha, double n_value);
/// The variable-order test family: alpha = a0 + a1 (1 + tanh(c x))/2 and
/// n = 1 + eps sin^2(x) cos^2(h), with bounds set tight to the family.
CoefficientField make_test_field(int d, double a0, double a1, double c, double eps);

struct SamplePlan {
  std::uint64_t seed = 1;
  std::size_t pairs = 2000;
  std::size_t h_per_pair = 16;
  double x_extent = 5.0;      // points drawn from [-x_extent, x_extent]^d
  double max_separation = 1.0;
  std::vector<double> r0_values{0.1, 0.01, 0.001, 0.0001};
};

struct ValidationReport {
  double alpha_min = 0.0;
  double alpha_max = 0.0;
  double n_min = 0.0;
  double n_max = 0.0;
  double max_alpha_excess = 0.0;  // max of |alpha(x)-alpha(y)| - beta(|x-y|)
  double max_n_excess = 0.0;
  double dini_omega = 0.0;        // integral_0^1 omega(r) / r dr
  double dini_beta_log = 0.0;     // integral_0^1 |ln r| beta(r) / r dr
  std::vector<double> r0_values;
  std::vector<double> beta_log_sup;  // sup_{r <= r0} beta(r) |ln r|
  bool passed = true;
  std::string failure;
  std::vector<double> witness_x;
  std::vector<double> witness_y;
};

/// Cross-checks the declared bounds and moduli on random samples and
/// evaluates the Dini integrals of the declared moduli. Deterministic given
/// plan.seed. Throws InputError for an empty plan.
ValidationReport validate_assumptions(const CoefficientField& field, const SamplePlan& plan);

}  // namespace varstable
