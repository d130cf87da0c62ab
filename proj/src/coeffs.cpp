#include "varstable/coeffs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>

#include <boost/math/special_functions/bessel.hpp>

#include "varstable/error.hpp"
#include "varstable/quadrature.hpp"

namespace varstable {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void require_finite(std::span<const double> v, const char* what) {
  for (double c : v) {
    if (!std::isfinite(c)) throw InputError("coeffs", std::string("non-finite ") + what);
  }
}

// integral over |h| > radius of (a0 + a1 cos(2 h_1)) |h|^{-d-alpha} dh.
double trig_tail(double a0, double a1, double alpha, double radius, int d) {
  if (d == 1) {
    double out = 2.0 * a0 * std::pow(radius, -alpha) / alpha;
    if (a1 != 0.0) out += 2.0 * a1 * quad::cos_power_tail(2.0, 1.0 + alpha, radius);
    return out;
  }
  if (d == 2) {
    double out = 2.0 * std::numbers::pi * a0 * std::pow(radius, -alpha) / alpha;
    if (a1 != 0.0) {
      // The angular average of cos(2 r cos(theta)) is J0(2r).
      const double far = radius + 4000.0;
      std::vector<double> breaks;
      for (double r = radius; r < far; r += 2.0) breaks.push_back(r);
      breaks.push_back(far);
      const auto f = [alpha](double r) {
        return boost::math::cyl_bessel_j(0, 2.0 * r) * std::pow(r, -1.0 - alpha);
      };
      out += 2.0 * std::numbers::pi * a1 * quad::integrate_panels(f, breaks, 1e-10, 1e-16).value;
    }
    return out;
  }
  throw InputError("coeffs", "kernel tails implemented for d in {1, 2}");
}

}  // namespace

void ModelParams::validate() const {
  if (d < 1) throw InputError("coeffs", "dimension must be a positive integer");
  if (!(alpha_lower > 0.0 && alpha_lower < 2.0) || !(alpha_upper > 0.0 && alpha_upper < 2.0))
    throw InputError("coeffs", "alpha bounds (alpha_lower, alpha_upper) must lie in (0, 2)");
  if (alpha_lower > alpha_upper)
    throw InputError("coeffs", "alpha bounds: alpha_lower exceeds alpha_upper");
  if (!(kappa1 > 0.0) || !std::isfinite(kappa2))
    throw InputError("coeffs", "kappa bounds: need 0 < kappa1 and finite kappa2");
  if (kappa1 > kappa2) throw InputError("coeffs", "kappa bounds: kappa1 exceeds kappa2");
}

CoefficientField::CoefficientField(ModelParams params, AlphaFamily alpha, NFamily n)
    : params_(params), alpha_(alpha), n_(n) {
  params_.validate();
  const auto [amin, amax] = std::visit(
      overloaded{
          [](const family::ConstantAlpha& a) { return std::pair{a.value, a.value}; },
          [](const family::TanhAlpha& a) {
            if (!(a.c >= 0.0)) throw InputError("coeffs", "tanh family needs c >= 0");
            return std::pair{std::min(a.a0, a.a0 + a.a1), std::max(a.a0, a.a0 + a.a1)};
          },
          [](const family::StepAlpha& a) {
            return std::pair{std::min(a.a0, a.a0 + a.jump), std::max(a.a0, a.a0 + a.jump)};
          },
      },
      alpha_);
  constexpr double slack = 1e-12;
  if (amin < params_.alpha_lower - slack || amax > params_.alpha_upper + slack)
    throw InputError("coeffs", "alpha family leaves [alpha_lower, alpha_upper]");
  const auto [nmin, nmax] = std::visit(
      overloaded{
          [](const family::ConstantN& c) { return std::pair{c.value, c.value}; },
          [](const family::SinCosN& s) {
            if (!(s.eps >= 0.0)) throw InputError("coeffs", "sincos family needs eps >= 0");
            return std::pair{1.0, 1.0 + s.eps};
          },
      },
      n_);
  if (nmin < params_.kappa1 - slack || nmax > params_.kappa2 + slack)
    throw InputError("coeffs", "n family leaves [kappa1, kappa2]");
}

double CoefficientField::eval_alpha(std::span<const double> x) const {
  require_finite(x, "point");
  const double x1 = x.empty() ? 0.0 : x[0];
  return std::visit(overloaded{
                        [](const family::ConstantAlpha& a) { return a.value; },
                        [x1](const family::TanhAlpha& a) {
                          return a.a0 + a.a1 * 0.5 * (1.0 + std::tanh(a.c * x1));
                        },
                        [x1](const family::StepAlpha& a) {
                          return a.a0 + (x1 > 0.0 ? a.jump : 0.0);
                        },
                    },
                    alpha_);
}

TrigIntensity CoefficientField::trig_intensity(std::span<const double> y) const {
  require_finite(y, "point");
  return std::visit(overloaded{
                        [](const family::ConstantN& c) { return TrigIntensity{c.value, 0.0}; },
                        [&y](const family::SinCosN& s) {
                          const double sy = std::sin(y[0]);
                          const double half = 0.5 * s.eps * sy * sy;
                          return TrigIntensity{1.0 + half, half};
                        },
                    },
                    n_);
}

double CoefficientField::eval_n(std::span<const double> x, std::span<const double> h) const {
  require_finite(h, "displacement");
  bool zero = true;
  for (double c : h) zero = zero && c == 0.0;
  if (zero) throw InputError("coeffs", "n(x, h) is undefined at h = 0");
  return std::visit(overloaded{
                        [](const family::ConstantN& c) { return c.value; },
                        [&x, &h](const family::SinCosN& s) {
                          require_finite(x, "point");
                          const double sx = std::sin(x[0]);
                          const double ch = std::cos(h[0]);
                          return 1.0 + s.eps * sx * sx * ch * ch;
                        },
                    },
                    n_);
}

double CoefficientField::beta_modulus(double r) const {
  r = std::max(r, 0.0);
  return std::visit(overloaded{
                        [](const family::ConstantAlpha&) { return 0.0; },
                        [r](const family::TanhAlpha& a) {
                          const double amp = std::fabs(a.a1);
                          return std::min(amp * a.c * r / 2.0, amp);
                        },
                        [r](const family::StepAlpha& a) {
                          return std::min(a.claimed_lipschitz * r, std::fabs(a.jump));
                        },
                    },
                    alpha_);
}

double CoefficientField::omega_modulus(double r) const {
  r = std::max(r, 0.0);
  return std::visit(overloaded{
                        [](const family::ConstantN&) { return 0.0; },
                        [r](const family::SinCosN& s) { return std::min(2.0 * s.eps * r, s.eps); },
                    },
                    n_);
}

bool CoefficientField::alpha_is_constant() const {
  return std::visit(overloaded{
                        [](const family::ConstantAlpha&) { return true; },
                        [](const family::TanhAlpha& a) { return a.a1 == 0.0 || a.c == 0.0; },
                        [](const family::StepAlpha& a) { return a.jump == 0.0; },
                    },
                    alpha_);
}

bool CoefficientField::n_is_constant() const {
  return std::visit(overloaded{
                        [](const family::ConstantN&) { return true; },
                        [](const family::SinCosN& s) { return s.eps == 0.0; },
                    },
                    n_);
}

double CoefficientField::kernel_tail(std::span<const double> x, double alpha,
                                     double radius) const {
  const TrigIntensity ti = trig_intensity(x);
  return trig_tail(ti.a0, ti.a1, alpha, radius, params_.d);
}

double CoefficientField::kernel_difference_tail(std::span<const double> x,
                                                std::span<const double> y, double alpha,
                                                double radius) const {
  // |n(x,h) - n(y,h)| = eps |sin^2 x - sin^2 y| cos^2 h = D/2 + (D/2) cos 2h.
  const double diff = std::fabs(trig_intensity(x).a1 - trig_intensity(y).a1);
  if (diff == 0.0) return 0.0;
  return trig_tail(diff, diff, alpha, radius, params_.d);
}

std::string CoefficientField::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << "d=" << params_.d << ";bounds=(" << params_.alpha_lower << ',' << params_.alpha_upper
     << ',' << params_.kappa1 << ',' << params_.kappa2 << ");alpha=";
  std::visit(overloaded{
                 [&os](const family::ConstantAlpha& a) { os << "constant(" << a.value << ')'; },
                 [&os](const family::TanhAlpha& a) {
                   os << "tanh(" << a.a0 << ',' << a.a1 << ',' << a.c << ')';
                 },
                 [&os](const family::StepAlpha& a) {
                   os << "step(" << a.a0 << ',' << a.jump << ',' << a.claimed_lipschitz << ')';
                 },
             },
             alpha_);
  os << ";n=";
  std::visit(overloaded{
                 [&os](const family::ConstantN& c) { os << "constant(" << c.value << ')'; },
                 [&os](const family::SinCosN& s) { os << "sincos(" << s.eps << ')'; },
             },
             n_);
  return os.str();
}

std::uint64_t CoefficientField::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : describe()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

CoefficientField make_constant_field(int d, double alpha, double n_value) {
  ModelParams p{d, alpha, alpha, n_value, n_value};
  return CoefficientField(p, family::ConstantAlpha{alpha}, family::ConstantN{n_value});
}

CoefficientField make_test_field(int d, double a0, double a1, double c, double eps) {
  ModelParams p{d, std::min(a0, a0 + a1), std::max(a0, a0 + a1), 1.0, 1.0 + eps};
  return CoefficientField(p, family::TanhAlpha{a0, a1, c}, family::SinCosN{eps});
}

ValidationReport validate_assumptions(const CoefficientField& field, const SamplePlan& plan) {
  if (plan.pairs == 0 || plan.h_per_pair == 0)
    throw InputError("coeffs", "sample plan must be nonempty");
  const int d = field.dim();
  const ModelParams& p = field.params();
  ValidationReport rep;
  rep.alpha_min = 2.0;
  rep.alpha_max = 0.0;
  rep.n_min = 1e300;
  rep.n_max = -1e300;
  rep.max_alpha_excess = -1e300;
  rep.max_n_excess = -1e300;

  std::mt19937_64 rng(plan.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> x(d), y(d), h(d), dir(d);

  const auto fail = [&](const std::string& why) {
    if (!rep.passed) return;
    rep.passed = false;
    rep.failure = why;
    rep.witness_x = x;
    rep.witness_y = y;
  };

  for (std::size_t i = 0; i < plan.pairs; ++i) {
    // Half the pairs are centred near the origin, where the built-in
    // families vary fastest.
    const double extent = (i % 2 == 0) ? plan.x_extent : 1.0;
    for (int k = 0; k < d; ++k) x[k] = extent * (2.0 * unit(rng) - 1.0);
    double norm = 0.0;
    for (int k = 0; k < d; ++k) {
      dir[k] = gauss(rng);
      norm += dir[k] * dir[k];
    }
    norm = std::sqrt(norm);
    const double r = plan.max_separation * std::pow(10.0, -6.0 * unit(rng));
    for (int k = 0; k < d; ++k) y[k] = x[k] + r * dir[k] / norm;

    const double ax = field.eval_alpha(x);
    const double ay = field.eval_alpha(y);
    for (double a : {ax, ay}) {
      rep.alpha_min = std::min(rep.alpha_min, a);
      rep.alpha_max = std::max(rep.alpha_max, a);
      if (a < p.alpha_lower || a > p.alpha_upper) fail("alpha leaves declared bounds");
    }
    const double excess_a = std::fabs(ax - ay) - field.beta_modulus(r);
    rep.max_alpha_excess = std::max(rep.max_alpha_excess, excess_a);
    if (excess_a > 1e-12) fail("|alpha(x) - alpha(y)| exceeds beta(|x - y|)");

    double osc = 0.0;
    for (std::size_t j = 0; j < plan.h_per_pair; ++j) {
      const double scale = std::pow(10.0, 4.0 * unit(rng) - 2.0);
      for (int k = 0; k < d; ++k) h[k] = scale * gauss(rng);
      const double nx = field.eval_n(x, h);
      const double ny = field.eval_n(y, h);
      std::vector<double> minus_h(h);
      for (double& c : minus_h) c = -c;
      if (field.eval_n(x, minus_h) != nx) fail("n(x, h) is not even in h");
      for (double v : {nx, ny}) {
        rep.n_min = std::min(rep.n_min, v);
        rep.n_max = std::max(rep.n_max, v);
        if (v < p.kappa1 - 1e-12 || v > p.kappa2 + 1e-12) fail("n leaves [kappa1, kappa2]");
      }
      osc = std::max(osc, std::fabs(nx - ny));
    }
    const double excess_n = osc - field.omega_modulus(r);
    rep.max_n_excess = std::max(rep.max_n_excess, excess_n);
    if (excess_n > 1e-12) fail("oscillation of n exceeds omega(|x - y|)");
  }

  // Dini integrals of the declared moduli.
  const quad::Feature origin[] = {{0.0, 1.0}};
  const auto breaks = quad::graded_breaks(0.0, 1.0, origin, 60);
  rep.dini_omega = quad::integrate_panels(
                       [&](double r) { return r > 0.0 ? field.omega_modulus(r) / r : 0.0; },
                       breaks, 1e-9, 1e-14, 18)
                       .value;
  rep.dini_beta_log =
      quad::integrate_panels(
          [&](double r) {
            return r > 0.0 ? field.beta_modulus(r) * std::fabs(std::log(r)) / r : 0.0;
          },
          breaks, 1e-9, 1e-14, 18)
          .value;
  if (!std::isfinite(rep.dini_omega) || !std::isfinite(rep.dini_beta_log))
    fail("Dini integral of a declared modulus diverges");

  rep.r0_values = plan.r0_values;
  for (double r0 : plan.r0_values) {
    double sup = 0.0;
    for (int k = 0; k <= 2400; ++k) {
      const double r = r0 * std::pow(10.0, -k / 100.0);
      sup = std::max(sup, field.beta_modulus(r) * std::fabs(std::log(r)));
    }
    rep.beta_log_sup.push_back(sup);
  }
  for (std::size_t i = 1; i < rep.beta_log_sup.size(); ++i) {
    if (rep.r0_values[i] < rep.r0_values[i - 1] &&
        rep.beta_log_sup[i] > rep.beta_log_sup[i - 1] + 1e-15)
      fail("beta(r) |ln r| does not decrease as r -> 0");
  }
  return rep;
}

}  // namespace varstable
