#include "varstable/symbol.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>

#include "varstable/error.hpp"
#include "varstable/quadrature.hpp"

namespace varstable {

namespace {

constexpr double kPi = std::numbers::pi;

// integral_R^inf cos(omega r) r^{-1-alpha} dr, with the omega = 0 case.
double power_cos_tail(double omega, double alpha, double radius) {
  if (std::fabs(omega) < 1e-14) return std::pow(radius, -alpha) / alpha;
  return quad::cos_power_tail(omega, 1.0 + alpha, radius);
}

// integral_0^inf (1 - cos(v r)) (A + B cos(w r)) r^{-1-alpha} dr, where the
// intensity along the ray is supplied pointwise by `intensity` and equals
// A + B cos(w r). Panels are quadrature-only up to `radius`; beyond it the
// tail is summed analytically from the cosine series.
struct RadialResult {
  double value;
  double error;
};

template <class Intensity>
RadialResult radial_integral(double v, double A, double B, double w, double alpha,
                             const Intensity& intensity, double tol) {
  v = std::fabs(v);
  if (v == 0.0) return {0.0, 0.0};
  const double inner_scale = std::min(1.0, 1.0 / v);
  const double radius = 40.0;
  const auto f = [&](double r) {
    const double s = std::sin(0.5 * v * r);
    return 2.0 * s * s * intensity(r) * std::pow(r, -1.0 - alpha);
  };
  const int depth = 40;
  const quad::Feature origin[] = {{0.0, inner_scale}};
  std::vector<double> breaks = quad::graded_breaks(0.0, inner_scale, origin, depth);
  breaks.erase(breaks.begin());  // drop 0; the first sliver is handled by Taylor
  const double sliver = breaks.front();
  const double width = std::min(0.5, kPi / (v + std::fabs(w) + 1.0));
  for (double r = inner_scale + width; r < radius; r += width) breaks.push_back(r);
  breaks.push_back(radius);

  const quad::Result body = quad::integrate_panels(f, breaks, 1e-12, tol * 1e-3, 8);
  // (1 - cos(v r)) ~ v^2 r^2 / 2 on the sliver [0, sliver].
  const double n0 = intensity(sliver);
  const double taylor = n0 * v * v * std::pow(sliver, 2.0 - alpha) / (2.0 * (2.0 - alpha));

  const double tail = A * std::pow(radius, -alpha) / alpha + B * power_cos_tail(w, alpha, radius) -
                      A * power_cos_tail(v, alpha, radius) -
                      0.5 * B * (power_cos_tail(v + w, alpha, radius) +
                                 power_cos_tail(v - w, alpha, radius));
  return {body.value + taylor + tail, body.error};
}

}  // namespace

double stable_constant(double alpha, int d) {
  if (!(alpha > 0.0 && alpha < 2.0)) throw InputError("symbol", "C_alpha needs alpha in (0, 2)");
  if (d != 1 && d != 2) throw InputError("symbol", "C_alpha implemented for d in {1, 2}");
  static std::mutex mutex;
  static std::map<std::pair<double, int>, double> memo;
  {
    std::lock_guard<std::mutex> lock(mutex);
    const auto it = memo.find({alpha, d});
    if (it != memo.end()) return it->second;
  }
  const auto one = [](double) { return 1.0; };
  const double radial = radial_integral(1.0, 1.0, 0.0, 0.0, alpha, one, 1e-12).value;
  double value = 0.0;
  if (d == 1) {
    value = 2.0 * radial;
  } else {
    // integral over the circle of |cos(theta)|^alpha.
    const quad::Feature edge[] = {{kPi / 2.0, 1.0}};
    const auto breaks = quad::graded_breaks(0.0, kPi / 2.0, edge, 30);
    const double angular =
        4.0 * quad::integrate_panels([alpha](double th) { return std::pow(std::cos(th), alpha); },
                                     breaks, 1e-13)
                  .value;
    value = angular * radial;
  }
  std::lock_guard<std::mutex> lock(mutex);
  memo[{alpha, d}] = value;
  return value;
}

FrozenSymbol::FrozenSymbol(const CoefficientField& field, std::vector<double> y)
    : field_(&field), y_(std::move(y)) {
  if (static_cast<int>(y_.size()) != field.dim())
    throw InputError("symbol", "freezing point has the wrong dimension");
  alpha_ = field.eval_alpha(y_);
  c_alpha_ = stable_constant(alpha_, field.dim());
  trig_ = field.trig_intensity(y_);
}

double FrozenSymbol::kernel(std::span<const double> h) const {
  double r2 = 0.0;
  for (double c : h) r2 += c * c;
  return field_->eval_n(y_, h) * std::pow(r2, -0.5 * (dim() + alpha_));
}

double FrozenSymbol::exponent(double u) const {
  const double a = alpha_;
  double base = trig_.a0 * std::pow(std::fabs(u), a);
  if (trig_.a1 != 0.0)
    base += trig_.a1 * (0.5 * std::pow(std::fabs(u + 2.0), a) +
                        0.5 * std::pow(std::fabs(u - 2.0), a) - std::pow(2.0, a));
  return c_alpha_ * base;
}

double FrozenSymbol::exponent(std::span<const double> u) const {
  if (u.size() == 1) return exponent(u[0]);
  double norm2 = 0.0;
  for (double c : u) norm2 += c * c;
  const double a = alpha_;
  double base = trig_.a0 * std::pow(norm2, 0.5 * a);
  if (trig_.a1 != 0.0) {
    const double plus = norm2 + 4.0 * u[0] + 4.0;
    const double minus = norm2 - 4.0 * u[0] + 4.0;
    base += trig_.a1 * (0.5 * std::pow(std::max(plus, 0.0), 0.5 * a) +
                        0.5 * std::pow(std::max(minus, 0.0), 0.5 * a) - std::pow(2.0, a));
  }
  return c_alpha_ * base;
}

double char_exponent(const FrozenSymbol& sym, std::span<const double> u, double tol) {
  for (double c : u)
    if (!std::isfinite(c)) throw InputError("symbol", "frequency must be finite");
  if (static_cast<int>(u.size()) != sym.dim())
    throw InputError("symbol", "frequency has the wrong dimension");
  const CoefficientField& field = sym.field();
  const std::vector<double>& y = sym.y();
  const double alpha = sym.alpha();
  const TrigIntensity& ti = sym.intensity();

  if (sym.dim() == 1) {
    std::vector<double> h(1);
    const auto along = [&](double r) {
      h[0] = r;
      return field.eval_n(y, h);
    };
    const RadialResult r = radial_integral(u[0], ti.a0, ti.a1, 2.0, alpha, along, tol);
    if (2.0 * r.error > tol * std::max(1.0, r.value)) {
      std::ostringstream os;
      os << "symbol quadrature error " << 2.0 * r.error << " at u = " << u[0];
      throw NumericalError("symbol", os.str());
    }
    return 2.0 * r.value;
  }

  // d = 2: tensor panels in (r, theta); along the ray with direction theta
  // the intensity is a0 + a1 cos(2 r cos(theta)).
  const double norm = std::hypot(u[0], u[1]);
  if (norm == 0.0) return 0.0;
  const double phi = std::atan2(u[1], u[0]);
  double err_total = 0.0;
  const auto angular = [&](double theta) {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const double v = u[0] * c + u[1] * s;
    std::vector<double> h(2);
    const auto along = [&](double r) {
      h[0] = r * c;
      h[1] = r * s;
      return field.eval_n(y, h);
    };
    const RadialResult r = radial_integral(v, ti.a0, ti.a1, 2.0 * c, alpha, along, tol * 1e-2);
    err_total += r.error;
    return r.value;
  };
  // Kinks where u.e_theta = 0 and where cos(theta) = 0.
  std::vector<quad::Feature> feats;
  for (double k = -2; k <= 2; ++k) {
    feats.push_back({phi + kPi / 2.0 + k * kPi, 0.5});
    feats.push_back({kPi / 2.0 + k * kPi, 0.5});
  }
  const auto breaks = quad::graded_breaks(0.0, 2.0 * kPi, feats, 3);
  const double value = quad::integrate_panels(angular, breaks, 1e-10, tol * 1e-2, 6).value;
  return value;
}

DecayCheck decay_bound_check(const FrozenSymbol& sym, std::span<const double> u_grid,
                             double tol) {
  const int d = sym.dim();
  if (u_grid.empty() || u_grid.size() % d != 0)
    throw InputError("symbol", "u grid must be nonempty with d coordinates per point");
  DecayCheck out;
  out.bounds.lemma_id = "decay";
  out.bounds.coord_names = d == 1 ? std::vector<std::string>{"u"}
                                  : std::vector<std::string>{"u1", "u2"};
  out.bounds.grid_spec = std::to_string(u_grid.size() / d) + " frequencies";
  out.min_slack = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < u_grid.size(); i += d) {
    const std::span<const double> u = u_grid.subspan(i, d);
    double norm2 = 0.0;
    for (double c : u) norm2 += c * c;
    const double lower = sym.lambda1() * sym.c_alpha() * std::pow(norm2, 0.5 * sym.alpha());
    const double psi = char_exponent(sym, u, tol);
    const double slack = psi - lower;
    if (slack < out.min_slack) {
      out.min_slack = slack;
      out.witness_u.assign(u.begin(), u.end());
    }
    BoundSample s;
    s.coords.assign(u.begin(), u.end());
    s.lhs = lower;
    s.rhs = psi;
    s.coarse = true;
    out.bounds.samples.push_back(s);
  }
  out.bounds.finalize();
  out.passed = out.min_slack >= -10.0 * tol;
  out.bounds.passed = out.passed;
  out.bounds.notes.push_back("min slack " + std::to_string(out.min_slack));
  return out;
}

}  // namespace varstable
