#include "varstable/parametrix.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include <boost/math/quadrature/ooura_fourier_integrals.hpp>
#include <boost/math/tools/roots.hpp>

#include "varstable/error.hpp"
#include "varstable/parallel.hpp"
#include "varstable/quadrature.hpp"

namespace varstable {

namespace {

constexpr double kPi = std::numbers::pi;

void require_line(const CoefficientField& field) {
  if (field.dim() != 1) throw InputError("parametrix", "parametrix operations are for d = 1");
}

bool coarse_index(long i, long n) { return i % 2 == 0 || i == n - 1; }

// int |f| over the breaks. |f| has kinks where f changes sign and adaptive
// rules stall on them, so sign changes are bracketed on a few samples per
// panel, pinned with TOMS 748, and the smooth signed pieces integrated.
quad::Result integrate_abs(const std::function<double(double)>& f,
                           const std::vector<double>& graded, double rel_tol) {
  std::vector<double> samples;
  for (std::size_t i = 0; i + 1 < graded.size(); ++i)
    for (int k = 0; k < 4; ++k)
      samples.push_back(graded[i] + (graded[i + 1] - graded[i]) * k / 4.0);
  samples.push_back(graded.back());
  std::vector<double> values(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) values[i] = f(samples[i]);

  std::vector<double> cuts{graded.front()};
  for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
    const double fa = values[i];
    const double fb = values[i + 1];
    if (fb == 0.0 && i + 2 < samples.size()) cuts.push_back(samples[i + 1]);
    if (!(fa * fb < 0.0)) continue;
    std::uintmax_t iters = 60;
    const auto root = boost::math::tools::toms748_solve(
        f, samples[i], samples[i + 1], fa, fb, boost::math::tools::eps_tolerance<double>(40),
        iters);
    cuts.push_back(0.5 * (root.first + root.second));
  }
  cuts.push_back(graded.back());

  quad::Result total;
  for (std::size_t j = 0; j + 1 < cuts.size(); ++j) {
    std::vector<double> breaks{cuts[j]};
    for (double g : graded)
      if (g > cuts[j] && g < cuts[j + 1]) breaks.push_back(g);
    breaks.push_back(cuts[j + 1]);
    const quad::Result r = quad::integrate_panels(f, breaks, rel_tol, 1e-300, 10);
    total.value += std::fabs(r.value);
    total.error += r.error;
  }
  return total;
}

double rho00(double alpha, double t, double r) {
  return std::pow(std::pow(t, 1.0 / alpha) + std::fabs(r), -1.0 - alpha);
}

// The auto grid, widened when it does not reach min_half_width.
DensityGrid frozen_grid(const CoefficientField& field, double y, double t, GridSpec spec,
                        double min_half_width) {
  const FrozenSymbol sym(field, {y});
  spec.derivatives = std::max(spec.derivatives, 4);
  GridSpec r = resolve_grid(sym, t, spec);
  if (r.half_width < min_half_width) {
    const double dx = 2.0 * r.half_width / double(r.n);
    std::size_t n = r.n;
    while (double(n) * dx < 2.0 * min_half_width) n *= 2;
    r.n = n;
    r.half_width = 0.5 * double(n) * dx;
  }
  return invert_density(sym, t, r);
}

// (1/pi) int_0^inf g(u) cos(u w) du where g has kinks at u = 0 and u = 2 and
// is negligible past `upper`. Few oscillations: panels. Many: panels up to
// u = 2 and Ooura's double-exponential transform for the rest.
double cosine_transform(const std::function<double(double)>& g, double w, double upper,
                        double tol, double abs_tol, double* err = nullptr) {
  w = std::fabs(w);
  const auto gc = [&](double u) { return g(u) * std::cos(u * w); };
  std::vector<double> breaks;
  if (w * upper <= 50.0) {
    // Doubling panels past the kinks, capped at half a period of cos(u w).
    const double cap = kPi / std::max(w, 1e-300);
    const quad::Feature feats[] = {{0.0, std::min(1.0, upper / 16.0)}, {2.0, 0.5}};
    breaks = quad::graded_breaks(0.0, std::min(upper, 4.0), feats, 14);
    for (double u = breaks.back(); u < upper;) {
      u = std::min(upper, u + std::min(u, cap));
      breaks.push_back(u);
    }
    const quad::Result r = quad::integrate_panels(gc, breaks, tol, abs_tol, 12);
    if (err) *err = r.error / kPi;
    return r.value / kPi;
  }
  const quad::Feature feats[] = {{0.0, 1.0}, {2.0, 0.5}};
  breaks = quad::graded_breaks(0.0, 2.0, feats, 14);
  std::vector<double> fine{breaks.front()};
  const double width = kPi / w;
  for (std::size_t i = 1; i < breaks.size(); ++i) {
    const int parts = int(std::ceil((breaks[i] - breaks[i - 1]) / width));
    for (int k = 1; k <= parts; ++k)
      fine.push_back(breaks[i - 1] + (breaks[i] - breaks[i - 1]) * k / parts);
  }
  const quad::Result head = quad::integrate_panels(gc, fine, tol, abs_tol, 12);
  // Fresh integrators per call, as in cos_power_tail.
  boost::math::quadrature::ooura_fourier_cos<double> cosine(tol, 4);
  boost::math::quadrature::ooura_fourier_sin<double> sine(tol, 4);
  const auto shifted = [&](double v) { return g(2.0 + v); };
  const auto c = cosine.integrate(shifted, w);
  const auto s = sine.integrate(shifted, w);
  const double value = head.value + std::cos(2.0 * w) * c.first - std::sin(2.0 * w) * s.first;
  if (!std::isfinite(value)) throw NumericalError("parametrix", "non-finite cosine transform");
  if (err) *err = (head.error + std::fabs(c.second * c.first) + std::fabs(s.second * s.first)) / kPi;
  return value / kPi;
}

double decay_upper(const FrozenSymbol& s, double t) {
  return 1.3 * std::pow(45.0 / (t * s.lambda1() * s.c_alpha()), 1.0 / s.alpha());
}

// 1 / width of f_t: the size of the density, and t times that of psi e^{-t psi}.
double density_scale(const FrozenSymbol& s, double t) {
  return std::pow(t * s.lambda1() * s.c_alpha(), -1.0 / s.alpha());
}

// Kernel n(p, h) |h|^{-1-alpha(p)} of the field frozen at p.
struct Kernel {
  double alpha;
  TrigIntensity n;
  std::vector<double> p;

  Kernel(const CoefficientField& field, double point)
      : alpha(field.eval_alpha(std::vector<double>{point})),
        n(field.trig_intensity(std::vector<double>{point})),
        p{point} {}
  double intensity(double h) const { return n.a0 + n.a1 * std::cos(2.0 * h); }
  double operator()(double h) const { return intensity(h) * std::pow(h, -1.0 - alpha); }
};

struct DeltaIntegral {
  double value = 0.0;
  double error = 0.0;
};

// int_0^inf delta_g(v; h) weight(h) dh (or with |delta| when absolute).
// sliver(eps) must return int_0^eps h^2 weight(h) dh and tail(H)
// int_H^inf weight(h) dh. Near part: graded at h = 0, |v|, 1 and the switch
// to the Taylor form of delta, panels at most one unit wide so cos(2h) in n
// is resolved. Far part (h >= H1 > 2|v|): delta = s(h) - 2 f(v) with
// s(h) = f(v + h) + f(v - h) < 2 f(v); the -2 f(v) piece is analytic and the
// decaying s piece is integrated out to 16 H1 on period-wide panels.
template <typename Weight, typename Sliver, typename Tail>
DeltaIntegral delta_integral(const DensityGrid& g, double v, bool absolute, const Weight& weight,
                             const Sliver& sliver, const Tail& tail, double rel_tol) {
  const double hmax = g.half_width - 2.0 * g.dx - std::fabs(v);
  if (!(hmax > 1.0)) throw GridError("parametrix", "point too close to the density grid's edge");
  const double fv = g.eval(v);
  const double use_taylor = 0.1 * g.width;
  const double f2 = g.eval_derivative(2, v);
  const double f4 = g.eval_derivative(4, v);
  const auto delta = [&](double h) {
    if (h < use_taylor) return f2 * h * h + f4 * h * h * h * h / 12.0;
    return g.eval(v + h) + g.eval(v - h) - 2.0 * fv;
  };
  const auto near = [&](double h) {
    const double dl = delta(h);
    return (absolute ? std::fabs(dl) : dl) * weight(h);
  };
  const auto far = [&](double h) {
    const double s = g.eval(v + h) + g.eval(v - h);
    return (absolute ? std::fabs(s - 2.0 * fv) - 2.0 * fv : s) * weight(h);
  };
  const double h1 = std::min(hmax, 4.0 + 2.0 * std::fabs(v) + 20.0 * g.width);
  const double hc = std::min(hmax, 16.0 * h1);

  const double sigma = std::pow(g.t, 1.0 / g.alpha);
  std::vector<quad::Feature> feats{{0.0, sigma}, {1.0, 1.0}, {use_taylor, use_taylor}};
  if (std::fabs(v) > 0.0 && std::fabs(v) < h1) feats.push_back({std::fabs(v), sigma});
  const std::vector<double> graded = quad::graded_breaks(0.0, h1, feats, 30);
  std::vector<double> breaks;
  for (std::size_t i = 1; i < graded.size(); ++i) {
    const double a = graded[i - 1];
    const double b = graded[i];
    const int parts = std::max(1, int(std::ceil(b - a)));
    for (int k = (i == 1 ? 1 : 0); k < parts; ++k) breaks.push_back(a + (b - a) * k / parts);
  }
  breaks.push_back(h1);
  const double eps = breaks.front();
  const quad::Result body = quad::integrate_panels(near, breaks, rel_tol, 1e-300, 10);

  DeltaIntegral out;
  out.value = (absolute ? std::fabs(f2) : f2) * sliver(eps) + body.value +
              (absolute ? 2.0 * fv : -2.0 * fv) * tail(h1);
  out.error = body.error;
  if (hc > h1) {
    std::vector<double> outer{h1};
    const int parts = int(std::ceil((hc - h1) / kPi));
    for (int k = 1; k <= parts; ++k) outer.push_back(h1 + (hc - h1) * k / parts);
    const quad::Result r = quad::integrate_panels(far, outer, rel_tol, 1e-300, 8);
    out.value += r.value;
    out.error += r.error;
  }
  // Past hc the s piece is dropped: at most |weight| times the mass of f
  // beyond hc - |v|, which is about t kappa2 (hc - |v|)^{-alpha} / alpha per side.
  const double beyond = std::max(hc - std::fabs(v), 1.0);
  out.error += std::fabs(weight(hc)) *
               std::min(1.0, 2.0 * g.t * 2.0 * std::pow(beyond, -g.alpha) / g.alpha);
  return out;
}

// (1/2) int delta_g(v; h) (K_a(h) - K_b(h)) dh.
DeltaIntegral operator_gap(const DensityGrid& g, double v, const CoefficientField& field,
                           const Kernel& a, const Kernel& b, double rel_tol) {
  const auto weight = [&](double h) { return a(h) - b(h); };
  const auto sliver = [&](double eps) {
    return a.intensity(0.0) * std::pow(eps, 2.0 - a.alpha) / (2.0 - a.alpha) -
           b.intensity(0.0) * std::pow(eps, 2.0 - b.alpha) / (2.0 - b.alpha);
  };
  const auto tail = [&](double hh) {
    return 0.5 * (field.kernel_tail(a.p, a.alpha, hh) - field.kernel_tail(b.p, b.alpha, hh));
  };
  return delta_integral(g, v, false, weight, sliver, tail, rel_tol);
}

}  // namespace

// ---------------------------------------------------------------------------

FrozenDensityCache::FrozenDensityCache(const CoefficientField& field, GridSpec spec,
                                       double min_half_width, std::size_t capacity,
                                       std::size_t miss_budget)
    : field_(&field),
      spec_(spec),
      min_half_width_(min_half_width),
      capacity_(std::max<std::size_t>(capacity, 1)),
      miss_budget_(miss_budget) {
  require_line(field);
}

std::shared_ptr<const DensityGrid> FrozenDensityCache::get(double y, double t) {
  const std::pair<double, double> key{y, t};
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = entries_.find(key);
    if (it != entries_.end()) {
      ++hits_;
      it->second.second = ++clock_;
      return it->second.first;
    }
    if (miss_budget_ > 0 && misses_ >= miss_budget_)
      throw ResourceError("parametrix", "frozen-density budget of " +
                                            std::to_string(miss_budget_) + " inversions exceeded");
    ++misses_;
  }
  auto grid = std::make_shared<const DensityGrid>(
      frozen_grid(*field_, y, t, spec_, min_half_width_));
  std::lock_guard<std::mutex> lock(mutex_);
  auto [it, inserted] = entries_.try_emplace(key, grid, ++clock_);
  if (inserted && entries_.size() > capacity_) {
    auto oldest = entries_.begin();
    for (auto e = entries_.begin(); e != entries_.end(); ++e)
      if (e->second.second < oldest->second.second) oldest = e;
    entries_.erase(oldest);
  }
  return it->second.first;
}

std::size_t FrozenDensityCache::hits() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return hits_;
}

std::size_t FrozenDensityCache::misses() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return misses_;
}

double q_eval(double t, double x, double y, const CoefficientField& field) {
  FrozenDensityCache cache(field, {}, std::fabs(y - x) + 4.0, 1);
  return q_eval(t, x, y, cache);
}

double q_eval(double t, double x, double y, FrozenDensityCache& cache) {
  if (!(t > 0.0)) throw InputError("parametrix", "q needs t > 0");
  const auto g = cache.get(y, t);
  if (!g->contains(y - x)) throw GridError("parametrix", "y - x outside the density grid");
  return g->eval(y - x);
}

ParametrixEval F_eval(double t, double x, double y, const CoefficientField& field) {
  FrozenDensityCache cache(field, {}, std::fabs(y - x) + 4.0, 1);
  return F_eval(t, x, y, cache);
}

ParametrixEval F_eval(double t, double x, double y, FrozenDensityCache& cache) {
  if (!(t > 0.0)) throw InputError("parametrix", "F needs t > 0");
  return F_from_grid(*cache.get(y, t), x, cache.field());
}

ParametrixEval F_from_grid(const DensityGrid& g, double x, const CoefficientField& field) {
  require_line(field);
  if (g.d != 1 || g.y.size() != 1) throw InputError("parametrix", "F needs a d = 1 grid");
  const double y = g.y[0];
  const double w = y - x;
  ParametrixEval out;
  out.t = g.t;
  out.x = x;
  out.y = y;
  if (!g.contains(w)) throw GridError("parametrix", "y - x outside the density grid");
  out.q = g.eval(w);
  if (x == y) return out;

  const Kernel kx(field, x);
  const Kernel ky(field, y);
  const double tol = 1e-8;
  const DeltaIntegral f = operator_gap(g, w, field, kx, ky, tol);

  const auto w2 = [&](double h) {
    return std::fabs(kx.intensity(h) - ky.intensity(h)) * std::pow(h, -1.0 - ky.alpha);
  };
  const auto s2 = [&](double eps) {
    return std::fabs(kx.intensity(0.0) - ky.intensity(0.0)) * std::pow(eps, 2.0 - ky.alpha) /
           (2.0 - ky.alpha);
  };
  const auto t2 = [&](double hh) {
    return 0.5 * field.kernel_difference_tail(kx.p, ky.p, ky.alpha, hh);
  };
  const DeltaIntegral f2 = delta_integral(g, w, true, w2, s2, t2, tol);

  out.F = f.value;
  out.F2 = 2.0 * f2.value;
  out.F1 = frac_integral(g, w, {KernelMode::kDifference, ky.alpha, kx.alpha});
  out.quadrature_error = f.error;
  return out;
}

double F_fourier(double t, double x, double y, const CoefficientField& field, double tol) {
  require_line(field);
  if (!(t > 0.0)) throw InputError("parametrix", "F needs t > 0");
  if (x == y) return 0.0;
  const FrozenSymbol sy(field, {y});
  const FrozenSymbol sx(field, {x});
  const auto g = [&](double u) {
    const double py = sy.exponent(u);
    return (py - sx.exponent(u)) * std::exp(-t * py);
  };
  // Near x = y the integrand is rounding noise of psi^y - psi^x.
  return cosine_transform(g, y - x, decay_upper(sy, t), tol, 1e-12 * density_scale(sy, t) / t);
}

double density_difference(const FrozenSymbol& a, const FrozenSymbol& b, double t, double w,
                          double tol) {
  if (a.dim() != 1 || b.dim() != 1) throw InputError("parametrix", "densities must be d = 1");
  if (!(t > 0.0)) throw InputError("parametrix", "densities need t > 0");
  const auto g = [&](double u) {
    return std::exp(-t * a.exponent(u)) - std::exp(-t * b.exponent(u));
  };
  return cosine_transform(g, w, std::max(decay_upper(a, t), decay_upper(b, t)), tol,
                          1e-14 * density_scale(a, t));
}

PerturbationMass perturbation_mass(double t, double x, const CoefficientField& field,
                                   double extent, double rel_tol) {
  require_line(field);
  if (!(t > 0.0) || !(extent > 0.0)) throw InputError("parametrix", "need t > 0 and extent > 0");
  PerturbationMass out;
  if (field.is_constant()) return out;
  const auto f = [&](double w) { return F_fourier(t, x, x + w, field, 1e-5); };
  const double ax = field.eval_alpha(std::vector<double>{x});
  const quad::Feature feats[] = {{0.0, std::pow(t, 1.0 / ax)}};
  const quad::Result r = integrate_abs(f, quad::graded_breaks(-extent, extent, feats, 8), rel_tol);
  out.value = r.value;
  out.error = r.error;
  // |F| ~ c |w|^{-1-alpha(y)} far out.
  for (double side : {-extent, extent}) {
    const double ay = field.eval_alpha(std::vector<double>{x + side});
    out.tail_estimate += std::fabs(f(side)) * extent / ay;
  }
  return out;
}

BoundReport check_F_bounds(const std::string& lemma_id, const CoefficientField& field,
                           const FBoundGrid& grid) {
  require_line(field);
  if (lemma_id != "F1" && lemma_id != "F2" && lemma_id != "L3.4")
    throw InputError("parametrix", "unknown F-bound id '" + lemma_id + "'");
  BoundReport rep;
  rep.lemma_id = lemma_id;
  std::ostringstream spec;

  if (lemma_id == "L3.4") {
    if (grid.large_t.empty() || grid.large_t_x.empty())
      throw InputError("parametrix", "empty large-time grid");
    for (double t : grid.large_t)
      if (!(t >= 0.5)) throw InputError("parametrix", "the large-time bound needs t >= 1/2");
    rep.coord_names = {"x", "t"};
    spec << grid.large_t_x.size() << " base points, t in {";
    for (std::size_t i = 0; i < grid.large_t.size(); ++i)
      spec << (i ? ", " : "") << grid.large_t[i];
    spec << "}, |y - x| <= " << grid.large_t_extent << " plus estimated tail";
    rep.grid_spec = spec.str();
    const double alo = field.params().alpha_lower;
    const std::size_t nt = grid.large_t.size();
    const std::size_t nx = grid.large_t_x.size();
    rep.samples.resize(nt * nx);
    parallel_for(nt * nx, grid.workers, [&](std::size_t task) {
      const std::size_t ix = task / nt;
      const std::size_t it = task % nt;
      const double x = grid.large_t_x[ix];
      const double t = grid.large_t[it];
      const PerturbationMass m = perturbation_mass(t, x, field, grid.large_t_extent);
      const double rhs = (1.0 + std::fabs(std::log(t))) * std::pow(t, 3.0 / alo);
      rep.samples[task] = {{x, t}, m.value + m.tail_estimate, rhs,
                           coarse_index(long(it), long(nt)) && coarse_index(long(ix), long(nx))};
    });
    rep.finalize();
    return rep;
  }

  if (grid.y_points.empty() || grid.t_exp_min > grid.t_exp_max || grid.r_points < 1)
    throw InputError("parametrix", "empty F-bound grid");
  std::vector<double> rs;
  for (int i = 0; i < grid.r_points; ++i)
    rs.push_back(grid.r_points == 1
                     ? grid.r_max
                     : grid.r_min * std::pow(grid.r_max / grid.r_min, double(i) / (grid.r_points - 1)));
  rep.coord_names = {"y", "t", "x"};
  spec << grid.y_points.size() << " freezing points, t = 2^k for k in [" << grid.t_exp_min << ", "
       << grid.t_exp_max << "], x = y -+ r for " << grid.r_points << " log-spaced r in ["
       << grid.r_min << ", " << grid.r_max << "]";
  rep.grid_spec = spec.str();

  const long nt = grid.t_exp_max - grid.t_exp_min + 1;
  const std::size_t tasks = grid.y_points.size() * std::size_t(nt);
  std::vector<std::vector<BoundSample>> parts(tasks);
  std::vector<double> worst_domination(tasks, -std::numeric_limits<double>::infinity());
  const double kappa2 = field.params().kappa2;
  parallel_for(tasks, grid.workers, [&](std::size_t task) {
    const double y = grid.y_points[task / nt];
    const long it = long(task % nt);
    const double t = std::ldexp(1.0, grid.t_exp_min + int(it));
    const DensityGrid g = frozen_grid(field, y, t, grid.spec, grid.r_max + 4.0);
    const bool ct = coarse_index(it, nt);
    for (std::size_t ir = 0; ir < rs.size(); ++ir) {
      const double r = rs[ir];
      for (double sign : {-1.0, 1.0}) {
        const double x = y + sign * r;
        const ParametrixEval e = F_from_grid(g, x, field);
        worst_domination[task] =
            std::max(worst_domination[task],
                     std::fabs(e.F) - (kappa2 * e.F1 + e.F2 + e.quadrature_error));
        const double ax = field.eval_alpha(std::vector<double>{x});
        const double ay = g.alpha;
        const double far = r >= 2.0 ? std::log(r) : 0.0;
        double lhs = 0.0;
        double rhs = 0.0;
        if (lemma_id == "F1") {
          const double b = field.beta_modulus(r);
          lhs = e.F1;
          rhs = b * (1.0 + std::fabs(std::log(t)) + far) *
                    std::max(std::pow(t, (ay - ax) / ay), 1.0) * rho00(ay, t, r) +
                b * far * rho00(ax, t, r);
        } else {
          lhs = e.F2;
          rhs = field.omega_modulus(r) * rho00(ay, t, r);
        }
        parts[task].push_back(
            {{y, t, x}, lhs, rhs, ct && coarse_index(long(ir), long(rs.size()))});
      }
    }
  });
  for (auto& p : parts) rep.samples.insert(rep.samples.end(), p.begin(), p.end());
  rep.finalize();
  const double worst = *std::max_element(worst_domination.begin(), worst_domination.end());
  std::ostringstream note;
  note << "max of |F| - (kappa2 F1 + F2 + err) over the grid: " << worst;
  rep.notes.push_back(note.str());
  if (worst > 0.0) rep.passed = false;
  return rep;
}

// ---------------------------------------------------------------------------

namespace {

// The law of X_s^y + X_{t-s}^x: characteristic function
// e^{-s psi^y - (t-s) psi^x}, on a grid fine and wide enough for both
// frozen symbols at time t and for the h-integral at w.
DensityGrid mixed_grid(const FrozenSymbol& sy, const FrozenSymbol& sx, double t, double s,
                       double min_half_width, GridSpec spec) {
  spec.derivatives = std::max(spec.derivatives, 4);
  const GridSpec gy = resolve_grid(sy, t, spec);
  const GridSpec gx = resolve_grid(sx, t, spec);
  const double dx = std::min(2.0 * gy.half_width / double(gy.n), 2.0 * gx.half_width / double(gx.n));
  const double half = std::max({gy.half_width, gx.half_width, min_half_width});
  GridSpec r = spec;
  r.n = 1024;
  while (double(r.n) * dx < 2.0 * half) r.n *= 2;
  r.half_width = 0.5 * double(r.n) * dx;
  const double alpha = std::min(sy.alpha(), sx.alpha());
  const auto scale = [t](const FrozenSymbol& sym) {
    return std::pow(t * sym.lambda1() * sym.c_alpha(), 1.0 / sym.alpha());
  };
  const double width = std::min(scale(sy), scale(sx));
  return invert_spectrum_1d(
      [&](double u) { return std::exp(-s * sy.exponent(u) - (t - s) * sx.exponent(u)); }, t,
      alpha, width, r);
}

}  // namespace

DuhamelResult duhamel_residual(double t, double x, double y, double w,
                               const CoefficientField& field, const DuhamelBudget& budget,
                               const GridSpec& spec) {
  require_line(field);
  if (!(t > 0.0 && t <= 1.0)) throw InputError("parametrix", "Duhamel check needs t in (0, 1]");
  if (budget.s_nodes < 1 || !(budget.rel_tol > 0.0))
    throw InputError("parametrix", "Duhamel budget must have s_nodes >= 1 and rel_tol > 0");
  DuhamelResult out;
  if (x == y || field.is_constant()) return out;

  const FrozenSymbol sy(field, {y});
  const FrozenSymbol sx(field, {x});
  out.lhs = density_difference(sy, sx, t, w);

  // The z-convolution of f_s^y with (A^y - A^x) f_{t-s}^x is the operator
  // applied to the convolved density, so each s-node costs one inversion and
  // one h-integral. The two halves of the identity are the same integrand
  // over [0, t/2] and [t/2, t].
  const Kernel ky(field, y);
  const Kernel kx(field, x);
  const double width = std::fabs(w) + 12.0;
  for (int half = 0; half < 2; ++half) {
    std::vector<double> nodes;
    std::vector<double> weights;
    quad::gauss_legendre(budget.s_nodes, 0.5 * t * half, 0.5 * t * (half + 1), nodes, weights);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const DensityGrid g = mixed_grid(sy, sx, t, nodes[i], width, spec);
      const DeltaIntegral r = operator_gap(g, w, field, ky, kx, budget.rel_tol);
      out.rhs += weights[i] * r.value;
      out.error_estimate += weights[i] * r.error;
    }
  }
  out.residual = out.lhs - out.rhs;
  return out;
}

double density_coupling_gap(double t, double x, const CoefficientField& field,
                            const CouplingGapOptions& opts) {
  require_line(field);
  if (!(t > 0.0 && t <= 0.5)) throw InputError("parametrix", "coupling gap needs t in (0, 1/2]");
  if (field.is_constant()) return 0.0;
  const FrozenSymbol sx(field, {x});
  std::size_t evaluations = 0;
  const auto d = [&](double w) {
    if (++evaluations > opts.max_evaluations)
      throw ResourceError("parametrix", "coupling gap needs more than " +
                                            std::to_string(opts.max_evaluations) +
                                            " frozen-density evaluations");
    if (w == 0.0) return 0.0;
    const FrozenSymbol sy(field, {x + w});
    return density_difference(sy, sx, t, w, 1e-9);
  };
  // d is smooth through w = 0, so the panels only need the density's scale there.
  const quad::Feature feats[] = {{0.0, std::pow(t, 1.0 / sx.alpha())}};
  return integrate_abs(d, quad::graded_breaks(-1.0, 1.0, feats, 4), opts.rel_tol).value;
}

// ---------------------------------------------------------------------------

namespace {

// Smallest r where a nondecreasing capped modulus reaches its cap, found by
// bisection; the bound's integrand has a kink there.
double modulus_cap_point(const std::function<double(double)>& m) {
  const double cap = m(1e12);
  if (!(cap > 0.0)) return 0.0;
  double lo = 0.0;
  double hi = 1e12;
  for (int i = 0; i < 200 && hi - lo > 1e-12 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (m(mid) >= cap ? hi : lo) = mid;
  }
  return hi;
}

// |F(t, x, y)| <= (1/2)(kappa2 F1 + F2) with F1, F2 replaced by their fitted
// bounds, summed over y = x -+ r and integrated over r >= r_lo (d = 1).
class FBoundMass {
 public:
  FBoundMass(const CoefficientField& field, const FBoundConstants& c, double x)
      : field_(field), c_(c), x_(x), ax_(field.eval_alpha(std::vector<double>{x})) {
    kinks_ = {2.0, modulus_cap_point([&](double r) { return field.beta_modulus(r); }),
              modulus_cap_point([&](double r) { return field.omega_modulus(r); })};
  }

  double density(double t, double r) const {
    const double b = field_.beta_modulus(r);
    const double w = field_.omega_modulus(r);
    const double far = r >= 2.0 ? std::log(r) : 0.0;
    const double lt = std::fabs(std::log(t));
    double total = 0.0;
    for (double y : {x_ - r, x_ + r}) {
      const double ay = field_.eval_alpha(std::vector<double>{y});
      const double order = std::max(std::pow(t, (ay - ax_) / ay), 1.0);
      const double f1 = b * (1.0 + lt + far) * order * rho00(ay, t, r) + b * far * rho00(ax_, t, r);
      const double f2 = w * rho00(ay, t, r);
      total += 0.5 * (field_.params().kappa2 * c_.f1 * f1 + c_.f2 * f2);
    }
    return total;
  }

  double mass(double t, double r_lo) const {
    const auto f = [&](double r) { return density(t, r); };
    const double knee = std::max(r_lo, 64.0);
    double total = 0.0;
    if (r_lo < knee) {
      std::vector<quad::Feature> feats{{r_lo, std::pow(t, 1.0 / field_.params().alpha_upper)}};
      for (double k : kinks_) feats.push_back({k, 0.0});
      const std::vector<double> breaks = quad::graded_breaks(r_lo, knee, feats, 30);
      total += quad::integrate_panels(f, breaks, 1e-8, 1e-300, 12).value;
    }
    total += quad::integrate_tail(f, knee, 1e-8).value;
    return total;
  }

 private:
  const CoefficientField& field_;
  FBoundConstants c_;
  double x_;
  double ax_;
  std::vector<double> kinks_;
};

}  // namespace

bool ResolventMassReport::monotone_in_lambda() const {
  for (const auto& row : mass_per_x)
    for (std::size_t k = 1; k < row.size(); ++k)
      if (row[k] > row[k - 1]) return false;
  return true;
}

std::vector<double> default_x_samples(const CoefficientField& field, std::size_t count) {
  require_line(field);
  // One period of sin^2 and the transition of tanh.
  double half = kPi / 2.0;
  double saturated = 10.0;
  if (const auto* a = std::get_if<family::TanhAlpha>(&field.alpha_family()); a && a->c > 0.0) {
    half = std::max(half, 2.0 / a->c);
    saturated = std::max(saturated, 10.0 / a->c);
  }
  std::vector<double> xs;
  const double golden = 0.5 * (std::sqrt(5.0) - 1.0);
  for (std::size_t i = 0; i < count; ++i) {
    const double u = std::fmod(0.5 + double(i) * golden, 1.0);
    xs.push_back(-half + 2.0 * half * u);
  }
  xs.push_back(-saturated);
  xs.push_back(saturated);
  return xs;
}

ResolventMassReport resolvent_perturbation_mass(const CoefficientField& field,
                                                const std::vector<double>& lambdas,
                                                const std::vector<double>& x_samples,
                                                const FBoundConstants& constants,
                                                const ResolventTruncation& tr, unsigned workers) {
  require_line(field);
  if (lambdas.empty() || x_samples.empty())
    throw InputError("parametrix", "resolvent mass needs lambdas and x samples");
  for (std::size_t k = 0; k < lambdas.size(); ++k)
    if (!(lambdas[k] > 0.0) || (k > 0 && !(lambdas[k] > lambdas[k - 1])))
      throw InputError("parametrix", "lambda grid must be positive and increasing");
  if (!(tr.t_min > 0.0 && tr.t_max > tr.t_min && tr.y_extent > 0.0 && tr.log_t_panel > 0.0 &&
        tr.nodes_per_panel >= 1))
    throw InputError("parametrix", "invalid resolvent truncation");

  ResolventMassReport rep;
  rep.lambdas = lambdas;
  rep.x_samples = x_samples;
  rep.truncation = tr;
  rep.constants = constants;
  rep.model_hash = field.hash();

  // Gauss-Legendre panels in ln t: int e^{-lambda t} J dt = int e^{-lambda t} t J d(ln t).
  const double lo = std::log(tr.t_min);
  const double hi = std::log(tr.t_max);
  const int panels = std::max(1, int(std::ceil((hi - lo) / tr.log_t_panel)));
  std::vector<double> nodes;
  std::vector<double> weights;
  for (int p = 0; p < panels; ++p) {
    quad::gauss_legendre(tr.nodes_per_panel, lo + (hi - lo) * p / panels,
                         lo + (hi - lo) * (p + 1) / panels, nodes, weights);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      rep.t_nodes.push_back(std::exp(nodes[i]));
      rep.t_weights.push_back(weights[i] * std::exp(nodes[i]));
    }
  }
  const std::size_t nt = rep.t_nodes.size();
  const std::size_t nx = x_samples.size();
  rep.y_mass.assign(nx, std::vector<double>(nt, 0.0));
  if (!field.is_constant()) {
    parallel_for(nx * nt, workers, [&](std::size_t task) {
      const std::size_t ix = task / nt;
      const std::size_t it = task % nt;
      rep.y_mass[ix][it] =
          perturbation_mass(rep.t_nodes[it], x_samples[ix], field, tr.y_extent, tr.rel_tol).value;
    });
  }
  rep.mass_per_x.assign(nx, std::vector<double>(lambdas.size(), 0.0));
  for (std::size_t ix = 0; ix < nx; ++ix)
    for (std::size_t k = 0; k < lambdas.size(); ++k) {
      double m = 0.0;
      for (std::size_t it = 0; it < nt; ++it)
        m += rep.t_weights[it] * std::exp(-lambdas[k] * rep.t_nodes[it]) * rep.y_mass[ix][it];
      rep.mass_per_x[ix][k] = m;
    }

  // What the truncation drops, bounded per sample through the fitted
  // F-bounds; the report keeps the largest over the samples.
  const double alo = field.params().alpha_lower;
  std::vector<double> small_t(nx, 0.0);
  std::vector<std::vector<double>> far_mass(nx, std::vector<double>(nt, 0.0));
  if (!field.is_constant()) {
    parallel_for(nx, workers, [&](std::size_t ix) {
      const FBoundMass bound(field, constants, x_samples[ix]);
      // t = t_min e^{-s}, dt = t ds.
      const auto f = [&](double s) {
        const double t = tr.t_min * std::exp(-s);
        return t * bound.mass(t, 0.0);
      };
      // Panels in ln t down to 1e-40; below that the integrand decays
      // geometrically and the rest is closed off from the last two values.
      const double s_end = std::log(tr.t_min / 1e-40);
      if (s_end > 0.0) {
        std::vector<double> breaks;
        for (double s = 0.0; s < s_end; s += 4.0) breaks.push_back(s);
        breaks.push_back(s_end);
        small_t[ix] = quad::integrate_panels(f, breaks, 1e-6, 1e-300, 10).value;
        const double fa = f(s_end - 2.0);
        const double fb = f(s_end);
        const double rate = fb > 0.0 && fa > fb ? std::log(fa / fb) / 2.0 : 0.0;
        small_t[ix] += rate > 0.0 ? fb / rate : fb * 100.0;
      }
      for (std::size_t it = 0; it < nt; ++it)
        far_mass[ix][it] = bound.mass(rep.t_nodes[it], tr.y_extent);
    });
  }
  for (double lambda : lambdas) {
    double far = 0.0;
    double small = 0.0;
    for (std::size_t ix = 0; ix < nx; ++ix) {
      double m = 0.0;
      for (std::size_t it = 0; it < nt; ++it)
        m += rep.t_weights[it] * std::exp(-lambda * rep.t_nodes[it]) * far_mass[ix][it];
      far = std::max(far, m);
      small = std::max(small, small_t[ix]);
    }
    double large = 0.0;
    if (constants.large_t > 0.0) {
      const auto f = [&](double s) {
        const double t = tr.t_max + s;
        const double lt = std::log(t);
        return std::exp(-lambda * t + 3.0 / alo * lt) * (1.0 + lt);
      };
      large = constants.large_t * quad::integrate_tail(f, 0.0, 1e-8).value;
    }
    rep.remainder_small_t.push_back(small);
    rep.remainder_far_y.push_back(far);
    rep.remainder_large_t.push_back(large);
    rep.remainder.push_back(small + far + large);
  }
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    double sup = 0.0;
    for (std::size_t ix = 0; ix < nx; ++ix) sup = std::max(sup, rep.mass_per_x[ix][k]);
    rep.sup_mass.push_back(sup);
  }
  bool any_small = false;
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    if (rep.sup_mass[k] > 0.5) continue;
    any_small = true;
    if (rep.remainder[k] <= tr.max_remainder) {
      rep.lambda0_found = lambdas[k];
      break;
    }
  }
  if (any_small && !rep.lambda0_found)
    throw ResourceError("parametrix",
                        "sampled sup reaches 1/2 but the truncation remainder stays above " +
                            std::to_string(tr.max_remainder) +
                            "; widen t_max, y_extent or lower t_min");
  rep.notes.push_back("sampled sup over " + std::to_string(nx) + " points, not a proof");
  return rep;
}

nlohmann::json to_json(const ResolventMassReport& r) {
  nlohmann::json j;
  j["lambdas"] = r.lambdas;
  j["x_samples"] = r.x_samples;
  j["mass_per_x"] = r.mass_per_x;
  j["sup_mass"] = r.sup_mass;
  j["remainder"] = r.remainder;
  j["remainder_small_t"] = r.remainder_small_t;
  j["remainder_large_t"] = r.remainder_large_t;
  j["remainder_far_y"] = r.remainder_far_y;
  j["lambda0_found"] = r.lambda0_found ? nlohmann::json(*r.lambda0_found) : nlohmann::json();
  j["monotone_in_lambda"] = r.monotone_in_lambda();
  j["truncation"] = {{"t_min", r.truncation.t_min},
                     {"t_max", r.truncation.t_max},
                     {"y_extent", r.truncation.y_extent},
                     {"max_remainder", r.truncation.max_remainder},
                     {"log_t_panel", r.truncation.log_t_panel},
                     {"nodes_per_panel", r.truncation.nodes_per_panel},
                     {"rel_tol", r.truncation.rel_tol}};
  j["fitted_constants"] = {{"F1", r.constants.f1},
                           {"F2", r.constants.f2},
                           {"L3.4", r.constants.large_t}};
  j["model_hash"] = r.model_hash;
  j["notes"] = r.notes;
  return j;
}

void write_csv(std::ostream& os, const ResolventMassReport& r) {
  os << "x,t,weight,y_integral\n";
  for (std::size_t ix = 0; ix < r.x_samples.size(); ++ix)
    for (std::size_t it = 0; it < r.t_nodes.size(); ++it)
      os << r.x_samples[ix] << ',' << r.t_nodes[it] << ',' << r.t_weights[it] << ','
         << r.y_mass[ix][it] << '\n';
}

}  // namespace varstable
