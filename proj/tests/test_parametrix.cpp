#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "oracles.hpp"
#include "varstable/error.hpp"
#include "varstable/parametrix.hpp"

using namespace varstable;

namespace {

const CoefficientField& cauchy_field() {
  static const CoefficientField f = make_constant_field(1, 1.0, 1.0);
  return f;
}

const CoefficientField& stable_field() {
  static const CoefficientField f = make_constant_field(1, 1.4, 1.1);
  return f;
}

const CoefficientField& test_field() {
  static const CoefficientField f = make_test_field(1, 1.0, 0.3, 1.0, 0.25);
  return f;
}

// The test family written out by hand: alpha = a0 + a1 (1 + tanh x) / 2 and
// n = 1 + eps sin^2 x cos^2 h = b0 + b1 cos 2h.
struct HandSymbol {
  double alpha, b0, b1;
  explicit HandSymbol(double x, double a0 = 1.0, double a1 = 0.3, double eps = 0.25) {
    alpha = a0 + a1 * (1.0 + std::tanh(x)) / 2.0;
    const double s = std::sin(x) * std::sin(x);
    b0 = 1.0 + eps * s / 2.0;
    b1 = eps * s / 2.0;
  }
  // int (1 - cos uh) n(h) |h|^{-1-alpha} dh
  double operator()(double u) const {
    const double c = oracle::stable_constant(alpha, 1);
    const double a = alpha;
    return c * (b0 * std::pow(std::fabs(u), a) +
                b1 * (std::pow(std::fabs(u + 2.0), a) + std::pow(std::fabs(u - 2.0), a)) / 2.0 -
                b1 * std::pow(2.0, a));
  }
};

// (1/pi) int_0^U g(u) du by the trapezoid rule on a uniform grid.
template <typename G>
double trapezoid(const G& g, double upper, int n) {
  const double h = upper / n;
  double s = 0.5 * (g(0.0) + g(upper));
  for (int k = 1; k < n; ++k) s += g(k * h);
  return s * h / oracle::kPi;
}

double oracle_F(double t, double x, double y) {
  const HandSymbol py(y), px(x);
  const double w = y - x;
  const auto g = [&](double u) { return std::cos(u * w) * (py(u) - px(u)) * std::exp(-t * py(u)); };
  const double upper = std::pow(60.0 / (t * oracle::stable_constant(py.alpha, 1)), 1.0 / py.alpha);
  return trapezoid(g, upper, 400000);
}

double oracle_density(double t, double y, double w) {
  const HandSymbol p(y);
  const auto g = [&](double u) { return std::cos(u * w) * std::exp(-t * p(u)); };
  const double upper = std::pow(60.0 / (t * oracle::stable_constant(p.alpha, 1)), 1.0 / p.alpha);
  return trapezoid(g, upper, 400000);
}

}  // namespace

TEST_CASE("q on the Cauchy field is the Cauchy density") {
  CHECK(q_eval(1.0, 0.0, 0.0, cauchy_field()) ==
        doctest::Approx(1.0 / (oracle::kPi * oracle::kPi)).epsilon(1e-8));
  for (double t : {0.5, 2.0})
    for (double r : {0.0, 0.7, -3.0})
      CHECK(q_eval(t, 1.0, 1.0 + r, cauchy_field()) ==
            doctest::Approx(oracle::cauchy_pdf(r, oracle::kPi * t)).epsilon(1e-6));
}

TEST_CASE("q on the test family against a hand-written Fourier inversion") {
  for (double t : {0.1, 1.0}) {
    const double x = -0.4;
    const double y = 0.6;
    INFO("t = " << t);
    CHECK(q_eval(t, x, y, test_field()) ==
          doctest::Approx(oracle_density(t, y, y - x)).epsilon(1e-6));
  }
}

TEST_CASE("F vanishes for constant coefficients and on the diagonal") {
  for (double t : {0.01, 0.5})
    for (double r : {0.3, 2.0}) {
      const ParametrixEval e = F_eval(t, 0.0, r, stable_field());
      CHECK(std::fabs(e.F) <= 1e-12);
      CHECK(e.F1 == 0.0);
      CHECK(e.F2 == 0.0);
      CHECK(F_fourier(t, 0.0, r, stable_field()) == 0.0);
    }
  const ParametrixEval d = F_eval(0.3, 0.5, 0.5, test_field());
  CHECK(d.F == 0.0);
  CHECK(d.q > 0.0);
}

TEST_CASE("F in second-difference form against a hand-written Fourier oracle") {
  struct P { double t, x, y; };
  for (const P p : {P{0.1, 0.0, 0.5}, P{0.5, -1.0, 0.2}, P{1.0, 1.0, 0.3}, P{0.02, 0.3, 0.35}}) {
    const double ref = oracle_F(p.t, p.x, p.y);
    const ParametrixEval e = F_eval(p.t, p.x, p.y, test_field());
    INFO("t = " << p.t << " x = " << p.x << " y = " << p.y << " oracle " << ref);
    CHECK(e.F == doctest::Approx(ref).epsilon(1e-5).scale(1e-6));
    CHECK(F_fourier(p.t, p.x, p.y, test_field()) == doctest::Approx(ref).epsilon(1e-6));
    // The split domination with the error allowance.
    const double kappa2 = test_field().params().kappa2;
    CHECK(std::fabs(e.F) <= kappa2 * e.F1 + e.F2 + e.quadrature_error);
  }
}

TEST_CASE("density difference keeps digits for nearby frozen points") {
  const FrozenSymbol a(test_field(), {0.3});
  const FrozenSymbol b(test_field(), {0.3 + 1e-6});
  const double t = 0.2;
  const double w = 0.1;
  const double direct = density_pointwise(a, t, w) - density_pointwise(b, t, w);
  CHECK(density_difference(a, b, t, w) == doctest::Approx(direct).epsilon(1e-3));
  // Hand oracle at a wider separation.
  const FrozenSymbol c(test_field(), {-0.5});
  CHECK(density_difference(a, c, t, w) ==
        doctest::Approx(oracle_density(t, 0.3, w) - oracle_density(t, -0.5, w)).epsilon(1e-6));
}

TEST_CASE("frozen-density cache counts hits and enforces its budget") {
  FrozenDensityCache cache(test_field(), {}, 8.0, 2, 2);
  const auto g1 = cache.get(0.0, 0.5);
  const auto g2 = cache.get(0.0, 0.5);
  CHECK(g1.get() == g2.get());
  CHECK(cache.hits() == 1);
  CHECK(cache.misses() == 1);
  cache.get(1.0, 0.5);
  CHECK(cache.misses() == 2);
  CHECK_THROWS_AS(cache.get(2.0, 0.5), ResourceError);
  // q through the cache agrees with the direct route.
  FrozenDensityCache open(test_field());
  CHECK(q_eval(0.5, 0.2, 0.0, open) == doctest::Approx(q_eval(0.5, 0.2, 0.0, test_field())));
}

TEST_CASE("F-bound checks pass on a reduced grid") {
  FBoundGrid grid;
  grid.y_points = {0.0};
  grid.t_exp_min = -6;
  grid.t_exp_max = 0;
  grid.r_points = 5;
  for (const char* id : {"F1", "F2"}) {
    const BoundReport r = check_F_bounds(id, test_field(), grid);
    INFO(id << " constant " << r.fitted_constant << " ratio " << r.refinement_ratio);
    CHECK(r.passed);
    CHECK(std::isfinite(r.fitted_constant));
    CHECK(r.fitted_constant > 0.0);
  }
  const BoundReport flat = check_F_bounds("F2", stable_field(), grid);
  CHECK(flat.passed);
  CHECK(flat.fitted_constant == 0.0);
  CHECK_THROWS_AS(check_F_bounds("F9", test_field(), grid), InputError);
}

TEST_CASE("Duhamel residual") {
  CHECK(duhamel_residual(0.5, 0.2, 0.2, 0.1, test_field()).residual == 0.0);
  const DuhamelResult flat = duhamel_residual(0.5, 0.0, 0.3, 0.2, stable_field());
  CHECK(flat.lhs == 0.0);
  CHECK(flat.rhs == 0.0);
  DuhamelBudget b;
  b.s_nodes = 4;
  const DuhamelResult r = duhamel_residual(0.5, 0.0, 0.3, 0.2, test_field(), b);
  INFO("lhs " << r.lhs << " rhs " << r.rhs);
  CHECK(std::fabs(r.lhs) > 1e-4);
  CHECK(std::fabs(r.residual) <= 1e-6);
  CHECK_THROWS_AS(duhamel_residual(1.5, 0.0, 0.3, 0.2, test_field()), InputError);
}

TEST_CASE("coupling gap against a midpoint sum") {
  CHECK(density_coupling_gap(0.25, 0.0, stable_field()) == 0.0);
  const double t = 0.125;
  const double gap = density_coupling_gap(t, 0.0, test_field());
  const FrozenSymbol sx(test_field(), {0.0});
  const int n = 2000;
  double mid = 0.0;
  for (int i = 0; i < n; ++i) {
    const double w = -1.0 + (i + 0.5) * 2.0 / n;
    const FrozenSymbol sy(test_field(), {w});
    mid += std::fabs(density_difference(sy, sx, t, w, 1e-9)) * 2.0 / n;
  }
  CHECK(gap > 0.0);
  CHECK(gap == doctest::Approx(mid).epsilon(1e-4));
  CouplingGapOptions tight;
  tight.max_evaluations = 10;
  CHECK_THROWS_AS(density_coupling_gap(t, 0.0, test_field(), tight), ResourceError);
  CHECK_THROWS_AS(density_coupling_gap(0.75, 0.0, test_field()), InputError);
}

TEST_CASE("perturbation mass is the y-integral of |F|") {
  const double t = 0.5;
  const double x = 0.3;
  const PerturbationMass m = perturbation_mass(t, x, test_field(), 5.0);
  // Midpoint sum of the hand oracle would be slow; use the library's Fourier
  // route, already checked against the oracle above, on a fine uniform grid.
  const int n = 4000;
  double mid = 0.0;
  for (int i = 0; i < n; ++i) {
    const double w = -5.0 + (i + 0.5) * 10.0 / n;
    mid += std::fabs(F_fourier(t, x, x + w, test_field(), 1e-7)) * 10.0 / n;
  }
  CHECK(m.value == doctest::Approx(mid).epsilon(1e-3));
  CHECK(m.tail_estimate > 0.0);
}

TEST_CASE("resolvent mass on constant and varying fields") {
  const std::vector<double> lambdas{1.0, 4.0, 16.0};
  ResolventTruncation tr;
  tr.t_min = 1e-2;
  tr.t_max = 2.0;
  tr.y_extent = 5.0;
  tr.log_t_panel = 2.0;
  tr.nodes_per_panel = 3;
  tr.max_remainder = 1e9;
  const FBoundConstants c{2.0, 2.0, 1.0};
  const ResolventMassReport flat =
      resolvent_perturbation_mass(stable_field(), lambdas, {0.0, 1.0}, c, tr);
  for (const auto& row : flat.mass_per_x)
    for (double v : row) CHECK(v == 0.0);

  const ResolventMassReport r =
      resolvent_perturbation_mass(test_field(), lambdas, {0.0, -0.7}, c, tr);
  CHECK(r.monotone_in_lambda());
  for (const auto& row : r.mass_per_x) {
    CHECK(row[0] > 0.0);
    CHECK(row[0] > row[1]);
    CHECK(row[1] > row[2]);
  }
  for (std::size_t i = 0; i < lambdas.size(); ++i)
    CHECK(r.remainder[i] ==
          doctest::Approx(r.remainder_small_t[i] + r.remainder_large_t[i] + r.remainder_far_y[i]));
  // The t-quadrature reproduces the stored sums.
  double again = 0.0;
  for (std::size_t k = 0; k < r.t_nodes.size(); ++k)
    again += r.t_weights[k] * std::exp(-lambdas[0] * r.t_nodes[k]) * r.y_mass[0][k];
  CHECK(again == doctest::Approx(r.mass_per_x[0][0]).epsilon(1e-12));

  std::ostringstream csv;
  write_csv(csv, r);
  CHECK(csv.str().find("x,t,weight") != std::string::npos);
  CHECK(to_json(r).contains("sup_mass"));
  CHECK_THROWS_AS(resolvent_perturbation_mass(test_field(), {2.0, 1.0}, {0.0}, c, tr),
                  InputError);
}

TEST_CASE("default x samples cover a period and the saturated ends") {
  const std::vector<double> xs = default_x_samples(test_field());
  CHECK(xs.size() == 66);
  double lo = 0.0;
  double hi = 0.0;
  for (double x : xs) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  CHECK(lo <= -10.0);
  CHECK(hi >= 10.0);
}

TEST_CASE("parametrix operations are one-dimensional") {
  const CoefficientField plane = make_constant_field(2, 1.2, 1.0);
  CHECK_THROWS_AS(q_eval(0.5, 0.0, 0.0, plane), InputError);
  CHECK_THROWS_AS(F_eval(0.5, 0.0, 0.1, plane), InputError);
}
