#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "oracles.hpp"
#include "varstable/error.hpp"
#include "varstable/simulate.hpp"

using namespace varstable;

namespace {

const CoefficientField& cauchy_field() {
  static const CoefficientField f = make_constant_field(1, 1.0, 1.0);
  return f;
}

const CoefficientField& test_field() {
  static const CoefficientField f = make_test_field(1, 1.0, 0.3, 1.0, 0.25);
  return f;
}

std::vector<double> draws(double alpha, double scale, int d, int n, std::uint64_t seed,
                          int coord = 0) {
  Rng rng = path_rng(seed, 0);
  std::vector<double> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(sample_stable_increment(alpha, scale, d, rng)[coord]);
  return out;
}

double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + std::ptrdiff_t(v.size() / 2), v.end());
  return v[v.size() / 2];
}

// Composite Simpson on [a, b] with n (even) intervals.
template <typename F>
double simpson(const F& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

}  // namespace

TEST_CASE("stable increments: symmetry, Cauchy tail and tail index") {
  const std::vector<double> sym = draws(1.5, 1.0, 1, 100000, 11);
  CHECK(std::fabs(median(sym)) <= 0.02);

  const std::vector<double> c = draws(1.0, oracle::kPi, 1, 100000, 12);
  const double beyond = double(std::count_if(c.begin(), c.end(),
                                             [](double v) { return std::fabs(v) > oracle::kPi; })) /
                        double(c.size());
  CHECK(beyond == doctest::Approx(0.5).epsilon(0.02));

  // P(|X| > K) ~ K^{-1/2}: least-squares slope over three decades.
  const std::vector<double> h = draws(0.5, 1.0, 1, 100000, 13);
  std::vector<double> lx, ly;
  for (double k : {10.0, 30.0, 100.0, 300.0, 1000.0, 3000.0}) {
    const double p = double(std::count_if(h.begin(), h.end(),
                                          [k](double v) { return std::fabs(v) > k; })) /
                     double(h.size());
    lx.push_back(std::log(k));
    ly.push_back(std::log(p));
  }
  const double mx = (lx[0] + lx[1] + lx[2] + lx[3] + lx[4] + lx[5]) / 6.0;
  const double my = (ly[0] + ly[1] + ly[2] + ly[3] + ly[4] + ly[5]) / 6.0;
  double sxy = 0.0, sxx = 0.0;
  for (int i = 0; i < 6; ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  CHECK(sxy / sxx == doctest::Approx(-0.5).epsilon(0.2));
}

TEST_CASE("stable increments match the characteristic function") {
  // E cos(u X) = exp(-scale |u|^alpha).
  for (double alpha : {0.7, 1.3, 1.8}) {
    const std::vector<double> x = draws(alpha, 2.0, 1, 100000, 21);
    const double u = 0.5;
    double m = 0.0;
    for (double v : x) m += std::cos(u * v);
    m /= double(x.size());
    INFO("alpha = " << alpha);
    CHECK(std::fabs(m - std::exp(-2.0 * std::pow(u, alpha))) <= 0.01);
  }
  // d = 2: the Cauchy case has P(|X| > r) = 1 / sqrt(1 + r^2).
  Rng rng = path_rng(22, 0);
  int outside = 0;
  double cos_mean = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto v = sample_stable_increment(1.0, 1.0, 2, rng);
    outside += std::hypot(v[0], v[1]) > 1.0;
    cos_mean += std::cos(0.6 * v[1]);
  }
  CHECK(double(outside) / n == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(0.015));
  CHECK(std::fabs(cos_mean / n - std::exp(-0.6)) <= 0.01);
  const std::vector<double> y = draws(1.5, 1.0, 2, 100000, 23, 0);
  double m = 0.0;
  for (double v : y) m += std::cos(v);
  CHECK(std::fabs(m / double(y.size()) - std::exp(-1.0)) <= 0.01);
  CHECK_THROWS_AS(draws(2.0, 1.0, 1, 1, 1), InputError);
}

TEST_CASE("small-jump variance against direct quadrature") {
  for (double x : {0.0, 0.8}) {
    const double pt[1] = {x};
    const double alpha = test_field().eval_alpha(pt);
    const TrigIntensity n = test_field().trig_intensity(pt);
    for (double eps : {1e-3, 0.5}) {
      // Substitute h = s^{1/(2-alpha)} to remove the endpoint singularity.
      const double q = 1.0 / (2.0 - alpha);
      const auto g = [&](double s) {
        const double h = std::pow(s, q);
        return 2.0 * q * (n.a0 + n.a1 * std::cos(2.0 * h));
      };
      const double ref = simpson(g, 0.0, std::pow(eps, 2.0 - alpha), 2000);
      CHECK(small_jump_variance(test_field(), pt, alpha, eps) == doctest::Approx(ref).epsilon(1e-8));
    }
  }
}

TEST_CASE("thinning reproduces the big-jump intensity") {
  const double pt[1] = {0.7};
  const double alpha = test_field().eval_alpha(pt);
  const TrigIntensity n = test_field().trig_intensity(pt);
  const double eps = 0.1;
  const double dt = 0.01;
  // int_{|h| > eps} n |h|^{-1-alpha} dh: the a0 part in closed form, the
  // oscillating part by Simpson out to a cut where the rest is below 1e-9.
  const double cut = 4000.0;
  const double osc = simpson([&](double h) { return std::cos(2.0 * h) * std::pow(h, -1.0 - alpha); },
                             eps, cut, 4000000);
  const double rate = 2.0 * n.a0 * std::pow(eps, -alpha) / alpha + 2.0 * n.a1 * osc;
  CHECK(test_field().kernel_tail(pt, alpha, eps) == doctest::Approx(rate).epsilon(1e-6));

  Rng rng = path_rng(31, 0);
  StepStats stats;
  for (int i = 0; i < 100000; ++i) {
    std::vector<double> x{0.7};
    step_frozen_euler(x, dt, test_field(), rng, eps, &stats);
  }
  const double expected = 100000 * dt * rate;
  INFO("accepted " << stats.accepted << " expected " << expected);
  CHECK(double(stats.accepted) == doctest::Approx(expected).epsilon(0.02));
  CHECK(stats.proposals >= stats.accepted);

  // n = kappa2: nothing is thinned away.
  const CoefficientField flat = make_constant_field(1, 1.2, 1.5);
  StepStats all;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> x{0.0};
    step_frozen_euler(x, dt, flat, rng, eps, &all);
  }
  CHECK(all.proposals > 0);
  CHECK(all.accepted == all.proposals);

  std::vector<double> still{0.25};
  step_frozen_euler(still, 1e-14, test_field(), rng, eps);
  CHECK(still[0] == 0.25);
}

TEST_CASE("paths are deterministic and independent of the worker count") {
  SimOptions o;
  o.paths = 40;
  o.horizon = 0.5;
  o.dt = 0.01;
  o.seed = 7;
  o.x0 = {0.3};
  const PathSet a = simulate_paths(test_field(), o);
  const PathSet b = simulate_paths(test_field(), o);
  o.workers = 3;
  const PathSet c = simulate_paths(test_field(), o);
  REQUIRE(a.paths.size() == 40);
  for (std::size_t p = 0; p < 40; ++p) {
    CHECK(a.paths[p].states == b.paths[p].states);
    CHECK(a.paths[p].states == c.paths[p].states);
  }
  CHECK(a.paths[0].states.size() == 51);
  CHECK(a.paths[0].states[0] == 0.3);
  CHECK(c.paths[4].worker_id == 1);

  o.scheme = Scheme::kFrozenSubdivided;
  const PathSet s = simulate_paths(test_field(), o);
  CHECK(s.paths[0].states.size() == 51);
  CHECK(s.paths[0].states != a.paths[0].states);

  o.paths = 0;
  CHECK_THROWS_AS(simulate_paths(test_field(), o), InputError);
  o.paths = 5;
  o.max_proposals_per_path = 1;
  const PathSet cut = simulate_paths(test_field(), o);
  CHECK(cut.partial());
  CHECK(cut.paths.size() + cut.incomplete == 5);
}

TEST_CASE("two-sample and one-sample KS") {
  const std::vector<double> a{0.1, 0.5, 0.9, 1.3};
  const KSResult same = marginal_ks(a, a);
  CHECK(same.statistic == 0.0);
  CHECK(same.passed);
  std::vector<double> lo;
  std::vector<double> hi;
  for (int i = 0; i < 10; ++i) {
    lo.push_back(i);
    hi.push_back(i + 10);
  }
  const KSResult apart = marginal_ks(lo, hi);
  CHECK(apart.statistic == 1.0);
  CHECK(apart.critical_value == doctest::Approx(1.358 * std::sqrt(20.0 / 100.0)));
  CHECK_FALSE(apart.passed);
  CHECK_THROWS_AS(marginal_ks({}, a), InputError);
  // Ties are stepped over together.
  CHECK(marginal_ks({1, 1, 2}, {1, 2, 2}).statistic == doctest::Approx(1.0 / 3.0));

  const std::vector<double> u = draws(1.0, 1.0, 1, 20000, 41);
  const KSResult exact = ks_against_cdf(u, [](double v) { return oracle::cauchy_cdf(v, 1.0); });
  CHECK(exact.passed);
  const KSResult wrong = ks_against_cdf(u, [](double v) { return oracle::cauchy_cdf(v, 2.0); });
  CHECK_FALSE(wrong.passed);
}

TEST_CASE("Cauchy paths reach the exact marginal") {
  SimOptions o;
  o.paths = 3000;
  o.horizon = 1.0;
  o.dt = 0.01;
  o.eps = 1e-3;
  o.seed = 5;
  for (Scheme s : {Scheme::kFrozenEuler, Scheme::kFrozenSubdivided}) {
    o.scheme = s;
    const PathSet set = simulate_paths(cauchy_field(), o);
    const KSResult r = ks_against_cdf(apply_functional(set, Functional::kFirstCoordinate),
                                      [](double v) { return oracle::cauchy_cdf(v, oracle::kPi); });
    INFO(to_string(s) << " statistic " << r.statistic);
    CHECK(r.passed);
  }
  const UniquenessReport u =
      uniqueness_test(cauchy_field(), o, {Functional::kFirstCoordinate, Functional::kRunningMax}, 0);
  CHECK(u.passed);
  REQUIRE(u.attempts.size() == 1);
  CHECK(u.attempts[0].exact.size() == 2);
}

TEST_CASE("exit times") {
  SimOptions o;
  o.paths = 2000;
  o.horizon = 0.25;
  o.dt = 0.002;
  o.seed = 9;
  const PathSet set = simulate_paths(cauchy_field(), o);
  const ExitReport rep = exit_time_stats(set, {0.2}, 1.0);
  CHECK(rep.probability(0, 0.0) == 0.0);
  CHECK(rep.passed);
  CHECK(rep.c1 > 0.0);
  CHECK(rep.radii[0].p_at_c1 + 2.0 * rep.radii[0].se_at_c1 <= 0.5);

  // Refinement oracle: the same law on a ten times finer grid.
  o.dt = 0.0002;
  o.seed = 10;
  const ExitReport fine = exit_time_stats(simulate_paths(cauchy_field(), o), {0.2}, 1.0);
  for (double s : {0.05, 0.1, 0.2}) {
    const double p = rep.probability(0, s);
    const double q = fine.probability(0, s);
    const double se = std::sqrt(p * (1 - p) / 2000.0 + q * (1 - q) / 2000.0);
    INFO("s = " << s << " coarse " << p << " fine " << q);
    CHECK(std::fabs(p - q) <= 2.0 * se + 1e-12);
  }

  // Far boundary: hardly anyone leaves within c1 r^alpha.
  o.dt = 0.005;
  o.horizon = 1.0;
  const PathSet slow = simulate_paths(make_constant_field(1, 1.0, 0.05), o);
  const ExitReport wide = exit_time_stats(slow, {0.9}, 1.0);
  CHECK(wide.probability(0, 0.05) <= 0.05);

  CHECK_THROWS_AS(exit_time_stats(set, {0.9}, 1.9), InputError);  // horizon too short
  CHECK_THROWS_AS(exit_time_stats(set, {0.1}, 1.5), InputError);  // steps too coarse
}

TEST_CASE("resolvent functional") {
  SimOptions o;
  o.paths = 200;
  o.horizon = 2.0;
  o.dt = 0.01;
  const PathSet set = simulate_paths(test_field(), o);
  const ResolventEstimate one = resolvent_functional(set, 2.0, TestFunction::kOne);
  CHECK(one.mean == doctest::Approx((1.0 - std::exp(-4.0)) / 2.0).epsilon(1e-12));
  CHECK(one.standard_error == 0.0);
  CHECK(one.truncation_bound == doctest::Approx(std::exp(-4.0) / 2.0));
  const ResolventEstimate fast = resolvent_functional(set, 1e6, TestFunction::kCos);
  CHECK(std::fabs(fast.mean) <= 1e-6);
  const ResolventEstimate g = resolvent_functional(set, 1.0, TestFunction::kGauss);
  CHECK(g.mean > 0.0);
  CHECK(g.standard_error > 0.0);
  CHECK_THROWS_AS(resolvent_functional(set, 0.0, TestFunction::kOne), InputError);
  CHECK_THROWS_AS(parse_test_function("sinc"), InputError);
}

TEST_CASE("path CSV and names") {
  SimOptions o;
  o.paths = 2;
  o.horizon = 0.02;
  o.dt = 0.01;
  std::ostringstream os;
  write_paths_csv(os, simulate_paths(test_field(), o));
  const std::string s = os.str();
  CHECK(s.rfind("path_id,t,x1\n0,0,0\n", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 7);
  CHECK(parse_scheme("frozen_subdivided") == Scheme::kFrozenSubdivided);
  CHECK_THROWS_AS(parse_scheme("euler"), InputError);
  CHECK(parse_functional(to_string(Functional::kNorm)) == Functional::kNorm);
}
