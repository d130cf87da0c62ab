#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "varstable/error.hpp"
#include "varstable/kernels.hpp"

using namespace varstable;

TEST_CASE("rho evaluation") {
  const RhoKernel k{1.5, 0.0, 1.5, 1};
  const double t = 0.3, x = 0.8;
  CHECK(rho_eval(k, t, x) ==
        doctest::Approx(t * std::pow(std::pow(t, 1 / 1.5) + x, -2.5)).epsilon(1e-15));
  const RhoKernel cut{1.0, 0.5, 0.0, 2};
  const std::vector<double> v{0.3, 0.4};
  CHECK(rho_eval(cut, 2.0, v) == doctest::Approx(std::sqrt(0.5) * std::pow(2.5, -3.0)));
  CHECK_THROWS_AS(rho_eval(k, 0.0, x), InputError);
}

TEST_CASE("rho mass has the closed form of the scaled profile") {
  // Substituting x = t^{1/alpha} z removes t: the mass is 2/alpha in d = 1
  // and 2 pi / (alpha (1 + alpha)) in d = 2.
  for (double alpha : {0.5, 1.0, 1.7}) {
    for (double t : {1e-3, 1.0, 8.0}) {
      CHECK(rho_mass(alpha, t, 1, false) == doctest::Approx(2.0 / alpha).epsilon(1e-8));
      CHECK(rho_mass(alpha, t, 2, false) ==
            doctest::Approx(2.0 * oracle::kPi / (alpha * (1.0 + alpha))).epsilon(1e-8));
    }
  }
}

TEST_CASE("log-weighted mass at t = 1, alpha = 1") {
  // 2 integral_0^inf |ln x| (1 + x)^{-2} dx = 4 ln 2.
  CHECK(rho_mass(1.0, 1.0, 1, true) == doctest::Approx(4.0 * std::log(2.0)).epsilon(1e-8));
}

TEST_CASE("convolution at the origin by partial fractions") {
  // alpha = alpha~ = 1, w = 0: with a = t - tau, b = tau, c = b - a,
  // 2ab integral_0^inf (a+e)^-2 (b+e)^-2 de = 2ab/c^2 (1/a + 1/b - 2 ln(b/a)/c).
  const double t = 0.5, tau = 0.4;
  const double a = t - tau, b = tau, c = b - a;
  const double exact = 2.0 * a * b / (c * c) * (1.0 / a + 1.0 / b - 2.0 * std::log(b / a) / c);
  CHECK(rho_convolution(1.0, 1.0, t, tau, 0.0, false) == doctest::Approx(exact).epsilon(1e-8));
}

TEST_CASE("convolution checks pass on a small grid") {
  ConvolutionGrid g;
  g.alpha_points = 3;
  g.t_exp_min = -6;
  g.t_exp_max = -1;
  g.w_points = 4;
  for (const char* id : {"L2.1", "L2.2", "L2.3"}) {
    const BoundReport r = check_convolution_bound(id, g);
    INFO(std::string(id));
    CHECK(std::isfinite(r.fitted_constant));
    CHECK(r.passed);
  }
  CHECK_THROWS_AS(check_convolution_bound("L9.9", g), InputError);
}
