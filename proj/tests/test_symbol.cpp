#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "varstable/error.hpp"
#include "varstable/symbol.hpp"

using namespace varstable;

TEST_CASE("stable constant matches the Gamma-function form") {
  for (double alpha : {0.3, 0.7, 1.0, 1.5, 1.9}) {
    INFO(alpha);
    CHECK(stable_constant(alpha, 1) ==
          doctest::Approx(oracle::stable_constant(alpha, 1)).epsilon(1e-9));
    CHECK(stable_constant(alpha, 2) ==
          doctest::Approx(oracle::stable_constant(alpha, 2)).epsilon(1e-9));
  }
  CHECK(stable_constant(1.0, 1) == doctest::Approx(oracle::kPi).epsilon(1e-10));
  CHECK_THROWS_AS(stable_constant(2.0, 1), InputError);
}

TEST_CASE("Cauchy symbol") {
  const CoefficientField f = make_constant_field(1, 1.0, 1.0);
  const FrozenSymbol sym(f, {0.0});
  for (double u : {1e-3, 0.5, 3.0, 40.0}) {
    CHECK(char_exponent(sym, std::vector{u}) == doctest::Approx(oracle::kPi * u).epsilon(1e-8));
    CHECK(sym.exponent(u) == doctest::Approx(oracle::kPi * u).epsilon(1e-10));
  }
  CHECK(char_exponent(sym, std::vector{0.0}) == 0.0);
}

TEST_CASE("quadrature symbol agrees with the cosine-series form") {
  const CoefficientField f = make_test_field(1, 1.0, 0.3, 1.0, 0.25);
  for (double y : {-1.0, 0.4, 2.0}) {
    const FrozenSymbol sym(f, {y});
    for (double u : {0.01, 0.7, 2.0, 5.5, 30.0}) {
      INFO(y << ' ' << u);
      const double q = char_exponent(sym, std::vector{u});
      CHECK(q == doctest::Approx(sym.exponent(u)).epsilon(1e-8));
      CHECK(char_exponent(sym, std::vector{-u}) == doctest::Approx(q).epsilon(1e-12));
    }
  }
}

TEST_CASE("two-dimensional symbol") {
  const CoefficientField iso = make_constant_field(2, 1.0, 1.0);
  const FrozenSymbol s_iso(iso, {0.0, 0.0});
  const std::vector<double> u{0.6, -0.8};
  CHECK(char_exponent(s_iso, u) == doctest::Approx(2.0 * oracle::kPi).epsilon(1e-7));

  const CoefficientField f = make_test_field(2, 1.0, 0.3, 1.0, 0.25);
  const FrozenSymbol sym(f, {0.5, 0.0});
  for (auto v : {std::vector{1.0, 0.0}, std::vector{0.3, 1.2}}) {
    CHECK(char_exponent(sym, v) == doctest::Approx(sym.exponent(v)).epsilon(1e-7));
  }
}

TEST_CASE("symbol lower bound") {
  const CoefficientField f = make_test_field(1, 1.0, 0.3, 1.0, 0.25);
  const FrozenSymbol sym(f, {0.8});
  std::vector<double> grid;
  for (int k = -6; k <= 6; ++k) grid.push_back(std::ldexp(1.0, k));
  const DecayCheck c = decay_bound_check(sym, grid);
  CHECK(c.passed);
  CHECK(c.min_slack >= 0.0);
  CHECK(c.bounds.samples.size() == grid.size());
  CHECK_THROWS_AS(decay_bound_check(sym, std::vector<double>{}), InputError);
}
