#include <doctest.h>

#include <string>

#include "varstable/config.hpp"
#include "varstable/error.hpp"

using namespace varstable;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config_string(text, "run.toml");
  } catch (const InputError& e) {
    return e.what();
  }
  return "";
}

bool contains(const std::string& s, const std::string& part) {
  return s.find(part) != std::string::npos;
}

}  // namespace

TEST_CASE("minimal config fills the documented defaults") {
  const RunConfig c = parse_config_string("command = \"density\"\n[model]\nfamily = \"constant\"\n");
  REQUIRE(c.command.has_value());
  CHECK(*c.command == Command::kDensity);
  CHECK(c.seed == 1);
  CHECK(c.model.params.d == 1);
  CHECK(c.model.params.alpha_lower == 1.0);
  CHECK(c.model.params.alpha_upper == 1.0);
  CHECK(c.model.params.kappa1 == 1.0);
  CHECK(c.model.params.kappa2 == 1.0);
  CHECK(std::get<family::ConstantAlpha>(c.model.alpha).value == 1.0);
  CHECK(std::get<family::ConstantN>(c.model.n).value == 1.0);
  CHECK(c.density.t == std::vector<double>{0.25, 1.0, 4.0});
  CHECK(c.density.grid.n == 0);
  CHECK(c.output.dir == "varstable-out");
  CHECK(c.simulation.dt == 1e-3);
  CHECK(c.simulation.eps == 1e-3);
  CHECK(c.simulation.seed == 1);
  CHECK(c.exit.radii == std::vector<double>{0.1, 0.2, 0.4});
  CHECK_FALSE(c.resolvent.constants.has_value());
  CHECK(c.resolvent.truncation.max_remainder == 0.1);
}

TEST_CASE("presets set the test families and tight bounds") {
  const RunConfig t = parse_config_string("[model]\nfamily = \"test\"\n");
  const auto& a = std::get<family::TanhAlpha>(t.model.alpha);
  CHECK(a.a0 == 1.0);
  CHECK(a.a1 == 0.3);
  CHECK(a.c == 1.0);
  CHECK(std::get<family::SinCosN>(t.model.n).eps == 0.25);
  CHECK(t.model.params.alpha_upper == 1.3);
  CHECK(t.model.params.kappa2 == 1.25);

  const RunConfig s = parse_config_string("[model]\nfamily = \"small_amplitude\"\n");
  CHECK(std::get<family::TanhAlpha>(s.model.alpha).a1 == 0.1);
  CHECK(std::get<family::SinCosN>(s.model.n).eps == 0.1);

  // Explicit parameters override the preset's.
  const RunConfig o =
      parse_config_string("[model]\nfamily = \"test\"\n[model.alpha]\nc = 2.5\n");
  CHECK(std::get<family::TanhAlpha>(o.model.alpha).c == 2.5);
  CHECK(std::get<family::TanhAlpha>(o.model.alpha).a1 == 0.3);
}

TEST_CASE("inverted alpha bounds name the bounds") {
  const std::string e = error_of(
      "[model]\nalpha_lower = 1.5\nalpha_upper = 1.2\n[model.alpha]\nfamily = \"constant\"\n"
      "value = 1.3\n");
  CHECK(contains(e, "alpha bounds"));
  CHECK(contains(e, "model.alpha_lower"));
  CHECK(contains(e, "run.toml:2:"));
}

TEST_CASE("bounds must contain the family") {
  CHECK(contains(error_of("[model]\nalpha_upper = 1.1\nfamily = \"test\"\n"),
                 "do not contain the family's range"));
  CHECK(contains(error_of("[model]\nkappa2 = 1.1\nfamily = \"test\"\n"), "kappa bounds"));
}

TEST_CASE("unknown keys are rejected with a suggestion") {
  const std::string e = error_of("[model]\nalpha_uper = 1.2\n");
  CHECK(contains(e, "unknown key 'model.alpha_uper'"));
  CHECK(contains(e, "did you mean 'model.alpha_upper'"));
  CHECK(contains(e, "run.toml:2:"));
  CHECK(contains(error_of("sed = 3\n"), "did you mean 'seed'"));
  CHECK(contains(error_of("[simulaton]\npaths = 3\n"), "did you mean 'simulation'"));
  // Keys of another family are unknown for this one.
  CHECK(contains(error_of("[model.alpha]\nfamily = \"constant\"\na1 = 0.2\n"),
                 "for alpha family 'constant'"));
  CHECK(contains(error_of("[simulation]\nscheme = \"frozen_eular\"\n"),
                 "did you mean 'frozen_euler'"));
  CHECK(contains(error_of("command = \"denisty\"\n"), "did you mean 'density'"));
}

TEST_CASE("syntax errors carry line and column") {
  const std::string e = error_of("seed = 1\n[density\nn = 4\n");
  CHECK(contains(e, "run.toml:2:"));
}

TEST_CASE("range and type errors name the key") {
  CHECK(contains(error_of("[density]\nn = 1000\n"), "'density.n' must be 0 (automatic) or a power of two"));
  CHECK(contains(error_of("[density]\nt = [1.0, -2.0]\n"), "'density.t'"));
  CHECK(contains(error_of("[simulation]\npaths = \"many\"\n"), "'simulation.paths' must be an integer"));
  CHECK(contains(error_of("[simulation]\nx0 = [0.0, 1.0]\n"), "model.d = 1"));
  CHECK(contains(error_of("[resolvent]\nlambdas = [2.0, 1.0]\n"), "strictly increasing"));
  CHECK(contains(error_of("[resolvent.constants]\nf1 = 1.0\n"), "'resolvent.constants.f2' is required"));
  CHECK(contains(error_of("[model]\nd = 3\n"), "'model.d'"));
  CHECK(contains(error_of("[verify]\nlemma = \"L2.7\"\n"), "'verify.lemma'"));
  CHECK_THROWS_AS(parse_config("/nonexistent/run.toml"), InputError);
}

TEST_CASE("the effective config reads back to itself") {
  const std::string text =
      "command = \"resolvent-mass\"\nseed = 77\n[model]\nfamily = \"small_amplitude\"\n"
      "[resolvent]\nlambdas = [0.5, 1.0, 3.0]\nx_samples = [0.1, -0.7]\n"
      "[resolvent.constants]\nf1 = 1.444\nf2 = 1.157\nlarge_t = 0.3447\n"
      "[verify]\nlemma = \"all\"\n[duhamel]\npoints = [[0.5, 0.0, 0.3, 0.2], [0.1, 1.0, 1.5, -0.3]]\n"
      "[simulation]\nx0 = [0.25]\ndt = 0.002\n[uniqueness]\nfunctionals = [\"norm\", \"running_max\"]\n";
  const RunConfig a = parse_config_string(text);
  CHECK(a.verify.lemmas.size() == 14);
  CHECK(a.duhamel.points.size() == 2);
  CHECK(a.simulation.seed == 77);
  const std::string echo = effective_config(a);
  const RunConfig b = parse_config_string(echo, "echo.toml");
  CHECK(effective_config(b) == echo);
  CHECK(b.resolvent.constants->f2 == 1.157);
  CHECK(b.simulation.dt == 0.002);
  CHECK(b.model.params.alpha_upper == a.model.params.alpha_upper);
  CHECK(b.uniqueness.functionals == a.uniqueness.functionals);
  // Every double survives the round trip bit for bit.
  const RunConfig c = parse_config_string("[model.alpha]\nfamily = \"tanh\"\na0 = 0.1\na1 = 0.7\nc = 0.3\n");
  const RunConfig d = parse_config_string(effective_config(c));
  CHECK(std::get<family::TanhAlpha>(d.model.alpha).a1 == 0.7);
  CHECK(d.model.params.alpha_upper == c.model.params.alpha_upper);
}
