#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "varstable/commands.hpp"
#include "varstable/config.hpp"

using namespace varstable;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("varstable-test-" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

RunOutcome run(const std::string& text, Command cmd, const fs::path& out, unsigned workers = 1) {
  RunOptions o;
  o.out = out;
  o.workers = workers;
  return run_command(parse_config_string(text), cmd, o);
}

}  // namespace

TEST_CASE("density command on the Cauchy field writes reports and passes") {
  const fs::path out = scratch("density");
  const RunOutcome r = run("[density]\nt = [1.0]\n", Command::kDensity, out);
  CHECK(r.status == ExitStatus::kOk);
  REQUIRE(fs::exists(out / "report.json"));
  CHECK(fs::exists(out / "effective_config.toml"));
  CHECK(fs::exists(out / "density_y0_t0.csv"));
  const auto j = nlohmann::json::parse(slurp(out / "report.json"));
  CHECK(j["command"] == "density");
  CHECK(j["build_id"] == std::string(build_id()));
  CHECK(j["model_hash"] == hash_hex(make_constant_field(1, 1.0, 1.0).hash()));
  CHECK(j["passed"] == true);
  CHECK(j["densities"][0]["cauchy_max_error"].get<double>() <= 1e-6);
}

TEST_CASE("exit statuses distinguish input errors, failed checks and budgets") {
  // A grid size that is not a power of two, set past the config's own check.
  RunConfig cfg = parse_config_string("[density]\nt = [1.0]\n");
  cfg.density.grid.n = 1000;
  cfg.density.grid.half_width = 50.0;
  RunOptions o;
  o.out = scratch("bad-n");
  const RunOutcome bad = run_command(cfg, Command::kDensity, o);
  CHECK(bad.status == ExitStatus::kInputError);
  CHECK(bad.error.rfind("density:", 0) == 0);
  const auto j = nlohmann::json::parse(slurp(*o.out / "report.json"));
  CHECK(j["error"]["module"] == "density");
  CHECK(j["status"] == 2);

  const RunOutcome strict =
      run("[density]\nt = [1.0]\nmass_tolerance = 1e-300\n", Command::kDensity, scratch("strict"));
  CHECK(strict.status == ExitStatus::kCheckFailed);

  const RunOutcome budget = run("[simulation]\npaths = 20\nmax_proposals_per_path = 3\n",
                                Command::kSimulate, scratch("budget"));
  CHECK(budget.status == ExitStatus::kResourceError);
}

TEST_CASE("verify-lemma L2.1 on defaults") {
  const fs::path out = scratch("l21");
  const RunOutcome r = run("[verify]\nlemma = \"L2.1\"\n", Command::kVerifyLemma, out);
  CHECK(r.status == ExitStatus::kOk);
  REQUIRE(r.report["lemmas"].size() == 1);
  CHECK(r.report["lemmas"][0]["lemma_id"] == "L2.1");
  CHECK(fs::exists(out / "lemma_L2.1.csv"));
}

TEST_CASE("rerunning from the effective config reproduces the report") {
  const fs::path a = scratch("echo-a");
  const RunOutcome first =
      run("seed = 5\n[model]\nfamily = \"test\"\n[validation]\npairs = 200\n", Command::kValidate, a);
  CHECK(first.status == ExitStatus::kOk);
  const RunConfig again = parse_config(a / "effective_config.toml");
  REQUIRE(again.command.has_value());
  RunOptions o;
  o.out = a;  // the echo names the same directory
  const std::string before = slurp(a / "report.json");
  const RunOutcome second = run_command(again, *again.command, o);
  CHECK(second.status == ExitStatus::kOk);
  CHECK(slurp(a / "report.json") == before);
}

TEST_CASE("simulation reports do not depend on the worker count") {
  const std::string text =
      "[model]\nfamily = \"test\"\n[simulation]\npaths = 60\ndt = 0.01\n"
      "[simulate]\nlambdas = [2.0]\n";
  const fs::path one = scratch("w1");
  const fs::path three = scratch("w3");
  CHECK(run(text, Command::kSimulate, one, 1).status == ExitStatus::kOk);
  CHECK(run(text, Command::kSimulate, three, 3).status == ExitStatus::kOk);
  CHECK(slurp(one / "report.json") == slurp(three / "report.json"));
  CHECK(slurp(one / "paths.csv") == slurp(three / "paths.csv"));
}
