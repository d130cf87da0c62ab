// Runs the acceptance criteria at their stated tolerances and prints one
// PASS/FAIL line per criterion. Criteria listed with --expect-fail still
// print FAIL; they only stop counting against the exit status.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "varstable/commands.hpp"
#include "varstable/config.hpp"
#include "varstable/density.hpp"
#include "varstable/parametrix.hpp"

using namespace varstable;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

fs::path g_out;
unsigned g_workers = 1;

RunOutcome run(const std::string& name, const std::string& text, Command cmd,
               unsigned workers) {
  RunOptions o;
  o.out = g_out / name;
  o.workers = workers;
  return run_command(parse_config_string(text, name + ".toml"), cmd, o);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void require_ran(const RunOutcome& r) {
  if (!r.error.empty()) throw std::runtime_error(r.error);
}

const char* kTestModel = "[model]\nfamily = \"test\"\n";

// Densities produced by criteria 1, 3 and 4, checked again by criterion 2.
std::vector<DensityGrid> g_densities;

double cauchy(double scale, double x) {
  return scale / (std::numbers::pi * (scale * scale + x * x));
}

Outcome closed_form() {
  const CoefficientField f = make_constant_field(1, 1.0, 1.0);
  const FrozenSymbol sym(f, {0.0});
  double worst = 0.0;
  double at_origin = 0.0;
  for (double t : {0.25, 1.0, 4.0}) {
    const DensityGrid g = invert_density(sym, t);
    for (std::size_t k = 0; k < g.n; ++k)
      if (std::fabs(g.x(k)) <= 10.0)
        worst = std::max(worst, std::fabs(g.values[k] - cauchy(std::numbers::pi * t, g.x(k))));
    if (t == 1.0) at_origin = std::fabs(g.eval(0.0) - 1.0 / (std::numbers::pi * std::numbers::pi));
    g_densities.push_back(g);
  }
  return {worst <= 1e-6 && at_origin <= 1e-6,
          "max |f - Cauchy(pi t)| on |x|<=10 = " + fmt(worst) + ", |f_1(0) - 1/pi^2| = " +
              fmt(at_origin)};
}

Outcome chapman_kolmogorov() {
  const CoefficientField f = make_test_field(1, 1.0, 0.3, 1.0, 0.25);
  struct Triple { double y, t, s; };
  double worst = 0.0;
  for (const Triple& c : {Triple{0.0, 1.0, 0.5}, Triple{1.0, 0.5, 0.1}, Triple{-1.0, 2.0, 1.5}}) {
    const FrozenSymbol sym(f, {c.y});
    worst = std::max(worst, chapman_kolmogorov_defect(sym, c.t, c.s));
    for (double t : {c.s, c.t - c.s, c.t}) g_densities.push_back(invert_density(sym, t));
  }
  return {worst <= 1e-5, "max defect over (y,t,s) in {(0,1,.5),(1,.5,.1),(-1,2,1.5)}: " + fmt(worst)};
}

Outcome scaling() {
  double worst = 0.0;
  for (double a : {0.7, 1.0, 1.5}) {
    worst = std::max(worst, scaling_check(a, 1.0, 2.0).max_deviation);
    const CoefficientField f = make_constant_field(1, a, 1.0);
    g_densities.push_back(invert_density(FrozenSymbol(f, {0.0}), 1.0));
  }
  return {worst <= 1e-5, "max self-similarity defect, alpha in {0.7, 1, 1.5}: " + fmt(worst)};
}

Outcome normalization() {
  // Also a d = 2 density from the test family.
  const CoefficientField f2 = make_test_field(2, 1.0, 0.3, 1.0, 0.25);
  g_densities.push_back(invert_density(FrozenSymbol(f2, {0.5, 0.0}), 1.0));
  double mass = 0.0;
  double even = 0.0;
  for (const DensityGrid& g : g_densities) {
    mass = std::max(mass, std::fabs(g.mass - 1.0));
    even = std::max(even, g.evenness_defect);
  }
  return {mass <= 1e-4 && even <= 1e-10,
          std::to_string(g_densities.size()) + " densities: max |mass - 1| = " + fmt(mass) +
              ", max evenness defect = " + fmt(even)};
}

Outcome lemma_suite() {
  const RunOutcome r = run("c5-lemmas",
                           std::string(kTestModel) +
                               "[verify]\nlemma = [\"L2.1\", \"L2.2\", \"L2.3\", \"L2.6-0\", "
                               "\"L2.6-1\", \"L2.6-2\", \"second-diff\", \"L2.8\", \"L2.9\", "
                               "\"F1\", \"F2\", \"L3.4\"]\n",
                           Command::kVerifyLemma, g_workers);
  require_ran(r);
  bool ok = true;
  double worst_ratio = 0.0;
  std::string bad;
  for (const json& l : r.report["lemmas"]) {
    const double c = l["fitted_constant"].get<double>();
    const double ratio = l["refinement_ratio"].get<double>();
    worst_ratio = std::max(worst_ratio, ratio);
    if (!std::isfinite(c) || !(ratio <= 1.5)) {
      ok = false;
      bad += " " + l["lemma_id"].get<std::string>();
    }
  }
  return {ok && r.report["lemmas"].size() == 12,
          std::to_string(r.report["lemmas"].size()) + " bounds, worst refinement ratio " +
              fmt(worst_ratio) + (bad.empty() ? "" : ", failing:" + bad)};
}

Outcome duhamel() {
  const RunOutcome r = run("c6-duhamel",
                           std::string(kTestModel) +
                               "[duhamel]\npoints = [[0.5, 0.0, 0.3, 0.2], [0.1, 0.0, 0.5, 0.3], "
                               "[0.25, -1.0, -0.5, 0.1], [1.0, 0.5, 1.5, -0.4], "
                               "[0.05, 1.0, 1.2, 0.0]]\n",
                           Command::kDuhamel, g_workers);
  require_ran(r);
  bool ok = true;
  double worst = 0.0;
  double worst_doubled = 0.0;
  for (const json& p : r.report["points"]) {
    const double a = std::fabs(p["residual"].get<double>());
    const double b = std::fabs(p["residual_doubled"].get<double>());
    worst = std::max(worst, a);
    worst_doubled = std::max(worst_doubled, b);
    ok = ok && a <= 1e-3;
  }
  // The doubling check, with the quadratures' error estimates as slack, is
  // the command's own.
  for (const json& c : r.report["checks"]) ok = ok && c["passed"].get<bool>();
  return {ok, "5 configurations: max |residual| " + fmt(worst) + ", after doubling " +
                  fmt(worst_doubled)};
}

Outcome coupling() {
  const RunOutcome r = run("c7-coupling", std::string(kTestModel) + "[coupling]\nx = 0.0\n",
                           Command::kCouplingGap, g_workers);
  require_ran(r);
  const std::vector<double> gap = r.report["gap"];
  bool decreasing = true;
  for (std::size_t i = 1; i < gap.size(); ++i) decreasing = decreasing && gap[i] < gap[i - 1];
  const double ratio = gap.back() / gap.front();
  std::string list;
  for (double g : gap) list += (list.empty() ? "" : ", ") + fmt(g);
  return {decreasing && ratio < 0.25, "gap(2^-3..2^-9) = " + list + "; ratio " + fmt(ratio)};
}

Outcome resolvent() {
  const RunOutcome r = run("c8-resolvent", "[model]\nfamily = \"small_amplitude\"\n",
                           Command::kResolventMass, g_workers);
  require_ran(r);
  const json& rep = r.report["resolvent"];
  if (rep["lambda0_found"].is_null())
    return {false, "no lambda0 on the grid"};
  const double l0 = rep["lambda0_found"].get<double>();
  const std::vector<double> lambdas = rep["lambdas"];
  std::size_t i = 0;
  while (lambdas[i] != l0) ++i;
  const double sup = rep["sup_mass"][i].get<double>();
  const double rem = rep["remainder"][i].get<double>();
  const bool mono = rep["monotone_in_lambda"].get<bool>();
  return {sup <= 0.5 && rem <= 0.1 && mono,
          std::to_string(rep["x_samples"].size()) + " x samples: lambda0 = " + fmt(l0) +
              ", sampled sup " + fmt(sup) + ", remainder " + fmt(rem) +
              (mono ? ", monotone" : ", NOT monotone")};
}

const std::string kCauchySim = "[simulation]\npaths = 10000\nhorizon = 1.0\n";
const std::string kTestSim = std::string(kTestModel) + kCauchySim;
std::string g_c9_reports[2];

Outcome uniqueness() {
  std::string detail;
  bool ok = true;
  const std::string texts[2] = {kCauchySim, kTestSim};
  const char* names[2] = {"Cauchy", "test family"};
  for (int k = 0; k < 2; ++k) {
    const RunOutcome r = run("c9-uniqueness-" + std::to_string(k), texts[k],
                             Command::kUniquenessTest, 1);
    require_ran(r);
    g_c9_reports[k] = slurp(g_out / ("c9-uniqueness-" + std::to_string(k)) / "report.json");
    const json& u = r.report["uniqueness"];
    const json& last = u["attempts"].back();
    detail += std::string(k ? "; " : "") + names[k] + ": D=" +
              fmt(last["ks"][0]["statistic"].get<double>()) + "/" +
              fmt(last["ks"][0]["critical_value"].get<double>());
    for (const json& e : last["exact_cdf"])
      detail += ", exact D=" + fmt(e["statistic"].get<double>()) + "/" +
                fmt(e["critical_value"].get<double>());
    detail += " after " + std::to_string(u["attempts"].size()) + " attempt(s)";
    ok = ok && u["passed"].get<bool>();
    if (k == 0 && last["exact_cdf"].empty()) ok = false;
  }
  return {ok, detail};
}

Outcome exit_time() {
  const RunOutcome r = run("c10-exit",
                           std::string(kTestModel) +
                               "[simulation]\npaths = 10000\nhorizon = 0.5\ndt = 0.00025\n"
                               "[exit]\nradii = [0.1, 0.2, 0.4]\n",
                           Command::kExitTime, g_workers);
  require_ran(r);
  const json& e = r.report["exit"];
  bool ok = true;
  std::string detail = "c1 = " + fmt(e["c1"].get<double>()) + ";";
  for (const json& rad : e["radii"]) {
    const double p = rad["p_at_c1"].get<double>();
    const double se = rad["se_at_c1"].get<double>();
    ok = ok && p + 2.0 * se <= 0.5;
    detail += " r=" + fmt(rad["radius"].get<double>()) + ": " + fmt(p) + "+2*" + fmt(se);
  }
  return {ok && e["radii"].size() == 3, detail};
}

Outcome determinism() {
  if (g_c9_reports[0].empty() || g_c9_reports[1].empty())
    return {false, "needs criterion 9's reports"};
  const std::string texts[2] = {kCauchySim, kTestSim};
  bool ok = true;
  std::string detail = "uniqueness reports at 1, 4 and 8 workers";
  for (unsigned w : {4u, 8u})
    for (int k = 0; k < 2; ++k) {
      const std::string name = "c11-w" + std::to_string(w) + "-" + std::to_string(k);
      require_ran(run(name, texts[k], Command::kUniquenessTest, w));
      const bool same = slurp(g_out / name / "report.json") == g_c9_reports[k];
      ok = ok && same;
      if (!same) detail += "; differs at " + std::to_string(w) + " workers, case " +
                           std::to_string(k);
    }
  return {ok, ok ? detail + " are byte-identical" : detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::vector<int> expect_fail;
  std::string out = "acceptance-out";
  app.add_option("--only", only, "criteria to run (default all)")->delimiter(',');
  app.add_option("--expect-fail", expect_fail, "criteria whose failure is documented")
      ->delimiter(',');
  app.add_option("--out", out, "directory for the runs' reports");
  app.add_option("--workers", g_workers, "worker threads");
  CLI11_PARSE(app, argc, argv);
  g_out = out;
  fs::create_directories(g_out);

  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> fn;
  };
  const std::vector<Criterion> all{
      {1, "closed-form recovery", closed_form},
      {3, "Chapman-Kolmogorov", chapman_kolmogorov},
      {4, "scaling identity", scaling},
      {2, "normalization and symmetry", normalization},
      {5, "bound verification suite", lemma_suite},
      {6, "Duhamel identity", duhamel},
      {7, "coupling-gap trend", coupling},
      {8, "resolvent-perturbation smallness", resolvent},
      {9, "cross-scheme uniqueness proxy", uniqueness},
      {10, "exit-time bound", exit_time},
      {11, "determinism across workers", determinism},
  };
  const std::set<int> want(only.begin(), only.end());
  const std::set<int> xfail(expect_fail.begin(), expect_fail.end());
  std::vector<std::pair<int, std::string>> lines;
  int unexpected = 0;
  for (const Criterion& c : all) {
    if (!want.empty() && !want.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool expected = xfail.count(c.id) > 0;
    std::string tag = o.passed ? "PASS" : "FAIL";
    if (!o.passed && expected) tag += " (expected, documented)";
    if (o.passed && expected) tag += " (expected to fail)";
    if (o.passed == expected) ++unexpected;
    char head[96];
    std::snprintf(head, sizeof head, "criterion %2d %-34s %s", c.id, c.name, tag.c_str());
    std::string line = std::string(head) + "  [" + fmt(secs) + " s] " + o.detail;
    std::cout << line << std::endl;
    lines.emplace_back(c.id, line);
  }
  std::sort(lines.begin(), lines.end());
  std::cout << "\nsummary\n";
  for (const auto& l : lines) std::cout << l.second.substr(0, l.second.find("  [")) << '\n';
  return unexpected == 0 ? 0 : 1;
}
