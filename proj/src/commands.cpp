#include "varstable/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "varstable/parallel.hpp"

namespace varstable {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Context {
  const RunConfig& cfg;
  const RunOptions& opts;
  fs::path dir;
  RunOutcome& out;

  void log(const std::string& line) const {
    if (opts.log) *opts.log << line << std::endl;
  }

  void check(const std::string& name, bool passed, const std::string& detail) {
    out.checks.push_back({name, passed, detail});
    log(std::string(passed ? "  pass  " : "  FAIL  ") + name + ": " + detail);
  }

  // Writes through a temporary so a crash never leaves a half-written file.
  template <typename Fn>
  void write(const std::string& name, Fn&& fill) {
    const fs::path file = dir / name;
    const fs::path tmp = dir / (name + ".tmp");
    {
      std::ofstream os(tmp, std::ios::binary);
      if (!os) throw InputError("cli", "cannot write '" + tmp.string() + "'");
      fill(os);
      if (!os) throw InputError("cli", "failed writing '" + tmp.string() + "'");
    }
    fs::rename(tmp, file);
    out.artifacts.push_back(file);
  }

  void write_json(const std::string& name, const json& j) {
    write(name, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

json to_json(const ValidationReport& r) {
  return {{"alpha_min", r.alpha_min},
          {"alpha_max", r.alpha_max},
          {"n_min", r.n_min},
          {"n_max", r.n_max},
          {"max_alpha_excess", r.max_alpha_excess},
          {"max_n_excess", r.max_n_excess},
          {"dini_omega", r.dini_omega},
          {"dini_beta_log", r.dini_beta_log},
          {"r0_values", r.r0_values},
          {"beta_log_sup", r.beta_log_sup},
          {"passed", r.passed},
          {"failure", r.failure},
          {"witness_x", r.witness_x},
          {"witness_y", r.witness_y}};
}

std::vector<double> point(int d, double first) {
  std::vector<double> p(std::size_t(d), 0.0);
  p[0] = first;
  return p;
}

// ---------------------------------------------------------------- commands

void run_validate(Context& c, const CoefficientField& field) {
  const ValidationReport r = validate_assumptions(field, c.cfg.validation);
  c.out.report["validation"] = to_json(r);
  c.check("assumptions", r.passed,
          r.passed ? "moduli hold on " + std::to_string(c.cfg.validation.pairs) + " pairs"
                   : r.failure);
  bool decreasing = true;
  for (std::size_t i = 1; i < r.beta_log_sup.size(); ++i)
    decreasing = decreasing && r.beta_log_sup[i] <= r.beta_log_sup[i - 1];
  c.check("beta_log_decay", decreasing, "sup_{r<=r0} beta(r)|ln r| nonincreasing in r0");
}

void run_density(Context& c, const CoefficientField& field) {
  const DensityOptions& o = c.cfg.density;
  fs::path cache_dir = c.cfg.output.cache_dir;
  if (cache_dir.empty()) cache_dir = DensityCache::default_dir();
  if (!cache_dir.empty()) fs::create_directories(cache_dir);
  DensityCache cache(cache_dir);

  // Closed form when the field is a constant Cauchy one.
  const auto* ca = std::get_if<family::ConstantAlpha>(&field.alpha_family());
  const auto* cn = std::get_if<family::ConstantN>(&field.n_family());
  const bool cauchy = field.dim() == 1 && ca && ca->value == 1.0 && cn;

  json grids = json::array();
  for (std::size_t iy = 0; iy < o.y.size(); ++iy) {
    const FrozenSymbol sym(field, point(field.dim(), o.y[iy]));
    for (std::size_t it = 0; it < o.t.size(); ++it) {
      const double t = o.t[it];
      GridSpec spec = o.grid;
      const DensityGrid g = cache.get(sym, t, spec);
      const std::string tag = "y=" + fmt(o.y[iy]) + " t=" + fmt(t);
      json j{{"y", g.y},
             {"t", t},
             {"alpha", g.alpha},
             {"n", g.n},
             {"half_width", g.half_width},
             {"dx", g.dx},
             {"mass", g.mass},
             {"min_value", g.min_value},
             {"evenness_defect", g.evenness_defect},
             {"alias_estimate", g.alias_estimate},
             {"tail_mass_estimate", g.tail_mass_estimate},
             {"spectral_floor", g.spectral_floor},
             {"peak", g.peak()}};
      c.check("mass " + tag, std::fabs(g.mass - 1.0) <= o.mass_tolerance,
              "|mass - 1| = " + fmt(std::fabs(g.mass - 1.0)));
      c.check("evenness " + tag, g.evenness_defect <= o.evenness_tolerance,
              "defect " + fmt(g.evenness_defect));
      if (cauchy) {
        const double scale = cn->value * std::numbers::pi * t;
        double err = 0.0;
        for (std::size_t k = 0; k < g.n; ++k) {
          const double x = g.x(k);
          if (std::fabs(x) > 10.0) continue;
          const double exact = scale / (std::numbers::pi * (scale * scale + x * x));
          err = std::max(err, std::fabs(g.values[k] - exact));
        }
        j["cauchy_max_error"] = err;
        c.check("closed form " + tag, err <= 1e-6, "max |f - Cauchy| on |x| <= 10: " + fmt(err));
      }
      if (o.chapman_kolmogorov && field.dim() == 1) {
        const double defect = chapman_kolmogorov_defect(sym, t, t / 2.0);
        j["chapman_kolmogorov_defect"] = defect;
        c.check("chapman-kolmogorov " + tag, defect <= o.ck_tolerance, "defect " + fmt(defect));
      }
      grids.push_back(j);
      if (c.cfg.output.csv)
        c.write("density_y" + std::to_string(iy) + "_t" + std::to_string(it) + ".csv",
                [&](std::ostream& os) { g.write_csv(os); });
    }
  }
  c.out.report["densities"] = grids;
  c.log("density cache: " + std::to_string(cache.hits()) + " hits, " +
        std::to_string(cache.misses()) + " misses");
}

std::vector<double> default_decay_grid() {
  std::vector<double> u;
  for (int k = 0; k <= 24; ++k) u.push_back(std::pow(10.0, -3.0 + 0.25 * k));
  return u;
}

void run_verify(Context& c, const CoefficientField& field) {
  const VerifyOptions& v = c.cfg.verify;
  json lemmas = json::array();
  for (const std::string& id : v.lemmas) {
    c.log("verifying " + id);
    BoundReport rep;
    if (id == "L2.1" || id == "L2.2" || id == "L2.3") {
      ConvolutionGrid g = v.convolution;
      g.workers = c.opts.workers;
      rep = check_convolution_bound(id, g);
    } else if (id.rfind("L2.6", 0) == 0 || id == "second-diff" || id == "L2.8" || id == "L2.9") {
      DensityBoundGrid g = v.density;
      g.workers = c.opts.workers;
      rep = check_density_bounds(id, field, g);
    } else if (id == "F1" || id == "F2" || id == "L3.4") {
      FBoundGrid g = v.fbound;
      g.workers = c.opts.workers;
      rep = check_F_bounds(id, field, g);
    } else if (id == "decay") {
      const FrozenSymbol sym(field, point(field.dim(), v.decay_y));
      std::vector<double> u = v.decay_u.empty() ? default_decay_grid() : v.decay_u;
      if (field.dim() == 2) {
        std::vector<double> flat;
        for (double r : u) {
          flat.push_back(r);
          flat.push_back(0.0);
          flat.push_back(r / std::sqrt(2.0));
          flat.push_back(r / std::sqrt(2.0));
        }
        u = flat;
      }
      const DecayCheck dc = decay_bound_check(sym, u);
      rep = dc.bounds;
      rep.lemma_id = "decay";
      rep.passed = dc.passed;
      rep.notes.push_back("min slack psi - lambda1 C |u|^alpha = " + fmt(dc.min_slack));
    } else {  // scaling
      rep.lemma_id = "scaling";
      rep.passed = true;
      for (double a : v.scaling_alpha) {
        BoundReport r = scaling_check(a, v.scaling_t, v.scaling_a);
        rep.max_deviation = std::max(rep.max_deviation, r.max_deviation);
        rep.notes.push_back("alpha " + fmt(a) + ": max deviation " + fmt(r.max_deviation));
        if (rep.coord_names.empty()) rep.coord_names = r.coord_names;
        rep.samples.insert(rep.samples.end(), r.samples.begin(), r.samples.end());
      }
      rep.grid_spec = "t = " + fmt(v.scaling_t) + ", a = " + fmt(v.scaling_a);
      rep.passed = rep.max_deviation <= v.scaling_tolerance;
    }
    std::string detail;
    if (id == "scaling")
      detail = "max deviation " + fmt(rep.max_deviation);
    else if (id == "decay")
      detail = rep.notes.empty() ? "" : rep.notes.back();
    else
      detail = "C = " + fmt(rep.fitted_constant) + ", refinement ratio " +
               fmt(rep.refinement_ratio);
    c.check(id, rep.passed, detail);
    lemmas.push_back(to_json(rep));
    if (c.cfg.output.csv)
      c.write("lemma_" + id + ".csv", [&](std::ostream& os) { write_csv(os, rep); });
  }
  c.out.report["lemmas"] = lemmas;
}

void run_duhamel(Context& c, const CoefficientField& field) {
  const DuhamelOptions& o = c.cfg.duhamel;
  const std::size_t n = o.points.size();
  std::vector<DuhamelResult> base(n);
  std::vector<DuhamelResult> doubled(n);
  parallel_for(n, c.opts.workers, [&](std::size_t i) {
    const DuhamelPoint& p = o.points[i];
    base[i] = duhamel_residual(p.t, p.x, p.y, p.w, field, o.budget);
    if (o.check_doubling)
      doubled[i] = duhamel_residual(p.t, p.x, p.y, p.w, field, o.budget.doubled());
  });
  json rows = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    const DuhamelPoint& p = o.points[i];
    const std::string tag =
        "t=" + fmt(p.t) + " x=" + fmt(p.x) + " y=" + fmt(p.y) + " w=" + fmt(p.w);
    json j{{"t", p.t}, {"x", p.x}, {"y", p.y}, {"w", p.w},
           {"lhs", base[i].lhs}, {"rhs", base[i].rhs}, {"residual", base[i].residual},
           {"error_estimate", base[i].error_estimate}};
    c.check("residual " + tag, std::fabs(base[i].residual) <= o.tolerance,
            "|residual| = " + fmt(std::fabs(base[i].residual)));
    if (o.check_doubling) {
      j["residual_doubled"] = doubled[i].residual;
      // Nonincreasing up to the quadratures' own error estimates.
      const double slack = std::max(base[i].error_estimate, doubled[i].error_estimate);
      c.check("doubling " + tag,
              std::fabs(doubled[i].residual) <= std::fabs(base[i].residual) + slack,
              "|residual(2B)| = " + fmt(std::fabs(doubled[i].residual)));
    }
    rows.push_back(j);
  }
  c.out.report["points"] = rows;
  c.out.report["budget"] = {{"s_nodes", o.budget.s_nodes}, {"rel_tol", o.budget.rel_tol}};
}

void run_coupling(Context& c, const CoefficientField& field) {
  const CouplingOptions& o = c.cfg.coupling;
  std::vector<double> ts;
  for (int k = o.t_exp_max; k >= o.t_exp_min; --k) ts.push_back(std::ldexp(1.0, k));
  std::vector<double> gaps(ts.size());
  parallel_for(ts.size(), c.opts.workers, [&](std::size_t i) {
    gaps[i] = density_coupling_gap(ts[i], o.x, field, o.gap);
  });
  bool nonneg = true;
  bool decreasing = true;
  std::string first_rise;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    nonneg = nonneg && gaps[i] >= 0.0;
    c.log("  gap(2^" + std::to_string(o.t_exp_max - int(i)) + ") = " + fmt(gaps[i]));
    if (i > 0 && !(gaps[i] < gaps[i - 1]) && decreasing) {
      decreasing = false;
      first_rise = "gap rises from t=" + fmt(ts[i - 1]) + " to t=" + fmt(ts[i]);
    }
  }
  const double ratio = gaps.back() / gaps.front();
  c.check("nonnegative", nonneg, "all gaps >= 0");
  c.check("decreasing", decreasing, decreasing ? "strictly decreasing as t halves" : first_rise);
  c.check("ratio", ratio < o.required_ratio,
          "gap(t_min) / gap(t_max) = " + fmt(ratio) + " vs " + fmt(o.required_ratio));
  c.out.report["x"] = o.x;
  c.out.report["t"] = ts;
  c.out.report["gap"] = gaps;
  c.out.report["ratio"] = ratio;
  if (c.cfg.output.csv)
    c.write("coupling_gap.csv", [&](std::ostream& os) {
      os.precision(17);
      os << "t,gap\n";
      for (std::size_t i = 0; i < ts.size(); ++i) os << ts[i] << ',' << gaps[i] << '\n';
    });
}

void run_resolvent(Context& c, const CoefficientField& field) {
  const ResolventOptions& o = c.cfg.resolvent;
  FBoundConstants k;
  if (o.constants) {
    k = *o.constants;
  } else if (!field.is_constant()) {
    // Fit the constants the remainder bound needs.
    FBoundGrid g = c.cfg.verify.fbound;
    g.workers = c.opts.workers;
    json fits = json::array();
    for (const char* id : {"F1", "F2", "L3.4"}) {
      c.log("fitting " + std::string(id));
      const BoundReport rep = check_F_bounds(id, field, g);
      c.check(std::string("fit ") + id, rep.passed,
              "C = " + fmt(rep.fitted_constant) + ", refinement ratio " +
                  fmt(rep.refinement_ratio));
      fits.push_back(to_json(rep));
      (std::string(id) == "F1" ? k.f1 : std::string(id) == "F2" ? k.f2 : k.large_t) =
          rep.fitted_constant;
    }
    c.out.report["fitted_bounds"] = fits;
  }
  const std::vector<double> xs =
      o.x_samples.empty() ? default_x_samples(field, o.x_count) : o.x_samples;
  c.log("resolvent mass over " + std::to_string(xs.size()) + " x samples");
  const ResolventMassReport rep =
      resolvent_perturbation_mass(field, o.lambdas, xs, k, o.truncation, c.opts.workers);
  c.out.report["resolvent"] = to_json(rep);
  c.check("lambda0", rep.lambda0_found.has_value(),
          rep.lambda0_found ? "lambda0 = " + fmt(*rep.lambda0_found)
                            : "no tested lambda reaches sampled sup <= 1/2 with remainder <= " +
                                  fmt(o.truncation.max_remainder));
  if (rep.lambda0_found) {
    std::size_t i = 0;
    while (rep.lambdas[i] != *rep.lambda0_found) ++i;
    c.check("sup_mass", rep.sup_mass[i] <= 0.5, "sampled sup " + fmt(rep.sup_mass[i]));
    c.check("remainder", rep.remainder[i] <= o.truncation.max_remainder,
            "remainder " + fmt(rep.remainder[i]));
  }
  c.check("monotone", rep.monotone_in_lambda(), "mass nonincreasing in lambda at every x");
  if (c.cfg.output.csv)
    c.write("resolvent_mass.csv", [&](std::ostream& os) { write_csv(os, rep); });
}

SimOptions sim_options(const Context& c) {
  SimOptions o = c.cfg.simulation;
  o.workers = c.opts.workers;
  return o;
}

void require_complete(const PathSet& set) {
  if (set.partial())
    throw ResourceError("simulate", std::to_string(set.incomplete) + " of " +
                                        std::to_string(set.requested) +
                                        " paths hit the proposal budget");
}

void run_simulate(Context& c, const CoefficientField& field) {
  const PathSet set = simulate_paths(field, sim_options(c));
  const SimulateExtras& e = c.cfg.simulate;
  StepStats total;
  for (const PathSample& p : set.paths) {
    total.proposals += p.stats.proposals;
    total.accepted += p.stats.accepted;
    total.dropped_variance += p.stats.dropped_variance;
  }
  std::vector<double> end = apply_functional(set, Functional::kFirstCoordinate);
  std::sort(end.begin(), end.end());
  const auto quantile = [&](double q) {
    return end.empty() ? 0.0 : end[std::size_t(q * double(end.size() - 1))];
  };
  c.out.report["paths"] = {{"requested", set.requested},
                          {"completed", set.paths.size()},
                          {"incomplete", set.incomplete}};
  c.out.report["jumps"] = {{"proposals", total.proposals},
                          {"accepted", total.accepted},
                          {"mean_dropped_variance",
                           set.paths.empty() ? 0.0
                                             : total.dropped_variance / double(set.paths.size())}};
  c.out.report["first_coordinate_at_T"] = {
      {"q05", quantile(0.05)}, {"q25", quantile(0.25)}, {"median", quantile(0.5)},
      {"q75", quantile(0.75)}, {"q95", quantile(0.95)}};
  json est = json::array();
  for (double lambda : e.lambdas)
    est.push_back(to_json(resolvent_functional(set, lambda, e.test_function)));
  c.out.report["resolvent_functional"] = est;
  if (c.cfg.output.csv && e.write_paths) {
    PathSet head;
    head.requested = set.requested;
    const std::size_t m = std::min(e.csv_paths, set.paths.size());
    head.paths.assign(set.paths.begin(), set.paths.begin() + std::ptrdiff_t(m));
    c.write("paths.csv", [&](std::ostream& os) { write_paths_csv(os, head); });
  }
  c.check("complete", !set.partial(), std::to_string(set.paths.size()) + " paths completed");
  require_complete(set);
}

void run_uniqueness(Context& c, const CoefficientField& field) {
  const UniquenessReport rep = uniqueness_test(field, sim_options(c), c.cfg.uniqueness.functionals,
                                               c.cfg.uniqueness.refinements);
  c.out.report["uniqueness"] = to_json(rep);
  for (std::size_t a = 0; a < rep.attempts.size(); ++a) {
    const UniquenessAttempt& at = rep.attempts[a];
    std::string detail = "dt " + fmt(at.dt) + ", eps " + fmt(at.eps) + ":";
    for (std::size_t i = 0; i < at.ks.size(); ++i)
      detail += " " + to_string(rep.functionals[i]) + " D=" + fmt(at.ks[i].statistic) + "/" +
                fmt(at.ks[i].critical_value);
    for (const KSResult& k : at.exact)
      detail += " exact D=" + fmt(k.statistic) + "/" + fmt(k.critical_value);
    c.log("  attempt " + std::to_string(a) + (at.passed ? " passed" : " failed") + " " + detail);
  }
  const UniquenessAttempt& last = rep.attempts.back();
  c.check("cross-scheme KS", rep.passed,
          std::to_string(rep.attempts.size()) + " attempt(s), last at dt " + fmt(last.dt) +
              ", eps " + fmt(last.eps));
}

void run_exit(Context& c, const CoefficientField& field) {
  const PathSet set = simulate_paths(field, sim_options(c));
  require_complete(set);
  const ExitReport rep = exit_time_stats(set, c.cfg.exit.radii, field.params().alpha_upper);
  c.out.report["exit"] = to_json(rep);
  for (const ExitRadius& r : rep.radii)
    c.check("r=" + fmt(r.radius), r.p_at_c1 + 2.0 * r.se_at_c1 <= 0.5,
            "P(sigma <= c1 r^alpha) = " + fmt(r.p_at_c1) + " +- " + fmt(r.se_at_c1));
  c.log("  c1 = " + fmt(rep.c1));
  if (c.cfg.output.csv)
    c.write("exit_times.csv", [&](std::ostream& os) {
      os.precision(17);
      os << "path_id";
      for (const ExitRadius& r : rep.radii) os << ",r" << r.radius;
      os << '\n';
      for (std::size_t i = 0; i < set.paths.size(); ++i) {
        os << set.paths[i].path_id;
        for (const ExitRadius& r : rep.radii) os << ',' << r.exit_times[i];
        os << '\n';
      }
    });
}

}  // namespace

std::string hash_hex(std::uint64_t h) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunOutcome run_command(const RunConfig& cfg_in, Command command, const RunOptions& opts) {
  RunOutcome out;
  RunConfig cfg = cfg_in;
  cfg.command = command;
  if (opts.out) cfg.output.dir = *opts.out;
  Context c{cfg, opts, cfg.output.dir, out};

  out.report["command"] = to_string(command);
  out.report["build_id"] = build_id();
  out.report["seed"] = cfg.seed;

  const auto started = std::chrono::steady_clock::now();
  try {
    fs::create_directories(c.dir);
    c.write("effective_config.toml", [&](std::ostream& os) { os << effective_config(cfg); });
    const CoefficientField field = cfg.model.build();
    out.report["model"] = field.describe();
    out.report["model_hash"] = hash_hex(field.hash());
    c.log(to_string(command) + " on " + field.describe());
    switch (command) {
      case Command::kValidate: run_validate(c, field); break;
      case Command::kDensity: run_density(c, field); break;
      case Command::kVerifyLemma: run_verify(c, field); break;
      case Command::kDuhamel: run_duhamel(c, field); break;
      case Command::kCouplingGap: run_coupling(c, field); break;
      case Command::kResolventMass: run_resolvent(c, field); break;
      case Command::kSimulate: run_simulate(c, field); break;
      case Command::kUniquenessTest: run_uniqueness(c, field); break;
      case Command::kExitTime: run_exit(c, field); break;
    }
    bool all = true;
    for (const CheckResult& r : out.checks) all = all && r.passed;
    out.status = all ? ExitStatus::kOk : ExitStatus::kCheckFailed;
  } catch (const Error& e) {
    out.status = e.status();
    out.error = e.module() + ": " + e.what();
    out.report["error"] = {{"module", e.module()}, {"message", e.what()}};
  } catch (const std::exception& e) {
    out.status = ExitStatus::kInternalError;
    out.error = std::string("internal: ") + e.what();
    out.report["error"] = {{"module", "internal"}, {"message", e.what()}};
  }

  json checks = json::array();
  for (const CheckResult& r : out.checks)
    checks.push_back({{"name", r.name}, {"passed", r.passed}, {"detail", r.detail}});
  out.report["checks"] = checks;
  out.report["status"] = int(out.status);
  out.report["passed"] = out.status == ExitStatus::kOk;
  c.log(to_string(command) + " finished in " +
        fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count()) +
        " s, status " + std::to_string(int(out.status)));
  if (cfg.output.json) {
    try {
      fs::create_directories(c.dir);
      c.write_json("report.json", out.report);
    } catch (const std::exception& e) {
      if (out.status == ExitStatus::kOk) {
        out.status = ExitStatus::kInputError;
        out.error = std::string("cli: ") + e.what();
      }
    }
  }
  return out;
}

}  // namespace varstable
