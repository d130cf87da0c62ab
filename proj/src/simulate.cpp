#include "varstable/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "varstable/error.hpp"
#include "varstable/parallel.hpp"

namespace varstable {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kKsLevel = 1.358;  // c(0.05)

double unit_open(Rng& rng) {
  // (0, 1]: never 0, so powers and logs stay finite.
  return 1.0 - std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

double sphere_area(int d) { return d == 1 ? 2.0 : 2.0 * kPi; }

void require_dim(int d) {
  if (d != 1 && d != 2) throw InputError("simulate", "simulation supports d = 1 and d = 2");
}

}  // namespace

Rng path_rng(std::uint64_t seed, std::uint64_t path) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(path),
                    std::uint32_t(path >> 32)};
  return Rng(seq);
}

std::vector<double> sample_stable_increment(double alpha, double scale, int d, Rng& rng) {
  if (!(alpha > 0.0 && alpha < 2.0)) throw InputError("simulate", "alpha must lie in (0, 2)");
  if (!(scale > 0.0)) throw InputError("simulate", "scale must be positive");
  require_dim(d);
  const double c = std::pow(scale, 1.0 / alpha);
  if (d == 1) {
    const double v = kPi * (unit_open(rng) - 0.5);
    const double w = -std::log(unit_open(rng));
    double x;
    if (alpha == 1.0) {
      x = std::tan(v);
    } else {
      x = std::sin(alpha * v) / std::pow(std::cos(v), 1.0 / alpha) *
          std::pow(std::cos((1.0 - alpha) * v) / w, (1.0 - alpha) / alpha);
    }
    return {c * x};
  }
  // Positive beta-stable S with E e^{-l S} = e^{-l^beta}, beta = alpha / 2,
  // then sqrt(2 S) times a standard Gaussian has symbol |u|^alpha.
  const double beta = 0.5 * alpha;
  const double u = kPi * unit_open(rng);
  const double w = -std::log(unit_open(rng));
  const double a = std::pow(std::sin(beta * u), beta / (1.0 - beta)) * std::sin((1.0 - beta) * u) /
                   std::pow(std::sin(u), 1.0 / (1.0 - beta));
  const double s = std::pow(a / w, (1.0 - beta) / beta);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double r = std::sqrt(2.0 * s);
  const double g1 = gauss(rng);
  const double g2 = gauss(rng);
  return {c * r * g1, c * r * g2};
}

double small_jump_variance(const CoefficientField& field, std::span<const double> x, double alpha,
                           double eps) {
  const int d = field.dim();
  const TrigIntensity n = field.trig_intensity(x);
  // int_0^eps r^{1-alpha} (a0 + a1 m(r)) dr, with m the angular mean of
  // cos(2 h_1): cos(2r) in d = 1, J0(2r) in d = 2, both summed as series.
  double series = 0.0;
  double term = 1.0;  // coefficient of r^{2k}
  for (int k = 0; k < 40; ++k) {
    const double p = 2.0 - alpha + 2.0 * k;
    const double add = term * std::pow(eps, p) / p;
    series += add;
    if (std::fabs(add) < 1e-17 * std::fabs(series)) break;
    term *= d == 1 ? -4.0 / ((2.0 * k + 1.0) * (2.0 * k + 2.0)) : -1.0 / ((k + 1.0) * (k + 1.0));
  }
  const double p0 = 2.0 - alpha;
  return sphere_area(d) * (n.a0 * std::pow(eps, p0) / p0 + n.a1 * series);
}

void step_frozen_euler(std::vector<double>& x, double dt, const CoefficientField& field, Rng& rng,
                       double eps, StepStats* stats) {
  if (!(dt > 0.0)) throw InputError("simulate", "time step must be positive");
  if (!(eps > 0.0 && eps <= 1.0)) throw InputError("simulate", "cutoff must lie in (0, 1]");
  const int d = field.dim();
  require_dim(d);
  if (int(x.size()) != d) throw InputError("simulate", "state has the wrong dimension");
  const double alpha = field.eval_alpha(x);
  const double kappa2 = field.params().kappa2;
  const TrigIntensity n = field.trig_intensity(x);
  const double rate = dt * kappa2 * sphere_area(d) * std::pow(eps, -alpha) / alpha;
  const long events = std::poisson_distribution<long>(rate)(rng);
  double jump[2] = {0.0, 0.0};
  long kept = 0;
  for (long e = 0; e < events; ++e) {
    const double r = eps * std::pow(unit_open(rng), -1.0 / alpha);
    double h[2];
    if (d == 1) {
      h[0] = unit_open(rng) <= 0.5 ? r : -r;
      h[1] = 0.0;
    } else {
      const double theta = 2.0 * kPi * unit_open(rng);
      h[0] = r * std::cos(theta);
      h[1] = r * std::sin(theta);
    }
    const double accept = (n.a0 + n.a1 * std::cos(2.0 * h[0])) / kappa2;
    if (!(accept >= 0.0 && accept <= 1.0 + 1e-12))
      throw ModelError("simulate", "n(x, h) / kappa2 = " + std::to_string(accept) +
                                       " outside [0, 1]; kappa2 is misdeclared");
    if (unit_open(rng) <= accept) {
      jump[0] += h[0];
      jump[1] += h[1];
      ++kept;
    }
  }
  if (stats) {
    stats->proposals += std::uint64_t(events);
    stats->accepted += std::uint64_t(kept);
    stats->dropped_variance += dt * small_jump_variance(field, x, alpha, eps);
  }
  for (int i = 0; i < d; ++i) x[i] += jump[i];
}

std::string to_string(Scheme s) {
  return s == Scheme::kFrozenEuler ? "frozen_euler" : "frozen_subdivided";
}

Scheme parse_scheme(const std::string& name) {
  if (name == "frozen_euler") return Scheme::kFrozenEuler;
  if (name == "frozen_subdivided") return Scheme::kFrozenSubdivided;
  throw InputError("simulate", "unknown scheme '" + name + "'");
}

PathSet simulate_paths(const CoefficientField& field, const SimOptions& opts) {
  const int d = field.dim();
  require_dim(d);
  if (opts.paths == 0) throw InputError("simulate", "need at least one path");
  if (int(opts.x0.size()) != d) throw InputError("simulate", "x0 has the wrong dimension");
  if (!(opts.horizon > 0.0) || !(opts.dt > 0.0) || opts.dt > opts.horizon)
    throw InputError("simulate", "need 0 < dt <= T");
  if (!(opts.eps > 0.0 && opts.eps <= 1.0)) throw InputError("simulate", "cutoff must lie in (0, 1]");

  const std::size_t steps = std::size_t(std::floor(opts.horizon / opts.dt * (1.0 + 1e-12)));
  const int sub = opts.scheme == Scheme::kFrozenSubdivided ? 4 : 1;
  const double h = opts.dt / sub;
  const double eps = opts.scheme == Scheme::kFrozenSubdivided ? 0.5 * opts.eps : opts.eps;
  const unsigned workers = std::max(1u, opts.workers);

  std::vector<PathSample> out(opts.paths);
  std::vector<char> done(opts.paths, 0);
  // Worker w takes paths w, w + W, ...; each path has its own stream.
  parallel_for(workers, workers, [&](std::size_t w) {
    for (std::size_t p = w; p < opts.paths; p += workers) {
      PathSample& ps = out[p];
      ps.scheme = opts.scheme;
      ps.x0 = opts.x0;
      ps.horizon = opts.horizon;
      ps.dt = opts.dt;
      ps.seed = opts.seed;
      ps.path_id = p;
      ps.worker_id = unsigned(w);
      ps.states.resize((steps + 1) * std::size_t(d));
      std::copy(opts.x0.begin(), opts.x0.end(), ps.states.begin());
      Rng rng = path_rng(opts.seed, p);
      std::vector<double> x = opts.x0;
      bool ok = true;
      for (std::size_t k = 1; k <= steps && ok; ++k) {
        for (int s = 0; s < sub; ++s) step_frozen_euler(x, h, field, rng, eps, &ps.stats);
        std::copy(x.begin(), x.end(), ps.states.begin() + std::ptrdiff_t(k * std::size_t(d)));
        if (opts.max_proposals_per_path && ps.stats.proposals > opts.max_proposals_per_path)
          ok = false;
      }
      done[p] = ok;
    }
  });

  PathSet set;
  set.requested = opts.paths;
  for (std::size_t p = 0; p < opts.paths; ++p) {
    if (done[p])
      set.paths.push_back(std::move(out[p]));
    else
      ++set.incomplete;
  }
  return set;
}

std::string to_string(Functional f) {
  switch (f) {
    case Functional::kFirstCoordinate: return "first_coordinate";
    case Functional::kNorm: return "norm";
    default: return "running_max";
  }
}

Functional parse_functional(const std::string& name) {
  if (name == "first_coordinate") return Functional::kFirstCoordinate;
  if (name == "norm") return Functional::kNorm;
  if (name == "running_max") return Functional::kRunningMax;
  throw InputError("simulate", "unknown functional '" + name + "'");
}

std::vector<double> apply_functional(const PathSet& set, Functional f) {
  std::vector<double> out;
  out.reserve(set.paths.size());
  for (const PathSample& p : set.paths) {
    const int d = p.dim();
    const double* end = p.state(p.steps());
    switch (f) {
      case Functional::kFirstCoordinate:
        out.push_back(end[0]);
        break;
      case Functional::kNorm: {
        double s = 0.0;
        for (int i = 0; i < d; ++i) s += end[i] * end[i];
        out.push_back(std::sqrt(s));
        break;
      }
      case Functional::kRunningMax: {
        double m = 0.0;
        for (std::size_t k = 0; k <= p.steps(); ++k) {
          double s = 0.0;
          for (int i = 0; i < d; ++i) s += std::pow(p.state(k)[i] - p.x0[i], 2);
          m = std::max(m, std::sqrt(s));
        }
        out.push_back(m);
        break;
      }
    }
  }
  return out;
}

KSResult marginal_ks(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InputError("simulate", "KS test needs two nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = double(a.size());
  const double nb = double(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double dmax = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    dmax = std::max(dmax, std::fabs(double(i) / na - double(j) / nb));
  }
  KSResult r;
  r.statistic = dmax;
  r.n_a = a.size();
  r.n_b = b.size();
  r.critical_value = kKsLevel * std::sqrt((na + nb) / (na * nb));
  r.passed = r.statistic <= r.critical_value;
  return r;
}

KSResult ks_against_cdf(std::vector<double> a, const std::function<double(double)>& cdf) {
  if (a.empty()) throw InputError("simulate", "KS test needs a nonempty sample");
  std::sort(a.begin(), a.end());
  const double n = double(a.size());
  double dmax = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double f = cdf(a[i]);
    dmax = std::max({dmax, double(i + 1) / n - f, f - double(i) / n});
  }
  KSResult r;
  r.statistic = dmax;
  r.n_a = a.size();
  r.critical_value = kKsLevel / std::sqrt(n);
  r.passed = r.statistic <= r.critical_value;
  return r;
}

double ExitReport::probability(std::size_t i, double s) const {
  const auto& times = radii.at(i).exit_times;
  if (times.empty()) return 0.0;
  const auto hit = std::count_if(times.begin(), times.end(), [s](double t) { return t <= s; });
  return double(hit) / double(times.size());
}

ExitReport exit_time_stats(const PathSet& set, const std::vector<double>& radii,
                           double alpha_upper) {
  if (set.paths.empty()) throw InputError("simulate", "exit statistics need paths");
  if (radii.empty()) throw InputError("simulate", "exit statistics need radii");
  if (!(alpha_upper > 0.0 && alpha_upper < 2.0))
    throw InputError("simulate", "alpha_upper must lie in (0, 2)");
  const PathSample& first = set.paths.front();
  const double dt = first.dt;
  const double horizon = double(first.steps()) * dt;
  for (double r : radii) {
    if (!(r > 0.0 && r < 1.0)) throw InputError("simulate", "exit radii must lie in (0, 1)");
    const double scale = std::pow(r, alpha_upper);
    if (horizon < scale)
      throw InputError("simulate", "paths stop before r^alpha_upper; lengthen the horizon");
    if (dt > scale / 100.0 * (1.0 + 1e-12))
      throw InputError("simulate", "steps coarser than r^alpha_upper / 100; refine dt");
  }

  ExitReport rep;
  rep.x0 = first.x0;
  rep.alpha_upper = alpha_upper;
  rep.paths = set.paths.size();
  const double n = double(rep.paths);
  const double inf = std::numeric_limits<double>::infinity();
  rep.c1 = inf;
  for (double r : radii) {
    ExitRadius er;
    er.radius = r;
    for (const PathSample& p : set.paths) {
      double sigma = inf;
      for (std::size_t k = 1; k <= p.steps(); ++k) {
        double s = 0.0;
        for (int i = 0; i < p.dim(); ++i) s += std::pow(p.state(k)[i] - p.x0[i], 2);
        if (std::sqrt(s) > r) {
          sigma = double(k) * dt;
          break;
        }
      }
      er.exit_times.push_back(sigma);
    }
    // p(s) is a step function jumping at the sorted exit times; s_limit sits
    // half a step below the first jump that breaks p + 2 se <= 1/2.
    std::vector<double> sorted = er.exit_times;
    std::sort(sorted.begin(), sorted.end());
    er.s_limit = horizon;
    for (std::size_t k = 0; k < sorted.size() && std::isfinite(sorted[k]); ++k) {
      std::size_t m = k;
      while (m + 1 < sorted.size() && sorted[m + 1] == sorted[k]) ++m;
      const double p = double(m + 1) / n;
      if (p + 2.0 * std::sqrt(p * (1.0 - p) / n) > 0.5) {
        er.s_limit = sorted[k] - 0.5 * dt;
        break;
      }
      k = m;
    }
    rep.c1 = std::min(rep.c1, er.s_limit / std::pow(r, alpha_upper));
    rep.radii.push_back(std::move(er));
  }
  rep.passed = true;
  for (std::size_t i = 0; i < rep.radii.size(); ++i) {
    ExitRadius& er = rep.radii[i];
    const double p = rep.probability(i, rep.c1 * std::pow(er.radius, alpha_upper));
    er.p_at_c1 = p;
    er.se_at_c1 = std::sqrt(p * (1.0 - p) / n);
    if (p + 2.0 * er.se_at_c1 > 0.5) rep.passed = false;
  }
  return rep;
}

std::string to_string(TestFunction f) {
  switch (f) {
    case TestFunction::kOne: return "one";
    case TestFunction::kCos: return "cos";
    default: return "gauss";
  }
}

TestFunction parse_test_function(const std::string& name) {
  if (name == "one") return TestFunction::kOne;
  if (name == "cos") return TestFunction::kCos;
  if (name == "gauss") return TestFunction::kGauss;
  throw InputError("simulate", "unknown test function '" + name + "'");
}

double eval_test_function(TestFunction f, const double* x, int d) {
  switch (f) {
    case TestFunction::kOne: return 1.0;
    case TestFunction::kCos: return std::cos(x[0]);
    default: {
      double s = 0.0;
      for (int i = 0; i < d; ++i) s += x[i] * x[i];
      return std::exp(-s);
    }
  }
}

ResolventEstimate resolvent_functional(const PathSet& set, double lambda, TestFunction f) {
  if (!(lambda > 0.0)) throw InputError("simulate", "lambda must be positive");
  if (set.paths.empty()) throw InputError("simulate", "resolvent estimate needs paths");
  std::vector<double> values;
  values.reserve(set.paths.size());
  double horizon = 0.0;
  for (const PathSample& p : set.paths) {
    double v = 0.0;
    for (std::size_t k = 0; k < p.steps(); ++k) {
      const double a = std::exp(-lambda * double(k) * p.dt);
      const double b = std::exp(-lambda * double(k + 1) * p.dt);
      v += eval_test_function(f, p.state(k), p.dim()) * (a - b) / lambda;
    }
    values.push_back(v);
    horizon = double(p.steps()) * p.dt;
  }
  // Deviations from the first value: identical values give exactly zero spread.
  const double base = values.front();
  double mean = 0.0;
  for (double v : values) mean += v - base;
  mean /= double(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - base - mean) * (v - base - mean);
  ResolventEstimate r;
  r.lambda = lambda;
  r.mean = base + mean;
  r.paths = values.size();
  r.standard_error =
      values.size() > 1 ? std::sqrt(ss / double(values.size() - 1) / double(values.size())) : 0.0;
  r.truncation_bound = std::exp(-lambda * horizon) / lambda;
  return r;
}

UniquenessReport uniqueness_test(const CoefficientField& field, SimOptions opts,
                                 const std::vector<Functional>& functionals, int refinements) {
  if (functionals.empty()) throw InputError("simulate", "need at least one functional");
  if (refinements < 0) throw InputError("simulate", "refinements must be nonnegative");
  UniquenessReport rep;
  rep.functionals = functionals;
  const bool cauchy = field.is_constant() && field.dim() == 1 &&
                      field.eval_alpha(opts.x0) == 1.0;
  for (int attempt = 0; attempt <= refinements; ++attempt) {
    UniquenessAttempt at;
    at.dt = opts.dt;
    at.eps = opts.eps;
    SimOptions a = opts;
    a.scheme = Scheme::kFrozenEuler;
    SimOptions b = opts;
    b.scheme = Scheme::kFrozenSubdivided;
    // Independent streams for the two samples.
    b.seed = opts.seed ^ 0x9e3779b97f4a7c15ULL;
    const PathSet pa = simulate_paths(field, a);
    const PathSet pb = simulate_paths(field, b);
    if (pa.partial() || pb.partial())
      throw ResourceError("simulate", "proposal budget exhausted during the uniqueness test");
    at.passed = true;
    for (Functional f : functionals) {
      at.ks.push_back(marginal_ks(apply_functional(pa, f), apply_functional(pb, f)));
      at.passed = at.passed && at.ks.back().passed;
    }
    if (cauchy) {
      // Symbol n pi |u|, so X_T - x0 is Cauchy with scale n pi T.
      const double h[1] = {1.0};
      const double scale = field.eval_n(opts.x0, h) * kPi * double(pa.paths.front().steps()) * opts.dt;
      const double x0 = opts.x0[0];
      const auto cdf = [&](double v) { return 0.5 + std::atan((v - x0) / scale) / kPi; };
      for (const PathSet* ps : {&pa, &pb}) {
        at.exact.push_back(ks_against_cdf(apply_functional(*ps, Functional::kFirstCoordinate), cdf));
        at.passed = at.passed && at.exact.back().passed;
      }
    }
    rep.attempts.push_back(at);
    if (at.passed) {
      rep.passed = true;
      break;
    }
    opts.dt *= 0.5;
    opts.eps *= 0.5;
  }
  return rep;
}

void write_paths_csv(std::ostream& os, const PathSet& set) {
  const int d = set.paths.empty() ? 1 : set.paths.front().dim();
  os << "path_id,t";
  for (int i = 1; i <= d; ++i) os << ",x" << i;
  os << '\n';
  for (const PathSample& p : set.paths)
    for (std::size_t k = 0; k <= p.steps(); ++k) {
      os << p.path_id << ',' << double(k) * p.dt;
      for (int i = 0; i < d; ++i) os << ',' << p.state(k)[i];
      os << '\n';
    }
}

nlohmann::json to_json(const KSResult& r) {
  return {{"statistic", r.statistic},
          {"n_a", r.n_a},
          {"n_b", r.n_b},
          {"critical_value", r.critical_value},
          {"passed", r.passed}};
}

nlohmann::json to_json(const ExitReport& r) {
  nlohmann::json radii = nlohmann::json::array();
  for (const ExitRadius& er : r.radii) {
    std::size_t inside = 0;
    for (double t : er.exit_times) inside += std::isinf(t) ? 1 : 0;
    radii.push_back({{"radius", er.radius},
                     {"s_limit", er.s_limit},
                     {"p_at_c1", er.p_at_c1},
                     {"se_at_c1", er.se_at_c1},
                     {"paths_not_exited", inside}});
  }
  return {{"x0", r.x0},   {"alpha_upper", r.alpha_upper}, {"paths", r.paths},
          {"c1", r.c1},   {"radii", radii},               {"passed", r.passed}};
}

nlohmann::json to_json(const ResolventEstimate& r) {
  return {{"lambda", r.lambda},
          {"mean", r.mean},
          {"standard_error", r.standard_error},
          {"truncation_bound", r.truncation_bound},
          {"paths", r.paths}};
}

nlohmann::json to_json(const UniquenessReport& r) {
  nlohmann::json names = nlohmann::json::array();
  for (Functional f : r.functionals) names.push_back(to_string(f));
  nlohmann::json attempts = nlohmann::json::array();
  for (const UniquenessAttempt& a : r.attempts) {
    nlohmann::json ks = nlohmann::json::array();
    for (const KSResult& k : a.ks) ks.push_back(to_json(k));
    nlohmann::json exact = nlohmann::json::array();
    for (const KSResult& k : a.exact) exact.push_back(to_json(k));
    attempts.push_back(
        {{"dt", a.dt}, {"eps", a.eps}, {"ks", ks}, {"exact_cdf", exact}, {"passed", a.passed}});
  }
  return {{"functionals", names}, {"attempts", attempts}, {"passed", r.passed}};
}

}  // namespace varstable
