#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "varstable/coeffs.hpp"

namespace varstable {

using Rng = std::mt19937_64;

/// Per-path stream: the generator seeded from (seed, path index) only, so
/// results never depend on how paths are spread over workers.
Rng path_rng(std::uint64_t seed, std::uint64_t path);

/// One increment at unit time of the isotropic alpha-stable law with symbol
/// scale |u|^alpha. d = 1: Chambers-Mallows-Stuck. d = 2: a positive
/// alpha/2-stable variable (Kanter's form) times a Gaussian vector.
std::vector<double> sample_stable_increment(double alpha, double scale, int d, Rng& rng);

struct StepStats {
  std::uint64_t proposals = 0;
  std::uint64_t accepted = 0;
  double dropped_variance = 0.0;  // sum over steps of dt * int_{|h|<=eps} |h|^2 K(h) dh
};

/// int_{|h| <= eps} |h|^2 n(x, h) |h|^{-d-alpha} dh for the frozen kernel at x.
double small_jump_variance(const CoefficientField& field, std::span<const double> x, double alpha,
                           double eps);

/// Advances x by dt under the generator frozen at x: jumps longer than eps
/// as compound Poisson, proposed from kappa2 |h|^{-d-alpha(x)} and kept with
/// probability n(x, h) / kappa2; shorter jumps dropped. Throws ModelError
/// when n(x, h) / kappa2 leaves [0, 1].
void step_frozen_euler(std::vector<double>& x, double dt, const CoefficientField& field, Rng& rng,
                       double eps, StepStats* stats = nullptr);

enum class Scheme { kFrozenEuler, kFrozenSubdivided };
std::string to_string(Scheme s);
/// "frozen_euler" or "frozen_subdivided"; InputError otherwise.
Scheme parse_scheme(const std::string& name);

struct PathSample {
  Scheme scheme = Scheme::kFrozenEuler;
  std::vector<double> x0;
  double horizon = 0.0;
  double dt = 0.0;                  // spacing of the stored states
  std::vector<double> states;       // (steps + 1) * d, row per grid time
  std::uint64_t seed = 0;
  std::uint64_t path_id = 0;
  unsigned worker_id = 0;           // path_id mod workers
  StepStats stats;

  int dim() const { return int(x0.size()); }
  std::size_t steps() const { return states.size() / x0.size() - 1; }
  const double* state(std::size_t k) const { return states.data() + k * x0.size(); }
};

struct SimOptions {
  Scheme scheme = Scheme::kFrozenEuler;
  std::vector<double> x0{0.0};
  double horizon = 1.0;
  double dt = 1e-3;
  double eps = 1e-3;
  std::size_t paths = 1000;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  std::uint64_t max_proposals_per_path = 0;  // 0 = unlimited
};

struct PathSet {
  std::vector<PathSample> paths;  // completed paths in path order
  std::size_t requested = 0;
  std::size_t incomplete = 0;     // paths stopped by the proposal budget
  bool partial() const { return incomplete > 0; }
};

/// frozen_euler steps by dt with cutoff eps; frozen_subdivided by dt/4 with
/// cutoff eps/2, stored on the same dt grid. Both keep floor(T/dt) + 1 states.
PathSet simulate_paths(const CoefficientField& field, const SimOptions& opts);

/// Scalar functionals of a path for the KS comparisons.
enum class Functional { kFirstCoordinate, kNorm, kRunningMax };
std::string to_string(Functional f);
Functional parse_functional(const std::string& name);
std::vector<double> apply_functional(const PathSet& set, Functional f);

struct KSResult {
  double statistic = 0.0;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
  double critical_value = 0.0;  // 5% level, asymptotic
  bool passed = false;
};

/// Two-sample Kolmogorov-Smirnov with critical value 1.358 sqrt((n_a+n_b)/(n_a n_b)).
KSResult marginal_ks(std::vector<double> a, std::vector<double> b);
/// One-sample version against a continuous CDF (n_b = 0, critical 1.358/sqrt(n)).
KSResult ks_against_cdf(std::vector<double> a, const std::function<double(double)>& cdf);

struct ExitRadius {
  double radius = 0.0;
  std::vector<double> exit_times;      // per path, +inf when the path stays inside
  double s_limit = 0.0;                // largest s with p(s) + 2 se(s) <= 1/2
  double p_at_c1 = 0.0;                // empirical P(sigma_r <= c1 r^alpha_upper)
  double se_at_c1 = 0.0;
};

struct ExitReport {
  std::vector<double> x0;
  double alpha_upper = 0.0;
  std::size_t paths = 0;
  std::vector<ExitRadius> radii;
  double c1 = 0.0;
  bool passed = false;  // p_at_c1 + 2 se_at_c1 <= 1/2 at every radius

  /// Empirical P(sigma_r <= s) at radius index i.
  double probability(std::size_t i, double s) const;
};

/// sigma_r = first stored time with |X_t - x0| > r. Throws InputError when
/// the paths stop before r^alpha_upper or step more coarsely than r^alpha_upper/100.
ExitReport exit_time_stats(const PathSet& set, const std::vector<double>& radii,
                           double alpha_upper);

enum class TestFunction { kOne, kCos, kGauss };
std::string to_string(TestFunction f);
TestFunction parse_test_function(const std::string& name);
double eval_test_function(TestFunction f, const double* x, int d);

struct ResolventEstimate {
  double lambda = 0.0;
  double mean = 0.0;
  double standard_error = 0.0;
  double truncation_bound = 0.0;  // e^{-lambda T} sup|f| / lambda
  std::size_t paths = 0;
};

/// Monte Carlo mean of int_0^T e^{-lambda t} f(X_t) dt, X held constant
/// between stored times so f = 1 gives (1 - e^{-lambda T}) / lambda exactly.
ResolventEstimate resolvent_functional(const PathSet& set, double lambda, TestFunction f);

struct UniquenessAttempt {
  double dt = 0.0;
  double eps = 0.0;
  std::vector<KSResult> ks;              // one per functional, scheme A vs B
  std::vector<KSResult> exact;           // against the closed form when known
  bool passed = false;
};

struct UniquenessReport {
  std::vector<Functional> functionals;
  std::vector<UniquenessAttempt> attempts;  // the protocol halves (dt, eps) up to twice
  bool passed = false;
};

/// Simulates both schemes from the same options and compares X_T through
/// each functional. Constant one-dimensional Cauchy fields are also compared
/// with the exact Cauchy CDF of the first coordinate.
UniquenessReport uniqueness_test(const CoefficientField& field, SimOptions opts,
                                 const std::vector<Functional>& functionals, int refinements = 2);

/// path_id, t, x_1..x_d per stored state.
void write_paths_csv(std::ostream& os, const PathSet& set);
nlohmann::json to_json(const KSResult& r);
nlohmann::json to_json(const ExitReport& r);
nlohmann::json to_json(const ResolventEstimate& r);
nlohmann::json to_json(const UniquenessReport& r);

}  // namespace varstable
