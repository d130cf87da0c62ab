#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "varstable/density.hpp"
#include "varstable/report.hpp"

namespace varstable {

/// Frozen densities f_t^y kept in memory, keyed by the exact (y, t). Grids are
/// widened so every |x - y| up to min_half_width stays inside with room for
/// the h-integrals. Safe to share between threads: two threads missing the
/// same key may both invert, the first insertion wins. Budgeted misses beyond
/// miss_budget (0 = unlimited) raise ResourceError.
class FrozenDensityCache {
 public:
  FrozenDensityCache(const CoefficientField& field, GridSpec spec = {},
                     double min_half_width = 8.0, std::size_t capacity = 8,
                     std::size_t miss_budget = 0);

  std::shared_ptr<const DensityGrid> get(double y, double t);
  const CoefficientField& field() const { return *field_; }
  std::size_t hits() const;
  std::size_t misses() const;

 private:
  const CoefficientField* field_;
  GridSpec spec_;
  double min_half_width_;
  std::size_t capacity_;
  std::size_t miss_budget_;
  mutable std::mutex mutex_;
  std::map<std::pair<double, double>, std::pair<std::shared_ptr<const DensityGrid>, std::size_t>>
      entries_;
  std::size_t clock_ = 0;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

/// q(t,x,y) = f_t^y(y - x) together with F(t,x,y) = (A - A^y) q(t,.,y)(x),
/// written as (1/2) integral of delta_{f_t^y}(y-x; h) (K_x(h) - K_y(h)) dh, and
/// the two integrals that dominate |F|:
///   F1 = integral |delta| ||h|^{-d-alpha(x)} - |h|^{-d-alpha(y)}| dh,
///   F2 = integral |delta| |n(x,h) - n(y,h)| |h|^{-d-alpha(y)} dh.
struct ParametrixEval {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double q = 0.0;
  double F = 0.0;
  double F1 = 0.0;
  double F2 = 0.0;
  double quadrature_error = 0.0;
};

/// Throws InputError for t <= 0 or d != 1, GridError when y - x leaves the grid.
double q_eval(double t, double x, double y, const CoefficientField& field);
double q_eval(double t, double x, double y, FrozenDensityCache& cache);

/// Second-difference form of F on a grid frozen at y (d = 1).
ParametrixEval F_eval(double t, double x, double y, const CoefficientField& field);
ParametrixEval F_eval(double t, double x, double y, FrozenDensityCache& cache);
ParametrixEval F_from_grid(const DensityGrid& g, double x, const CoefficientField& field);

/// F through its Fourier representation
///   F = (1/pi) integral_0^inf cos(u (y-x)) (psi^y(u) - psi^x(u)) e^{-t psi^y(u)} du,
/// an independent route used as an oracle and for y-integrals (d = 1).
double F_fourier(double t, double x, double y, const CoefficientField& field, double tol = 1e-9);

/// f_t^a(w) - f_t^b(w) as one cosine transform of e^{-t psi^a} - e^{-t psi^b},
/// so nearby frozen points do not lose digits to cancellation (d = 1).
double density_difference(const FrozenSymbol& a, const FrozenSymbol& b, double t, double w,
                          double tol = 1e-12);

/// integral over |w| <= extent of |F(t, x, x + w)| dw, with the power-law tail
/// beyond the extent estimated from the end values.
struct PerturbationMass {
  double value = 0.0;
  double tail_estimate = 0.0;
  double error = 0.0;
};
PerturbationMass perturbation_mass(double t, double x, const CoefficientField& field,
                                   double extent = 20.0, double rel_tol = 1e-4);

struct FBoundGrid {
  std::vector<double> y_points{-1.0, 0.0, 1.0};
  int t_exp_min = -10;              // t = 2^k
  int t_exp_max = 1;
  double r_min = 1e-2;              // x = y -+ r, log-spaced r
  double r_max = 5.0;
  int r_points = 13;
  std::vector<double> large_t{0.5, 1.0, 2.0};  // L3.4: t >= delta = 0.5
  std::vector<double> large_t_x{-1.0, 0.0, 1.0};
  double large_t_extent = 20.0;
  GridSpec spec;
  unsigned workers = 1;
};

/// "F1": F1 <= C beta(r) (1 + |ln t| + 1{r>=2} ln r) [t^{(a(y)-a(x))/a(y)} v 1] rho^{0,0}_{a(y)}
///             + C beta(r) 1{r>=2} ln r rho^{0,0}_{a(x)};
/// "F2": F2 <= C omega(r) rho^{0,0}_{a(y)}(t, r);
/// "L3.4": integral |F(t,x,.)| <= C (1 + |ln t|) t^{(d+2)/alpha_lower} for t >= 1/2.
/// Samples where both sides vanish count as ratio 0.
BoundReport check_F_bounds(const std::string& lemma_id, const CoefficientField& field,
                           const FBoundGrid& grid);

struct DuhamelBudget {
  int s_nodes = 8;          // Gauss-Legendre nodes on each half of [0, t]
  double rel_tol = 1e-6;    // z- and h-quadratures
  DuhamelBudget doubled() const { return {2 * s_nodes, rel_tol / 4.0}; }
};

struct DuhamelResult {
  double lhs = 0.0;          // f_t^y(w) - f_t^x(w)
  double rhs = 0.0;          // the time integral of the operator difference
  double residual = 0.0;     // lhs - rhs
  double error_estimate = 0.0;
};

/// Both sides of
///   f_t^y(w) - f_t^x(w) = int_0^{t/2} int f_s^y(z) (A^y - A^x) f_{t-s}^x(w - z) dz ds
///                      + int_{t/2}^t int f_{t-s}^x(z) (A^y - A^x) f_s^y(w - z) dz ds,
/// the left from one cosine transform, the right by Gauss-Legendre in s, graded
/// quadrature in z and the second-difference form of the operators on grids.
DuhamelResult duhamel_residual(double t, double x, double y, double w,
                               const CoefficientField& field, const DuhamelBudget& budget = {},
                               const GridSpec& spec = {});

struct CouplingGapOptions {
  double rel_tol = 1e-5;
  std::size_t max_evaluations = 200000;  // frozen-density evaluations
};

/// integral over |y - x| <= 1 of |f_t^y(y - x) - f_t^x(y - x)| dy. Throws
/// ResourceError when the quadrature needs more than max_evaluations.
double density_coupling_gap(double t, double x, const CoefficientField& field,
                            const CouplingGapOptions& opts = {});

struct ResolventTruncation {
  double t_min = 1e-4;
  double t_max = 20.0;
  double y_extent = 20.0;       // |y - x| <= y_extent
  double max_remainder = 0.1;
  double log_t_panel = 1.5;     // width of the Gauss-Legendre panels in ln t
  int nodes_per_panel = 3;
  double rel_tol = 1e-4;        // y-integrals
};

/// Fitted constants of the F-bounds, used to bound what the truncation drops.
struct FBoundConstants {
  double f1 = 0.0;
  double f2 = 0.0;
  double large_t = 0.0;
};

struct ResolventMassReport {
  std::vector<double> lambdas;
  std::vector<double> x_samples;
  std::vector<std::vector<double>> mass_per_x;  // [x][lambda], truncated integral
  std::vector<double> sup_mass;                  // per lambda, over the samples
  std::vector<double> remainder;                 // per lambda, sum of the three below,
                                                 // each the largest over the samples
  std::vector<double> remainder_small_t;
  std::vector<double> remainder_large_t;
  std::vector<double> remainder_far_y;
  std::optional<double> lambda0_found;  // smallest lambda with sup <= 1/2 and remainder ok
  std::vector<double> t_nodes;          // quadrature in t and the y-integrals behind it
  std::vector<double> t_weights;
  std::vector<std::vector<double>> y_mass;  // [x][t]
  ResolventTruncation truncation;
  FBoundConstants constants;
  std::uint64_t model_hash = 0;
  std::vector<std::string> notes;

  bool monotone_in_lambda() const;
};

/// 64 points of the golden-ratio sequence over one coefficient period plus two
/// points deep in the saturated ends of alpha (d = 1).
std::vector<double> default_x_samples(const CoefficientField& field, std::size_t count = 64);

/// Truncated I(x, lambda) = int_0^inf int e^{-lambda t} |F(t,x,y)| dy dt for
/// each sample and lambda, with the dropped regions bounded through the fitted
/// constants. Throws InputError for a non-increasing lambda grid, and
/// ResourceError when some lambda reaches sup <= 1/2 but every such lambda has
/// a remainder above truncation.max_remainder.
ResolventMassReport resolvent_perturbation_mass(const CoefficientField& field,
                                                const std::vector<double>& lambdas,
                                                const std::vector<double>& x_samples,
                                                const FBoundConstants& constants,
                                                const ResolventTruncation& truncation = {},
                                                unsigned workers = 1);

nlohmann::json to_json(const ResolventMassReport& r);
/// One row per (x, t) cell: x, t, weight, y-integral.
void write_csv(std::ostream& os, const ResolventMassReport& r);

}  // namespace varstable
