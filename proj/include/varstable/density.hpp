#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "varstable/kernels.hpp"
#include "varstable/report.hpp"
#include "varstable/symbol.hpp"

namespace varstable {

/// Spatial grid request. Zero fields are chosen from the symbol: the spacing
/// resolves e^{-t psi} down to e^{-40}, the period keeps the folded tails
/// (aliasing) below alias_target.
struct GridSpec {
  std::size_t n = 0;         // points per axis, power of two
  double half_width = 0.0;   // grid covers [-L, L)
  double alias_target = 1e-9;
  std::size_t max_points = std::size_t{1} << 22;
  int derivatives = 4;       // spectral derivatives to keep (d = 1), at least 1
};

/// f_t^y on the periodic grid x_j = (j - N/2) dx, j < N (row-major in d = 2,
/// first coordinate slowest). Immutable after construction.
struct DensityGrid {
  std::vector<double> y;
  double t = 0.0;
  double alpha = 0.0;
  int d = 1;
  std::size_t n = 0;
  double half_width = 0.0;
  double dx = 0.0;
  double width = 0.0;              // (t lambda1 C_alpha)^{1/alpha}, the bulk's scale
  std::vector<double> values;
  std::vector<std::vector<double>> derivs;  // derivs[k-1] = f^(k), d = 1 only
  double mass = 0.0;               // dx^d sum f before clipping
  double min_value = 0.0;          // most negative sample before clipping
  double evenness_defect = 0.0;    // max |f(x) - f(-x)|
  double alias_estimate = 0.0;     // folded-tail contribution at x = 0
  double tail_mass_estimate = 0.0; // mass outside [-L, L]^d
  double spectral_floor = 0.0;     // e^{-t psi} at the Nyquist frequency
  std::uint64_t model_hash = 0;

  double x(std::size_t j) const { return (double(j) - double(n / 2)) * dx; }
  bool contains(double x) const { return x >= -half_width && x <= half_width - dx; }
  /// Cubic Hermite from f and f' (d = 1). Throws InputError outside the grid.
  double eval(double x) const;
  /// k-th derivative, k in [0, derivs.size() - 1], Hermite on f^(k), f^(k+1).
  double eval_derivative(int k, double x) const;
  /// Difference between the Hermite value and the same interpolant built on
  /// every other grid point.
  double interpolation_error(double x) const;
  /// Bilinear interpolation (d = 2).
  double eval2(double x1, double x2) const;
  double peak() const;

  void write_csv(std::ostream& os) const;
};

/// Discrete Fourier inversion of u -> e^{-t psi^y(u)}; values below zero are
/// recorded in min_value and clipped. Throws InputError for t <= 0 or a
/// non-power-of-two N, GridError when the grid cannot resolve the density
/// (alias estimate above 1e-3 of the peak, or e^{-t psi} above 1e-8 at Nyquist).
DensityGrid invert_density(const FrozenSymbol& sym, double t, const GridSpec& spec = {});

/// 1-d density with characteristic function phi (real and even) on the grid
/// spec.n, spec.half_width, both required. t, alpha and width only label the
/// result. Throws GridError when phi is above 1e-8 at the Nyquist frequency.
DensityGrid invert_spectrum_1d(const std::function<double(double)>& phi, double t, double alpha,
                               double width, const GridSpec& spec);

/// The grid invert_density would use.
GridSpec resolve_grid(const FrozenSymbol& sym, double t, const GridSpec& spec);

/// f_t^y(x) or its k-th derivative at one point by adaptive quadrature of the
/// cosine (sine) transform; d = 1.
double density_pointwise(const FrozenSymbol& sym, double t, double x, int k = 0,
                         double tol = 1e-12);

/// Binary on-disk cache of DensityGrid keyed by (model hash, y, t, N, L).
class DensityCache {
 public:
  /// Empty dir disables caching.
  explicit DensityCache(std::filesystem::path dir);
  DensityGrid get(const FrozenSymbol& sym, double t, const GridSpec& spec = {});
  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }
  /// Directory from VARSTABLE_CACHE_DIR, else "" (disabled).
  static std::filesystem::path default_dir();

 private:
  std::filesystem::path dir_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

void save_density(const std::filesystem::path& file, const DensityGrid& g);
std::optional<DensityGrid> load_density(const std::filesystem::path& file);

struct SecondDifference {
  double x = 0.0;
  double h = 0.0;
  double value = 0.0;         // f(x+h) + f(x-h) - 2 f(x)
  double interp_error = 0.0;  // from interpolation_error at the three points
};

/// Throws InputError when x +- h leaves the grid. For |h| below a tenth of
/// the density's width the value is the expansion f'' h^2 + f'''' h^4 / 12.
SecondDifference second_difference(const DensityGrid& g, double x, double h);

struct KernelMode {
  enum Kind { kSingle, kDifference } kind = kSingle;
  double alpha = 1.0;        // single: |h|^{-d-alpha}
  double alpha_tilde = 1.0;  // difference: ||h|^{-d-alpha~} - |h|^{-d-alpha}|
};

/// integral over h of |delta_f(x; h)| against the kernel, graded at h = 0,
/// at |h| = |x| and at |h| = 1; beyond the grid the tail is completed with
/// |delta| -> 2 f(x).
double frac_integral(const DensityGrid& g, double x, const KernelMode& mode);

/// Pure-stable self-similarity f_t(x) = a^{-1} f_{a^{-alpha} t}(x / a) (d = 1,
/// n = 1). The report's samples compare both sides on |x| <= 10 t^{1/alpha};
/// max_deviation is the largest absolute difference.
BoundReport scaling_check(double alpha, double t, double a, double tol = 1e-6);

/// Chapman-Kolmogorov defect max_x |(f_s * f_{t-s})(x) - f_t(x)| over |x| <= x_max.
double chapman_kolmogorov_defect(const FrozenSymbol& sym, double t, double s, double x_max = 10.0);

struct DensityBoundGrid {
  std::vector<double> y_points{-1.0, 0.0, 1.0};
  int t_exp_min = -10;                // t = 2^k
  int t_exp_max = 1;
  double x_min = 1e-3;                // x = 0 plus log-spaced |x| in [x_min, x_max]
  double x_max = 10.0;
  int x_points = 13;
  double h_min = 1e-3;                // second-difference displacements
  double h_max = 4.0;
  int h_points = 9;
  std::vector<double> alpha_tilde;    // empty: {alpha_lower, mid, alpha_upper}
  GridSpec spec;
  unsigned workers = 1;
};

/// Checks one density estimate on the grid (d = 1):
///  "L2.6-k" (k = 0, 1, 2): |f^(k)_t(x)| <= C t^{1-k/a} (t^{1/a} + |x|)^{-1-a};
///  "second-diff": |delta_f(x;h)| <= C ((t^{-2/a} h^2) ^ 1)(rho(x+h) + rho(x-h) + rho(x));
///  "L2.8": integral |delta_f(x;h)| |h|^{-1-a} dh <= C rho^{0,0}_a(t, x);
///  "L2.9": the order-difference kernel version.
BoundReport check_density_bounds(const std::string& lemma_id, const CoefficientField& field,
                                 const DensityBoundGrid& grid);

}  // namespace varstable
