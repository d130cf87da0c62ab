#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "varstable/coeffs.hpp"
#include "varstable/density.hpp"
#include "varstable/kernels.hpp"
#include "varstable/parametrix.hpp"
#include "varstable/simulate.hpp"

namespace varstable {

enum class Command {
  kValidate,
  kDensity,
  kVerifyLemma,
  kDuhamel,
  kCouplingGap,
  kResolventMass,
  kSimulate,
  kUniquenessTest,
  kExitTime,
};
std::string to_string(Command c);
/// InputError listing the commands, with a suggestion for near misses.
Command parse_command(const std::string& name);
const std::vector<std::string>& command_names();

/// Family names and parameters as declared; bounds default to the tightest
/// ones the families allow.
struct ModelDecl {
  ModelParams params;
  AlphaFamily alpha = family::ConstantAlpha{1.0};
  NFamily n = family::ConstantN{1.0};

  CoefficientField build() const;
};

struct OutputOptions {
  std::filesystem::path dir = "varstable-out";
  bool json = true;
  bool csv = true;
  /// Density cache directory; empty falls back to VARSTABLE_CACHE_DIR.
  std::filesystem::path cache_dir;
};

struct DensityOptions {
  std::vector<double> t{0.25, 1.0, 4.0};
  std::vector<double> y{0.0};
  GridSpec grid;
  double mass_tolerance = 1e-4;
  double evenness_tolerance = 1e-10;
  /// Chapman-Kolmogorov defect f_s * f_{t-s} - f_t at s = t/2, when set.
  bool chapman_kolmogorov = false;
  double ck_tolerance = 1e-5;
};

struct VerifyOptions {
  std::vector<std::string> lemmas{"L2.1"};
  ConvolutionGrid convolution;
  DensityBoundGrid density;
  FBoundGrid fbound;
  std::vector<double> decay_u;  // for "decay"; empty: log-spaced 1e-3..1e3
  double decay_y = 0.0;
  std::vector<double> scaling_alpha{0.7, 1.0, 1.5};  // for "scaling"
  double scaling_t = 1.0;
  double scaling_a = 2.0;
  double scaling_tolerance = 1e-5;
};

struct DuhamelPoint {
  double t = 0.1;
  double x = 0.0;
  double y = 0.5;
  double w = 0.3;
};

struct DuhamelOptions {
  std::vector<DuhamelPoint> points{{0.1, 0.0, 0.5, 0.3}};
  DuhamelBudget budget;
  double tolerance = 1e-3;
  bool check_doubling = true;
};

struct CouplingOptions {
  int t_exp_min = -9;  // t = 2^k
  int t_exp_max = -3;
  double x = 0.0;
  CouplingGapOptions gap;
  double required_ratio = 0.25;  // gap(smallest t) < ratio * gap(largest t)
};

struct ResolventOptions {
  std::vector<double> lambdas{0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0};
  std::size_t x_count = 64;
  std::vector<double> x_samples;  // overrides x_count when nonempty
  ResolventTruncation truncation;
  /// Absent: fitted by running the F1, F2 and L3.4 checks on verify's F grid.
  std::optional<FBoundConstants> constants;
};

struct UniquenessOptions {
  std::vector<Functional> functionals{Functional::kFirstCoordinate};
  int refinements = 2;
};

struct ExitOptions {
  std::vector<double> radii{0.1, 0.2, 0.4};
};

struct SimulateExtras {
  std::vector<double> lambdas;  // resolvent functional estimates, if any
  TestFunction test_function = TestFunction::kCos;
  bool write_paths = true;
  std::size_t csv_paths = 100;  // paths exported to CSV
};

struct RunConfig {
  std::optional<Command> command;  // may come from the command line instead
  std::uint64_t seed = 1;
  ModelDecl model;
  OutputOptions output;
  SamplePlan validation;
  DensityOptions density;
  VerifyOptions verify;
  DuhamelOptions duhamel;
  CouplingOptions coupling;
  ResolventOptions resolvent;
  SimOptions simulation;
  SimulateExtras simulate;
  UniquenessOptions uniqueness;
  ExitOptions exit;
  std::filesystem::path source;
};

/// Reads and validates a TOML run file. Syntax errors carry line and column,
/// unknown keys a nearest-name suggestion, range errors the dotted key.
/// Everything surfaces as InputError.
RunConfig parse_config(const std::filesystem::path& path);
RunConfig parse_config_string(const std::string& text, const std::string& source_name = "<string>");

/// The fully defaulted configuration as TOML; parsing it gives back the
/// same RunConfig.
std::string effective_config(const RunConfig& cfg);

}  // namespace varstable
