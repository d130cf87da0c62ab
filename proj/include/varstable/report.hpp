#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace varstable {

/// One sampled point of a bound check.
struct BoundSample {
  std::vector<double> coords;  // named by BoundReport::coord_names
  double lhs = 0.0;
  double rhs = 0.0;            // right side without the constant
  bool coarse = false;         // member of the coarse sub-grid
  double ratio() const;        // lhs / rhs; 0 when both vanish
};

/// Outcome of a numerical verification of one inequality LHS <= C * RHS.
/// The fitted constant is the sup of LHS/RHS over the fine grid; the
/// refinement ratio compares it with the sup over the coarse sub-grid.
struct BoundReport {
  std::string lemma_id;
  std::string grid_spec;
  std::vector<std::string> coord_names;
  std::vector<BoundSample> samples;
  double fitted_constant = 0.0;
  double coarse_constant = 0.0;
  double refinement_ratio = 1.0;
  double threshold = 1.5;
  double max_deviation = 0.0;  // identity checks: largest |lhs - rhs|
  bool passed = false;
  std::vector<std::string> notes;

  /// Computes the fitted constants, ratio and pass flag from samples.
  void finalize();
  /// Folds another report's samples (same coordinates) into this one.
  void merge(const BoundReport& other);
};

nlohmann::json to_json(const BoundReport& r, bool with_samples = false);
void write_csv(std::ostream& os, const BoundReport& r);

/// Build identifier compiled into the library.
const char* build_id();

}  // namespace varstable
