#include "varstable/report.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace varstable {

namespace {
// LHS values below this, against a vanishing RHS, are quadrature noise.
constexpr double kNoiseFloor = 1e-12;
}  // namespace

double BoundSample::ratio() const {
  if (rhs > 0.0) return lhs / rhs;
  if (std::fabs(lhs) <= kNoiseFloor) return 0.0;
  return std::numeric_limits<double>::infinity();
}

void BoundReport::finalize() {
  fitted_constant = 0.0;
  coarse_constant = 0.0;
  for (const BoundSample& s : samples) {
    const double r = s.ratio();
    fitted_constant = std::max(fitted_constant, r);
    if (s.coarse) coarse_constant = std::max(coarse_constant, r);
  }
  if (fitted_constant == 0.0 && coarse_constant == 0.0) {
    refinement_ratio = 1.0;
  } else if (coarse_constant == 0.0) {
    refinement_ratio = std::numeric_limits<double>::infinity();
  } else {
    refinement_ratio = fitted_constant / coarse_constant;
  }
  passed = std::isfinite(fitted_constant) && std::isfinite(refinement_ratio) &&
           refinement_ratio <= threshold && refinement_ratio >= 1.0 / threshold;
}

void BoundReport::merge(const BoundReport& other) {
  samples.insert(samples.end(), other.samples.begin(), other.samples.end());
  notes.insert(notes.end(), other.notes.begin(), other.notes.end());
}

nlohmann::json to_json(const BoundReport& r, bool with_samples) {
  const auto num = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
  };
  nlohmann::json j{
      {"lemma_id", r.lemma_id},
      {"grid_spec", r.grid_spec},
      {"fitted_constant", num(r.fitted_constant)},
      {"coarse_constant", num(r.coarse_constant)},
      {"refinement_ratio", num(r.refinement_ratio)},
      {"threshold", r.threshold},
      {"max_deviation", num(r.max_deviation)},
      {"samples", r.samples.size()},
      {"passed", r.passed},
      {"notes", r.notes},
  };
  if (with_samples) {
    nlohmann::json rows = nlohmann::json::array();
    for (const BoundSample& s : r.samples)
      rows.push_back({{"coords", s.coords}, {"lhs", s.lhs}, {"rhs", s.rhs}, {"coarse", s.coarse}});
    j["points"] = rows;
  }
  return j;
}

void write_csv(std::ostream& os, const BoundReport& r) {
  os.precision(17);
  for (const std::string& name : r.coord_names) os << name << ',';
  os << "lhs,rhs,ratio,coarse\n";
  for (const BoundSample& s : r.samples) {
    for (double c : s.coords) os << c << ',';
    os << s.lhs << ',' << s.rhs << ',' << s.ratio() << ',' << (s.coarse ? 1 : 0) << '\n';
  }
}

const char* build_id() {
#ifdef VARSTABLE_BUILD_ID
  return VARSTABLE_BUILD_ID;
#else
  return "unknown";
#endif
}

}  // namespace varstable
