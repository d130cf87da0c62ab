#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "varstable/config.hpp"
#include "varstable/error.hpp"

namespace varstable {

struct RunOptions {
  unsigned workers = 1;                       // caps concurrency, never changes results
  std::optional<std::filesystem::path> out;   // overrides output.dir
  std::ostream* log = nullptr;                // progress lines; null for silence
};

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct RunOutcome {
  ExitStatus status = ExitStatus::kOk;
  std::vector<CheckResult> checks;
  nlohmann::json report;                      // what report.json holds
  std::vector<std::filesystem::path> artifacts;
  std::string error;                          // "module: message" when status is an error
};

/// Runs one command and writes report.json, effective_config.toml and the
/// command's CSV files under the output directory. Errors from the modules
/// become the matching exit status; report.json is written whatever the
/// outcome unless output.json is off.
RunOutcome run_command(const RunConfig& cfg, Command command, const RunOptions& opts = {});

/// Hex form of a model hash, as embedded in reports.
std::string hash_hex(std::uint64_t h);

}  // namespace varstable
