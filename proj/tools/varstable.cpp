#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "varstable/commands.hpp"
#include "varstable/config.hpp"

int main(int argc, char** argv) {
  using namespace varstable;
  CLI::App app{"Parametrix checks and simulation for variable-order stable-like operators"};
  std::string command;
  std::string config;
  unsigned workers = 1;
  std::string out;
  bool quiet = false;
  std::string names;
  for (const auto& n : command_names()) names += (names.empty() ? "" : ", ") + n;
  app.add_option("command", command, "one of: " + names)->required();
  app.add_option("--config", config, "TOML run file")->required();
  app.add_option("--workers", workers, "worker threads; results do not depend on it")
      ->check(CLI::Range(1u, 1024u));
  app.add_option("--out", out, "output directory, overrides output.dir");
  app.add_flag("--quiet", quiet, "no progress lines on stderr");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : int(ExitStatus::kInputError);
  }

  try {
    const Command cmd = parse_command(command);
    const RunConfig cfg = parse_config(config);
    if (cfg.command && *cfg.command != cmd)
      throw InputError("cli", "command '" + command + "' differs from the config's command '" +
                                  to_string(*cfg.command) + "'");
    RunOptions opts;
    opts.workers = workers;
    if (!out.empty()) opts.out = out;
    if (!quiet) opts.log = &std::cerr;
    const RunOutcome r = run_command(cfg, cmd, opts);
    if (!r.error.empty()) std::cerr << "error: " << r.error << '\n';
    std::size_t failed = 0;
    for (const auto& c : r.checks) failed += c.passed ? 0 : 1;
    std::cout << to_string(cmd) << ": " << (r.status == ExitStatus::kOk ? "passed" : "failed")
              << " (" << r.checks.size() - failed << "/" << r.checks.size()
              << " checks, status " << int(r.status) << ")\n";
    return int(r.status);
  } catch (const Error& e) {
    std::cerr << "error: " << e.module() << ": " << e.what() << '\n';
    return int(e.status());
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return int(ExitStatus::kInternalError);
  }
}
