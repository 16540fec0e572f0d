#pragma once

#include "certigrad/io.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace certigrad::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kNotTight = 2, kSolverFailure = 3 };

struct CommandResult {
  int exit_code = kOk;
  io::Json report;
  std::vector<std::pair<std::string, std::string>> files;  // (file name, contents)
};

struct SolveOptions {
  std::string problem_path;
  std::optional<double> tol;  // SDP stopping tolerance; library default when unset
  double ratio_threshold = 1e5;
  std::string grad = "none";  // none | is | cift
  // dL/dx: comma-separated numbers or @file holding a JSON array.
  std::string loss_grad;
};

/// Exit codes: 0 TightCertified, 2 NotTight or TightUncertified, 3 solver failure.
/// Malformed input throws ParseError / ConfigError.
CommandResult cmd_solve(const SolveOptions& opts);

struct ExperimentOptions {
  std::string name;  // poly-bilevel | stereo-calib | jac-compare | tightness-audit
  std::string config_path;  // empty: defaults
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

/// Returns report.json plus a CSV trace in `files`. Exit 3 only when every trial failed;
/// a tightness audit that ends without tightness exits 2.
CommandResult cmd_experiment(const ExperimentOptions& opts);

/// CSV column documentation shown in --help.
std::string csv_columns_help();

int run(int argc, char** argv);

}  // namespace certigrad::cli
