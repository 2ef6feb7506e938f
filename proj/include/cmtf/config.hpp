#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmtf/problem.hpp"

namespace cmtf {

/// One problem with a configuration document; `field` is a JSON-path-like
/// location such as "tensors[1].rank" (empty for whole-document errors).
struct Diagnostic {
  std::string field;
  std::string message;

  std::string str() const { return field.empty() ? message : field + ": " + message; }
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<Diagnostic> diagnostics);
  const std::vector<Diagnostic>& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::vector<Diagnostic> diagnostics_;
};

struct FitConfig {
  ProblemSpec problem;
  SolverOptions options;
};

/// Checks a configuration without reading tensor payloads (headers only).
std::vector<Diagnostic> validateConfig(const std::filesystem::path& configPath);

/// Parses, loads tensors and validates; throws ConfigError.
FitConfig loadConfig(const std::filesystem::path& configPath);

/// Sets one solver option from text, e.g. ("outer_max_iters", "500").
/// Keys: inner_max_iters, inner_tol, outer_tol_abs, outer_tol_rel,
/// outer_max_iters, seed, init, deterministic_timing, lbfgs_memory,
/// lbfgs_max_iters, lbfgs_pgtol, lbfgs_ftol. Throws std::invalid_argument.
void setSolverOption(SolverOptions& opts, const std::string& key, const std::string& value);

}  // namespace cmtf
