#pragma once

// Self-check suites behind `mambabench verify`: each compares two routes to
// the same quantity (or witnesses a dependence) on seeded random inputs.

#include <string>
#include <vector>

namespace mamba {

struct SuiteResult {
  std::string name;
  /// Max-abs error for comparisons; for witnesses the observed effect size.
  double value = 0.0;
  double tolerance = 0.0;
  /// Witness suites pass when value > tolerance, comparisons when value <= tolerance.
  bool witness = false;
  bool passed = false;
};

/// Scopes: ssm, layers, attention, archs, all. Unknown scope -> UsageError.
std::vector<SuiteResult> run_verify(const std::string& scope);

const std::vector<std::string>& verify_scopes();

}  // namespace mamba
