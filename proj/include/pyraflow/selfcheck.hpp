#pragma once

#include <string>
#include <vector>

namespace pyraflow {

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0;  // measured error / deviation
  double limit = 0;  // threshold it was compared against
  std::string detail;
};

struct CheckOptions {
  bool use_double = false;  // 64-bit gradient verification mode
  int seeds = 5;            // random seeds per gradient check
  std::string only;         // run only checks whose name starts with this
  std::string sabotage;     // test hook: corrupt the analytic gradient of
                            // the named check to prove the harness catches it
};

/// Central-difference verification (h = 1e-3) of every differentiable op.
/// Relative error limit: 1e-2 in 32-bit, 1e-4 in 64-bit mode.
std::vector<CheckResult> run_gradient_checks(const CheckOptions& opt = {});

/// Implementation-vs-naive-reference equivalences (sparse cost volume vs
/// dense, fold/pack local convolution vs sliding window, filter construction
/// vs direct formula, convolution vs quadruple loop, ...).
std::vector<CheckResult> run_oracle_checks(const CheckOptions& opt = {});

/// Analytic invariants (warp identities, normalization, convexity bounds,
/// linearity, purity).
std::vector<CheckResult> run_invariant_checks(const CheckOptions& opt = {});

std::vector<CheckResult> run_all_checks(const CheckOptions& opt = {});

} // namespace pyraflow
