#pragma once

#include "rsd/schedule.hpp"
#include "rsd/types.hpp"

#include <functional>
#include <string>
#include <vector>

namespace rsd::verify {

struct CheckResult {
  std::string name;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  double seconds = 0.0;
};

/// Central finite differences against a re-evaluated scalar loss. The
/// oracle never reads tape gradients; it only calls `loss`.
struct FdReport {
  double max_rel_err = 0.0;
  int checked = 0;
};
FdReport fd_check(const std::function<double(const Vec&)>& loss,
                  const Vec& params, const Vec& grad, double step = 1e-4,
                  int max_coords = 200);

// One function per acceptance criterion family. Each runs its full suite
// at the pinned tolerances and returns one row per sub-check.
std::vector<CheckResult> kernel_identity_checks(std::uint64_t seed);
std::vector<CheckResult> prop1_checks(std::uint64_t seed);
std::vector<CheckResult> kl_decomposition_checks(std::uint64_t seed);
std::vector<CheckResult> vsd_gradient_checks(std::uint64_t seed);
std::vector<CheckResult> loss_gradient_checks(std::uint64_t seed);

std::vector<CheckResult> run_all_checks(std::uint64_t seed);

bool all_pass(const std::vector<CheckResult>& results);
void write_check_csv(const std::string& path,
                     const std::vector<CheckResult>& results);

/// The (t, eta_t, alpha_t, w_t) table; w_1 prints as "nan" (undefined).
std::string schedule_table_csv(const Schedule& s);

}  // namespace rsd::verify
