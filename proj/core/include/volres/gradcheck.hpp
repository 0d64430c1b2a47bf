#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace volres {

struct GradCheckResult {
  std::string op;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

// Test fixture hook: flips the sign of the analytic conv3d gradients so the
// harness can prove it catches a broken backward.
enum class GradCheckFault { kNone, kConv3dSignFlip };

// Central finite differences in f64 (h = 1e-5) against every differentiable
// op, plus an end-to-end check of a reduced k=1 network (8^3 input, stem
// pool disabled). Per-op tolerance 1e-5, end-to-end 1e-4. Relative error is
// |a - f| / max(|a|, |f|, 1e-3).
std::vector<GradCheckResult> run_gradient_checks(std::uint64_t seed,
                                                 GradCheckFault fault = GradCheckFault::kNone);

}  // namespace volres
