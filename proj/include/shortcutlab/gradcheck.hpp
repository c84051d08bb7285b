#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace scl {

struct GradCheckCase {
  std::string name;
  double max_rel_err = 0;
  long params_checked = 0;
  bool stop_grad_blocks_zero = true;  // exact-zero checks on gated parameter groups
  bool ok = false;
};

struct GradCheckReport {
  std::vector<GradCheckCase> cases;
  bool ok = false;
  double seconds = 0;
};

/// Central finite differences against the analytic backward pass for every
/// parameter of every architecture cell (representation x constraint x
/// association), on a 4-sample batch of each domain at toy dimensions.
/// Isolated-latent cells additionally assert that target-only gradients reach
/// the encoder as exact zeros; cross-independence cells assert the two-step
/// exclusion contracts.
GradCheckReport run_gradient_suite(std::uint64_t seed = 7, double tolerance = 1e-5);

}  // namespace scl
