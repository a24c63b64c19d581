#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "vff/numerics/autodiff.hpp"

namespace vff {

struct GradCheckOptions {
  double step = 1e-5;
  std::size_t max_coords = 100;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
};

/// Compares reverse-mode gradients against central differences on up to
/// `max_coords` randomly chosen parameter coordinates. The error of one
/// coordinate is |analytic - numeric| / max(1, |analytic|).
///
/// `build_loss` must record a deterministic scalar loss on the given tape.
/// Parameter gradients are overwritten.
GradCheckResult finite_diff_grad_check(const std::function<Var(Tape&)>& build_loss,
                                       std::span<Param* const> params, const GradCheckOptions& opts = {});

}  // namespace vff
