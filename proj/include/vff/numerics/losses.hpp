#pragma once

#include "vff/numerics/kernels.hpp"
#include "vff/numerics/tensor.hpp"

namespace vff {

using kernels::FocalParams;
using kernels::sigmoid;

/// Mean binary cross-entropy; predictions are clamped to [1e-7, 1-1e-7].
double bce_loss(const Tensor& pred, const Tensor& target);

/// Mean sigmoid focal loss with soft targets. gamma=0, alpha=0.5 gives 0.5*bce_loss.
double focal_loss(const Tensor& pred, const Tensor& target, double gamma = 2.0, double alpha = 0.25);

}  // namespace vff
