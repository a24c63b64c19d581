#include "vff/numerics/losses.hpp"

#include <stdexcept>

namespace vff {

namespace {

void check_pair(const Tensor& pred, const Tensor& target, const char* name) {
  if (!pred.same_shape(target)) {
    throw std::invalid_argument(std::string(name) + ": shape mismatch " + pred.shape_str() + " vs " + target.shape_str());
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (!(target[i] >= 0.0 && target[i] <= 1.0)) throw std::invalid_argument(std::string(name) + ": target outside [0,1]");
  }
}

}  // namespace

double bce_loss(const Tensor& pred, const Tensor& target) {
  check_pair(pred, target, "bce_loss");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += kernels::bce_element(pred[i], target[i]);
  return total / static_cast<double>(pred.size());
}

double focal_loss(const Tensor& pred, const Tensor& target, double gamma, double alpha) {
  check_pair(pred, target, "focal_loss");
  if (gamma < 0.0) throw std::invalid_argument("focal_loss: gamma must be non-negative");
  const FocalParams fp{gamma, alpha};
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += kernels::focal_element(pred[i], target[i], fp);
  return total / static_cast<double>(pred.size());
}

}  // namespace vff
