#pragma once

#include <span>

#include "vff/numerics/tensor.hpp"

// Raw forward/backward kernels. The tape ops in autodiff.hpp and the
// inference paths in layers.hpp share these.
namespace vff::kernels {

enum class Activation { Identity, Relu, Tanh, Sigmoid };

double sigmoid(double x);

/// Same-padding, stride-1 convolution. x:[Cin,H,W], w:[Cout,Cin,K,K], b:[Cout], K odd.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b);

struct Conv2dGrads {
  Tensor dx;
  Tensor dw;
  Tensor db;
};
Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy);

/// Batched affine map. x:[N,Din], w:[Dout,Din], b:[Dout] -> [N,Dout].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

struct LinearGrads {
  Tensor dx;
  Tensor dw;
  Tensor db;
};
LinearGrads linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy);

Tensor activate(const Tensor& x, Activation act);
/// dL/dx given the activation output y and dL/dy.
Tensor activate_backward(const Tensor& y, const Tensor& dy, Activation act);

/// Probability clamp applied before every log.
inline constexpr double kProbEpsilon = 1e-7;

struct FocalParams {
  double gamma = 2.0;
  double alpha = 0.25;
};

/// Per-element binary cross-entropy on probabilities, clamped to [eps, 1-eps].
double bce_element(double p, double y);
/// d bce_element / dp; zero where the clamp is active.
double bce_element_grad(double p, double y);

/// Per-element sigmoid focal loss on probabilities with soft targets:
/// (alpha*y + (1-alpha)*(1-y)) * pt^gamma * bce(p, y), pt = p(1-y) + (1-p)y.
double focal_element(double p, double y, const FocalParams& fp);
double focal_element_grad(double p, double y, const FocalParams& fp);

}  // namespace vff::kernels
