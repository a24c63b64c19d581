#pragma once

#include <cstdint>
#include <random>
#include <variant>
#include <vector>

#include "vff/numerics/autodiff.hpp"
#include "vff/numerics/kernels.hpp"

namespace vff {

using kernels::Activation;

/// Stack of same-padding, stride-1 convolutions and activations.
class Module2D {
 public:
  struct Conv {
    Param weight;  // [Cout, Cin, K, K]
    Param bias;    // [Cout]
    std::size_t in_channels() const { return weight.value.dim(1); }
    std::size_t out_channels() const { return weight.value.dim(0); }
  };
  using Layer = std::variant<Conv, Activation>;

  Module2D() = default;

  Module2D& add_conv(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::mt19937_64& rng);
  Module2D& add_conv(Tensor weight, Tensor bias);
  Module2D& add_activation(Activation act);

  /// Three 3x3 convolutions (C->H->H->1) with tanh between them.
  static Module2D sampler_head(std::size_t channels, std::size_t hidden, std::uint64_t seed);

  Tensor forward(const Tensor& x) const;
  Var forward(Tape& tape, Var x);

  std::vector<Param*> params();
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t in_channels() const;
  std::size_t out_channels() const;

 private:
  std::vector<Layer> layers_;
};

/// Multi-layer perceptron of dense layers with a shared hidden activation;
/// the last layer is linear.
class Mlp {
 public:
  struct Dense {
    Param weight;  // [Dout, Din]
    Param bias;    // [Dout]
  };

  Mlp() = default;
  Mlp(std::vector<std::size_t> widths, Activation hidden, std::uint64_t seed);
  explicit Mlp(std::vector<Dense> layers, Activation hidden = Activation::Tanh);

  /// x: [N, Din] -> [N, Dout]
  Tensor forward(const Tensor& x) const;
  Var forward(Tape& tape, Var x);

  std::vector<Param*> params();
  std::vector<Dense>& layers() { return layers_; }
  const std::vector<Dense>& layers() const { return layers_; }
  std::size_t in_width() const { return layers_.front().weight.value.dim(1); }
  std::size_t out_width() const { return layers_.back().weight.value.dim(0); }
  Activation hidden_activation() const { return hidden_; }

 private:
  std::vector<Dense> layers_;
  Activation hidden_ = Activation::Tanh;
};

Tensor conv2d_forward(const Tensor& x, const Module2D& m);
/// Single-vector MLP evaluation; rejects non-finite input.
std::vector<double> mlp_forward(std::span<const double> x, const Mlp& mlp);

void zero_grads(std::span<Param* const> params);

}  // namespace vff
