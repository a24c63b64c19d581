#include "vff/numerics/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vff {

namespace {

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation.
Tensor init_uniform(std::vector<std::size_t> shape, std::size_t fan_in, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace

Module2D& Module2D::add_conv(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::mt19937_64& rng) {
  if (kernel % 2 == 0) throw std::invalid_argument("conv kernel size must be odd");
  const std::size_t fan_in = in_ch * kernel * kernel;
  Tensor w = init_uniform({out_ch, in_ch, kernel, kernel}, fan_in, rng);
  Tensor b = init_uniform({out_ch}, fan_in, rng);
  return add_conv(std::move(w), std::move(b));
}

Module2D& Module2D::add_conv(Tensor weight, Tensor bias) {
  if (weight.rank() != 4 || bias.size() != weight.dim(0)) {
    throw std::invalid_argument("conv layer shapes invalid: weight " + weight.shape_str() + ", bias " + bias.shape_str());
  }
  const bool has_conv = std::any_of(layers_.begin(), layers_.end(),
                                    [](const Layer& l) { return std::holds_alternative<Conv>(l); });
  if (has_conv && out_channels() != weight.dim(1)) {
    throw std::invalid_argument("conv layer expects " + std::to_string(weight.dim(1)) + " input channels but previous layer emits " +
                                std::to_string(out_channels()));
  }
  layers_.emplace_back(Conv{Param(std::move(weight)), Param(std::move(bias))});
  return *this;
}

Module2D& Module2D::add_activation(Activation act) {
  layers_.emplace_back(act);
  return *this;
}

Module2D Module2D::sampler_head(std::size_t channels, std::size_t hidden, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Module2D m;
  m.add_conv(channels, hidden, 3, rng)
      .add_activation(Activation::Tanh)
      .add_conv(hidden, hidden, 3, rng)
      .add_activation(Activation::Tanh)
      .add_conv(hidden, 1, 3, rng);
  return m;
}

std::size_t Module2D::in_channels() const {
  for (const Layer& l : layers_) {
    if (const auto* c = std::get_if<Conv>(&l)) return c->in_channels();
  }
  throw std::logic_error("module has no convolution layers");
}

std::size_t Module2D::out_channels() const {
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    if (const auto* c = std::get_if<Conv>(&*it)) return c->out_channels();
  }
  throw std::logic_error("module has no convolution layers");
}

Tensor Module2D::forward(const Tensor& x) const {
  if (x.rank() != 3 || x.dim(0) != in_channels()) {
    throw std::invalid_argument("module expects [" + std::to_string(in_channels()) + ",H,W] input, got " + x.shape_str());
  }
  Tensor y = x;
  for (const Layer& l : layers_) {
    if (const auto* c = std::get_if<Conv>(&l)) {
      y = kernels::conv2d(y, c->weight.value, c->bias.value);
    } else {
      y = kernels::activate(y, std::get<Activation>(l));
    }
  }
  return y;
}

Var Module2D::forward(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  if (xv.rank() != 3 || xv.dim(0) != in_channels()) {
    throw std::invalid_argument("module expects [" + std::to_string(in_channels()) + ",H,W] input, got " + xv.shape_str());
  }
  Var y = x;
  for (Layer& l : layers_) {
    if (auto* c = std::get_if<Conv>(&l)) {
      y = ops::conv2d(tape, y, tape.param(c->weight), tape.param(c->bias));
    } else {
      y = ops::activate(tape, y, std::get<Activation>(l));
    }
  }
  return y;
}

std::vector<Param*> Module2D::params() {
  std::vector<Param*> out;
  for (Layer& l : layers_) {
    if (auto* c = std::get_if<Conv>(&l)) {
      out.push_back(&c->weight);
      out.push_back(&c->bias);
    }
  }
  return out;
}

Mlp::Mlp(std::vector<std::size_t> widths, Activation hidden, std::uint64_t seed) : hidden_(hidden) {
  if (widths.size() < 2) throw std::invalid_argument("an MLP needs at least an input and an output width");
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layers_.push_back(Dense{Param(init_uniform({widths[i + 1], widths[i]}, widths[i], rng)),
                            Param(init_uniform({widths[i + 1]}, widths[i], rng))});
  }
}

Mlp::Mlp(std::vector<Dense> layers, Activation hidden) : layers_(std::move(layers)), hidden_(hidden) {
  if (layers_.empty()) throw std::invalid_argument("an MLP needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Tensor& w = layers_[i].weight.value;
    if (w.rank() != 2 || layers_[i].bias.value.size() != w.dim(0)) {
      throw std::invalid_argument("dense layer " + std::to_string(i) + " has inconsistent shapes");
    }
    if (i > 0 && layers_[i - 1].weight.value.dim(0) != w.dim(1)) {
      throw std::invalid_argument("dense layer " + std::to_string(i) + " input width mismatch");
    }
  }
}

Tensor Mlp::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != in_width()) {
    throw std::invalid_argument("MLP expects [N," + std::to_string(in_width()) + "] input, got " + x.shape_str());
  }
  Tensor y = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    y = kernels::linear(y, layers_[i].weight.value, layers_[i].bias.value);
    if (i + 1 < layers_.size()) y = kernels::activate(y, hidden_);
  }
  return y;
}

Var Mlp::forward(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  if (xv.rank() != 2 || xv.dim(1) != in_width()) {
    throw std::invalid_argument("MLP expects [N," + std::to_string(in_width()) + "] input, got " + xv.shape_str());
  }
  Var y = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    y = ops::linear(tape, y, tape.param(layers_[i].weight), tape.param(layers_[i].bias));
    if (i + 1 < layers_.size()) y = ops::activate(tape, y, hidden_);
  }
  return y;
}

std::vector<Param*> Mlp::params() {
  std::vector<Param*> out;
  for (Dense& d : layers_) {
    out.push_back(&d.weight);
    out.push_back(&d.bias);
  }
  return out;
}

Tensor conv2d_forward(const Tensor& x, const Module2D& m) { return m.forward(x); }

std::vector<double> mlp_forward(std::span<const double> x, const Mlp& mlp) {
  for (double v : x) {
    if (!std::isfinite(v)) throw std::invalid_argument("mlp_forward: non-finite input");
  }
  const Tensor out = mlp.forward(Tensor({1, x.size()}, std::vector<double>(x.begin(), x.end())));
  return out.values();
}

void zero_grads(std::span<Param* const> params) {
  for (Param* p : params) p->zero_grad();
}

}  // namespace vff
