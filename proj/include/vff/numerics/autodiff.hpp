#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "vff/numerics/kernels.hpp"
#include "vff/numerics/tensor.hpp"

namespace vff {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
  std::size_t id = kInvalid;
  const Tape* tape = nullptr;

  bool valid() const { return id != kInvalid && tape != nullptr; }
};

/// Reverse-mode recording of one forward pass. Leaves are constants or
/// Params; backward() accumulates into Param::grad, so calling it twice
/// without zeroing doubles the gradients.
class Tape {
 public:
  using BackwardFn = std::function<void(const Tensor& out_grad, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var param(Param& p);

  /// Records an op output. `backward` receives dL/d(out) and must call
  /// accumulate() on the inputs that need it.
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const;
  double scalar(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  void accumulate(Var v, const Tensor& grad);
  void backward(Var loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Param* param = nullptr;
    BackwardFn backward;
  };

  const Node& node(Var v) const;

  std::vector<Node> nodes_;
};

namespace ops {

Var conv2d(Tape& t, Var x, Var w, Var b);
Var linear(Tape& t, Var x, Var w, Var b);
Var activate(Tape& t, Var x, kernels::Activation act);
Var sigmoid(Tape& t, Var x);
Var add(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double factor);
Var sum(Tape& t, Var a);
/// Row-wise inner product of [N,D] tensors -> [N].
Var rowdot(Tape& t, Var a, Var b);
/// Mean binary cross-entropy over all elements.
Var bce_loss(Tape& t, Var pred, const Tensor& target);
/// Weighted focal-loss sum; empty weights means the plain mean.
Var focal_loss(Tape& t, Var pred, const Tensor& target, const kernels::FocalParams& fp,
               std::span<const double> weights = {});

}  // namespace ops

}  // namespace vff
