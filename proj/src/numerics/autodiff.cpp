#include "vff/numerics/autodiff.hpp"

#include <stdexcept>

namespace vff {

const Tape::Node& Tape::node(Var v) const {
  if (v.tape != this || v.id >= nodes_.size()) {
    throw std::logic_error("variable does not belong to this tape");
  }
  return nodes_[v.id];
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
  return Var{nodes_.size() - 1, this};
}

Var Tape::param(Param& p) {
  if (!p.grad.same_shape(p.value)) p.zero_grad();
  nodes_.push_back(Node{p.value, {}, true, &p, {}});
  return Var{nodes_.size() - 1, this};
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  bool needs = false;
  for (Var in : inputs) needs = needs || node(in).requires_grad;
  nodes_.push_back(Node{std::move(value), {}, needs, nullptr, needs ? std::move(backward) : BackwardFn{}});
  return Var{nodes_.size() - 1, this};
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

double Tape::scalar(Var v) const {
  const Tensor& t = value(v);
  if (t.size() != 1) throw std::logic_error("expected a scalar, got shape " + t.shape_str());
  return t[0];
}

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

void Tape::accumulate(Var v, const Tensor& grad) {
  node(v);
  Node& n = nodes_[v.id];
  if (!n.requires_grad) return;
  if (!grad.same_shape(n.value)) {
    throw std::logic_error("gradient shape " + grad.shape_str() + " does not match value " + n.value.shape_str());
  }
  if (n.grad.empty()) {
    n.grad = grad;
    return;
  }
  for (std::size_t i = 0; i < grad.size(); ++i) n.grad[i] += grad[i];
}

void Tape::backward(Var loss) {
  if (nodes_.empty()) throw std::logic_error("backward called before any forward pass was recorded");
  if (node(loss).value.size() != 1) {
    throw std::logic_error("backward requires a scalar loss, got shape " + node(loss).value.shape_str());
  }
  for (Node& n : nodes_) n.grad = Tensor();
  if (!nodes_[loss.id].requires_grad) return;
  nodes_[loss.id].grad = Tensor::scalar(1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.param != nullptr) {
      Tensor& pg = n.param->grad;
      for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
    } else if (n.backward) {
      n.backward(n.grad, *this);
    }
  }
}

namespace ops {

using kernels::Activation;

Var conv2d(Tape& t, Var x, Var w, Var b) {
  Tensor y = kernels::conv2d(t.value(x), t.value(w), t.value(b));
  const Var in[] = {x, w, b};
  return t.record(std::move(y), in, [x, w, b](const Tensor& dy, Tape& tp) {
    kernels::Conv2dGrads g = kernels::conv2d_backward(tp.value(x), tp.value(w), dy);
    tp.accumulate(x, g.dx);
    tp.accumulate(w, g.dw);
    tp.accumulate(b, g.db);
  });
}

Var linear(Tape& t, Var x, Var w, Var b) {
  Tensor y = kernels::linear(t.value(x), t.value(w), t.value(b));
  const Var in[] = {x, w, b};
  return t.record(std::move(y), in, [x, w, b](const Tensor& dy, Tape& tp) {
    kernels::LinearGrads g = kernels::linear_backward(tp.value(x), tp.value(w), dy);
    tp.accumulate(x, g.dx);
    tp.accumulate(w, g.dw);
    tp.accumulate(b, g.db);
  });
}

Var activate(Tape& t, Var x, Activation act) {
  if (act == Activation::Identity) return x;
  Tensor y = kernels::activate(t.value(x), act);
  const Var in[] = {x};
  const std::size_t out_id = t.size();
  return t.record(std::move(y), in, [x, act, out_id](const Tensor& dy, Tape& tp) {
    tp.accumulate(x, kernels::activate_backward(tp.value(Var{out_id, &tp}), dy, act));
  });
}

Var sigmoid(Tape& t, Var x) { return activate(t, x, Activation::Sigmoid); }

Var add(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (!av.same_shape(bv)) throw std::invalid_argument("add: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  Tensor y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  const Var in[] = {a, b};
  return t.record(std::move(y), in, [a, b](const Tensor& dy, Tape& tp) {
    tp.accumulate(a, dy);
    tp.accumulate(b, dy);
  });
}

Var scale(Tape& t, Var a, double factor) {
  Tensor y = t.value(a);
  for (double& v : y.data()) v *= factor;
  const Var in[] = {a};
  return t.record(std::move(y), in, [a, factor](const Tensor& dy, Tape& tp) {
    Tensor g = dy;
    for (double& v : g.data()) v *= factor;
    tp.accumulate(a, g);
  });
}

Var sum(Tape& t, Var a) {
  double s = 0.0;
  for (double v : t.value(a).data()) s += v;
  const Var in[] = {a};
  return t.record(Tensor::scalar(s), in, [a](const Tensor& dy, Tape& tp) {
    tp.accumulate(a, Tensor(tp.value(a).shape(), dy[0]));
  });
}

Var rowdot(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (av.rank() != 2 || !av.same_shape(bv)) {
    throw std::invalid_argument("rowdot: expected equal [N,D] shapes, got " + av.shape_str() + " and " + bv.shape_str());
  }
  const std::size_t n = av.dim(0), d = av.dim(1);
  Tensor y({n});
  for (std::size_t r = 0; r < n; ++r) {
    double acc = 0.0;
    for (std::size_t k = 0; k < d; ++k) acc += av.at(r, k) * bv.at(r, k);
    y[r] = acc;
  }
  const Var in[] = {a, b};
  return t.record(std::move(y), in, [a, b, n, d](const Tensor& dy, Tape& tp) {
    const Tensor& av2 = tp.value(a);
    const Tensor& bv2 = tp.value(b);
    Tensor ga(av2.shape()), gb(bv2.shape());
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t k = 0; k < d; ++k) {
        ga.at(r, k) = dy[r] * bv2.at(r, k);
        gb.at(r, k) = dy[r] * av2.at(r, k);
      }
    }
    tp.accumulate(a, ga);
    tp.accumulate(b, gb);
  });
}

Var bce_loss(Tape& t, Var pred, const Tensor& target) {
  const Tensor& p = t.value(pred);
  if (p.size() != target.size()) {
    throw std::invalid_argument("bce_loss: shape mismatch " + p.shape_str() + " vs " + target.shape_str());
  }
  const double inv_n = 1.0 / static_cast<double>(p.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += kernels::bce_element(p[i], target[i]);
  const Var in[] = {pred};
  return t.record(Tensor::scalar(total * inv_n), in, [pred, target, inv_n](const Tensor& dy, Tape& tp) {
    const Tensor& pv = tp.value(pred);
    Tensor g(pv.shape());
    for (std::size_t i = 0; i < pv.size(); ++i) g[i] = dy[0] * inv_n * kernels::bce_element_grad(pv[i], target[i]);
    tp.accumulate(pred, g);
  });
}

Var focal_loss(Tape& t, Var pred, const Tensor& target, const kernels::FocalParams& fp,
               std::span<const double> weights) {
  const Tensor& p = t.value(pred);
  if (p.size() != target.size()) {
    throw std::invalid_argument("focal_loss: shape mismatch " + p.shape_str() + " vs " + target.shape_str());
  }
  if (!weights.empty() && weights.size() != p.size()) {
    throw std::invalid_argument("focal_loss: weight count does not match prediction size");
  }
  std::vector<double> w(weights.begin(), weights.end());
  if (w.empty()) w.assign(p.size(), 1.0 / static_cast<double>(p.size()));
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += w[i] * kernels::focal_element(p[i], target[i], fp);
  const Var in[] = {pred};
  return t.record(Tensor::scalar(total), in, [pred, target, fp, w = std::move(w)](const Tensor& dy, Tape& tp) {
    const Tensor& pv = tp.value(pred);
    Tensor g(pv.shape());
    for (std::size_t i = 0; i < pv.size(); ++i) g[i] = dy[0] * w[i] * kernels::focal_element_grad(pv[i], target[i], fp);
    tp.accumulate(pred, g);
  });
}

}  // namespace ops

}  // namespace vff
