#include "vff/numerics/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vff::kernels {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

struct ConvDims {
  std::size_t cin, h, w, cout, k;
  long pad;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w) {
  require(x.rank() == 3, "conv2d: input must be [C,H,W], got " + x.shape_str());
  require(w.rank() == 4, "conv2d: weight must be [Cout,Cin,K,K], got " + w.shape_str());
  require(w.dim(2) == w.dim(3) && w.dim(2) % 2 == 1, "conv2d: kernel must be square and odd, got " + w.shape_str());
  require(w.dim(1) == x.dim(0), "conv2d: input channels " + std::to_string(x.dim(0)) +
                                    " do not match weight " + w.shape_str());
  return {x.dim(0), x.dim(1), x.dim(2), w.dim(0), w.dim(2), static_cast<long>(w.dim(2) / 2)};
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
  const ConvDims d = conv_dims(x, w);
  require(b.size() == d.cout, "conv2d: bias length does not match output channels");
  Tensor y({d.cout, d.h, d.w});
  const long H = static_cast<long>(d.h);
  const long W = static_cast<long>(d.w);
  const long K = static_cast<long>(d.k);
  for (std::size_t co = 0; co < d.cout; ++co) {
    for (long oy = 0; oy < H; ++oy) {
      for (long ox = 0; ox < W; ++ox) {
        double acc = b[co];
        for (std::size_t ci = 0; ci < d.cin; ++ci) {
          const double* wk = &w.data()[((co * d.cin + ci) * d.k) * d.k];
          for (long ky = 0; ky < K; ++ky) {
            const long iy = oy + ky - d.pad;
            if (iy < 0 || iy >= H) continue;
            for (long kx = 0; kx < K; ++kx) {
              const long ix = ox + kx - d.pad;
              if (ix < 0 || ix >= W) continue;
              acc += wk[ky * K + kx] * x.at(ci, iy, ix);
            }
          }
        }
        y.at(co, oy, ox) = acc;
      }
    }
  }
  return y;
}

Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy) {
  const ConvDims d = conv_dims(x, w);
  require(dy.rank() == 3 && dy.dim(0) == d.cout && dy.dim(1) == d.h && dy.dim(2) == d.w,
          "conv2d_backward: upstream gradient shape " + dy.shape_str());
  Conv2dGrads g{Tensor(x.shape()), Tensor(w.shape()), Tensor({d.cout})};
  const long H = static_cast<long>(d.h);
  const long W = static_cast<long>(d.w);
  const long K = static_cast<long>(d.k);
  for (std::size_t co = 0; co < d.cout; ++co) {
    for (long oy = 0; oy < H; ++oy) {
      for (long ox = 0; ox < W; ++ox) {
        const double gy = dy.at(co, oy, ox);
        g.db[co] += gy;
        if (gy == 0.0) continue;
        for (std::size_t ci = 0; ci < d.cin; ++ci) {
          const std::size_t wbase = ((co * d.cin + ci) * d.k) * d.k;
          for (long ky = 0; ky < K; ++ky) {
            const long iy = oy + ky - d.pad;
            if (iy < 0 || iy >= H) continue;
            for (long kx = 0; kx < K; ++kx) {
              const long ix = ox + kx - d.pad;
              if (ix < 0 || ix >= W) continue;
              g.dw[wbase + ky * K + kx] += gy * x.at(ci, iy, ix);
              g.dx.at(ci, iy, ix) += gy * w[wbase + ky * K + kx];
            }
          }
        }
      }
    }
  }
  return g;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.rank() == 2, "linear: input must be [N,D], got " + x.shape_str());
  require(w.rank() == 2 && w.dim(1) == x.dim(1),
          "linear: weight " + w.shape_str() + " incompatible with input " + x.shape_str());
  require(b.size() == w.dim(0), "linear: bias length does not match output width");
  const std::size_t n = x.dim(0), din = x.dim(1), dout = w.dim(0);
  Tensor y({n, dout});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t o = 0; o < dout; ++o) {
      double acc = b[o];
      for (std::size_t i = 0; i < din; ++i) acc += w.at(o, i) * x.at(r, i);
      y.at(r, o) = acc;
    }
  }
  return y;
}

LinearGrads linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy) {
  const std::size_t n = x.dim(0), din = x.dim(1), dout = w.dim(0);
  require(dy.rank() == 2 && dy.dim(0) == n && dy.dim(1) == dout,
          "linear_backward: upstream gradient shape " + dy.shape_str());
  LinearGrads g{Tensor(x.shape()), Tensor(w.shape()), Tensor({dout})};
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t o = 0; o < dout; ++o) {
      const double gy = dy.at(r, o);
      g.db[o] += gy;
      for (std::size_t i = 0; i < din; ++i) {
        g.dw.at(o, i) += gy * x.at(r, i);
        g.dx.at(r, i) += gy * w.at(o, i);
      }
    }
  }
  return g;
}

Tensor activate(const Tensor& x, Activation act) {
  Tensor y = x;
  auto data = y.data();
  switch (act) {
    case Activation::Identity:
      break;
    case Activation::Relu:
      for (double& v : data) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::Tanh:
      for (double& v : data) v = std::tanh(v);
      break;
    case Activation::Sigmoid:
      for (double& v : data) v = sigmoid(v);
      break;
  }
  return y;
}

Tensor activate_backward(const Tensor& y, const Tensor& dy, Activation act) {
  require(y.same_shape(dy), "activation backward: shape mismatch");
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    const double out = y[i];
    switch (act) {
      case Activation::Identity:
        break;
      case Activation::Relu:
        dx[i] = out > 0.0 ? dy[i] : 0.0;
        break;
      case Activation::Tanh:
        dx[i] = dy[i] * (1.0 - out * out);
        break;
      case Activation::Sigmoid:
        dx[i] = dy[i] * out * (1.0 - out);
        break;
    }
  }
  return dx;
}

namespace {

bool clamped(double p) { return p < kProbEpsilon || p > 1.0 - kProbEpsilon; }

double clamp_prob(double p) { return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon); }

}  // namespace

double bce_element(double p, double y) {
  const double pc = clamp_prob(p);
  return -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
}

double bce_element_grad(double p, double y) {
  if (clamped(p)) return 0.0;
  return -y / p + (1.0 - y) / (1.0 - p);
}

double focal_element(double p, double y, const FocalParams& fp) {
  const double pc = clamp_prob(p);
  const double pt = pc * (1.0 - y) + (1.0 - pc) * y;
  const double weight = fp.alpha * y + (1.0 - fp.alpha) * (1.0 - y);
  return weight * std::pow(pt, fp.gamma) * bce_element(pc, y);
}

double focal_element_grad(double p, double y, const FocalParams& fp) {
  if (clamped(p)) return 0.0;
  const double pt = p * (1.0 - y) + (1.0 - p) * y;
  const double weight = fp.alpha * y + (1.0 - fp.alpha) * (1.0 - y);
  const double bce = bce_element(p, y);
  double d = std::pow(pt, fp.gamma) * bce_element_grad(p, y);
  if (fp.gamma != 0.0) d += fp.gamma * std::pow(pt, fp.gamma - 1.0) * (1.0 - 2.0 * y) * bce;
  return weight * d;
}

}  // namespace vff::kernels
