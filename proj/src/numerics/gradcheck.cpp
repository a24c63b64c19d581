#include "vff/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "vff/numerics/layers.hpp"

namespace vff {

namespace {

double evaluate(const std::function<Var(Tape&)>& build_loss) {
  Tape tape;
  return tape.scalar(build_loss(tape));
}

}  // namespace

GradCheckResult finite_diff_grad_check(const std::function<Var(Tape&)>& build_loss,
                                       std::span<Param* const> params, const GradCheckOptions& opts) {
  zero_grads(params);
  {
    Tape tape;
    tape.backward(build_loss(tape));
  }

  struct Coord {
    std::size_t param;
    std::size_t index;
  };
  std::vector<Coord> coords;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p]->value.size(); ++i) coords.push_back({p, i});
  }
  if (coords.size() > opts.max_coords) {
    std::mt19937_64 rng(opts.seed);
    std::vector<Coord> picked;
    std::sample(coords.begin(), coords.end(), std::back_inserter(picked), opts.max_coords, rng);
    coords = std::move(picked);
  }

  GradCheckResult result;
  for (const Coord& c : coords) {
    double& x = params[c.param]->value[c.index];
    const double saved = x;
    x = saved + opts.step;
    const double plus = evaluate(build_loss);
    x = saved - opts.step;
    const double minus = evaluate(build_loss);
    x = saved;
    const double numeric = (plus - minus) / (2.0 * opts.step);
    const double analytic = params[c.param]->grad[c.index];
    const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
    result.max_rel_error = std::max(result.max_rel_error, err);
    ++result.coords_checked;
  }
  return result;
}

}  // namespace vff
