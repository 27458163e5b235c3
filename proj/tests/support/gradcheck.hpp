#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "cslab/numerics/tape.hpp"

namespace cslab::testing {

// Builds a scalar loss on the given tape from the current parameter values.
using LossBuilder = std::function<nn::Var(nn::Tape&)>;

struct GradCheckResult {
  double relative_error = 0.0;
  double analytic_norm = 0.0;
};

// Compares tape gradients against central finite differences (step h) over
// every entry of every parameter. Error is ||analytic - numeric|| divided by
// max(||analytic||, ||numeric||, 1e-8).
inline GradCheckResult grad_check(const std::vector<nn::Parameter*>& params,
                                  const LossBuilder& build, double h = 1e-5) {
  for (nn::Parameter* p : params) p->zero_grad();
  {
    nn::Tape tape;
    tape.backward(build(tape));
  }
  std::vector<double> analytic, numeric;
  for (nn::Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      analytic.push_back(p->grad[i]);
      const double saved = p->value[i];
      p->value[i] = saved + h;
      double up, down;
      {
        nn::Tape t;
        up = build(t).value().item();
      }
      p->value[i] = saved - h;
      {
        nn::Tape t;
        down = build(t).value().item();
      }
      p->value[i] = saved;
      numeric.push_back((up - down) / (2.0 * h));
    }
  }
  double diff = 0.0, na = 0.0, nn_ = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn_ += numeric[i] * numeric[i];
  }
  GradCheckResult r;
  r.analytic_norm = std::sqrt(na);
  r.relative_error = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn_), 1e-8});
  return r;
}

}  // namespace cslab::testing
