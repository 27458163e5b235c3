#include "cslab/numerics/rmsprop.hpp"

#include <cmath>

#include "cslab/common/errors.hpp"

namespace cslab::nn {

Rmsprop::Rmsprop(RmspropOptions options) : options_(options) {
  if (!(options_.learning_rate > 0.0) || !(options_.decay > 0.0 && options_.decay < 1.0) ||
      !(options_.epsilon > 0.0)) {
    throw ConfigError("rmsprop: require lr > 0, decay in (0,1), epsilon > 0");
  }
}

void Rmsprop::step(std::span<Parameter* const> params) {
  if (accumulators_.empty()) {
    for (const Parameter* p : params) accumulators_.emplace_back(p->value.shape(), 0.0);
  }
  if (accumulators_.size() != params.size()) {
    throw UsageError("rmsprop: parameter list changed between steps");
  }
  for (const Parameter* p : params) {
    if (p->grad.size() != p->value.size()) {
      throw UsageError("rmsprop: parameter '" + p->name + "' has no gradient buffer");
    }
    if (!p->grad.all_finite()) {
      throw TrainingError("rmsprop: non-finite gradient in parameter '" + p->name + "'");
    }
  }
  const double rho = options_.decay;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    Tensor& acc = accumulators_[k];
    if (acc.size() != p.value.size()) throw UsageError("rmsprop: shape changed for " + p.name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      acc[i] = rho * acc[i] + (1.0 - rho) * g * g;
      p.value[i] -= options_.learning_rate * g / (std::sqrt(acc[i]) + options_.epsilon);
    }
  }
}

void zero_grad(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

double clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    for (double g : p->grad.values()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (Parameter* p : params) {
      for (double& g : p->grad.values()) g *= f;
    }
  }
  return norm;
}

}  // namespace cslab::nn
