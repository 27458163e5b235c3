#pragma once

#include <span>
#include <vector>

#include "cslab/numerics/tape.hpp"

namespace cslab::nn {

struct RmspropOptions {
  double learning_rate = 1e-3;
  double decay = 0.9;
  double epsilon = 1e-8;
};

// acc <- decay * acc + (1 - decay) * g^2;  p <- p - lr * g / (sqrt(acc) + eps)
class Rmsprop {
 public:
  explicit Rmsprop(RmspropOptions options = {});

  // Parameters must be passed in the same order on every call. Throws
  // TrainingError naming the parameter when a gradient is not finite; in that
  // case no parameter is modified.
  void step(std::span<Parameter* const> params);

  const RmspropOptions& options() const { return options_; }
  void set_learning_rate(double lr) { options_.learning_rate = lr; }
  const std::vector<Tensor>& accumulators() const { return accumulators_; }

 private:
  RmspropOptions options_;
  std::vector<Tensor> accumulators_;
};

void zero_grad(std::span<Parameter* const> params);
// Rescales all gradients so their joint L2 norm is at most max_norm; returns
// the norm before clipping.
double clip_grad_norm(std::span<Parameter* const> params, double max_norm);

}  // namespace cslab::nn
