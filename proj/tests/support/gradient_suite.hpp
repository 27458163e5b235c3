#pragma once

#include <algorithm>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "cslab/common/random.hpp"
#include "cslab/numerics/layers.hpp"
#include "cslab/numerics/tape.hpp"
#include "gradcheck.hpp"

namespace cslab::testing {

inline nn::Parameter random_parameter(const std::string& name, std::size_t r, std::size_t c, Rng& rng,
                                      double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  nn::Parameter p{name, nn::Tensor::matrix(r, c), {}};
  for (double& v : p.value.values()) v = d(rng);
  return p;
}

// Worst relative gradient error per primitive over `trials` random draws,
// plus one GRU cell step.
inline std::map<std::string, double> primitive_gradient_errors(int trials, std::uint64_t seed) {
  using namespace cslab::nn;
  std::map<std::string, double> worst;
  Rng rng(seed);
  for (int trial = 0; trial < trials; ++trial) {
    Parameter x = random_parameter("x", 3, 4, rng);
    Parameter y = random_parameter("y", 3, 4, rng);
    Parameter s = random_parameter("s", 1, 1, rng);
    Parameter bias = random_parameter("bias", 1, 4, rng);
    Parameter table = random_parameter("table", 5, 4, rng);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    Tensor soft = Tensor::matrix(3, 4);
    for (std::size_t r = 0; r < 3; ++r) {
      double z = 0;
      for (std::size_t c = 0; c < 4; ++c) z += (soft.at(r, c) = u(rng));
      for (std::size_t c = 0; c < 4; ++c) soft.at(r, c) /= z;
    }
    const std::vector<int> classes = {1, 3, 0};
    const std::vector<int> ids = {4, 0, 4, 2};
    const std::vector<double> w = {0.5, 0.0, 2.0};
    Tensor target = random_parameter("t", 3, 4, rng).value;

    struct Case {
      const char* name;
      std::vector<Parameter*> params;
      LossBuilder build;
    };
    const std::vector<Case> cases = {
        {"add", {&x, &y}, [&](Tape& t) { return sum(mul(add(t.leaf(x), t.leaf(y)), t.leaf(x))); }},
        {"sub", {&x, &y}, [&](Tape& t) { return sum(mul(sub(t.leaf(x), t.leaf(y)), t.leaf(y))); }},
        {"mul", {&x, &y}, [&](Tape& t) { return sum(mul(t.leaf(x), t.leaf(y))); }},
        {"scalar", {&x, &s}, [&](Tape& t) { return sum(tanh(mul(t.leaf(s), add(t.leaf(x), t.leaf(s))))); }},
        {"scale", {&x}, [&](Tape& t) { return sum(tanh(add_scalar(scale(t.leaf(x), -1.5), 0.3))); }},
        {"tanh", {&x}, [&](Tape& t) { return sum(mul(tanh(t.leaf(x)), t.leaf(x))); }},
        {"sigmoid", {&x}, [&](Tape& t) { return sum(mul(sigmoid(t.leaf(x)), t.leaf(x))); }},
        {"relu", {&x}, [&](Tape& t) { return sum(mul(relu(t.leaf(x)), t.leaf(x))); }},
        {"add_bias", {&x, &bias}, [&](Tape& t) { return sum(tanh(add_bias(t.leaf(x), t.leaf(bias)))); }},
        {"concat", {&x, &y}, [&](Tape& t) {
           Var c = concat_cols(t.leaf(x), tanh(t.leaf(y)));
           const Var parts[] = {c, scale(c, 2.0)};
           return sum(tanh(concat_rows(parts)));
         }},
        {"slice", {&x}, [&](Tape& t) { return sum(tanh(slice_rows(t.leaf(x), 1, 2))); }},
        {"gather", {&table}, [&](Tape& t) { return sum(tanh(gather_rows(t.leaf(table), ids))); }},
        {"pick", {&x}, [&](Tape& t) { return sum(tanh(pick(t.leaf(x), classes))); }},
        {"mean", {&x}, [&](Tape& t) { return mean(mul(t.leaf(x), t.leaf(x))); }},
        {"ce_soft", {&x}, [&](Tape& t) { return softmax_cross_entropy(t.leaf(x), soft); }},
        {"ce_hard", {&x}, [&](Tape& t) { return softmax_cross_entropy(t.leaf(x), classes); }},
        {"ce_weighted", {&x}, [&](Tape& t) { return weighted_cross_entropy_sum(t.leaf(x), classes, w); }},
        {"ce_soft_weighted", {&x}, [&](Tape& t) { return weighted_soft_cross_entropy_sum(t.leaf(x), soft, w); }},
        {"mse", {&x, &y}, [&](Tape& t) { return mse(tanh(t.leaf(x)), t.leaf(y)); }},
        {"sq_weighted", {&x}, [&](Tape& t) { return weighted_squared_error_sum(t.leaf(x), target, w); }},
    };
    for (const auto& c : cases) {
      double& err = worst[c.name];
      err = std::max(err, grad_check(c.params, c.build).relative_error);
    }
  }
  GruCell cell("gru", 4, 3, rng);
  const Tensor h0 = random_parameter("h", 2, 3, rng, 0.5).value;
  const Tensor in = random_parameter("in", 2, 4, rng).value;
  worst["gru"] = grad_check(parameters_of(cell), [&](Tape& t) {
                   Var h = cell.forward(t, t.constant(h0), t.constant(in));
                   return sum(mul(h, h));
                 }).relative_error;
  return worst;
}

}  // namespace cslab::testing
