#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cslab/numerics/tensor.hpp"

namespace cslab::nn {

// A trainable tensor plus its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad();
};

class Tape;

// Handle to a node recorded on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Tensor& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Ordered record of primitive operations. Nodes are appended in evaluation
// order, which is a topological order of the computation graph; backward()
// replays them in reverse. A tape is single-owner and not thread-safe.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Gradient reaching this node is accumulated into p.grad on backward().
  // The parameter must outlive the tape contents.
  Var leaf(Parameter& p);
  // Like leaf() but never propagates gradient (frozen weights).
  Var frozen(const Parameter& p);

  // Appends an operation. `backward` is dropped when no input requires grad.
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

  // Seeds d(root)/d(root) = 1 and propagates to every reachable node once.
  void backward(Var root);

  const Tensor& value(std::size_t id) const;
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Adds `g` into the gradient of node `id` (no-op for constants).
  void accumulate(std::size_t id, const Tensor& g);
  Tensor& grad_buffer(std::size_t id);

  std::size_t size() const { return nodes_.size(); }
  std::size_t backward_visits() const { return backward_visits_; }
  void clear();

 private:
  struct Node {
    Tensor value;
    const Tensor* borrowed = nullptr;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };
  std::deque<Node> nodes_;
  std::size_t backward_visits_ = 0;
};

// ---- primitives -----------------------------------------------------------
// All primitives throw DimensionError on incompatible shapes.

Var matmul(Var a, Var b);
// Equal-shape or scalar-vs-tensor operands only.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
// x[m x n] + bias[1 x n] added to every row.
Var add_bias(Var x, Var bias);
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);

Var concat_cols(Var a, Var b);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var gather_rows(Var table, std::span<const int> ids);
// out[i] = a[i, columns[i]] as an m x 1 column.
Var pick(Var a, std::span<const int> columns);

Var sum(Var a);
Var mean(Var a);

// Forward returns `forward_value`; backward passes the gradient of `x`
// through unchanged (straight-through estimator).
Var straight_through(Var x, Tensor forward_value);

// ---- losses ---------------------------------------------------------------

// Mean over rows of -sum_c target[r,c] * log softmax(logits)[r,c].
// Each target row must sum to one within 1e-6 (ValidationError otherwise).
Var softmax_cross_entropy(Var logits, const Tensor& targets);
Var softmax_cross_entropy(Var logits, std::span<const int> classes);
// Sum over rows of weight[r] * CE_r (hard targets); rows with weight 0 are
// ignored. Useful for masked sequence batches.
Var weighted_cross_entropy_sum(Var logits, std::span<const int> classes,
                               std::span<const double> weights);
Var weighted_soft_cross_entropy_sum(Var logits, const Tensor& targets,
                                    std::span<const double> weights);

Var mse(Var pred, Var target);
Var mse(Var pred, const Tensor& target);
// Sum over rows of weight[r] * mean_c (pred - target)^2.
Var weighted_squared_error_sum(Var pred, const Tensor& target,
                               std::span<const double> weights);

}  // namespace cslab::nn
