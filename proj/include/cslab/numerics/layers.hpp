#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cslab/common/errors.hpp"
#include "cslab/common/random.hpp"
#include "cslab/numerics/tape.hpp"

namespace cslab::nn {

// Non-const parameters are tracked; const parameters enter the tape frozen.
inline Var bind(Tape& t, Parameter& p) { return t.leaf(p); }
inline Var bind(Tape& t, const Parameter& p) { return t.frozen(p); }

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Parameter init_uniform(std::string name, std::size_t rows, std::size_t cols,
                       std::size_t fan_in, Rng& rng);

using ParamList = std::vector<Parameter*>;
using ConstParamList = std::vector<const Parameter*>;

struct Linear {
  Parameter weight;  // in x out
  Parameter bias;    // 1 x out

  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng);

  std::size_t in_dim() const { return weight.value.rows(); }
  std::size_t out_dim() const { return weight.value.cols(); }

  Var forward(Tape& t, Var x) { return apply(*this, t, x); }
  Var forward(Tape& t, Var x) const { return apply(*this, t, x); }

  template <class F>
  void for_each_parameter(F&& f) { f(weight); f(bias); }
  template <class F>
  void for_each_parameter(F&& f) const { f(weight); f(bias); }

 private:
  template <class Self>
  static Var apply(Self& self, Tape& t, Var x) {
    return add_bias(matmul(x, bind(t, self.weight)), bind(t, self.bias));
  }
};

// Fully connected stack with ReLU between layers; the last layer is linear
// unless `relu_output` is set.
struct Mlp {
  std::vector<Linear> layers;
  bool relu_output = false;

  Mlp() = default;
  // dims = {in, hidden..., out}
  Mlp(const std::string& name, std::span<const std::size_t> dims, bool relu_output,
      Rng& rng);

  std::size_t in_dim() const { return layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.back().out_dim(); }

  Var forward(Tape& t, Var x) { return apply(*this, t, x); }
  Var forward(Tape& t, Var x) const { return apply(*this, t, x); }

  template <class F>
  void for_each_parameter(F&& f) { for (auto& l : layers) l.for_each_parameter(f); }
  template <class F>
  void for_each_parameter(F&& f) const { for (const auto& l : layers) l.for_each_parameter(f); }

 private:
  template <class Self>
  static Var apply(Self& self, Tape& t, Var x) {
    for (std::size_t i = 0; i < self.layers.size(); ++i) {
      x = self.layers[i].forward(t, x);
      if (i + 1 < self.layers.size() || self.relu_output) x = relu(x);
    }
    return x;
  }
};

// Lookup table equivalent to a linear layer applied to one-hot inputs.
struct Embedding {
  Parameter table;  // count x dim

  Embedding() = default;
  Embedding(const std::string& name, std::size_t count, std::size_t dim, Rng& rng);

  Var forward(Tape& t, std::span<const int> ids) { return gather_rows(bind(t, table), ids); }
  Var forward(Tape& t, std::span<const int> ids) const {
    return gather_rows(bind(t, table), ids);
  }

  template <class F>
  void for_each_parameter(F&& f) { f(table); }
  template <class F>
  void for_each_parameter(F&& f) const { f(table); }
};

// z = s(x Wz + h Uz + bz), r = s(x Wr + h Ur + br),
// c = tanh(x Wh + (r * h) Uh + bh), h' = (1 - z) * h + z * c
struct GruCell {
  Parameter w_z, u_z, b_z;
  Parameter w_r, u_r, b_r;
  Parameter w_h, u_h, b_h;

  GruCell() = default;
  GruCell(const std::string& name, std::size_t input_dim, std::size_t hidden_dim, Rng& rng);

  std::size_t input_dim() const { return w_z.value.rows(); }
  std::size_t hidden_dim() const { return u_z.value.rows(); }

  Var forward(Tape& t, Var h, Var x) { return apply(*this, t, h, x); }
  Var forward(Tape& t, Var h, Var x) const { return apply(*this, t, h, x); }

  template <class F>
  void for_each_parameter(F&& f) {
    for (Parameter* p : {&w_z, &u_z, &b_z, &w_r, &u_r, &b_r, &w_h, &u_h, &b_h}) f(*p);
  }
  template <class F>
  void for_each_parameter(F&& f) const {
    for (const Parameter* p : {&w_z, &u_z, &b_z, &w_r, &u_r, &b_r, &w_h, &u_h, &b_h}) f(*p);
  }

 private:
  template <class Self>
  static Var apply(Self& self, Tape& t, Var h, Var x);
};

template <class Self>
Var GruCell::apply(Self& self, Tape& t, Var h, Var x) {
  if (h.cols() != self.hidden_dim() || x.cols() != self.input_dim() || h.rows() != x.rows()) {
    throw DimensionError("gru_step: h " + h.value().shape_string() + " x " +
                         x.value().shape_string() + " do not match the cell");
  }
  auto gate = [&](auto& w, auto& u, auto& b, Var hh) {
    return add_bias(add(matmul(x, bind(t, w)), matmul(hh, bind(t, u))), bind(t, b));
  };
  Var z = sigmoid(gate(self.w_z, self.u_z, self.b_z, h));
  Var r = sigmoid(gate(self.w_r, self.u_r, self.b_r, h));
  Var c = tanh(gate(self.w_h, self.u_h, self.b_h, mul(r, h)));
  // h' = h + z * (c - h)
  return add(h, mul(z, sub(c, h)));
}

template <class Module>
ParamList parameters_of(Module& m) {
  ParamList out;
  m.for_each_parameter([&](Parameter& p) { out.push_back(&p); });
  return out;
}

template <class Module>
ConstParamList parameters_of(const Module& m) {
  ConstParamList out;
  m.for_each_parameter([&](const Parameter& p) { out.push_back(&p); });
  return out;
}

// Order-sensitive hash of parameter names and values.
std::uint64_t parameter_hash(std::span<const Parameter* const> params);

}  // namespace cslab::nn
