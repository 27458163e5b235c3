#include "cslab/numerics/layers.hpp"

#include <cmath>
#include <cstring>
#include <random>

namespace cslab::nn {

Parameter init_uniform(std::string name, std::size_t rows, std::size_t cols, std::size_t fan_in,
                       Rng& rng) {
  const double bound = 1.0 / std::sqrt(double(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Parameter p{std::move(name), Tensor::matrix(rows, cols), {}};
  for (double& v : p.value.values()) v = dist(rng);
  p.grad = Tensor::matrix(rows, cols);
  return p;
}

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng)
    : weight(init_uniform(name + ".weight", in, out, in, rng)),
      bias(init_uniform(name + ".bias", 1, out, in, rng)) {}

Mlp::Mlp(const std::string& name, std::span<const std::size_t> dims, bool relu_output_, Rng& rng)
    : relu_output(relu_output_) {
  if (dims.size() < 2) throw DimensionError("Mlp needs at least input and output dims");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    layers.emplace_back(name + "." + std::to_string(i), dims[i], dims[i + 1], rng);
  }
}

Embedding::Embedding(const std::string& name, std::size_t count, std::size_t dim, Rng& rng)
    : table(init_uniform(name + ".table", count, dim, 1, rng)) {}

GruCell::GruCell(const std::string& name, std::size_t input_dim, std::size_t hidden_dim,
                 Rng& rng)
    : w_z(init_uniform(name + ".w_z", input_dim, hidden_dim, input_dim, rng)),
      u_z(init_uniform(name + ".u_z", hidden_dim, hidden_dim, hidden_dim, rng)),
      b_z(init_uniform(name + ".b_z", 1, hidden_dim, hidden_dim, rng)),
      w_r(init_uniform(name + ".w_r", input_dim, hidden_dim, input_dim, rng)),
      u_r(init_uniform(name + ".u_r", hidden_dim, hidden_dim, hidden_dim, rng)),
      b_r(init_uniform(name + ".b_r", 1, hidden_dim, hidden_dim, rng)),
      w_h(init_uniform(name + ".w_h", input_dim, hidden_dim, input_dim, rng)),
      u_h(init_uniform(name + ".u_h", hidden_dim, hidden_dim, hidden_dim, rng)),
      b_h(init_uniform(name + ".b_h", 1, hidden_dim, hidden_dim, rng)) {}

std::uint64_t parameter_hash(std::span<const Parameter* const> params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const Parameter* p : params) {
    mix(p->name.data(), p->name.size());
    mix(p->value.values().data(), p->value.size() * sizeof(double));
  }
  return h;
}

}  // namespace cslab::nn
