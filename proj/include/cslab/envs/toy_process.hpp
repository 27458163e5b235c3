#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <span>
#include <vector>

#include "cslab/common/random.hpp"
#include "cslab/envs/environment.hpp"

namespace cslab::envs {

enum class ToyObsMode { kDiscrete, kGaussian };

struct ToyProcessConfig {
  int alphabet_size = 2;
  int memory = 2;
  double p = 0.75;
  ToyObsMode obs_mode = ToyObsMode::kDiscrete;
  int episode_length = 100;
  std::uint64_t seed = 0;
  // Gaussian rendering: active slot mean and per-entry noise deviation.
  double gaussian_mean = 4.0;
  double gaussian_noise = 1.0;

  int window_length() const { return memory + 1; }
  // alphabet_size ^ (memory + 1), or -1 when it exceeds `cap`.
  long long state_count(long long cap = 1'000'000'000LL) const;
  // Throws ConfigError.
  void validate() const;
};

// k-memory input-output process: the next symbol depends on the symbol k+1
// steps back (the oldest entry of the window) and the current action.
//   action 0 targets the oldest symbol, action 1 targets (oldest + 1) mod |O|;
//   the target is emitted with probability p, every other symbol with
//   (1 - p) / (|O| - 1). Reward is 1 when the emitted symbol is 1.
class ToyProcess final : public Environment {
 public:
  explicit ToyProcess(ToyProcessConfig config);

  Observation reset(std::uint64_t seed) override;
  Step step(int action) override;

  int num_actions() const override { return 2; }
  ObservationSpec observation_spec() const override;
  bool done() const override { return t_ >= config_.episode_length; }
  int episode_limit() const override { return config_.episode_length; }
  int ground_truth_state() const override;
  int num_ground_truth_states() const override;
  std::string kind() const override { return "toy"; }
  std::string descriptor() const override;
  std::unique_ptr<Environment> clone() const override;

  const ToyProcessConfig& config() const { return config_; }
  // Oldest to newest, length k+1.
  const std::deque<int>& window() const { return window_; }
  int oldest() const { return window_.front(); }
  int time() const { return t_; }

 private:
  Observation render(int symbol);

  ToyProcessConfig config_;
  std::deque<int> window_;
  int t_ = 0;
  Rng symbol_rng_;
  Rng noise_rng_;
};

int toy_target_symbol(int oldest, int action, int alphabet_size);
// P(next symbol = `symbol` | oldest, action).
double toy_emission_probability(int symbol, int oldest, int action, const ToyProcessConfig& config);

// Every one of the k blocks of size |O| encodes `symbol`: its slot gets mean
// `gaussian_mean`, all others 0, plus N(0, gaussian_noise^2) on every entry.
std::vector<double> render_gaussian(int symbol, const ToyProcessConfig& config, Rng& rng);

// Base-|O| encoding of the last k+1 observations (oldest most significant),
// left-padded with the symbol 0 when the history is shorter.
int toy_causal_state(std::span<const int> history, const ToyProcessConfig& config);
// Inverse of toy_causal_state: window oldest to newest.
std::vector<int> toy_window_of_state(int state, const ToyProcessConfig& config);
int toy_successor_state(int state, int emitted, const ToyProcessConfig& config);

// Exact finite-horizon solution of the toy decision process over the oracle
// causal states. value[t][s] is the optimal expected reward still to collect
// from time t in state s; action[t][s] an optimal action (ties -> 0).
struct ToySolution {
  std::vector<std::vector<double>> value;
  std::vector<std::vector<int>> action;
  double episode_reward = 0.0;  // from the padded start window
};
// Throws ConfigError when the state space exceeds 10^6.
ToySolution solve_toy(const ToyProcessConfig& config);
double optimal_expected_reward(const ToyProcessConfig& config);
int toy_optimal_policy(const ToyProcess& env, const ToySolution& solution);

}  // namespace cslab::envs
