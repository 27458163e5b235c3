#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "cslab/numerics/layers.hpp"
#include "cslab/rl/common.hpp"

namespace cslab::rl {

struct DrqnConfig {
  std::size_t hidden_dim = 64;
  int episodes = 1000;
  int replay_episodes = 200;    // capacity, whole episodes
  int batch_episodes = 4;
  int updates_per_episode = 4;
  int learning_starts = 10;     // episodes
  int target_sync = 50;         // gradient updates
  EpsilonSchedule epsilon;
  double gamma = 0.99;
  double learning_rate = 1e-3;
  double clip_norm = 10.0;
  std::uint64_t seed = 0;
  int eval_every = 50;
  int eval_episodes = 20;

  void validate() const;
};

void to_json(nlohmann::json& j, const DrqnConfig& c);
void from_json(const nlohmann::json& j, DrqnConfig& c);

// GRU over [features(o_t), one-hot(a_{t-1})] followed by a linear Q head. The
// previous-action slot `num_actions` marks the first step.
class RecurrentQNetwork {
 public:
  RecurrentQNetwork() = default;
  RecurrentQNetwork(std::size_t feature_dim, std::size_t hidden_dim, int num_actions, Rng& rng);

  std::size_t feature_dim() const { return gru.input_dim() - std::size_t(num_actions_) - 1; }
  std::size_t hidden_dim() const { return gru.hidden_dim(); }
  int num_actions() const { return num_actions_; }

  // Inputs for one step: features followed by the one-hot previous action.
  std::vector<double> step_input(std::span<const double> features, int prev_action) const;
  // One recurrent step for a single stream; returns Q values and advances h.
  std::vector<double> step(std::vector<double>& h, std::span<const double> input) const;

  nn::GruCell gru;
  nn::Linear head;

  template <class F>
  void for_each_parameter(F&& f) { gru.for_each_parameter(f); head.for_each_parameter(f); }
  template <class F>
  void for_each_parameter(F&& f) const { gru.for_each_parameter(f); head.for_each_parameter(f); }

 private:
  int num_actions_ = 0;
};

struct DrqnResult {
  RecurrentQNetwork q;
  std::vector<CurvePoint> curve;
};

// End-to-end recurrent Q-learning with sequential replay of whole episodes.
// Throws TrainingError when the loss diverges.
DrqnResult drqn_train(const envs::Environment& prototype, const Featurizer& featurizer, const DrqnConfig& config);

class RecurrentQPolicy : public Policy {
 public:
  explicit RecurrentQPolicy(const RecurrentQNetwork& q) : q_(&q) {}
  void begin_episode() override;
  int act(const Featurizer& features) override;

 private:
  const RecurrentQNetwork* q_;
  std::vector<double> h_;
  int prev_action_ = -1;
};

void save_recurrent_q_network(const std::filesystem::path& path, const RecurrentQNetwork& q);
RecurrentQNetwork load_recurrent_q_network(const std::filesystem::path& path);

}  // namespace cslab::rl
