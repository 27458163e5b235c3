#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "cslab/numerics/layers.hpp"
#include "cslab/rl/common.hpp"

namespace cslab::rl {

struct DqnConfig {
  std::size_t hidden_dim = 64;
  int episodes = 1000;
  int replay_capacity = 10000;
  int batch_size = 32;
  int target_sync = 500;       // environment steps
  int learning_starts = 1000;  // environment steps before the first update
  int train_every = 1;
  EpsilonSchedule epsilon;
  double gamma = 0.99;
  double learning_rate = 1e-3;
  double clip_norm = 10.0;  // <= 0 disables clipping
  std::uint64_t seed = 0;
  int eval_every = 50;
  int eval_episodes = 20;

  void validate() const;
};

void to_json(nlohmann::json& j, const DqnConfig& c);
void from_json(const nlohmann::json& j, DqnConfig& c);

// Two fully connected layers, ReLU between: in -> hidden -> actions.
class QNetwork {
 public:
  QNetwork() = default;
  QNetwork(std::size_t input_dim, std::size_t hidden_dim, int num_actions, Rng& rng);

  std::size_t input_dim() const { return mlp.in_dim(); }
  int num_actions() const { return int(mlp.out_dim()); }
  std::vector<double> values(std::span<const double> features) const;
  // Lowest index on ties.
  int greedy(std::span<const double> features) const;

  nn::Mlp mlp;
};

struct DqnResult {
  QNetwork q;
  std::vector<CurvePoint> curve;
};

// Experience replay, a target network synced every target_sync steps, squared
// TD loss and RMSprop. Throws TrainingError when the loss diverges.
DqnResult dqn_train(const envs::Environment& prototype, const Featurizer& featurizer, const DqnConfig& config);

class QNetworkPolicy : public Policy {
 public:
  explicit QNetworkPolicy(const QNetwork& q) : q_(&q) {}
  int act(const Featurizer& features) override { return q_->greedy(features.features()); }

 private:
  const QNetwork* q_;
};

void save_q_network(const std::filesystem::path& path, const QNetwork& q);
QNetwork load_q_network(const std::filesystem::path& path);

}  // namespace cslab::rl
