#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <nlohmann/json_fwd.hpp>
#include <span>
#include <vector>

#include "cslab/envs/environment.hpp"
#include "cslab/rl/featurizer.hpp"

namespace cslab::rl {

// Linear annealing from `start` to `end` over the first `fraction` of training.
struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.05;
  double fraction = 0.5;

  double at(double progress) const;
  void validate() const;
};

void to_json(nlohmann::json& j, const EpsilonSchedule& e);
void from_json(const nlohmann::json& j, EpsilonSchedule& e);

// Greedy action selection used for evaluation.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual void begin_episode() {}
  // Called after the featurizer has seen the current observation.
  virtual int act(const Featurizer& features) = 0;
};

// Toy processes: episode reward. Gridworlds: reward per step.
double episode_metric(const envs::Environment& env, double total_reward, int steps);

struct EvalResult {
  std::vector<double> per_seed;  // mean metric over the episodes of each seed
  double mean = 0.0;
  double std = 0.0;  // sample std across seeds; 0 for one seed
};

EvalResult summarize(std::span<const double> values);

// Greedy rollouts: for every seed, n_episodes episodes with environment seeds
// derived from it.
EvalResult evaluate(Policy& policy, const envs::Environment& prototype, const Featurizer& featurizer,
                    int n_episodes, std::span<const std::uint64_t> seeds);

struct CurvePoint {
  long long step = 0;
  int episode = 0;
  double train_reward = 0.0;  // mean training metric since the previous point
  double eval_mean = 0.0;
  double eval_std = 0.0;
};

// CSV "step,episode,train_reward,eval_reward_mean,eval_reward_std,seed".
void write_learning_curve(const std::filesystem::path& path, std::span<const CurvePoint> curve,
                          std::uint64_t seed);

// Shared by the trainers: per-episode bookkeeping and periodic greedy
// evaluation into a learning curve.
class CurveRecorder {
 public:
  CurveRecorder(int eval_every, int eval_episodes, std::uint64_t seed);

  // Call after each training episode; evaluates when due (and after the last).
  void episode_done(int episode, int total_episodes, long long step, double metric, Policy& policy,
                    const envs::Environment& prototype, const Featurizer& featurizer);
  std::vector<CurvePoint> take() { return std::move(curve_); }

 private:
  int eval_every_;
  int eval_episodes_;
  std::uint64_t seed_;
  double metric_sum_ = 0.0;
  int metric_count_ = 0;
  std::vector<CurvePoint> curve_;
};

}  // namespace cslab::rl
