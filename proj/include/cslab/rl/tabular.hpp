#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "cslab/rl/common.hpp"

namespace cslab::rl {

class QTable {
 public:
  QTable() = default;
  explicit QTable(int num_actions) : num_actions_(num_actions) {}

  int num_actions() const { return num_actions_; }
  std::size_t size() const { return values_.size(); }
  // Zero vector for unseen states.
  std::vector<double> values(int id) const;
  std::vector<double>& row(int id);
  // Lowest index on ties.
  int greedy(int id) const;
  const std::map<int, std::vector<double>>& entries() const { return values_; }

 private:
  int num_actions_ = 0;
  std::map<int, std::vector<double>> values_;
};

struct TabularConfig {
  int episodes = 1000;
  double alpha = 0.1;
  double gamma = 0.99;
  EpsilonSchedule epsilon;
  std::uint64_t seed = 0;
  int eval_every = 50;  // episodes; 0 disables intermediate evaluation
  int eval_episodes = 20;

  void validate() const;
};

void to_json(nlohmann::json& j, const TabularConfig& c);
void from_json(const nlohmann::json& j, TabularConfig& c);

struct TabularResult {
  QTable q;
  std::vector<CurvePoint> curve;
};

// Online epsilon-greedy Q-learning on featurizer ids. Bootstraps through
// time-limit truncation, not through terminal states.
TabularResult tabular_q_learning(const envs::Environment& prototype, const Featurizer& featurizer,
                                 const TabularConfig& config);

class QTablePolicy : public Policy {
 public:
  explicit QTablePolicy(const QTable& q) : q_(&q) {}
  int act(const Featurizer& features) override { return q_->greedy(features.id()); }

 private:
  const QTable* q_;
};

void save_qtable(const std::filesystem::path& path, const QTable& q);
QTable load_qtable(const std::filesystem::path& path);

}  // namespace cslab::rl
