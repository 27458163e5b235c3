#pragma once

#include <filesystem>
#include <nlohmann/json_fwd.hpp>
#include <set>
#include <tuple>
#include <vector>

#include "cslab/analysis/csm.hpp"
#include "cslab/envs/environment.hpp"
#include "cslab/rl/featurizer.hpp"

namespace cslab::planner {

struct Edge {
  int from = 0;
  int to = 0;
  int action = 0;
  int symbol = 0;
  double probability = 0.0;  // T^{o|a}_{s s'}, in (0, 1]
  double cost = 1.0;
  long long count = 0;
};

struct GraphOptions {
  double goal_threshold = 0.9;  // mean arrival reward
  bool log_probability_cost = false;  // cost -log p instead of 1
};

struct StateGraph {
  int num_nodes = 0;
  std::vector<std::vector<Edge>> out;  // per node, sorted by (action, symbol, to)
  std::set<int> goals;
  std::vector<double> arrival_reward;  // mean reward on entering each node; 0 if never entered
  // (state, action, symbol) triples with more than one successor.
  std::vector<std::tuple<int, int, int>> nonunifilar;

  std::size_t edge_count() const;
};

// One edge per occupied (s, a, o, s') entry of the machine. Goals are states
// whose mean arrival reward is at least the threshold. Throws PlanningError
// when no state qualifies.
StateGraph build_graph(const analysis::EmpiricalCsm& csm, const GraphOptions& options = {});

struct Plan {
  int start = 0;
  std::vector<Edge> edges;
  double cost = 0.0;
  double success_probability = 1.0;

  std::vector<int> nodes() const;
};

// Cheapest path from `start` to any goal; among equal-cost choices the
// smallest (action, symbol, successor) label wins at every step. With
// allow_empty false a start that is already a goal still needs at least one
// edge. Throws PlanningError for an unknown start or when no goal is reachable.
Plan dijkstra(const StateGraph& graph, int start, bool allow_empty = true);

struct ExecutionOptions {
  int max_retries = 10;  // replans that do not shorten the remaining cost, per goal visit
};

struct ExecutionOutcome {
  double total_reward = 0.0;
  int steps = 0;
  double metric = 0.0;  // episode reward (toy) or reward per step (gridworld)
  int replans = 0;
  int goals_reached = 0;
};

// Runs one episode following plans over the graph. The featurizer's ids are
// the graph's nodes. After every step the observed node is compared with the
// planned edge; on a deviation the agent replans from where it is. Throws
// PlanningError when the current node is unknown, no goal is reachable, or
// the retry budget is exhausted.
ExecutionOutcome execute_plan(envs::Environment& env, rl::Featurizer& featurizer, const StateGraph& graph,
                              std::uint64_t episode_seed, const ExecutionOptions& options = {});

nlohmann::json plan_to_json(const Plan& plan);
nlohmann::json graph_to_json(const StateGraph& graph);

}  // namespace cslab::planner
