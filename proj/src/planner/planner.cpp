#include "cslab/planner/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <queue>

#include "cslab/common/errors.hpp"
#include "cslab/rl/common.hpp"

namespace cslab::planner {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Keeps -log(1) edges from having zero cost, so greedy path extraction cannot cycle.
constexpr double kMinCost = 1e-9;

bool label_less(const Edge& a, const Edge& b) {
  return std::tie(a.action, a.symbol, a.to) < std::tie(b.action, b.symbol, b.to);
}

bool same_cost(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(a)); }

}  // namespace

std::size_t StateGraph::edge_count() const {
  std::size_t n = 0;
  for (const auto& edges : out) n += edges.size();
  return n;
}

StateGraph build_graph(const analysis::EmpiricalCsm& csm, const GraphOptions& options) {
  StateGraph g;
  g.num_nodes = csm.num_states();
  g.out.resize(std::size_t(g.num_nodes));
  std::vector<double> reward_in(std::size_t(g.num_nodes), 0.0);
  std::vector<long long> count_in(std::size_t(g.num_nodes), 0);
  for (int s = 0; s < g.num_nodes; ++s) {
    for (int a = 0; a < csm.num_actions(); ++a) {
      const double total = double(csm.row_total(s, a));
      std::map<int, int> successors;  // symbol -> distinct next states
      for (const analysis::CsmEntry& e : csm.entries(s, a)) {
        if (e.count <= 0) continue;
        Edge edge;
        edge.from = s;
        edge.to = e.next_state;
        edge.action = a;
        edge.symbol = e.symbol;
        edge.count = e.count;
        edge.probability = double(e.count) / total;
        edge.cost = options.log_probability_cost ? std::max(kMinCost, -std::log(edge.probability)) : 1.0;
        g.out[std::size_t(s)].push_back(edge);
        reward_in[std::size_t(e.next_state)] += e.reward_sum;
        count_in[std::size_t(e.next_state)] += e.count;
        ++successors[e.symbol];
      }
      for (const auto& [symbol, n] : successors) {
        if (n > 1) g.nonunifilar.emplace_back(s, a, symbol);
      }
    }
    std::sort(g.out[std::size_t(s)].begin(), g.out[std::size_t(s)].end(), label_less);
  }
  g.arrival_reward.resize(std::size_t(g.num_nodes), 0.0);
  for (int s = 0; s < g.num_nodes; ++s) {
    if (count_in[std::size_t(s)] == 0) continue;
    g.arrival_reward[std::size_t(s)] = reward_in[std::size_t(s)] / double(count_in[std::size_t(s)]);
    if (g.arrival_reward[std::size_t(s)] >= options.goal_threshold - 1e-9) g.goals.insert(s);
  }
  if (g.goals.empty()) {
    throw PlanningError("planner: no state has mean arrival reward >= " + std::to_string(options.goal_threshold));
  }
  return g;
}

std::vector<int> Plan::nodes() const {
  std::vector<int> n{start};
  for (const Edge& e : edges) n.push_back(e.to);
  return n;
}

Plan dijkstra(const StateGraph& graph, int start, bool allow_empty) {
  if (start < 0 || start >= graph.num_nodes) {
    throw PlanningError("planner: start node " + std::to_string(start) + " is not in the graph");
  }
  // Distances to the goal set over reversed edges.
  std::vector<std::vector<const Edge*>> in(std::size_t(graph.num_nodes));
  for (const auto& edges : graph.out) {
    for (const Edge& e : edges) in[std::size_t(e.to)].push_back(&e);
  }
  std::vector<double> dist(std::size_t(graph.num_nodes), kInf);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  for (int g : graph.goals) {
    dist[std::size_t(g)] = 0.0;
    queue.emplace(0.0, g);
  }
  while (!queue.empty()) {
    const auto [d, v] = queue.top();
    queue.pop();
    if (d > dist[std::size_t(v)]) continue;
    for (const Edge* e : in[std::size_t(v)]) {
      const double nd = d + e->cost;
      if (nd < dist[std::size_t(e->from)]) {
        dist[std::size_t(e->from)] = nd;
        queue.emplace(nd, e->from);
      }
    }
  }

  // Cheapest first edge out of `node`, smallest label among ties.
  auto best_edge = [&](int node) -> const Edge* {
    const Edge* best = nullptr;
    double best_cost = kInf;
    for (const Edge& e : graph.out[std::size_t(node)]) {
      const double c = e.cost + dist[std::size_t(e.to)];
      if (c == kInf) continue;
      if (!best || (c < best_cost && !same_cost(c, best_cost))) {
        best = &e;
        best_cost = c;
      }
    }
    return best;
  };

  Plan plan;
  plan.start = start;
  int node = start;
  const bool at_goal = graph.goals.count(start) > 0;
  if (at_goal && allow_empty) return plan;
  if (!at_goal && dist[std::size_t(start)] == kInf) {
    throw PlanningError("planner: no goal reachable from node " + std::to_string(start));
  }
  do {
    const Edge* e = best_edge(node);
    if (!e) throw PlanningError("planner: no goal reachable from node " + std::to_string(node));
    plan.edges.push_back(*e);
    plan.cost += e->cost;
    plan.success_probability *= e->probability;
    node = e->to;
    if (plan.edges.size() > std::size_t(graph.num_nodes) + 1) throw PlanningError("planner: path extraction cycled");
  } while (!graph.goals.count(node));
  return plan;
}

ExecutionOutcome execute_plan(envs::Environment& env, rl::Featurizer& featurizer, const StateGraph& graph,
                              std::uint64_t episode_seed, const ExecutionOptions& options) {
  ExecutionOutcome out;
  featurizer.reset(env, env.reset(episode_seed));
  int node = featurizer.id();
  Plan plan = dijkstra(graph, node);
  std::size_t next = 0;
  double remaining = plan.cost;
  int retries = 0;
  while (!env.done()) {
    if (next == plan.edges.size()) {
      // At a goal with time left: head for the next one.
      plan = dijkstra(graph, node, false);
      next = 0;
      remaining = plan.cost;
    }
    const Edge& e = plan.edges[next];
    const envs::Step st = env.step(e.action);
    featurizer.update(env, e.action, st.observation);
    out.total_reward += st.reward;
    ++out.steps;
    node = featurizer.id();
    const bool symbol_ok = !std::holds_alternative<int>(st.observation) || envs::symbol_of(st.observation) == e.symbol;
    if (symbol_ok && node == e.to) {
      remaining -= e.cost;
      if (++next == plan.edges.size()) {
        ++out.goals_reached;
        retries = 0;
      }
      continue;
    }
    if (env.done()) break;
    ++out.replans;
    plan = dijkstra(graph, node);
    next = 0;
    if (plan.edges.empty()) {
      ++out.goals_reached;
      retries = 0;
    } else if (plan.cost >= remaining - 1e-9 && ++retries > options.max_retries) {
      throw PlanningError("planner: gave up after " + std::to_string(options.max_retries) +
                          " replans without progress");
    }
    remaining = plan.cost;
  }
  out.metric = rl::episode_metric(env, out.total_reward, out.steps);
  return out;
}

namespace {

json edge_to_json(const Edge& e) {
  return json{{"from", e.from},         {"to", e.to},     {"action", e.action},
              {"observation", e.symbol}, {"probability", e.probability},
              {"cost", e.cost},         {"count", e.count}};
}

}  // namespace

json plan_to_json(const Plan& plan) {
  json edges = json::array();
  for (const Edge& e : plan.edges) edges.push_back(edge_to_json(e));
  return json{{"start", plan.start},
              {"nodes", plan.nodes()},
              {"edges", std::move(edges)},
              {"cost", plan.cost},
              {"success_probability", plan.success_probability}};
}

json graph_to_json(const StateGraph& graph) {
  json edges = json::array();
  for (const auto& out : graph.out) {
    for (const Edge& e : out) edges.push_back(edge_to_json(e));
  }
  json nonunifilar = json::array();
  for (const auto& [s, a, o] : graph.nonunifilar) nonunifilar.push_back({{"state", s}, {"action", a}, {"observation", o}});
  return json{{"num_nodes", graph.num_nodes},
              {"goals", graph.goals},
              {"arrival_reward", graph.arrival_reward},
              {"edges", std::move(edges)},
              {"nonunifilar", std::move(nonunifilar)}};
}

}  // namespace cslab::planner
