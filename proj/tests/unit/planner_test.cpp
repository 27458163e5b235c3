#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "cslab/analysis/labeling.hpp"
#include "cslab/common/errors.hpp"
#include "cslab/envs/gridworld.hpp"
#include "cslab/envs/toy_process.hpp"
#include "cslab/planner/planner.hpp"

using namespace cslab;
using namespace cslab::planner;
using analysis::LabeledTransition;

namespace {

analysis::EmpiricalCsm machine(const std::vector<LabeledTransition>& trs, int n) {
  return analysis::estimate_csm(trs, n);
}

envs::GridWorldConfig layout1() {
  envs::GridWorldConfig c;
  c.layout = envs::GridLayout::load(std::string(CSLAB_SOURCE_DIR) + "/layouts/layout1.txt");
  return c;
}

}  // namespace

TEST(Graph, CycleHasOneEdgePerEntry) {
  // 0 -> 1 -> 2 -> 0, reward 1 on entering 2.
  const auto csm = machine({{0, 0, 0, 1, 0.0, false}, {1, 0, 1, 2, 1.0, false}, {2, 0, 0, 0, 0.0, false}}, 3);
  const StateGraph g = build_graph(csm);
  EXPECT_EQ(g.num_nodes, 3);
  EXPECT_EQ(g.edge_count(), 3u);
  EXPECT_EQ(g.goals, (std::set<int>{2}));
  EXPECT_TRUE(g.nonunifilar.empty());
  for (const auto& out : g.out) {
    for (const Edge& e : out) {
      EXPECT_GT(e.probability, 0.0);
      EXPECT_LE(e.probability, 1.0);
    }
  }
  GraphOptions strict;
  strict.goal_threshold = 1.5;
  EXPECT_THROW(build_graph(csm, strict), PlanningError);
}

TEST(Graph, ReportsNonUnifilarTriples) {
  const auto csm = machine({{0, 1, 0, 1, 1.0, false}, {0, 1, 0, 2, 1.0, false}, {1, 0, 0, 0, 0.0, false}}, 3);
  const StateGraph g = build_graph(csm);
  ASSERT_EQ(g.nonunifilar.size(), 1u);
  EXPECT_EQ(g.nonunifilar[0], std::make_tuple(0, 1, 0));
  EXPECT_DOUBLE_EQ(g.out[0][0].probability, 0.5);
}

TEST(Dijkstra, ChainOfFive) {
  std::vector<LabeledTransition> trs;
  for (int s = 0; s < 4; ++s) trs.push_back({s, 0, 0, s + 1, s == 3 ? 1.0 : 0.0, false});
  const StateGraph g = build_graph(machine(trs, 5));
  const Plan p = dijkstra(g, 0);
  EXPECT_EQ(p.cost, 4.0);
  EXPECT_EQ(p.nodes(), (std::vector<int>{0, 1, 2, 3, 4}));
  EXPECT_EQ(p.success_probability, 1.0);
  // Consecutive edges are incident.
  for (std::size_t i = 1; i < p.edges.size(); ++i) EXPECT_EQ(p.edges[i - 1].to, p.edges[i].from);
  EXPECT_THROW(dijkstra(g, 4, false), PlanningError);  // the goal has no way out
  EXPECT_THROW(dijkstra(g, 7), PlanningError);
}

TEST(Dijkstra, StartAtGoal) {
  const StateGraph g = build_graph(machine({{0, 0, 0, 1, 1.0, false}, {1, 0, 0, 0, 0.0, false}}, 2));
  const Plan empty = dijkstra(g, 1);
  EXPECT_TRUE(empty.edges.empty());
  EXPECT_EQ(empty.cost, 0.0);
  EXPECT_EQ(dijkstra(g, 1, false).cost, 2.0);
}

TEST(Dijkstra, TiesPreferSmallestLabel) {
  // Two length-2 routes to goal 3: via action 1 (node 1) or action 0 (node 2).
  const StateGraph g = build_graph(machine({{0, 1, 0, 1, 0.0, false},
                                            {0, 0, 1, 2, 0.0, false},
                                            {1, 0, 0, 3, 1.0, false},
                                            {2, 0, 0, 3, 1.0, false}},
                                           4));
  const Plan p = dijkstra(g, 0);
  EXPECT_EQ(p.cost, 2.0);
  EXPECT_EQ(p.edges[0].action, 0);
  EXPECT_EQ(p.edges[0].to, 2);
}

TEST(Dijkstra, UnreachableGoal) {
  const StateGraph g = build_graph(machine({{0, 0, 0, 0, 0.0, false}, {1, 0, 0, 2, 1.0, false}}, 3));
  EXPECT_THROW(dijkstra(g, 0), PlanningError);
}

TEST(Dijkstra, LogProbabilityCostPrefersLikelyEdges) {
  // From 0, action 0 reaches the goal in one step 10% of the time; action 1
  // reaches it in two certain steps.
  std::vector<LabeledTransition> trs;
  for (int i = 0; i < 10; ++i) trs.push_back({0, 0, i == 0 ? 1 : 0, i == 0 ? 3 : 0, i == 0 ? 1.0 : 0.0, false});
  for (int i = 0; i < 10; ++i) {
    trs.push_back({0, 1, 0, 1, 0.0, false});
    trs.push_back({1, 0, 0, 3, 1.0, false});
  }
  const auto csm = machine(trs, 4);
  EXPECT_EQ(dijkstra(build_graph(csm), 0).edges.size(), 1u);
  GraphOptions o;
  o.log_probability_cost = true;
  const Plan p = dijkstra(build_graph(csm, o), 0);
  ASSERT_EQ(p.edges.size(), 2u);
  EXPECT_EQ(p.edges[0].action, 1);
  EXPECT_DOUBLE_EQ(p.success_probability, 1.0);
}

TEST(Layout1, OraclePlanMatchesBreadthFirstDistances) {
  const envs::GridWorldConfig cfg = layout1();
  const envs::GridWorld env(cfg);
  analysis::ObservationLabeler labeler;
  const auto data = envs::collect_random(env, 300, 4);
  const StateGraph g = build_graph(analysis::estimate_csm(analysis::oracle_transitions(data, labeler),
                                                          env.num_ground_truth_states()));
  // The only goal is standing in the doorway with the key.
  const auto& layout = cfg.layout;
  EXPECT_EQ(g.goals, (std::set<int>{2 * layout.floor_index(layout.door) + 1}));

  envs::GridWorld live(cfg);
  live.reset(0);
  const Plan p = dijkstra(g, live.ground_truth_state());
  const int expected = envs::grid_distance(layout, layout.start, layout.key, false) +
                       envs::grid_distance(layout, layout.key, layout.door, true);
  EXPECT_EQ(p.cost, double(expected));

  auto f = rl::make_ground_truth_featurizer(env.num_ground_truth_states());
  const ExecutionOutcome out = execute_plan(live, *f, g, 0);
  const envs::GridOptimum opt = envs::solve_grid(cfg);
  EXPECT_EQ(out.steps, opt.steps);
  EXPECT_EQ(out.replans, 0);
  EXPECT_EQ(out.goals_reached, 1);
  EXPECT_DOUBLE_EQ(out.metric, opt.reward_per_step);

  const nlohmann::json j = plan_to_json(p);
  EXPECT_EQ(j.at("nodes").size(), p.edges.size() + 1);
  EXPECT_EQ(j.at("cost").get<double>(), p.cost);
  EXPECT_EQ(j.at("edges")[0].at("from"), p.start);
  EXPECT_EQ(graph_to_json(g).at("edges").size(), g.edge_count());
}

TEST(Toy, StochasticEdgesForceReplanning) {
  const envs::ToyProcessConfig tc;
  envs::ToyProcess env(tc);
  analysis::ObservationLabeler labeler;
  const auto data = envs::collect_random(env, 200, 5);
  const auto csm = analysis::estimate_csm(analysis::oracle_transitions(data, labeler));
  // Unit costs cannot tell a 0.75 edge from a 0.25 edge; -log p can.
  GraphOptions o;
  o.log_probability_cost = true;
  const StateGraph g = build_graph(csm, o);
  EXPECT_EQ(g.goals.size(), 4u);  // windows ending in 1
  auto f = rl::make_ground_truth_featurizer(env.num_ground_truth_states());
  const ExecutionOutcome out = execute_plan(env, *f, g, 3);
  EXPECT_GT(out.replans, 0);
  EXPECT_EQ(out.steps, 100);
  // One-step plans toward a 1 follow the optimal rule.
  EXPECT_NEAR(out.metric, envs::optimal_expected_reward(tc), 10.0);
}
