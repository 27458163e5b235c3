#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "cslab/common/errors.hpp"
#include "cslab/envs/gridworld.hpp"
#include "cslab/envs/toy_process.hpp"
#include "cslab/envs/trajectory.hpp"

using namespace cslab;
using namespace cslab::envs;

namespace {

ToyProcessConfig toy(int n = 2, int k = 2, double p = 0.75) {
  ToyProcessConfig c;
  c.alphabet_size = n;
  c.memory = k;
  c.p = p;
  return c;
}

GridLayout layout_file(const std::string& name) {
  return GridLayout::load(std::string(CSLAB_SOURCE_DIR) + "/layouts/" + name);
}

// Expected episode reward of a fixed window policy, by pushing the exact state
// distribution forward step by step.
double forward_expected_reward(const ToyProcessConfig& c, int (*policy)(int oldest, int n)) {
  const int S = int(c.state_count());
  std::vector<double> dist(std::size_t(S), 0.0);
  dist[0] = 1.0;
  double total = 0.0;
  for (int t = 0; t < c.episode_length; ++t) {
    std::vector<double> next(std::size_t(S), 0.0);
    for (int s = 0; s < S; ++s) {
      if (dist[std::size_t(s)] == 0.0) continue;
      const int oldest = toy_window_of_state(s, c).front();
      const int a = policy(oldest, c.alphabet_size);
      for (int o = 0; o < c.alphabet_size; ++o) {
        const double pr = dist[std::size_t(s)] * toy_emission_probability(o, oldest, a, c);
        if (o == 1) total += pr;
        next[std::size_t(toy_successor_state(s, o, c))] += pr;
      }
    }
    dist = next;
  }
  return total;
}

int rule_policy(int oldest, int n) {
  if (oldest == 1) return 0;
  if ((oldest + 1) % n == 1) return 1;
  return 0;
}

std::map<int, double> symbol_frequencies(std::uint64_t seed, bool random_policy) {
  ToyProcessConfig c = toy();
  c.episode_length = 100000;
  ToyProcess env(c);
  env.reset(seed);
  Rng rng(seed + 1);
  std::uniform_int_distribution<int> coin(0, 1);
  std::map<int, double> freq;
  while (!env.done()) {
    const int a = random_policy ? coin(rng) : rule_policy(env.oldest(), 2);
    freq[symbol_of(env.step(a).observation)] += 1.0 / c.episode_length;
  }
  return freq;
}

}  // namespace

// ---- toy process -------------------------------------------------------------

TEST(ToyProcess, ResetPadsWithZeroAndIsDeterministic) {
  ToyProcess a(toy()), b(toy());
  EXPECT_EQ(symbol_of(a.reset(5)), 0);
  EXPECT_EQ(a.window(), (std::deque<int>{0, 0, 0}));
  EXPECT_EQ(a.ground_truth_state(), 0);
  b.reset(5);
  for (int t = 0; t < 100; ++t) {
    const Step x = a.step(t % 2), y = b.step(t % 2);
    EXPECT_EQ(x.observation, y.observation);
  }
  EXPECT_TRUE(a.done());
  EXPECT_THROW(a.step(0), UsageError);
}

TEST(ToyProcess, ConfigValidation) {
  EXPECT_THROW(ToyProcess(toy(2, 2, 0.5)), ConfigError);
  EXPECT_THROW(ToyProcess(toy(2, 2, 1.0)), ConfigError);
  EXPECT_THROW(ToyProcess(toy(1, 2, 0.9)), ConfigError);
  EXPECT_THROW(ToyProcess(toy(2, 0, 0.9)), ConfigError);
  ToyProcess env(toy());
  EXPECT_THROW(env.step(2), UsageError);
}

TEST(ToyProcess, DeterministicLimit) {
  const ToyProcessConfig c = toy(2, 2, 1.0 - 1e-12);
  ToyProcess env(c);
  env.reset(1);
  ASSERT_EQ(env.oldest(), 0);
  const Step s = env.step(1);
  EXPECT_EQ(symbol_of(s.observation), 1);
  EXPECT_DOUBLE_EQ(s.reward, 1.0);
  env.reset(2);
  const Step z = env.step(0);
  EXPECT_EQ(symbol_of(z.observation), 0);
  EXPECT_DOUBLE_EQ(z.reward, 0.0);
}

TEST(ToyProcess, EmissionFrequencyMatchesP) {
  ToyProcessConfig c = toy();
  c.episode_length = 100000;
  ToyProcess env(c);
  env.reset(11);
  int hits = 0;
  while (!env.done()) {
    const int target = env.oldest();
    hits += symbol_of(env.step(0).observation) == target ? 1 : 0;
  }
  EXPECT_NEAR(hits / 1e5, 0.75, 0.01);
}

TEST(ToyProcess, EmissionProbabilitiesNormalize) {
  for (int n : {2, 3, 5}) {
    const ToyProcessConfig c = toy(n, 2, 0.8);
    for (int oldest = 0; oldest < n; ++oldest) {
      for (int a = 0; a < 2; ++a) {
        double total = 0.0;
        for (int o = 0; o < n; ++o) total += toy_emission_probability(o, oldest, a, c);
        EXPECT_NEAR(total, 1.0, 1e-12);
      }
    }
  }
}

TEST(ToyProcess, GaussianZeroNoise) {
  ToyProcessConfig c = toy();
  c.obs_mode = ToyObsMode::kGaussian;
  c.gaussian_noise = 0.0;
  Rng rng(0);
  EXPECT_EQ(render_gaussian(1, c, rng), (std::vector<double>{0, 4, 0, 4}));
  EXPECT_EQ(render_gaussian(0, c, rng), (std::vector<double>{4, 0, 4, 0}));
  ToyProcess env(c);
  EXPECT_EQ(env.observation_spec(), (ObservationSpec{ObservationSpec::Kind::kReal, 4}));
}

TEST(ToyProcess, GaussianMonteCarloMean) {
  ToyProcessConfig c = toy(3, 2, 0.8);
  c.obs_mode = ToyObsMode::kGaussian;
  Rng rng(3);
  for (int sym = 0; sym < 3; ++sym) {
    std::vector<double> mean(6, 0.0);
    for (int i = 0; i < 10000; ++i) {
      const auto v = render_gaussian(sym, c, rng);
      for (std::size_t j = 0; j < v.size(); ++j) mean[j] += v[j] / 10000.0;
    }
    for (int j = 0; j < 6; ++j) {
      EXPECT_NEAR(mean[std::size_t(j)], j % 3 == sym ? 4.0 : 0.0, 0.05) << "slot " << j;
    }
  }
}

TEST(ToyProcess, CausalStateEncoding) {
  const ToyProcessConfig c = toy();
  EXPECT_EQ(toy_causal_state(std::vector<int>{0, 0, 0}, c), 0);
  EXPECT_EQ(toy_causal_state(std::vector<int>{1, 1, 0, 1}, c), 5);
  EXPECT_EQ(toy_causal_state(std::vector<int>{1}, c), 1);
  EXPECT_EQ(toy_causal_state(std::vector<int>{}, c), 0);
  EXPECT_EQ(toy_window_of_state(5, c), (std::vector<int>{1, 0, 1}));
  for (int s = 0; s < 8; ++s) EXPECT_EQ(toy_causal_state(toy_window_of_state(s, c), c), s);
}

TEST(ToyProcess, ReachableStateCount) {
  ToyProcessConfig c = toy();
  c.episode_length = 5000;
  ToyProcess env(c);
  env.reset(9);
  Rng rng(1);
  std::set<int> seen{env.ground_truth_state()};
  while (!env.done()) {
    env.step(int(rng() % 2));
    seen.insert(env.ground_truth_state());
  }
  EXPECT_EQ(seen.size(), 8u);
  EXPECT_EQ(env.num_ground_truth_states(), 8);
}

TEST(ToyProcess, OracleStatesAreUnifilar) {
  // Next state is a function of (state, emitted symbol); the action only
  // changes the emission probabilities.
  ToyProcessConfig c = toy(3, 2, 0.6);
  c.episode_length = 20000;
  ToyProcess env(c);
  env.reset(4);
  Rng rng(2);
  std::map<std::tuple<int, int, int>, std::set<int>> successors;
  while (!env.done()) {
    const int s = env.ground_truth_state();
    const int a = int(rng() % 2);
    const int o = symbol_of(env.step(a).observation);
    successors[{s, a, o}].insert(env.ground_truth_state());
  }
  EXPECT_EQ(successors.size(), 27u * 2u * 3u);  // every (s, a, o) is visited
  for (const auto& [key, next] : successors) {
    ASSERT_EQ(next.size(), 1u);
    EXPECT_EQ(*next.begin(), toy_successor_state(std::get<0>(key), std::get<2>(key), c));
  }
}

TEST(ToyProcess, StationaryFrequenciesAgreeAcrossSeeds) {
  for (bool random_policy : {true, false}) {
    const auto f1 = symbol_frequencies(100, random_policy);
    const auto f2 = symbol_frequencies(200, random_policy);
    for (int s = 0; s < 2; ++s) {
      EXPECT_NEAR(f1.at(s), f2.at(s), 0.01) << "symbol " << s;
    }
  }
}

TEST(ToyOracle, RulePolicyAndPerStepReward) {
  const ToyProcessConfig c = toy();
  const ToySolution sol = solve_toy(c);
  ToyProcess env(c);
  env.reset(0);
  for (int t = 0; t < c.episode_length; ++t) {
    EXPECT_EQ(toy_optimal_policy(env, sol), env.oldest() == 1 ? 0 : 1);
    env.step(toy_optimal_policy(env, sol));
  }
  EXPECT_NEAR(sol.episode_reward, 75.0, 1e-9);
  EXPECT_NEAR(forward_expected_reward(c, rule_policy), 75.0, 1e-9);

  ToyProcessConfig longer = c;
  longer.episode_length = 100000;
  ToyProcess run(longer);
  run.reset(8);
  double reward = 0.0;
  while (!run.done()) reward += run.step(rule_policy(run.oldest(), 2)).reward;
  EXPECT_NEAR(reward / 1e5, 0.75, 0.01);
}

TEST(ToyOracle, BeatsMyopicRuleForLargerAlphabet) {
  // With |O| > 2 the choice of action also steers future oldest symbols, so
  // the one-step rule is a lower bound, and the oracle's own table must
  // reproduce its value when pushed forward.
  for (int n : {3, 4}) {
    const ToyProcessConfig c = toy(n, 2, 0.7);
    const ToySolution sol = solve_toy(c);
    EXPECT_GT(sol.episode_reward, forward_expected_reward(c, rule_policy) + 1.0) << n;

    const int S = int(c.state_count());
    std::vector<double> dist(std::size_t(S), 0.0);
    dist[0] = 1.0;
    double total = 0.0;
    for (int t = 0; t < c.episode_length; ++t) {
      std::vector<double> next(std::size_t(S), 0.0);
      for (int s = 0; s < S; ++s) {
        const int oldest = toy_window_of_state(s, c).front();
        const int a = sol.action[std::size_t(t)][std::size_t(s)];
        for (int o = 0; o < n; ++o) {
          const double pr = dist[std::size_t(s)] * toy_emission_probability(o, oldest, a, c);
          total += o == 1 ? pr : 0.0;
          next[std::size_t(toy_successor_state(s, o, c))] += pr;
        }
      }
      dist = next;
    }
    EXPECT_NEAR(sol.episode_reward, total, 1e-9) << n;
  }
}

namespace {

// Expectimax over explicit symbol histories; exponential, short horizons only.
double expectimax(std::vector<int>& history, int steps_left, const ToyProcessConfig& c) {
  if (steps_left == 0) return 0.0;
  const int oldest =
      history.size() >= std::size_t(c.window_length()) ? history[history.size() - std::size_t(c.window_length())] : 0;
  double best = 0.0;
  for (int a = 0; a < 2; ++a) {
    double q = 0.0;
    for (int o = 0; o < c.alphabet_size; ++o) {
      history.push_back(o);
      q += toy_emission_probability(o, oldest, a, c) * ((o == 1 ? 1.0 : 0.0) + expectimax(history, steps_left - 1, c));
      history.pop_back();
    }
    best = std::max(best, q);
  }
  return best;
}

}  // namespace

TEST(ToyOracle, MatchesExpectimaxOnShortEpisodes) {
  for (int n : {2, 3}) {
    for (int k : {1, 2}) {
      ToyProcessConfig c = toy(n, k, 0.65);
      c.episode_length = 7;
      std::vector<int> history(std::size_t(k + 1), 0);
      EXPECT_NEAR(optimal_expected_reward(c), expectimax(history, c.episode_length, c), 1e-12)
          << n << " " << k;
    }
  }
}

TEST(ToyOracle, Limits) {
  const double near_one = optimal_expected_reward(toy(2, 2, 1.0 - 1e-9));
  EXPECT_LE(near_one, 100.0);
  EXPECT_GE(near_one, 100.0 - 3.0);
  EXPECT_NEAR(optimal_expected_reward(toy(2, 2, 0.5 + 1e-9)), 50.0, 1e-6);
  EXPECT_NEAR(optimal_expected_reward(toy(4, 1, 0.25 + 1e-9)), 25.0, 1e-6);
}

TEST(ToyOracle, RefusesHugeStateSpaces) {
  EXPECT_THROW(solve_toy(toy(10, 6, 0.5)), ConfigError);
  EXPECT_EQ(toy(10, 6, 0.5).state_count(1'000'000), -1);
  EXPECT_EQ(toy(10, 5, 0.5).state_count(1'000'000), 1'000'000);
}

// ---- gridworld ---------------------------------------------------------------

TEST(Gridworld, ShippedLayoutsParse) {
  const GridLayout l1 = layout_file("layout1.txt");
  EXPECT_EQ(l1.width, 12);
  EXPECT_EQ(l1.height, 3);
  EXPECT_EQ(l1.start, (Cell{1, 1}));
  EXPECT_EQ(l1.key, (Cell{6, 1}));
  EXPECT_EQ(l1.door, (Cell{10, 1}));
  EXPECT_EQ(l1.floor_count(), 10);
  EXPECT_EQ(layout_file("layout2.txt").to_text(), generate_maze(3, 3, 7).to_text());
  EXPECT_EQ(layout_file("layout3.txt").to_text(), generate_maze(4, 4, 11).to_text());
}

TEST(Gridworld, WallKeepsPosition) {
  GridWorld env({layout_file("layout1.txt")});
  env.reset(0);
  const Step s = env.step(kUp);
  EXPECT_EQ(env.position(), (Cell{1, 1}));
  EXPECT_DOUBLE_EQ(s.reward, -0.1);
  env.step(kLeft);
  EXPECT_EQ(env.position(), (Cell{1, 1}));
}

TEST(Gridworld, DoorWithoutKeyIsAWall) {
  const GridLayout g = GridLayout::parse(
      "#####\n"
      "#SDK#\n"
      "#...#\n"
      "#####\n");
  GridWorld env({g});
  env.reset(0);
  env.step(kRight);
  EXPECT_EQ(env.position(), (Cell{1, 1}));
  EXPECT_FALSE(env.done());
  // Around the bottom to the key, then back through the door.
  for (int a : {kDown, kRight, kRight}) env.step(a);
  const Step k = env.step(kUp);
  EXPECT_TRUE(env.has_key());
  EXPECT_DOUBLE_EQ(k.reward, 0.4);
  const Step d = env.step(kLeft);
  EXPECT_TRUE(d.done);
  EXPECT_FALSE(d.truncated);
  EXPECT_DOUBLE_EQ(d.reward, 0.9);
  EXPECT_THROW(env.step(kLeft), UsageError);
}

TEST(Gridworld, KeyRewardOnlyOnce) {
  GridWorld env({layout_file("layout1.txt")});
  env.reset(0);
  double total = 0.0;
  for (int i = 0; i < 5; ++i) total += env.step(kRight).reward;
  EXPECT_TRUE(env.has_key());
  total += env.step(kLeft).reward + env.step(kRight).reward;
  EXPECT_NEAR(total, -0.7 + 0.5, 1e-12);
}

TEST(Gridworld, StepLimitTruncates) {
  GridWorldConfig c{layout_file("layout1.txt")};
  c.step_limit = 3;
  GridWorld env(c);
  env.reset(0);
  env.step(kLeft);
  env.step(kLeft);
  const Step s = env.step(kLeft);
  EXPECT_TRUE(s.done);
  EXPECT_TRUE(s.truncated);
}

TEST(Gridworld, OptimalRewardMatchesBreadthFirstPath) {
  for (const char* name : {"layout1.txt", "layout2.txt", "layout3.txt"}) {
    const GridLayout g = layout_file(name);
    const int L = grid_distance(g, g.start, g.key, false) + grid_distance(g, g.key, g.door, true);
    GridWorldConfig c{g};
    const GridOptimum opt = solve_grid(c);
    EXPECT_EQ(opt.steps, L) << name;
    EXPECT_NEAR(opt.episode_reward, 1.5 - 0.1 * L, 1e-9) << name;
    EXPECT_NEAR(opt.reward_per_step, (1.5 - 0.1 * L) / L, 1e-12) << name;
    // Replaying the plan in the environment collects the same reward.
    GridWorld env(c);
    env.reset(0);
    double total = 0.0;
    for (int a : opt.actions) total += env.step(a).reward;
    EXPECT_TRUE(env.passed_door()) << name;
    EXPECT_NEAR(total, opt.episode_reward, 1e-9) << name;
  }
  EXPECT_EQ(solve_grid({layout_file("layout1.txt")}).steps, 9);
}

TEST(Gridworld, Observations) {
  const GridLayout g = layout_file("layout1.txt");
  EXPECT_EQ(grid_observe(g, {3, 1}, GridObsMode::kLowDisc), Observation(1 * 12 + 3));
  EXPECT_EQ(grid_observe(g, {3, 1}, GridObsMode::kLowCont), Observation(std::vector<double>{3, 1}));
  // up, down, left, right
  EXPECT_EQ(grid_observe(g, {3, 1}, GridObsMode::kEgoCont),
            Observation(std::vector<double>{1, 1, 3, 8}));
  const GridLayout open = GridLayout::parse(
      "S.....\n"
      "......\n"
      "......\n"
      "......\n"
      "......\n"
      "...K.D\n");
  EXPECT_EQ(grid_observe(open, {3, 5}, GridObsMode::kLowCont),
            Observation(std::vector<double>{3.0, 5.0}));
  GridWorldConfig c{g, GridObsMode::kEgoCont};
  GridWorld env(c);
  EXPECT_EQ(env.observation_spec(), (ObservationSpec{ObservationSpec::Kind::kReal, 4}));
  EXPECT_EQ(GridWorld({g}).observation_spec(),
            (ObservationSpec{ObservationSpec::Kind::kCategorical, 36}));
}

TEST(Gridworld, KeyIsHiddenButInGroundTruth) {
  GridWorld a({layout_file("layout1.txt")});
  a.reset(0);
  for (int i = 0; i < 5; ++i) a.step(kRight);
  const int with_key_obs = symbol_of(a.step(kLeft).observation);
  const int with_key_state = a.ground_truth_state();
  GridWorld b({layout_file("layout1.txt")});
  b.reset(0);
  for (int i = 0; i < 4; ++i) b.step(kRight);
  EXPECT_EQ(b.position(), a.position());
  EXPECT_EQ(symbol_of(b.observe()), with_key_obs);
  EXPECT_NE(b.ground_truth_state(), with_key_state);
  EXPECT_EQ(b.num_ground_truth_states(), 20);
}

TEST(Gridworld, GroundTruthIdsAreDistinct) {
  const GridLayout g = layout_file("layout3.txt");
  std::set<int> ids;
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      const int f = g.floor_index({x, y});
      if (f < 0) continue;
      ids.insert(2 * f);
      ids.insert(2 * f + 1);
    }
  }
  EXPECT_EQ(int(ids.size()), 2 * g.floor_count());
  EXPECT_EQ(*ids.rbegin(), 2 * g.floor_count() - 1);
}

TEST(Gridworld, LayoutErrors) {
  EXPECT_THROW(GridLayout::parse(""), ConfigError);
  EXPECT_THROW(GridLayout::parse("S.K\n.D\n"), ConfigError);
  EXPECT_THROW(GridLayout::parse("S.KX.D\n"), ConfigError);
  EXPECT_THROW(GridLayout::parse("S.K..\n"), ConfigError);
  EXPECT_THROW(GridLayout::parse("S#K.D\n"), ConfigError);  // key walled off
  EXPECT_THROW(GridLayout::parse("SDK..\n"), ConfigError);  // key behind the door
  EXPECT_THROW(GridLayout::parse("S.K#D\n"), ConfigError);  // door walled off
  EXPECT_THROW(GridLayout::load("/nonexistent/layout.txt"), MissingArtifactError);
  EXPECT_NO_THROW(GridLayout::parse("S.K.D\r\n"));
}

TEST(Gridworld, GeneratedMazesAreValidAndRoundTrip) {
  int generated = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    GridLayout g;
    try {
      g = generate_maze(3, 4, seed);
    } catch (const ConfigError&) {
      continue;
    }
    ++generated;
    EXPECT_NO_THROW(g.validate());
    EXPECT_EQ(GridLayout::parse(g.to_text()).to_text(), g.to_text());
    // A perfect maze over rooms has (rooms) + (rooms - 1) floor cells.
    EXPECT_EQ(g.floor_count(), 12 + 11);
  }
  EXPECT_GT(generated, 20);
  EXPECT_EQ(generate_maze(4, 4, 3).to_text(), generate_maze(4, 4, 3).to_text());
}

// ---- trajectories ------------------------------------------------------------

TEST(Trajectory, RandomRolloutShape) {
  ToyProcess env(toy());
  const auto trajs = collect_random(env, 3, 42);
  ASSERT_EQ(trajs.size(), 3u);
  for (const auto& t : trajs) {
    EXPECT_EQ(t.length(), 101u);
    EXPECT_NO_THROW(t.validate());
    EXPECT_EQ(t.records.front().reward, 0.0);
    EXPECT_EQ(t.records.back().action, -1);
    double total = 0.0;
    for (std::size_t i = 1; i < t.records.size(); ++i) {
      total += symbol_of(t.records[i].observation) == 1 ? 1.0 : 0.0;
      EXPECT_EQ(t.records[i].true_state,
                toy_successor_state(t.records[i - 1].true_state, symbol_of(t.records[i].observation),
                                    env.config()));
    }
    EXPECT_DOUBLE_EQ(t.total_reward(), total);
  }
  EXPECT_NE(trajs[0].seed, trajs[1].seed);
  const auto again = collect_random(env, 3, 42);
  EXPECT_EQ(again[2].records.back().observation, trajs[2].records.back().observation);
}

TEST(Trajectory, JsonlRoundTrip) {
  ToyProcessConfig gc = toy();
  gc.obs_mode = ToyObsMode::kGaussian;
  std::vector<Trajectory> all = collect_random(ToyProcess(toy()), 2, 1);
  const auto gaussian = collect_random(ToyProcess(gc), 1, 1);
  all.insert(all.end(), gaussian.begin(), gaussian.end());
  std::stringstream ss;
  write_jsonl(ss, all);
  const auto back = read_jsonl(ss);
  ASSERT_EQ(back.size(), all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    ASSERT_EQ(back[i].length(), all[i].length());
    for (std::size_t t = 0; t < all[i].length(); ++t) {
      const auto& x = all[i].records[t];
      const auto& y = back[i].records[t];
      EXPECT_EQ(x.action, y.action);
      EXPECT_EQ(x.done, y.done);
      EXPECT_EQ(x.true_state, y.true_state);
      EXPECT_DOUBLE_EQ(x.reward, y.reward);
      EXPECT_EQ(x.observation, y.observation);
    }
  }
  std::stringstream line;
  write_jsonl(line, std::span(all).first(1));
  std::string first;
  std::getline(line, first);
  EXPECT_EQ(first, R"({"action":)" + std::to_string(all[0].records[0].action) +
                       R"(,"done":false,"obs":0,"reward":0.0,"state":0,"t":0})");
}

TEST(Trajectory, JsonlFileRoundTripAndErrors) {
  const auto dir = std::filesystem::temp_directory_path() / "cslab_envs_test";
  std::filesystem::create_directories(dir);
  const auto trajs = collect_random(GridWorld({layout_file("layout1.txt")}), 2, 5);
  save_jsonl(dir / "t.jsonl", trajs);
  EXPECT_EQ(load_jsonl(dir / "t.jsonl").size(), 2u);
  EXPECT_THROW(load_jsonl(dir / "missing.jsonl"), MissingArtifactError);

  auto bad = [](const std::string& text) {
    std::istringstream is(text);
    return read_jsonl(is);
  };
  EXPECT_THROW(bad(R"({"t":0,"obs":0,"action":1,"reward":0,"done":false})"), ValidationError);
  EXPECT_THROW(bad(R"({"t":0,"obs":0,"action":null,"reward":0,"done":false})"
                   "\n"
                   R"({"t":1,"obs":0,"action":null,"reward":0,"done":true})"),
               ValidationError);
  EXPECT_THROW(bad(R"({"t":0,"obs":0,"action":1,"reward":0,"done":true})"
                   "\n"
                   R"({"t":1,"obs":0,"action":null,"reward":0,"done":true})"),
               ValidationError);
  EXPECT_THROW(bad(R"({"t":1,"obs":0,"action":null,"reward":0,"done":true})"), ValidationError);
  EXPECT_THROW(bad("{not json"), ValidationError);
  EXPECT_EQ(bad(R"({"t":0,"obs":[1.5,2],"action":null,"reward":0,"done":true})").size(), 1u);
  std::filesystem::remove_all(dir);
}

TEST(Encoding, OneHotAndReal) {
  const ObservationSpec cat{ObservationSpec::Kind::kCategorical, 3};
  EXPECT_EQ(encode(Observation(2), cat), (std::vector<double>{0, 0, 1}));
  EXPECT_THROW(encode(Observation(3), cat), ValidationError);
  const ObservationSpec real{ObservationSpec::Kind::kReal, 2};
  EXPECT_EQ(encode(Observation(std::vector<double>{1, 2}), real), (std::vector<double>{1, 2}));
  EXPECT_THROW(encode(Observation(std::vector<double>{1}), real), ValidationError);
  EXPECT_THROW(symbol_of(Observation(std::vector<double>{1})), ValidationError);
}
