#include "cslab/cli/config.hpp"

#include <fstream>

#include "cslab/common/errors.hpp"

namespace cslab::cli {

using nlohmann::json;

namespace {

std::string toy_mode_name(envs::ToyObsMode m) { return m == envs::ToyObsMode::kGaussian ? "gaussian" : "discrete"; }

envs::ToyObsMode parse_toy_mode(const std::string& s) {
  if (s == "discrete") return envs::ToyObsMode::kDiscrete;
  if (s == "gaussian") return envs::ToyObsMode::kGaussian;
  throw ConfigError("env.toy.obs_mode must be discrete or gaussian, got '" + s + "'");
}

std::string grid_mode_name(envs::GridObsMode m) {
  switch (m) {
    case envs::GridObsMode::kLowDisc: return "low_disc";
    case envs::GridObsMode::kLowCont: return "low_cont";
    case envs::GridObsMode::kEgoCont: return "ego_cont";
  }
  return "?";
}

envs::GridObsMode parse_grid_mode(const std::string& s) {
  if (s == "low_disc") return envs::GridObsMode::kLowDisc;
  if (s == "low_cont") return envs::GridObsMode::kLowCont;
  if (s == "ego_cont") return envs::GridObsMode::kEgoCont;
  throw ConfigError("env.grid.obs_mode must be low_disc, low_cont or ego_cont, got '" + s + "'");
}

// The world model's observation and action sizes come from the environment.
json world_model_json(const wm::WorldModelConfig& c) {
  json j = c;
  j.erase("obs_kind");
  j.erase("obs_size");
  j.erase("num_actions");
  return j;
}

// Reports every key of `user` that the schema does not know.
void check_keys(const json& user, const json& schema, const std::string& where, std::vector<std::string>& unknown) {
  if (!user.is_object()) return;
  for (const auto& [key, value] : user.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!schema.contains(key)) {
      unknown.push_back(path);
    } else if (schema.at(key).is_object()) {
      if (!value.is_object()) throw ConfigError("config: '" + path + "' must be an object");
      check_keys(value, schema.at(key), path, unknown);
    }
  }
}

void check_choice(const std::string& value, std::initializer_list<const char*> allowed, const std::string& name) {
  std::string list;
  for (const char* a : allowed) {
    if (value == a) return;
    list += list.empty() ? a : std::string(", ") + a;
  }
  throw ConfigError(name + " must be one of " + list + ", got '" + value + "'");
}

}  // namespace

json resolved_json(const ExperimentConfig& c) {
  const auto& t = c.env.toy;
  const auto& g = c.env.grid;
  json env{{"kind", c.env.kind},
           {"toy",
            {{"alphabet_size", t.alphabet_size},
             {"memory", t.memory},
             {"p", t.p},
             {"obs_mode", toy_mode_name(t.obs_mode)},
             {"episode_length", t.episode_length},
             {"gaussian_mean", t.gaussian_mean},
             {"gaussian_noise", t.gaussian_noise}}},
           {"grid",
            {{"layout", c.env.layout},
             {"maze_width", c.env.maze_width},
             {"maze_height", c.env.maze_height},
             {"maze_seed", c.env.maze_seed},
             {"obs_mode", grid_mode_name(g.obs_mode)},
             {"step_limit", g.step_limit},
             {"step_reward", g.step_reward},
             {"key_reward", g.key_reward},
             {"door_reward", g.door_reward}}}};
  json analysis{{"labels", c.analysis.labels},
                {"min_visits", c.analysis.min_visits},
                {"merge",
                 {{"tau", c.analysis.merge.tau},
                  {"min_visits", c.analysis.merge.min_visits},
                  {"delta", c.analysis.merge.delta}}}};
  json rl{{"method", c.rl.method},
          {"featurizer", c.rl.featurizer},
          {"history_window", c.rl.history_window},
          {"merge_states", c.rl.merge_states},
          {"final_eval_episodes", c.rl.final_eval_episodes},
          {"tabular", c.rl.tabular},
          {"dqn", c.rl.dqn},
          {"drqn", c.rl.drqn}};
  json plan{{"states", c.planner.states},
            {"goal_threshold", c.planner.graph.goal_threshold},
            {"log_probability_cost", c.planner.graph.log_probability_cost},
            {"max_retries", c.planner.execution.max_retries},
            {"episodes", c.planner.episodes}};
  return json{{"version", c.version},
              {"env", env},
              {"collect", {{"episodes", c.collect.episodes}, {"heldout_episodes", c.collect.heldout_episodes}}},
              {"world_model", world_model_json(c.world_model)},
              {"discretizer", c.discretizer},
              {"analysis", analysis},
              {"rl", rl},
              {"planner", plan},
              {"seeds", c.seeds},
              {"output", c.output}};
}

json default_config_json() { return resolved_json(ExperimentConfig{}); }

ExperimentConfig parse_config(const json& user, const std::filesystem::path& base_dir) {
  if (!user.is_object()) throw ConfigError("config: top level must be an object");
  const json schema = default_config_json();
  std::vector<std::string> unknown;
  check_keys(user, schema, "", unknown);
  if (!unknown.empty()) {
    std::string msg = "config: unknown key(s):";
    for (const auto& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }
  json j = schema;
  j.merge_patch(user);

  ExperimentConfig c;
  try {
    c.version = j.at("version").get<int>();
    if (c.version != kConfigVersion) {
      throw ConfigError("config: unsupported version " + std::to_string(c.version));
    }
    const json& env = j.at("env");
    c.env.kind = env.at("kind").get<std::string>();
    check_choice(c.env.kind, {"toy", "gridworld"}, "env.kind");
    const json& toy = env.at("toy");
    c.env.toy.alphabet_size = toy.at("alphabet_size").get<int>();
    c.env.toy.memory = toy.at("memory").get<int>();
    c.env.toy.p = toy.at("p").get<double>();
    c.env.toy.obs_mode = parse_toy_mode(toy.at("obs_mode").get<std::string>());
    c.env.toy.episode_length = toy.at("episode_length").get<int>();
    c.env.toy.gaussian_mean = toy.at("gaussian_mean").get<double>();
    c.env.toy.gaussian_noise = toy.at("gaussian_noise").get<double>();
    const json& grid = env.at("grid");
    c.env.layout = grid.at("layout").get<std::string>();
    c.env.maze_width = grid.at("maze_width").get<int>();
    c.env.maze_height = grid.at("maze_height").get<int>();
    c.env.maze_seed = grid.at("maze_seed").get<std::uint64_t>();
    c.env.grid.obs_mode = parse_grid_mode(grid.at("obs_mode").get<std::string>());
    c.env.grid.step_limit = grid.at("step_limit").get<int>();
    c.env.grid.step_reward = grid.at("step_reward").get<double>();
    c.env.grid.key_reward = grid.at("key_reward").get<double>();
    c.env.grid.door_reward = grid.at("door_reward").get<double>();

    c.collect.episodes = j.at("collect").at("episodes").get<int>();
    c.collect.heldout_episodes = j.at("collect").at("heldout_episodes").get<int>();
    if (c.collect.episodes < 0 || c.collect.heldout_episodes < 0) {
      throw ConfigError("collect: episode counts must be >= 0");
    }

    c.world_model = j.at("world_model").get<wm::WorldModelConfig>();
    c.discretizer = j.at("discretizer").get<disc::DiscretizerConfig>();

    const json& an = j.at("analysis");
    c.analysis.labels = an.at("labels").get<std::string>();
    check_choice(c.analysis.labels, {"learned", "oracle"}, "analysis.labels");
    c.analysis.min_visits = an.at("min_visits").get<long long>();
    c.analysis.merge.tau = an.at("merge").at("tau").get<double>();
    c.analysis.merge.min_visits = an.at("merge").at("min_visits").get<long long>();
    c.analysis.merge.delta = an.at("merge").at("delta").get<double>();
    if (c.analysis.merge.tau < 0.0) throw ConfigError("analysis.merge.tau must be >= 0");

    const json& rl = j.at("rl");
    c.rl.method = rl.at("method").get<std::string>();
    check_choice(c.rl.method, {"tabular", "dqn", "drqn"}, "rl.method");
    c.rl.featurizer = rl.at("featurizer").get<std::string>();
    rl::parse_feature(c.rl.featurizer);
    c.rl.history_window = rl.at("history_window").get<int>();
    if (c.rl.history_window < 0) throw ConfigError("rl.history_window must be >= 0");
    c.rl.merge_states = rl.at("merge_states").get<bool>();
    c.rl.final_eval_episodes = rl.at("final_eval_episodes").get<int>();
    if (c.rl.final_eval_episodes < 1) throw ConfigError("rl.final_eval_episodes must be >= 1");
    c.rl.tabular = rl.at("tabular").get<rl::TabularConfig>();
    c.rl.dqn = rl.at("dqn").get<rl::DqnConfig>();
    c.rl.drqn = rl.at("drqn").get<rl::DrqnConfig>();

    const json& pl = j.at("planner");
    c.planner.states = pl.at("states").get<std::string>();
    check_choice(c.planner.states, {"discrete", "oracle"}, "planner.states");
    c.planner.graph.goal_threshold = pl.at("goal_threshold").get<double>();
    c.planner.graph.log_probability_cost = pl.at("log_probability_cost").get<bool>();
    c.planner.execution.max_retries = pl.at("max_retries").get<int>();
    c.planner.episodes = pl.at("episodes").get<int>();
    if (c.planner.episodes < 1) throw ConfigError("planner.episodes must be >= 1");

    c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (c.seeds.empty()) throw ConfigError("seeds: at least one seed is required");
    c.output = j.at("output").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  if (!c.env.layout.empty()) {
    std::filesystem::path p = c.env.layout;
    if (p.is_relative() && !std::filesystem::exists(p) && !base_dir.empty()) p = base_dir / p;
    if (!std::filesystem::exists(p)) throw ConfigError("env.grid.layout: no such file " + c.env.layout);
    c.env.layout = std::filesystem::absolute(p).lexically_normal().string();
  }
  if (c.env.kind == "toy") c.env.toy.validate();
  c.rl.tabular.validate();
  c.rl.dqn.validate();
  c.rl.drqn.validate();
  // Sizes are checked again once the environment is known.
  auto probe = c.world_model;
  probe.obs.size = 1;
  probe.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return parse_config(j, path.parent_path());
}

envs::GridWorldConfig grid_config(const ExperimentConfig& c) {
  envs::GridWorldConfig g = c.env.grid;
  if (c.env.layout.empty()) {
    g.layout = envs::generate_maze(c.env.maze_width, c.env.maze_height, c.env.maze_seed);
  } else {
    g.layout = envs::GridLayout::load(c.env.layout);
  }
  g.validate();
  return g;
}

std::unique_ptr<envs::Environment> make_environment(const ExperimentConfig& c) {
  if (c.env.kind == "toy") return std::make_unique<envs::ToyProcess>(c.env.toy);
  return std::make_unique<envs::GridWorld>(grid_config(c));
}

}  // namespace cslab::cli
