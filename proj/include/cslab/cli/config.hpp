#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "cslab/analysis/csm.hpp"
#include "cslab/discretizer/discretizer.hpp"
#include "cslab/envs/gridworld.hpp"
#include "cslab/envs/toy_process.hpp"
#include "cslab/planner/planner.hpp"
#include "cslab/rl/dqn.hpp"
#include "cslab/rl/drqn.hpp"
#include "cslab/rl/tabular.hpp"
#include "cslab/world_model/world_model.hpp"

namespace cslab::cli {

inline constexpr int kConfigVersion = 1;

struct EnvBlock {
  std::string kind = "toy";  // toy | gridworld
  envs::ToyProcessConfig toy;
  // Gridworld: a layout file or, when empty, a generated maze. Relative paths
  // resolve against the working directory, then the config file's directory,
  // and are stored absolute.
  std::string layout;
  int maze_width = 3;
  int maze_height = 3;
  std::uint64_t maze_seed = 0;
  envs::GridWorldConfig grid;  // layout filled in by make_environment
};

struct CollectBlock {
  int episodes = 1000;
  int heldout_episodes = 200;
};

struct AnalysisBlock {
  std::string labels = "learned";  // learned | oracle
  long long min_visits = 10;
  analysis::MergeOptions merge;
};

struct RlBlock {
  std::string method = "dqn";        // tabular | dqn | drqn
  std::string featurizer = "hidden";  // obs | history | hidden | discrete | gt
  int history_window = 0;             // 0: memory + 1 for the toy process, 1 otherwise
  bool merge_states = false;          // relabel discrete ids with the merged machine
  int final_eval_episodes = 100;
  rl::TabularConfig tabular;
  rl::DqnConfig dqn;
  rl::DrqnConfig drqn;
};

struct PlannerBlock {
  std::string states = "discrete";  // discrete | oracle
  planner::GraphOptions graph;
  planner::ExecutionOptions execution;
  int episodes = 10;
};

// Block "seed" fields are offsets: a stage's effective seed is derived from
// the pipeline seed, the stage name and the offset.
struct ExperimentConfig {
  int version = kConfigVersion;
  EnvBlock env;
  CollectBlock collect;
  wm::WorldModelConfig world_model;
  disc::DiscretizerConfig discretizer;
  AnalysisBlock analysis;
  RlBlock rl;
  PlannerBlock planner;
  std::vector<std::uint64_t> seeds{0};
  std::string output = "runs/default";
};

// Every field with its default.
nlohmann::json default_config_json();
// Strict: unknown keys, wrong types and invalid values throw ConfigError.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
// Fully resolved form; parse_config(resolved_json(c)) reproduces c.
nlohmann::json resolved_json(const ExperimentConfig& c);

// The gridworld configuration with its layout loaded or generated.
envs::GridWorldConfig grid_config(const ExperimentConfig& c);
std::unique_ptr<envs::Environment> make_environment(const ExperimentConfig& c);

}  // namespace cslab::cli
