#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cslab/envs/environment.hpp"

namespace cslab::envs {

// Record t holds o_t, the action a_t taken after seeing it (-1 on the final
// record), the reward received on arrival at o_t (0 at t = 0) and whether the
// episode ended at o_t.
struct TrajectoryRecord {
  Observation observation;
  int action = -1;
  double reward = 0.0;
  bool done = false;
  // Oracle state at o_t (serialized as the extra key "state").
  int true_state = -1;
};

struct Trajectory {
  std::vector<TrajectoryRecord> records;
  std::uint64_t seed = 0;
  std::string env;

  std::size_t length() const { return records.size(); }
  double total_reward() const;
  // Throws ValidationError unless done is set exactly on the last record and
  // every non-final record carries an action.
  void validate() const;
};

// Runs one episode of `env` to completion choosing actions uniformly.
Trajectory rollout_random(Environment& env, std::uint64_t episode_seed, std::uint64_t action_seed);
std::vector<Trajectory> collect_random(const Environment& prototype, int episodes,
                                       std::uint64_t master_seed);

// JSONL, one object per step: {"t", "obs", "action", "reward", "done"} plus
// "state" (oracle label). "action" is null on the final record. A new episode
// starts whenever t == 0.
void write_jsonl(std::ostream& os, std::span<const Trajectory> trajectories);
std::vector<Trajectory> read_jsonl(std::istream& is);
void save_jsonl(const std::filesystem::path& path, std::span<const Trajectory> trajectories);
std::vector<Trajectory> load_jsonl(const std::filesystem::path& path);

}  // namespace cslab::envs
