#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cslab/envs/environment.hpp"

namespace cslab::envs {

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
};

// Plain-text layout: '#' wall, '.' floor, 'S' start, 'K' key, 'D' door.
struct GridLayout {
  int width = 0;
  int height = 0;
  std::vector<bool> walls;  // row-major, true = wall
  Cell start, key, door;

  static GridLayout parse(const std::string& text);
  static GridLayout load(const std::string& path);
  std::string to_text() const;

  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height; }
  bool is_wall(Cell c) const { return !in_bounds(c) || walls[std::size_t(c.y * width + c.x)]; }
  int cell_index(Cell c) const { return c.y * width + c.x; }
  // Row-major index among floor cells, -1 for walls.
  int floor_index(Cell c) const;
  int floor_count() const;
  // Throws ConfigError unless start/key/door are distinct floor cells with
  // key reachable from start (door closed) and door reachable from key.
  void validate() const;
};

// Breadth-first distance between floor cells; -1 when unreachable.
int grid_distance(const GridLayout& layout, Cell from, Cell to, bool door_open);

// Recursive-backtracker maze over cells_w x cells_h rooms. Start is the
// top-left room, key the room farthest from start, door the room farthest
// from the key that leaves the key reachable with the door closed.
GridLayout generate_maze(int cells_w, int cells_h, std::uint64_t seed);

enum class GridObsMode { kLowDisc, kLowCont, kEgoCont };

struct GridWorldConfig {
  GridLayout layout;
  GridObsMode obs_mode = GridObsMode::kLowDisc;
  int step_limit = 100;
  double step_reward = -0.1;
  double key_reward = 0.5;
  double door_reward = 1.0;

  void validate() const;
};

enum GridAction : int { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };

// Deterministic key-door gridworld. has_key is never observable.
class GridWorld final : public Environment {
 public:
  explicit GridWorld(GridWorldConfig config);

  Observation reset(std::uint64_t seed) override;
  Step step(int action) override;

  int num_actions() const override { return 4; }
  ObservationSpec observation_spec() const override;
  bool done() const override { return done_; }
  int episode_limit() const override { return config_.step_limit; }
  int ground_truth_state() const override;
  int num_ground_truth_states() const override { return 2 * config_.layout.floor_count(); }
  std::string kind() const override { return "gridworld"; }
  std::string descriptor() const override;
  std::unique_ptr<Environment> clone() const override;

  const GridWorldConfig& config() const { return config_; }
  Cell position() const { return pos_; }
  bool has_key() const { return has_key_; }
  int steps() const { return steps_; }
  bool passed_door() const { return passed_door_; }
  Observation observe() const;

 private:
  GridWorldConfig config_;
  Cell pos_;
  bool has_key_ = false;
  bool done_ = false;
  bool passed_door_ = false;
  int steps_ = 0;
};

Observation grid_observe(const GridLayout& layout, Cell pos, GridObsMode mode);

// Optimal behaviour from backward induction over (position, has_key) with the
// step limit as horizon.
struct GridOptimum {
  int steps = 0;
  double episode_reward = 0.0;
  double reward_per_step = 0.0;
  std::vector<int> actions;
};
GridOptimum solve_grid(const GridWorldConfig& config);

}  // namespace cslab::envs
