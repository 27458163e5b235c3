#include "cslab/envs/gridworld.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <limits>
#include <queue>
#include <sstream>

#include "cslab/common/errors.hpp"
#include "cslab/common/random.hpp"

namespace cslab::envs {
namespace {

constexpr std::array<Cell, 4> kMoves = {Cell{0, -1}, Cell{0, 1}, Cell{-1, 0}, Cell{1, 0}};

Cell moved(Cell c, int action) {
  return {c.x + kMoves[std::size_t(action)].x, c.y + kMoves[std::size_t(action)].y};
}

// BFS distances from `from` over floor cells; the door is passable only when
// `door_open`.
std::vector<int> bfs(const GridLayout& layout, Cell from, bool door_open) {
  std::vector<int> dist(std::size_t(layout.width * layout.height), -1);
  if (layout.is_wall(from)) return dist;
  std::queue<Cell> q;
  dist[std::size_t(layout.cell_index(from))] = 0;
  q.push(from);
  while (!q.empty()) {
    const Cell c = q.front();
    q.pop();
    for (int a = 0; a < 4; ++a) {
      const Cell n = moved(c, a);
      if (layout.is_wall(n)) continue;
      if (!door_open && n == layout.door) continue;
      int& d = dist[std::size_t(layout.cell_index(n))];
      if (d >= 0) continue;
      d = dist[std::size_t(layout.cell_index(c))] + 1;
      q.push(n);
    }
  }
  return dist;
}

}  // namespace

// ---- layout -------------------------------------------------------------------

GridLayout GridLayout::parse(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream is(text);
  for (std::string line; std::getline(is, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty()) throw ConfigError("layout: empty grid");
  GridLayout g;
  g.height = int(lines.size());
  g.width = int(lines.front().size());
  g.walls.assign(std::size_t(g.width * g.height), false);
  int starts = 0, keys = 0, doors = 0;
  for (int y = 0; y < g.height; ++y) {
    if (int(lines[std::size_t(y)].size()) != g.width) {
      throw ConfigError("layout: row " + std::to_string(y) + " has a different width");
    }
    for (int x = 0; x < g.width; ++x) {
      const char ch = lines[std::size_t(y)][std::size_t(x)];
      switch (ch) {
        case '#': g.walls[std::size_t(y * g.width + x)] = true; break;
        case '.': break;
        case 'S': g.start = {x, y}; ++starts; break;
        case 'K': g.key = {x, y}; ++keys; break;
        case 'D': g.door = {x, y}; ++doors; break;
        default:
          throw ConfigError(std::string("layout: unknown character '") + ch + "'");
      }
    }
  }
  if (starts != 1 || keys != 1 || doors != 1) {
    throw ConfigError("layout: need exactly one each of S, K and D");
  }
  g.validate();
  return g;
}

GridLayout GridLayout::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw MissingArtifactError(path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

std::string GridLayout::to_text() const {
  std::string out;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Cell c{x, y};
      char ch = is_wall(c) ? '#' : '.';
      if (c == start) ch = 'S';
      else if (c == key) ch = 'K';
      else if (c == door) ch = 'D';
      out += ch;
    }
    out += '\n';
  }
  return out;
}

int GridLayout::floor_index(Cell c) const {
  if (is_wall(c)) return -1;
  int idx = 0;
  for (int i = 0; i < cell_index(c); ++i) idx += walls[std::size_t(i)] ? 0 : 1;
  return idx;
}

int GridLayout::floor_count() const {
  return int(std::count(walls.begin(), walls.end(), false));
}

void GridLayout::validate() const {
  for (Cell c : {start, key, door}) {
    if (is_wall(c)) throw ConfigError("layout: start, key and door must be floor cells");
  }
  if (start == key || key == door || start == door) {
    throw ConfigError("layout: start, key and door must be distinct");
  }
  if (grid_distance(*this, start, key, false) < 0) {
    throw ConfigError("layout: key is unreachable from start");
  }
  if (grid_distance(*this, key, door, true) < 0) {
    throw ConfigError("layout: door is unreachable from key");
  }
}

int grid_distance(const GridLayout& layout, Cell from, Cell to, bool door_open) {
  if (layout.is_wall(to)) return -1;
  return bfs(layout, from, door_open || to == layout.door)[std::size_t(layout.cell_index(to))];
}

GridLayout generate_maze(int cells_w, int cells_h, std::uint64_t seed) {
  if (cells_w < 2 || cells_h < 2) throw ConfigError("maze: need at least 2x2 rooms");
  GridLayout g;
  g.width = 2 * cells_w + 1;
  g.height = 2 * cells_h + 1;
  g.walls.assign(std::size_t(g.width * g.height), true);
  Rng rng = make_rng(seed, "maze");
  auto room = [](int cx, int cy) { return Cell{2 * cx + 1, 2 * cy + 1}; };
  std::vector<bool> visited(std::size_t(cells_w * cells_h), false);
  std::vector<Cell> stack = {{0, 0}};
  visited[0] = true;
  g.walls[std::size_t(g.cell_index(room(0, 0)))] = false;
  while (!stack.empty()) {
    const Cell c = stack.back();
    std::vector<int> options;
    for (int a = 0; a < 4; ++a) {
      const Cell n = moved(c, a);
      if (n.x >= 0 && n.y >= 0 && n.x < cells_w && n.y < cells_h &&
          !visited[std::size_t(n.y * cells_w + n.x)]) {
        options.push_back(a);
      }
    }
    if (options.empty()) {
      stack.pop_back();
      continue;
    }
    std::uniform_int_distribution<std::size_t> pick(0, options.size() - 1);
    const int a = options[pick(rng)];
    const Cell n = moved(c, a);
    visited[std::size_t(n.y * cells_w + n.x)] = true;
    const Cell rc = room(c.x, c.y), rn = room(n.x, n.y);
    g.walls[std::size_t(g.cell_index(rn))] = false;
    g.walls[std::size_t(g.cell_index({(rc.x + rn.x) / 2, (rc.y + rn.y) / 2}))] = false;
    stack.push_back(n);
  }
  std::vector<Cell> rooms;
  for (int cy = 0; cy < cells_h; ++cy) {
    for (int cx = 0; cx < cells_w; ++cx) rooms.push_back(room(cx, cy));
  }
  auto by_distance_from = [&](Cell from) {
    const auto dist = bfs(g, from, true);
    std::vector<Cell> order = rooms;
    std::stable_sort(order.begin(), order.end(), [&](Cell a, Cell b) {
      return dist[std::size_t(g.cell_index(a))] > dist[std::size_t(g.cell_index(b))];
    });
    return order;
  };
  g.start = room(0, 0);
  g.door = g.start;  // placeholder so the BFS treats every cell as open
  g.key = by_distance_from(g.start).front();
  // Door: farthest room from the key that does not cut the start-key route.
  bool placed = false;
  for (Cell candidate : by_distance_from(g.key)) {
    if (candidate == g.start || candidate == g.key) continue;
    g.door = candidate;
    if (grid_distance(g, g.start, g.key, false) >= 0) {
      placed = true;
      break;
    }
  }
  if (!placed) throw ConfigError("maze: every room lies on the start-key path; try another seed");
  g.validate();
  return g;
}

// ---- world ----------------------------------------------------------------------

void GridWorldConfig::validate() const {
  layout.validate();
  if (step_limit < 1) throw ConfigError("gridworld: step_limit must be >= 1");
}

GridWorld::GridWorld(GridWorldConfig config) : config_(std::move(config)) {
  config_.validate();
  reset(0);
}

ObservationSpec GridWorld::observation_spec() const {
  switch (config_.obs_mode) {
    case GridObsMode::kLowDisc:
      return {ObservationSpec::Kind::kCategorical, config_.layout.width * config_.layout.height};
    case GridObsMode::kLowCont:
      return {ObservationSpec::Kind::kReal, 2};
    case GridObsMode::kEgoCont:
      return {ObservationSpec::Kind::kReal, 4};
  }
  throw ConfigError("gridworld: unknown observation mode");
}

Observation grid_observe(const GridLayout& layout, Cell pos, GridObsMode mode) {
  switch (mode) {
    case GridObsMode::kLowDisc:
      return layout.cell_index(pos);
    case GridObsMode::kLowCont:
      return std::vector<double>{double(pos.x), double(pos.y)};
    case GridObsMode::kEgoCont: {
      std::vector<double> out;
      for (int a = 0; a < 4; ++a) {
        int d = 1;
        for (Cell c = moved(pos, a); !layout.is_wall(c); c = moved(c, a)) ++d;
        out.push_back(double(d));
      }
      return out;
    }
  }
  throw ConfigError("gridworld: unknown observation mode");
}

Observation GridWorld::observe() const { return grid_observe(config_.layout, pos_, config_.obs_mode); }

Observation GridWorld::reset(std::uint64_t) {
  pos_ = config_.layout.start;
  has_key_ = false;
  done_ = false;
  passed_door_ = false;
  steps_ = 0;
  return observe();
}

Step GridWorld::step(int action) {
  if (done_) throw UsageError("gridworld: step() after the episode ended");
  if (action < 0 || action > 3) throw UsageError("gridworld: action must be in [0, 4)");
  const GridLayout& g = config_.layout;
  Step s;
  s.reward = config_.step_reward;
  const Cell next = moved(pos_, action);
  if (!g.is_wall(next)) {
    if (next == g.door) {
      if (has_key_) {
        pos_ = next;
        passed_door_ = true;
        s.reward += config_.door_reward;
      }
    } else {
      pos_ = next;
      if (pos_ == g.key && !has_key_) {
        has_key_ = true;
        s.reward += config_.key_reward;
      }
    }
  }
  ++steps_;
  done_ = passed_door_ || steps_ >= config_.step_limit;
  s.observation = observe();
  s.done = done_;
  s.truncated = done_ && !passed_door_;
  return s;
}

int GridWorld::ground_truth_state() const {
  return 2 * config_.layout.floor_index(pos_) + (has_key_ ? 1 : 0);
}

std::string GridWorld::descriptor() const {
  std::ostringstream os;
  const char* mode = config_.obs_mode == GridObsMode::kLowDisc   ? "low-disc"
                     : config_.obs_mode == GridObsMode::kLowCont ? "low-cont"
                                                                 : "ego-cont";
  os << "gridworld(" << config_.layout.width << "x" << config_.layout.height << ",obs=" << mode
     << ",limit=" << config_.step_limit << ")";
  return os.str();
}

std::unique_ptr<Environment> GridWorld::clone() const { return std::make_unique<GridWorld>(*this); }

GridOptimum solve_grid(const GridWorldConfig& config) {
  const GridLayout& g = config.layout;
  const int n_states = 2 * g.width * g.height;  // (cell, key) including walls for simplicity
  auto index = [&](Cell c, bool key) { return 2 * g.cell_index(c) + (key ? 1 : 0); };
  const int horizon = config.step_limit;
  constexpr double kNeg = -std::numeric_limits<double>::infinity();
  // value[t][s]: best reward collectable with `horizon - t` steps left.
  std::vector<std::vector<double>> value(std::size_t(horizon + 1),
                                         std::vector<double>(std::size_t(n_states), 0.0));
  std::vector<std::vector<int>> best_action(std::size_t(horizon),
                                            std::vector<int>(std::size_t(n_states), 0));
  struct Transition {
    Cell pos;
    bool key;
    double reward;
    bool terminal;
  };
  auto transition = [&](Cell pos, bool key, int a) {
    Transition tr{pos, key, config.step_reward, false};
    const Cell next = moved(pos, a);
    if (g.is_wall(next)) return tr;
    if (next == g.door) {
      if (key) {
        tr.pos = next;
        tr.reward += config.door_reward;
        tr.terminal = true;
      }
      return tr;
    }
    tr.pos = next;
    if (next == g.key && !key) {
      tr.key = true;
      tr.reward += config.key_reward;
    }
    return tr;
  };
  for (int t = horizon - 1; t >= 0; --t) {
    for (int y = 0; y < g.height; ++y) {
      for (int x = 0; x < g.width; ++x) {
        const Cell c{x, y};
        if (g.is_wall(c)) continue;
        for (bool key : {false, true}) {
          double best = kNeg;
          int arg = 0;
          for (int a = 0; a < 4; ++a) {
            const Transition tr = transition(c, key, a);
            const double v = tr.reward +
                             (tr.terminal ? 0.0 : value[std::size_t(t + 1)][std::size_t(index(tr.pos, tr.key))]);
            if (v > best + 1e-12) {
              best = v;
              arg = a;
            }
          }
          value[std::size_t(t)][std::size_t(index(c, key))] = best;
          best_action[std::size_t(t)][std::size_t(index(c, key))] = arg;
        }
      }
    }
  }
  GridOptimum opt;
  Cell pos = g.start;
  bool key = false;
  for (int t = 0; t < horizon; ++t) {
    const int a = best_action[std::size_t(t)][std::size_t(index(pos, key))];
    const Transition tr = transition(pos, key, a);
    opt.actions.push_back(a);
    opt.episode_reward += tr.reward;
    ++opt.steps;
    pos = tr.pos;
    key = tr.key;
    if (tr.terminal) break;
  }
  opt.reward_per_step = opt.episode_reward / opt.steps;
  return opt;
}

}  // namespace cslab::envs
