#include "cslab/envs/trajectory.hpp"

#include <fstream>
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>

#include "cslab/common/errors.hpp"
#include "cslab/common/random.hpp"

namespace cslab::envs {

using nlohmann::json;

double Trajectory::total_reward() const {
  double total = 0.0;
  for (const auto& r : records) total += r.reward;
  return total;
}

void Trajectory::validate() const {
  if (records.empty()) throw ValidationError("trajectory: no records");
  for (std::size_t t = 0; t < records.size(); ++t) {
    const bool last = t + 1 == records.size();
    if (records[t].done != last) {
      throw ValidationError("trajectory: done must be set exactly on the final record (t=" +
                            std::to_string(t) + ")");
    }
    if (!last && records[t].action < 0) {
      throw ValidationError("trajectory: missing action at t=" + std::to_string(t));
    }
  }
}

Trajectory rollout_random(Environment& env, std::uint64_t episode_seed, std::uint64_t action_seed) {
  Trajectory traj;
  traj.seed = episode_seed;
  traj.env = env.descriptor();
  Rng rng(action_seed);
  std::uniform_int_distribution<int> pick(0, env.num_actions() - 1);
  TrajectoryRecord rec;
  rec.observation = env.reset(episode_seed);
  rec.true_state = env.ground_truth_state();
  while (true) {
    rec.action = pick(rng);
    const Step s = env.step(rec.action);
    traj.records.push_back(rec);
    rec = TrajectoryRecord{};
    rec.observation = s.observation;
    rec.reward = s.reward;
    rec.true_state = env.ground_truth_state();
    if (s.done) {
      rec.done = true;
      traj.records.push_back(rec);
      break;
    }
  }
  return traj;
}

std::vector<Trajectory> collect_random(const Environment& prototype, int episodes,
                                       std::uint64_t master_seed) {
  auto env = prototype.clone();
  std::vector<Trajectory> out;
  out.reserve(std::size_t(std::max(episodes, 0)));
  for (int i = 0; i < episodes; ++i) {
    out.push_back(rollout_random(*env, derive_seed(master_seed, "collect.episode", std::uint64_t(i)),
                                 derive_seed(master_seed, "collect.action", std::uint64_t(i))));
  }
  return out;
}

void write_jsonl(std::ostream& os, std::span<const Trajectory> trajectories) {
  for (const Trajectory& traj : trajectories) {
    for (std::size_t t = 0; t < traj.records.size(); ++t) {
      const TrajectoryRecord& r = traj.records[t];
      json j;
      j["t"] = t;
      if (const int* s = std::get_if<int>(&r.observation)) j["obs"] = *s;
      else j["obs"] = std::get<std::vector<double>>(r.observation);
      j["action"] = r.action >= 0 ? json(r.action) : json(nullptr);
      j["reward"] = r.reward;
      j["done"] = r.done;
      j["state"] = r.true_state;
      os << j.dump() << '\n';
    }
  }
}

std::vector<Trajectory> read_jsonl(std::istream& is) {
  std::vector<Trajectory> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(is, line);) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError("trajectory jsonl line " + std::to_string(line_no) + ": " + e.what());
    }
    TrajectoryRecord r;
    const auto t = j.at("t").get<std::size_t>();
    if (j.at("obs").is_array()) r.observation = j["obs"].get<std::vector<double>>();
    else r.observation = j["obs"].get<int>();
    r.action = j.at("action").is_null() ? -1 : j["action"].get<int>();
    r.reward = j.at("reward").get<double>();
    r.done = j.at("done").get<bool>();
    r.true_state = j.value("state", -1);
    if (t == 0) out.emplace_back();
    if (out.empty() || out.back().records.size() != t) {
      throw ValidationError("trajectory jsonl line " + std::to_string(line_no) +
                            ": records out of order");
    }
    out.back().records.push_back(std::move(r));
  }
  for (const auto& traj : out) traj.validate();
  return out;
}

void save_jsonl(const std::filesystem::path& path, std::span<const Trajectory> trajectories) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    write_jsonl(os, trajectories);
  }
  std::filesystem::rename(tmp, path);
}

std::vector<Trajectory> load_jsonl(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingArtifactError(path.string());
  return read_jsonl(is);
}

}  // namespace cslab::envs
