#include "cslab/rl/tabular.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>

#include "cslab/common/errors.hpp"
#include "cslab/common/random.hpp"
#include "cslab/numerics/checkpoint.hpp"

namespace cslab::rl {

using nlohmann::json;

std::vector<double> QTable::values(int id) const {
  const auto it = values_.find(id);
  return it == values_.end() ? std::vector<double>(std::size_t(num_actions_), 0.0) : it->second;
}

std::vector<double>& QTable::row(int id) {
  auto it = values_.find(id);
  if (it == values_.end()) it = values_.emplace(id, std::vector<double>(std::size_t(num_actions_), 0.0)).first;
  return it->second;
}

int QTable::greedy(int id) const {
  const auto it = values_.find(id);
  if (it == values_.end()) return 0;
  return int(std::max_element(it->second.begin(), it->second.end()) - it->second.begin());
}

void TabularConfig::validate() const {
  if (episodes < 1) throw ConfigError("tabular: episodes must be >= 1");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("tabular: alpha must lie in (0, 1]");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("tabular: gamma must lie in [0, 1]");
  if (eval_every < 0 || eval_episodes < 0) throw ConfigError("tabular: negative evaluation settings");
  epsilon.validate();
}

void to_json(json& j, const TabularConfig& c) {
  j = json{{"episodes", c.episodes}, {"alpha", c.alpha},          {"gamma", c.gamma},
           {"epsilon", c.epsilon},   {"seed", c.seed},            {"eval_every", c.eval_every},
           {"eval_episodes", c.eval_episodes}};
}

void from_json(const json& j, TabularConfig& c) {
  const TabularConfig d;
  c.episodes = j.value("episodes", d.episodes);
  c.alpha = j.value("alpha", d.alpha);
  c.gamma = j.value("gamma", d.gamma);
  c.epsilon = j.contains("epsilon") ? j.at("epsilon").get<EpsilonSchedule>() : d.epsilon;
  c.seed = j.value("seed", d.seed);
  c.eval_every = j.value("eval_every", d.eval_every);
  c.eval_episodes = j.value("eval_episodes", d.eval_episodes);
  c.validate();
}

TabularResult tabular_q_learning(const envs::Environment& prototype, const Featurizer& featurizer,
                                 const TabularConfig& config) {
  config.validate();
  if (featurizer.num_ids() <= 0) throw UsageError("tabular Q-learning needs a discrete featurizer");
  auto env = prototype.clone();
  auto f = featurizer.clone();
  const int A = env->num_actions();
  TabularResult out{QTable(A), {}};
  QTable& q = out.q;
  QTablePolicy greedy(q);
  CurveRecorder recorder(config.eval_every, config.eval_episodes, config.seed);
  Rng rng = make_rng(config.seed, "rl.tabular.explore");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> any(0, A - 1);
  long long step = 0;
  for (int e = 0; e < config.episodes; ++e) {
    const double eps = config.epsilon.at(double(e) / config.episodes);
    f->reset(*env, env->reset(derive_seed(config.seed, "rl.train.env", std::uint64_t(e))));
    double total = 0.0;
    int steps = 0;
    while (!env->done()) {
      const int s = f->id();
      const int a = u(rng) < eps ? any(rng) : q.greedy(s);
      const envs::Step st = env->step(a);
      f->update(*env, a, st.observation);
      const bool terminal = st.done && !st.truncated;
      double target = st.reward;
      if (!terminal) {
        const auto next = q.values(f->id());
        target += config.gamma * *std::max_element(next.begin(), next.end());
      }
      double& v = q.row(s)[std::size_t(a)];
      v += config.alpha * (target - v);
      total += st.reward;
      ++steps;
      ++step;
    }
    recorder.episode_done(e, config.episodes, step, episode_metric(*env, total, steps), greedy, prototype, featurizer);
  }
  out.curve = recorder.take();
  return out;
}

void save_qtable(const std::filesystem::path& path, const QTable& q) {
  nn::Tensor ids = nn::Tensor::matrix(q.size(), 1);
  nn::Tensor values = nn::Tensor::matrix(q.size(), std::size_t(q.num_actions()));
  std::size_t r = 0;
  for (const auto& [id, row] : q.entries()) {
    ids.at(r, 0) = id;
    for (std::size_t a = 0; a < row.size(); ++a) values.at(r, a) = row[a];
    ++r;
  }
  nn::Checkpoint ckpt;
  ckpt.metadata = json{{"type", "qtable"}, {"num_actions", q.num_actions()}}.dump();
  ckpt.tensors = {{"ids", std::move(ids)}, {"values", std::move(values)}};
  nn::save_checkpoint(path, ckpt);
}

QTable load_qtable(const std::filesystem::path& path) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(path);
  try {
    const json meta = json::parse(ckpt.metadata);
    if (meta.at("type") != "qtable") throw ValidationError(path.string() + " is not a Q table");
    QTable q(meta.at("num_actions").get<int>());
    const nn::Tensor* ids = ckpt.find("ids");
    const nn::Tensor* values = ckpt.find("values");
    if (!ids || !values || values->cols() != std::size_t(q.num_actions()) || ids->rows() != values->rows()) {
      throw ValidationError(path.string() + ": malformed Q table");
    }
    for (std::size_t r = 0; r < ids->rows(); ++r) {
      const auto row = values->row_span(r);
      q.row(int(ids->at(r, 0))).assign(row.begin(), row.end());
    }
    return q;
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

}  // namespace cslab::rl
