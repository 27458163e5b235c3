#include "cslab/rl/dqn.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "cslab/common/errors.hpp"
#include "cslab/common/random.hpp"
#include "cslab/numerics/checkpoint.hpp"
#include "cslab/numerics/rmsprop.hpp"

namespace cslab::rl {

using nlohmann::json;

void DqnConfig::validate() const {
  if (hidden_dim < 1) throw ConfigError("dqn: hidden_dim must be >= 1");
  if (episodes < 1) throw ConfigError("dqn: episodes must be >= 1");
  if (batch_size < 1 || replay_capacity < batch_size) throw ConfigError("dqn: replay_capacity must be >= batch_size >= 1");
  if (target_sync < 1 || train_every < 1 || learning_starts < 0) throw ConfigError("dqn: bad update schedule");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("dqn: gamma must lie in [0, 1]");
  if (!(learning_rate > 0.0)) throw ConfigError("dqn: learning_rate must be > 0");
  if (eval_every < 0 || eval_episodes < 0) throw ConfigError("dqn: negative evaluation settings");
  epsilon.validate();
}

void to_json(json& j, const DqnConfig& c) {
  j = json{{"hidden_dim", c.hidden_dim},       {"episodes", c.episodes},
           {"replay_capacity", c.replay_capacity}, {"batch_size", c.batch_size},
           {"target_sync", c.target_sync},     {"learning_starts", c.learning_starts},
           {"train_every", c.train_every},     {"epsilon", c.epsilon},
           {"gamma", c.gamma},                 {"learning_rate", c.learning_rate},
           {"clip_norm", c.clip_norm},         {"seed", c.seed},
           {"eval_every", c.eval_every},       {"eval_episodes", c.eval_episodes}};
}

void from_json(const json& j, DqnConfig& c) {
  const DqnConfig d;
  c.hidden_dim = j.value("hidden_dim", d.hidden_dim);
  c.episodes = j.value("episodes", d.episodes);
  c.replay_capacity = j.value("replay_capacity", d.replay_capacity);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.target_sync = j.value("target_sync", d.target_sync);
  c.learning_starts = j.value("learning_starts", d.learning_starts);
  c.train_every = j.value("train_every", d.train_every);
  c.epsilon = j.contains("epsilon") ? j.at("epsilon").get<EpsilonSchedule>() : d.epsilon;
  c.gamma = j.value("gamma", d.gamma);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.clip_norm = j.value("clip_norm", d.clip_norm);
  c.seed = j.value("seed", d.seed);
  c.eval_every = j.value("eval_every", d.eval_every);
  c.eval_episodes = j.value("eval_episodes", d.eval_episodes);
  c.validate();
}

namespace {

// Plain forward pass, no tape; rows of x are inputs.
nn::Tensor forward_values(const nn::Mlp& mlp, const nn::Tensor& x) {
  nn::Tensor cur = x;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    const nn::Tensor& w = mlp.layers[l].weight.value;
    const nn::Tensor& b = mlp.layers[l].bias.value;
    const std::size_t in = w.rows(), out = w.cols();
    nn::Tensor next = nn::Tensor::matrix(cur.rows(), out);
    for (std::size_t r = 0; r < cur.rows(); ++r) {
      double* y = &next.at(r, 0);
      for (std::size_t o = 0; o < out; ++o) y[o] = b[o];
      for (std::size_t k = 0; k < in; ++k) {
        const double v = cur.at(r, k);
        if (v == 0.0) continue;
        const double* wk = w.storage().data() + k * out;
        for (std::size_t o = 0; o < out; ++o) y[o] += v * wk[o];
      }
      if (l + 1 < mlp.layers.size() || mlp.relu_output) {
        for (std::size_t o = 0; o < out; ++o) y[o] = std::max(0.0, y[o]);
      }
    }
    cur = std::move(next);
  }
  return cur;
}

int argmax(std::span<const double> v) { return int(std::max_element(v.begin(), v.end()) - v.begin()); }

struct Replay {
  std::size_t capacity = 0, dim = 0, size = 0, next = 0;
  std::vector<double> states, next_states, rewards;
  std::vector<int> actions;
  std::vector<char> terminal;

  Replay(std::size_t cap, std::size_t d)
      : capacity(cap), dim(d), states(cap * d), next_states(cap * d), rewards(cap), actions(cap), terminal(cap) {}

  void add(std::span<const double> s, int a, double r, std::span<const double> s2, bool term) {
    std::copy(s.begin(), s.end(), states.begin() + std::ptrdiff_t(next * dim));
    std::copy(s2.begin(), s2.end(), next_states.begin() + std::ptrdiff_t(next * dim));
    actions[next] = a;
    rewards[next] = r;
    terminal[next] = term;
    next = (next + 1) % capacity;
    size = std::min(size + 1, capacity);
  }
};

}  // namespace

QNetwork::QNetwork(std::size_t input_dim, std::size_t hidden_dim, int num_actions, Rng& rng) {
  const std::size_t dims[] = {input_dim, hidden_dim, std::size_t(num_actions)};
  mlp = nn::Mlp("dqn", dims, false, rng);
}

std::vector<double> QNetwork::values(std::span<const double> features) const {
  if (features.size() != input_dim()) {
    throw DimensionError("q network: expected " + std::to_string(input_dim()) + " features, got " +
                         std::to_string(features.size()));
  }
  nn::Tensor x({1, features.size()}, std::vector<double>(features.begin(), features.end()));
  return forward_values(mlp, x).storage();
}

int QNetwork::greedy(std::span<const double> features) const { return argmax(values(features)); }

DqnResult dqn_train(const envs::Environment& prototype, const Featurizer& featurizer, const DqnConfig& config) {
  config.validate();
  auto env = prototype.clone();
  auto f = featurizer.clone();
  const int A = env->num_actions();
  const std::size_t D = featurizer.dim();
  Rng init = make_rng(config.seed, "rl.dqn.init");
  DqnResult out{QNetwork(D, config.hidden_dim, A, init), {}};
  QNetwork& q = out.q;
  QNetwork target = q;
  auto params = nn::parameters_of(q.mlp);
  nn::Rmsprop opt({config.learning_rate});
  Replay replay(std::size_t(config.replay_capacity), D);
  QNetworkPolicy greedy(q);
  CurveRecorder recorder(config.eval_every, config.eval_episodes, config.seed);

  Rng explore = make_rng(config.seed, "rl.dqn.explore");
  Rng sample = make_rng(config.seed, "rl.dqn.replay");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> any(0, A - 1);
  const std::size_t B = std::size_t(config.batch_size);
  nn::Tensor x = nn::Tensor::matrix(B, D), x_next = nn::Tensor::matrix(B, D), y = nn::Tensor::matrix(B, 1);
  std::vector<int> batch_actions(B);
  std::vector<std::size_t> sampled(B);

  long long step = 0;
  for (int e = 0; e < config.episodes; ++e) {
    const double eps = config.epsilon.at(double(e) / config.episodes);
    f->reset(*env, env->reset(derive_seed(config.seed, "rl.train.env", std::uint64_t(e))));
    double total = 0.0;
    int steps = 0;
    while (!env->done()) {
      const std::vector<double> s = f->features();
      const int a = u(explore) < eps ? any(explore) : q.greedy(s);
      const envs::Step st = env->step(a);
      f->update(*env, a, st.observation);
      replay.add(s, a, st.reward, f->features(), st.done && !st.truncated);
      total += st.reward;
      ++steps;
      ++step;

      if (step >= config.learning_starts && replay.size >= B && step % config.train_every == 0) {
        std::uniform_int_distribution<std::size_t> index(0, replay.size - 1);
        for (std::size_t i = 0; i < B; ++i) {
          const std::size_t j = index(sample);
          std::copy_n(replay.states.begin() + std::ptrdiff_t(j * D), D, x.values().begin() + std::ptrdiff_t(i * D));
          std::copy_n(replay.next_states.begin() + std::ptrdiff_t(j * D), D,
                      x_next.values().begin() + std::ptrdiff_t(i * D));
          batch_actions[i] = replay.actions[j];
          sampled[i] = j;
        }
        const nn::Tensor next_q = forward_values(target.mlp, x_next);
        for (std::size_t i = 0; i < B; ++i) {
          const std::size_t j = sampled[i];
          y.at(i, 0) = replay.rewards[j];
          if (!replay.terminal[j]) y.at(i, 0) += config.gamma * next_q.at(i, std::size_t(argmax(next_q.row_span(i))));
        }
        nn::Tape t;
        nn::zero_grad(params);
        nn::Var loss = nn::mse(nn::pick(q.mlp.forward(t, t.constant(x)), batch_actions), y);
        if (!std::isfinite(loss.value().item())) {
          throw TrainingError("dqn: loss diverged (non-finite) at step " + std::to_string(step));
        }
        t.backward(loss);
        if (config.clip_norm > 0.0) nn::clip_grad_norm(params, config.clip_norm);
        try {
          opt.step(params);
        } catch (const TrainingError& err) {
          throw TrainingError("dqn: step " + std::to_string(step) + ": " + err.what());
        }
      }
      if (step % config.target_sync == 0) target = q;
    }
    recorder.episode_done(e, config.episodes, step, episode_metric(*env, total, steps), greedy, prototype, featurizer);
  }
  out.curve = recorder.take();
  return out;
}

void save_q_network(const std::filesystem::path& path, const QNetwork& q) {
  const auto params = nn::parameters_of(q.mlp);
  nn::save_checkpoint(path, nn::capture(params, json{{"type", "dqn"},
                                                     {"input_dim", q.input_dim()},
                                                     {"hidden_dim", q.mlp.layers.front().out_dim()},
                                                     {"num_actions", q.num_actions()}}
                                                    .dump()));
}

QNetwork load_q_network(const std::filesystem::path& path) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(path);
  try {
    const json meta = json::parse(ckpt.metadata);
    if (meta.at("type") != "dqn") throw ValidationError(path.string() + " is not a Q network");
    Rng rng(0);
    QNetwork q(meta.at("input_dim").get<std::size_t>(), meta.at("hidden_dim").get<std::size_t>(),
               meta.at("num_actions").get<int>(), rng);
    auto params = nn::parameters_of(q.mlp);
    nn::restore(params, ckpt);
    return q;
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

}  // namespace cslab::rl
