#include "cslab/rl/drqn.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <nlohmann/json.hpp>

#include "cslab/common/errors.hpp"
#include "cslab/common/random.hpp"
#include "cslab/numerics/checkpoint.hpp"
#include "cslab/numerics/rmsprop.hpp"

namespace cslab::rl {

using nlohmann::json;

void DrqnConfig::validate() const {
  if (hidden_dim < 1) throw ConfigError("drqn: hidden_dim must be >= 1");
  if (episodes < 1) throw ConfigError("drqn: episodes must be >= 1");
  if (batch_episodes < 1 || replay_episodes < batch_episodes) {
    throw ConfigError("drqn: replay_episodes must be >= batch_episodes >= 1");
  }
  if (updates_per_episode < 0 || learning_starts < 0 || target_sync < 1) throw ConfigError("drqn: bad update schedule");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("drqn: gamma must lie in [0, 1]");
  if (!(learning_rate > 0.0)) throw ConfigError("drqn: learning_rate must be > 0");
  if (eval_every < 0 || eval_episodes < 0) throw ConfigError("drqn: negative evaluation settings");
  epsilon.validate();
}

void to_json(json& j, const DrqnConfig& c) {
  j = json{{"hidden_dim", c.hidden_dim},
           {"episodes", c.episodes},
           {"replay_episodes", c.replay_episodes},
           {"batch_episodes", c.batch_episodes},
           {"updates_per_episode", c.updates_per_episode},
           {"learning_starts", c.learning_starts},
           {"target_sync", c.target_sync},
           {"epsilon", c.epsilon},
           {"gamma", c.gamma},
           {"learning_rate", c.learning_rate},
           {"clip_norm", c.clip_norm},
           {"seed", c.seed},
           {"eval_every", c.eval_every},
           {"eval_episodes", c.eval_episodes}};
}

void from_json(const json& j, DrqnConfig& c) {
  const DrqnConfig d;
  c.hidden_dim = j.value("hidden_dim", d.hidden_dim);
  c.episodes = j.value("episodes", d.episodes);
  c.replay_episodes = j.value("replay_episodes", d.replay_episodes);
  c.batch_episodes = j.value("batch_episodes", d.batch_episodes);
  c.updates_per_episode = j.value("updates_per_episode", d.updates_per_episode);
  c.learning_starts = j.value("learning_starts", d.learning_starts);
  c.target_sync = j.value("target_sync", d.target_sync);
  c.epsilon = j.contains("epsilon") ? j.at("epsilon").get<EpsilonSchedule>() : d.epsilon;
  c.gamma = j.value("gamma", d.gamma);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.clip_norm = j.value("clip_norm", d.clip_norm);
  c.seed = j.value("seed", d.seed);
  c.eval_every = j.value("eval_every", d.eval_every);
  c.eval_episodes = j.value("eval_episodes", d.eval_episodes);
  c.validate();
}

RecurrentQNetwork::RecurrentQNetwork(std::size_t feature_dim, std::size_t hidden_dim, int num_actions, Rng& rng)
    : gru("drqn.gru", feature_dim + std::size_t(num_actions) + 1, hidden_dim, rng),
      head("drqn.head", hidden_dim, std::size_t(num_actions), rng),
      num_actions_(num_actions) {}

std::vector<double> RecurrentQNetwork::step_input(std::span<const double> features, int prev_action) const {
  if (features.size() != feature_dim()) throw DimensionError("drqn: feature size mismatch");
  std::vector<double> x(features.begin(), features.end());
  x.resize(gru.input_dim(), 0.0);
  x[feature_dim() + std::size_t(prev_action < 0 ? num_actions_ : prev_action)] = 1.0;
  return x;
}

namespace {

// y = x W + h U + b for one row.
std::vector<double> gate(std::span<const double> x, std::span<const double> h, const nn::Parameter& w,
                         const nn::Parameter& u, const nn::Parameter& b) {
  const std::size_t n = b.value.cols();
  std::vector<double> y(b.value.values().begin(), b.value.values().end());
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (x[k] == 0.0) continue;
    for (std::size_t o = 0; o < n; ++o) y[o] += x[k] * w.value.at(k, o);
  }
  for (std::size_t k = 0; k < h.size(); ++k) {
    for (std::size_t o = 0; o < n; ++o) y[o] += h[k] * u.value.at(k, o);
  }
  return y;
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

int argmax(std::span<const double> v) { return int(std::max_element(v.begin(), v.end()) - v.begin()); }

}  // namespace

std::vector<double> RecurrentQNetwork::step(std::vector<double>& h, std::span<const double> input) const {
  if (input.size() != gru.input_dim() || h.size() != hidden_dim()) throw DimensionError("drqn: step shape mismatch");
  auto z = gate(input, h, gru.w_z, gru.u_z, gru.b_z);
  auto r = gate(input, h, gru.w_r, gru.u_r, gru.b_r);
  std::vector<double> rh(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) rh[i] = sigmoid(r[i]) * h[i];
  auto c = gate(input, rh, gru.w_h, gru.u_h, gru.b_h);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] += sigmoid(z[i]) * (std::tanh(c[i]) - h[i]);
  std::vector<double> q(head.bias.value.values().begin(), head.bias.value.values().end());
  for (std::size_t k = 0; k < h.size(); ++k) {
    for (std::size_t a = 0; a < q.size(); ++a) q[a] += h[k] * head.weight.value.at(k, a);
  }
  return q;
}

void RecurrentQPolicy::begin_episode() {
  h_.assign(q_->hidden_dim(), 0.0);
  prev_action_ = -1;
}

int RecurrentQPolicy::act(const Featurizer& features) {
  if (h_.size() != q_->hidden_dim()) begin_episode();
  const auto q = q_->step(h_, q_->step_input(features.features(), prev_action_));
  prev_action_ = argmax(q);
  return prev_action_;
}

namespace {

struct StoredEpisode {
  std::vector<std::vector<double>> inputs;  // one per observation
  std::vector<int> actions;                 // one per transition
  std::vector<double> rewards;
  bool terminal = false;                    // the last transition ended in a terminal state
};

// Mean squared TD error over a batch of whole episodes.
nn::Var sequence_loss(nn::Tape& t, RecurrentQNetwork& q, const RecurrentQNetwork& target,
                      std::span<const StoredEpisode* const> batch, double gamma) {
  const std::size_t B = batch.size(), H = q.hidden_dim(), in = q.gru.input_dim();
  std::size_t steps = 0;
  for (const auto* ep : batch) steps = std::max(steps, ep->inputs.size());

  // Targets from the target network, one stream per episode.
  std::vector<std::vector<double>> targets(B);
  for (std::size_t b = 0; b < B; ++b) {
    const StoredEpisode& ep = *batch[b];
    std::vector<double> h(H, 0.0);
    std::vector<double> next_max(ep.inputs.size(), 0.0);
    for (std::size_t s = 0; s < ep.inputs.size(); ++s) {
      const auto v = target.step(h, ep.inputs[s]);
      next_max[s] = *std::max_element(v.begin(), v.end());
    }
    for (std::size_t s = 0; s + 1 < ep.inputs.size(); ++s) {
      const bool terminal = ep.terminal && s + 2 == ep.inputs.size();
      targets[b].push_back(ep.rewards[s] + (terminal ? 0.0 : gamma * next_max[s + 1]));
    }
  }

  nn::Var h = t.constant(nn::Tensor::matrix(B, H));
  std::vector<nn::Var> picked;
  nn::Tensor y = nn::Tensor::matrix((steps - 1) * B, 1);
  std::vector<double> weights((steps - 1) * B, 0.0);
  double count = 0.0;
  for (std::size_t s = 0; s + 1 < steps; ++s) {
    nn::Tensor x = nn::Tensor::matrix(B, in);
    std::vector<int> actions(B, 0);
    for (std::size_t b = 0; b < B; ++b) {
      const StoredEpisode& ep = *batch[b];
      if (s < ep.inputs.size()) std::copy(ep.inputs[s].begin(), ep.inputs[s].end(), &x.at(b, 0));
      if (s + 1 < ep.inputs.size()) {
        actions[b] = ep.actions[s];
        y.at(s * B + b, 0) = targets[b][s];
        weights[s * B + b] = 1.0;
        count += 1.0;
      }
    }
    h = q.gru.forward(t, h, t.constant(std::move(x)));
    picked.push_back(nn::pick(q.head.forward(t, h), actions));
  }
  // weighted_squared_error_sum averages over columns; there is one.
  return nn::scale(nn::weighted_squared_error_sum(nn::concat_rows(picked), y, weights), 1.0 / std::max(count, 1.0));
}

}  // namespace

DrqnResult drqn_train(const envs::Environment& prototype, const Featurizer& featurizer, const DrqnConfig& config) {
  config.validate();
  auto env = prototype.clone();
  auto f = featurizer.clone();
  const int A = env->num_actions();
  Rng init = make_rng(config.seed, "rl.drqn.init");
  DrqnResult out{RecurrentQNetwork(featurizer.dim(), config.hidden_dim, A, init), {}};
  RecurrentQNetwork& q = out.q;
  RecurrentQNetwork target = q;
  auto params = nn::parameters_of(q);
  nn::Rmsprop opt({config.learning_rate});
  RecurrentQPolicy greedy(q);
  CurveRecorder recorder(config.eval_every, config.eval_episodes, config.seed);
  std::deque<StoredEpisode> replay;

  Rng explore = make_rng(config.seed, "rl.drqn.explore");
  Rng sample = make_rng(config.seed, "rl.drqn.replay");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> any(0, A - 1);
  long long step = 0;
  int updates = 0;
  for (int e = 0; e < config.episodes; ++e) {
    const double eps = config.epsilon.at(double(e) / config.episodes);
    f->reset(*env, env->reset(derive_seed(config.seed, "rl.train.env", std::uint64_t(e))));
    StoredEpisode ep;
    std::vector<double> h(q.hidden_dim(), 0.0);
    int prev = -1;
    double total = 0.0;
    while (true) {
      ep.inputs.push_back(q.step_input(f->features(), prev));
      if (env->done()) break;
      const auto values = q.step(h, ep.inputs.back());
      const int a = u(explore) < eps ? any(explore) : argmax(values);
      const envs::Step st = env->step(a);
      f->update(*env, a, st.observation);
      ep.actions.push_back(a);
      ep.rewards.push_back(st.reward);
      ep.terminal = st.done && !st.truncated;
      total += st.reward;
      prev = a;
      ++step;
    }
    const int steps = int(ep.actions.size());
    if (steps > 0) replay.push_back(std::move(ep));
    if (int(replay.size()) > config.replay_episodes) replay.pop_front();

    if (e + 1 >= config.learning_starts && int(replay.size()) >= config.batch_episodes) {
      std::uniform_int_distribution<std::size_t> index(0, replay.size() - 1);
      for (int k = 0; k < config.updates_per_episode; ++k) {
        std::vector<const StoredEpisode*> batch;
        for (int b = 0; b < config.batch_episodes; ++b) batch.push_back(&replay[index(sample)]);
        nn::Tape t;
        nn::zero_grad(params);
        nn::Var loss = sequence_loss(t, q, target, batch, config.gamma);
        if (!std::isfinite(loss.value().item())) {
          throw TrainingError("drqn: loss diverged (non-finite) in episode " + std::to_string(e));
        }
        t.backward(loss);
        if (config.clip_norm > 0.0) nn::clip_grad_norm(params, config.clip_norm);
        try {
          opt.step(params);
        } catch (const TrainingError& err) {
          throw TrainingError("drqn: episode " + std::to_string(e) + ": " + err.what());
        }
        if (++updates % config.target_sync == 0) target = q;
      }
    }
    recorder.episode_done(e, config.episodes, step, episode_metric(*env, total, steps), greedy, prototype, featurizer);
  }
  out.curve = recorder.take();
  return out;
}

void save_recurrent_q_network(const std::filesystem::path& path, const RecurrentQNetwork& q) {
  const auto params = nn::parameters_of(q);
  nn::save_checkpoint(path, nn::capture(params, json{{"type", "drqn"},
                                                     {"feature_dim", q.feature_dim()},
                                                     {"hidden_dim", q.hidden_dim()},
                                                     {"num_actions", q.num_actions()}}
                                                    .dump()));
}

RecurrentQNetwork load_recurrent_q_network(const std::filesystem::path& path) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(path);
  try {
    const json meta = json::parse(ckpt.metadata);
    if (meta.at("type") != "drqn") throw ValidationError(path.string() + " is not a recurrent Q network");
    Rng rng(0);
    RecurrentQNetwork q(meta.at("feature_dim").get<std::size_t>(), meta.at("hidden_dim").get<std::size_t>(),
                        meta.at("num_actions").get<int>(), rng);
    auto params = nn::parameters_of(q);
    nn::restore(params, ckpt);
    return q;
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

}  // namespace cslab::rl
