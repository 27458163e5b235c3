#include "cslab/world_model/world_model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>

#include "cslab/common/errors.hpp"
#include "cslab/common/random.hpp"
#include "cslab/numerics/checkpoint.hpp"
#include "cslab/numerics/rmsprop.hpp"

namespace cslab::wm {

using envs::ObservationSpec;
using envs::Trajectory;
using nlohmann::json;
using nn::Tape;
using nn::Tensor;
using nn::Var;

// ---- config -------------------------------------------------------------------

void WorldModelConfig::validate() const {
  if (obs.size < 1) throw ConfigError("world model: observation size must be >= 1");
  if (num_actions < 1) throw ConfigError("world model: num_actions must be >= 1");
  for (std::size_t d : {obs_embed_dim, action_embed_dim, gru_hidden_dim, predictor_hidden_dim}) {
    if (d < 1) throw ConfigError("world model: all dims must be >= 1");
  }
  if (epochs < 0) throw ConfigError("world model: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("world model: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("world model: learning_rate must be > 0");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("world model: lr_decay must lie in (0, 1]");
}

void to_json(json& j, const WorldModelConfig& c) {
  j = json{{"obs_kind", c.obs.categorical() ? "categorical" : "real"},
           {"obs_size", c.obs.size},
           {"num_actions", c.num_actions},
           {"obs_embed_dim", c.obs_embed_dim},
           {"action_embed_dim", c.action_embed_dim},
           {"gru_hidden_dim", c.gru_hidden_dim},
           {"predictor_hidden_dim", c.predictor_hidden_dim},
           {"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"learning_rate", c.learning_rate},
           {"lr_decay", c.lr_decay},
           {"clip_norm", c.clip_norm},
           {"seed", c.seed}};
}

void from_json(const json& j, WorldModelConfig& c) {
  const WorldModelConfig d;
  const std::string kind = j.value("obs_kind", std::string("categorical"));
  if (kind != "categorical" && kind != "real") {
    throw ConfigError("world model: obs_kind must be categorical or real");
  }
  c.obs.kind = kind == "real" ? ObservationSpec::Kind::kReal : ObservationSpec::Kind::kCategorical;
  c.obs.size = j.value("obs_size", c.obs.size);
  c.num_actions = j.value("num_actions", c.num_actions);
  c.obs_embed_dim = j.value("obs_embed_dim", d.obs_embed_dim);
  c.action_embed_dim = j.value("action_embed_dim", d.action_embed_dim);
  c.gru_hidden_dim = j.value("gru_hidden_dim", d.gru_hidden_dim);
  c.predictor_hidden_dim = j.value("predictor_hidden_dim", d.predictor_hidden_dim);
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.lr_decay = j.value("lr_decay", d.lr_decay);
  c.clip_norm = j.value("clip_norm", d.clip_norm);
  c.seed = j.value("seed", d.seed);
}

// ---- model --------------------------------------------------------------------

WorldModel::WorldModel(const WorldModelConfig& config) : config_(config) {
  config_.validate();
  Rng rng = make_rng(config_.seed, "wm.init");
  const std::size_t e = config_.obs_embed_dim;
  const std::size_t enc_dims[] = {std::size_t(config_.obs.size), e, e, e};
  obs_encoder = nn::Mlp("wm.obs", enc_dims, true, rng);
  action_embedding =
      nn::Embedding("wm.action", std::size_t(config_.num_actions + 1), config_.action_embed_dim, rng);
  gru = nn::GruCell("wm.gru", e + config_.action_embed_dim, config_.gru_hidden_dim, rng);
  const std::size_t pred_dims[] = {config_.gru_hidden_dim + config_.action_embed_dim,
                                   config_.predictor_hidden_dim, std::size_t(config_.obs.size)};
  predictor = nn::Mlp("wm.eta", pred_dims, false, rng);
}

SequenceBatch WorldModel::make_batch(std::span<const Trajectory* const> episodes) const {
  const ObservationSpec& spec = config_.obs;
  SequenceBatch b;
  b.batch = episodes.size();
  for (const Trajectory* e : episodes) {
    if (e->length() < 2) throw ValidationError("world model: trajectories need >= 2 records");
    b.steps = std::max(b.steps, e->length());
  }
  const std::size_t B = b.batch, T = b.steps, d = std::size_t(spec.size);
  b.inputs = Tensor::matrix(T * B, d);
  b.prev_actions.assign(T * B, null_action());
  b.actions.assign((T - 1) * B, 0);
  b.mask.assign((T - 1) * B, 0.0);
  if (spec.categorical()) b.next_symbols.assign((T - 1) * B, 0);
  else b.next_values = Tensor::matrix((T - 1) * B, d);
  for (std::size_t i = 0; i < B; ++i) {
    const auto& recs = episodes[i]->records;
    for (std::size_t t = 0; t < recs.size(); ++t) {
      const std::vector<double> x = envs::encode(recs[t].observation, spec);
      std::copy(x.begin(), x.end(), b.inputs.values().begin() + std::ptrdiff_t((t * B + i) * d));
      if (t > 0) b.prev_actions[t * B + i] = recs[t - 1].action;
      if (t + 1 < recs.size()) {
        const std::size_t r = t * B + i;
        if (recs[t].action < 0 || recs[t].action >= config_.num_actions) {
          throw ValidationError("world model: action " + std::to_string(recs[t].action) +
                                " outside [0, " + std::to_string(config_.num_actions) + ")");
        }
        b.actions[r] = recs[t].action;
        b.mask[r] = 1.0;
        ++b.count;
        if (spec.categorical()) {
          b.next_symbols[r] = envs::symbol_of(recs[t + 1].observation);
        } else {
          const std::vector<double> y = envs::encode(recs[t + 1].observation, spec);
          std::copy(y.begin(), y.end(), b.next_values.values().begin() + std::ptrdiff_t(r * d));
        }
      }
    }
  }
  return b;
}

Var WorldModel::encode_step(Tape& t, Var h, Var obs_inputs, std::span<const int> prev_actions) const {
  Var x = concat_cols(obs_encoder.forward(t, obs_inputs), action_embedding.forward(t, prev_actions));
  return gru.forward(t, h, x);
}

Var WorldModel::predict(Tape& t, Var h, std::span<const int> actions) const {
  return predictor.forward(t, concat_cols(h, action_embedding.forward(t, actions)));
}

template <class Self>
Var WorldModel::loss_impl(Self& self, Tape& t, const SequenceBatch& batch,
                          std::vector<Var>* hidden) {
  const std::size_t B = batch.batch, T = batch.steps;
  Var embedded = self.obs_encoder.forward(t, t.constant(batch.inputs));
  Var h = t.constant(Tensor::matrix(B, self.config_.gru_hidden_dim));
  std::vector<Var> states;
  states.reserve(T);
  for (std::size_t s = 0; s < T; ++s) {
    const std::span<const int> prev(batch.prev_actions.data() + s * B, B);
    Var x = concat_cols(slice_rows(embedded, s * B, B), self.action_embedding.forward(t, prev));
    h = self.gru.forward(t, h, x);
    states.push_back(h);
  }
  Var all = concat_rows(std::span<const Var>(states.data(), T - 1));
  Var out = self.predictor.forward(t, concat_cols(all, self.action_embedding.forward(t, batch.actions)));
  Var total = self.config_.obs.categorical()
                  ? weighted_cross_entropy_sum(out, batch.next_symbols, batch.mask)
                  : weighted_squared_error_sum(out, batch.next_values, batch.mask);
  if (hidden) *hidden = std::move(states);
  return scale(total, 1.0 / double(std::max<std::size_t>(batch.count, 1)));
}

Var WorldModel::sequence_loss(Tape& t, const SequenceBatch& batch, std::vector<Var>* hidden) {
  return loss_impl(*this, t, batch, hidden);
}

Var WorldModel::sequence_loss(Tape& t, const SequenceBatch& batch, std::vector<Var>* hidden) const {
  return loss_impl(*this, t, batch, hidden);
}

// ---- inference ------------------------------------------------------------------

namespace {

void check_spec(const WorldModel& model, const envs::Observation& obs) {
  const bool categorical = std::holds_alternative<int>(obs);
  if (categorical != model.config().obs.categorical()) {
    throw ValidationError("world model: observation kind does not match the model");
  }
}

}  // namespace

Rollout forward_rollout(const WorldModel& model, const Trajectory& trajectory) {
  if (trajectory.length() < 2) throw ValidationError("forward_rollout: need >= 2 records");
  for (const auto& r : trajectory.records) check_spec(model, r.observation);
  const Trajectory* one[] = {&trajectory};
  const SequenceBatch batch = model.make_batch(one);
  Tape t;
  std::vector<Var> states;
  model.sequence_loss(t, batch, &states);
  Rollout out;
  const std::size_t T = trajectory.length(), H = model.hidden_dim();
  out.hidden = Tensor::matrix(T, H);
  for (std::size_t s = 0; s < T; ++s) {
    std::copy_n(states[s].value().values().begin(), H,
                out.hidden.values().begin() + std::ptrdiff_t(s * H));
  }
  Var all = concat_rows(std::span<const Var>(states.data(), T - 1));
  const Tensor pred = model.predict(t, all, batch.actions).value();
  out.predictions = model.config().obs.categorical() ? nn::softmax_rows(pred) : pred;
  return out;
}

HiddenStateTracker::HiddenStateTracker(const WorldModel& model) : model_(&model) {
  h_ = Tensor::matrix(1, model.hidden_dim());
}

const Tensor& HiddenStateTracker::advance(const envs::Observation& obs, int prev_action) {
  check_spec(*model_, obs);
  Tape t;
  const std::vector<double> x = envs::encode(obs, model_->config().obs);
  const int prev[] = {prev_action};
  Var next = model_->encode_step(t, t.constant(h_), t.constant(Tensor({1, x.size()}, x)), prev);
  h_ = next.value();
  return h_;
}

const Tensor& HiddenStateTracker::reset(const envs::Observation& first) {
  h_ = Tensor::matrix(1, model_->hidden_dim());
  return advance(first, model_->null_action());
}

void HiddenStateTracker::set_state(Tensor h) {
  if (h.rows() != 1 || h.cols() != model_->hidden_dim()) {
    throw DimensionError("hidden state tracker: state " + h.shape_string());
  }
  h_ = std::move(h);
}

const Tensor& HiddenStateTracker::update(int action, const envs::Observation& next) {
  if (action < 0 || action >= model_->config().num_actions) {
    throw UsageError("hidden state tracker: invalid action " + std::to_string(action));
  }
  return advance(next, action);
}

Tensor HiddenStateTracker::predict(int action) const {
  Tape t;
  const int a[] = {action};
  const Tensor out = model_->predict(t, t.constant(h_), a).value();
  return model_->config().obs.categorical() ? nn::softmax_rows(out) : out;
}

// ---- training -------------------------------------------------------------------

void train_epochs(WorldModel& model, std::span<const Trajectory> data, int epochs,
                  std::vector<EpochLog>& history,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  if (data.empty()) throw ValidationError("train_world_model: empty dataset");
  const WorldModelConfig& cfg = model.config();
  nn::Rmsprop opt({cfg.learning_rate});
  const nn::ParamList params = nn::parameters_of(model);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const auto bs = std::size_t(cfg.batch_size);
  for (int e = 0; e < epochs; ++e) {
    const int epoch = int(history.size()) + 1;
    const auto start = std::chrono::steady_clock::now();
    Rng rng = make_rng(cfg.seed, "wm.shuffle", std::uint64_t(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    opt.set_learning_rate(cfg.learning_rate * std::pow(cfg.lr_decay, double(epoch - 1)));
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += bs) {
      std::vector<const Trajectory*> episodes;
      for (std::size_t i = begin; i < std::min(order.size(), begin + bs); ++i) {
        episodes.push_back(&data[order[i]]);
      }
      const SequenceBatch batch = model.make_batch(episodes);
      Tape t;
      nn::zero_grad(params);
      Var loss = model.sequence_loss(t, batch);
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        throw TrainingError("world model: loss diverged (non-finite) in epoch " +
                            std::to_string(epoch));
      }
      t.backward(loss);
      if (cfg.clip_norm > 0.0) nn::clip_grad_norm(params, cfg.clip_norm);
      try {
        opt.step(params);
      } catch (const TrainingError& err) {
        throw TrainingError("world model: epoch " + std::to_string(epoch) + ": " + err.what());
      }
      loss_sum += value * double(batch.count);
      loss_count += batch.count;
    }
    EpochLog log;
    log.epoch = epoch;
    log.mean_loss = loss_sum / double(std::max<std::size_t>(loss_count, 1));
    log.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.push_back(log);
    if (on_epoch) on_epoch(log);
  }
}

TrainingRun train_world_model(std::span<const Trajectory> data, const WorldModelConfig& config,
                              const std::function<void(const EpochLog&)>& on_epoch) {
  TrainingRun run{WorldModel(config), {}};
  train_epochs(run.model, data, config.epochs, run.history, on_epoch);
  return run;
}

double mean_next_step_loss(const WorldModel& model, std::span<const Trajectory> data) {
  constexpr std::size_t kChunk = 64;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t begin = 0; begin < data.size(); begin += kChunk) {
    std::vector<const Trajectory*> episodes;
    for (std::size_t i = begin; i < std::min(data.size(), begin + kChunk); ++i) {
      episodes.push_back(&data[i]);
    }
    const SequenceBatch batch = model.make_batch(episodes);
    Tape t;
    total += model.sequence_loss(t, batch).value().item() * double(batch.count);
    count += batch.count;
  }
  if (count == 0) throw ValidationError("mean_next_step_loss: no transitions");
  return total / double(count);
}

HiddenStateDataset export_hidden_states(const WorldModel& model,
                                        std::span<const Trajectory> trajectories) {
  HiddenStateDataset ds;
  std::size_t rows = 0;
  for (const auto& traj : trajectories) rows += traj.length();
  const std::size_t H = model.hidden_dim();
  ds.hidden = Tensor::matrix(rows, H);
  std::size_t row = 0;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const Trajectory& traj = trajectories[i];
    const Rollout r = forward_rollout(model, traj);
    std::copy(r.hidden.values().begin(), r.hidden.values().end(),
              ds.hidden.values().begin() + std::ptrdiff_t(row * H));
    ds.first_row.push_back(row);
    for (std::size_t t = 0; t + 1 < traj.length(); ++t) {
      HiddenRecord rec;
      rec.trajectory = int(i);
      rec.t = int(t);
      rec.row = row + t;
      rec.next_row = row + t + 1;
      rec.action = traj.records[t].action;
      rec.next_observation = traj.records[t + 1].observation;
      rec.next_reward = traj.records[t + 1].reward;
      rec.true_state = traj.records[t].true_state;
      rec.next_true_state = traj.records[t + 1].true_state;
      ds.records.push_back(std::move(rec));
    }
    row += traj.length();
  }
  return ds;
}

// ---- persistence ----------------------------------------------------------------

void save_world_model(const std::filesystem::path& path, const WorldModel& model) {
  json meta = model.config();
  meta["type"] = "world_model";
  nn::save_checkpoint(path, nn::capture(nn::parameters_of(model), meta.dump()));
}

WorldModel load_world_model(const std::filesystem::path& path) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(path);
  json meta;
  try {
    meta = json::parse(ckpt.metadata);
  } catch (const json::exception& e) {
    throw ValidationError("world model checkpoint " + path.string() + ": bad metadata");
  }
  if (meta.value("type", std::string()) != "world_model") {
    throw ValidationError(path.string() + " is not a world model checkpoint");
  }
  WorldModel model(meta.get<WorldModelConfig>());
  nn::restore(nn::parameters_of(model), ckpt);
  return model;
}

void write_training_log(const std::filesystem::path& path, std::span<const EpochLog> history) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "epoch,mean_loss,wall_time_s\r\n";
  os.precision(10);
  for (const auto& e : history) os << e.epoch << ',' << e.mean_loss << ',' << e.wall_time_s << "\r\n";
}

}  // namespace cslab::wm
