#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <nlohmann/json_fwd.hpp>
#include <span>
#include <vector>

#include "cslab/envs/environment.hpp"
#include "cslab/envs/trajectory.hpp"
#include "cslab/numerics/layers.hpp"

namespace cslab::wm {

struct WorldModelConfig {
  envs::ObservationSpec obs;
  int num_actions = 2;
  std::size_t obs_embed_dim = 64;
  std::size_t action_embed_dim = 64;
  std::size_t gru_hidden_dim = 64;
  std::size_t predictor_hidden_dim = 64;

  int epochs = 20;
  int batch_size = 8;
  double learning_rate = 1e-3;
  // Learning rate multiplier applied after every epoch.
  double lr_decay = 0.9;
  double clip_norm = 5.0;  // <= 0 disables clipping
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
};

void to_json(nlohmann::json& j, const WorldModelConfig& c);
void from_json(const nlohmann::json& j, WorldModelConfig& c);

// Padded, time-major batch of episodes. Row t * batch + b refers to episode b
// at time t.
struct SequenceBatch {
  std::size_t batch = 0;
  std::size_t steps = 0;             // longest episode in the batch
  nn::Tensor inputs;                 // steps*batch x obs.size, encoded o_t
  std::vector<int> prev_actions;     // steps*batch, a_{t-1} (null at t = 0 and past the end)
  std::vector<int> actions;          // (steps-1)*batch, a_t
  std::vector<int> next_symbols;     // categorical targets o_{t+1}
  nn::Tensor next_values;            // real targets o_{t+1}
  std::vector<double> mask;          // 1 for a real prediction, 0 for padding
  std::size_t count = 0;             // number of real predictions
};

// Psi = eta o f. f: observation MLP + action embedding -> GRU; eta: MLP on
// concat(hidden, embed(a_t)). The action table has one extra row, the learned
// null action consumed at t = 0.
class WorldModel {
 public:
  WorldModel() = default;
  explicit WorldModel(const WorldModelConfig& config);

  const WorldModelConfig& config() const { return config_; }
  int null_action() const { return config_.num_actions; }
  std::size_t hidden_dim() const { return config_.gru_hidden_dim; }

  SequenceBatch make_batch(std::span<const envs::Trajectory* const> episodes) const;

  // Mean next-step loss over the batch (cross-entropy in nats or MSE). When
  // `hidden` is given it receives the hidden state for every time step.
  nn::Var sequence_loss(nn::Tape& t, const SequenceBatch& batch,
                        std::vector<nn::Var>* hidden = nullptr);
  nn::Var sequence_loss(nn::Tape& t, const SequenceBatch& batch,
                        std::vector<nn::Var>* hidden = nullptr) const;

  // One recurrent step of f for a batch of rows.
  nn::Var encode_step(nn::Tape& t, nn::Var h, nn::Var obs_inputs,
                      std::span<const int> prev_actions) const;
  // Logits (categorical) or predicted values (real) for o_{t+1}.
  nn::Var predict(nn::Tape& t, nn::Var h, std::span<const int> actions) const;

  nn::Mlp obs_encoder;
  nn::Embedding action_embedding;
  nn::GruCell gru;
  nn::Mlp predictor;

  template <class F>
  void for_each_parameter(F&& f) {
    obs_encoder.for_each_parameter(f);
    action_embedding.for_each_parameter(f);
    gru.for_each_parameter(f);
    predictor.for_each_parameter(f);
  }
  template <class F>
  void for_each_parameter(F&& f) const {
    obs_encoder.for_each_parameter(f);
    action_embedding.for_each_parameter(f);
    gru.for_each_parameter(f);
    predictor.for_each_parameter(f);
  }

 private:
  template <class Self>
  static nn::Var loss_impl(Self& self, nn::Tape& t, const SequenceBatch& batch,
                           std::vector<nn::Var>* hidden);

  WorldModelConfig config_;
};

struct Rollout {
  nn::Tensor hidden;       // length x hidden_dim, s_t for every record
  nn::Tensor predictions;  // (length-1) x obs.size: next-symbol probabilities or values
};

// Throws ValidationError for trajectories shorter than 2 or whose
// observations do not match the model.
Rollout forward_rollout(const WorldModel& model, const envs::Trajectory& trajectory);

// Online filtering of s_t while acting in an environment.
class HiddenStateTracker {
 public:
  explicit HiddenStateTracker(const WorldModel& model);

  const nn::Tensor& reset(const envs::Observation& first);
  const nn::Tensor& update(int action, const envs::Observation& next);
  const nn::Tensor& state() const { return h_; }
  // Overrides s_t (1 x hidden_dim), e.g. with a quantized reconstruction.
  void set_state(nn::Tensor h);
  // Next-symbol probabilities (or predicted values) after taking `action`.
  nn::Tensor predict(int action) const;

 private:
  const nn::Tensor& advance(const envs::Observation& obs, int prev_action);

  const WorldModel* model_;
  nn::Tensor h_;
};

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double wall_time_s = 0.0;
};

struct TrainingRun {
  WorldModel model;
  std::vector<EpochLog> history;
};

// RMSprop over shuffled mini-batches of whole episodes (backprop through the
// full episode). Throws TrainingError naming the epoch when the loss or a
// gradient becomes non-finite.
TrainingRun train_world_model(std::span<const envs::Trajectory> data, const WorldModelConfig& config,
                              const std::function<void(const EpochLog&)>& on_epoch = {});
void train_epochs(WorldModel& model, std::span<const envs::Trajectory> data, int epochs,
                  std::vector<EpochLog>& history,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

double mean_next_step_loss(const WorldModel& model, std::span<const envs::Trajectory> data);

// One record per transition (s_t, a_t, o_{t+1}); `hidden` holds s_t for every
// step of every trajectory, including the final one, so both s_t and s_{t+1}
// of a record are rows of it.
struct HiddenRecord {
  int trajectory = 0;
  int t = 0;
  std::size_t row = 0;
  std::size_t next_row = 0;
  int action = 0;
  envs::Observation next_observation;
  double next_reward = 0.0;
  int true_state = -1;
  int next_true_state = -1;
};

struct HiddenStateDataset {
  nn::Tensor hidden;
  std::vector<HiddenRecord> records;
  std::vector<std::size_t> first_row;  // per trajectory

  std::size_t size() const { return records.size(); }
};

HiddenStateDataset export_hidden_states(const WorldModel& model,
                                        std::span<const envs::Trajectory> trajectories);

void save_world_model(const std::filesystem::path& path, const WorldModel& model);
WorldModel load_world_model(const std::filesystem::path& path);
void write_training_log(const std::filesystem::path& path, std::span<const EpochLog> history);

}  // namespace cslab::wm
