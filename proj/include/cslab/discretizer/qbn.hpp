#pragma once

#include <cstdint>
#include <functional>
#include <nlohmann/json_fwd.hpp>
#include <span>
#include <vector>

#include "cslab/discretizer/state_map.hpp"
#include "cslab/numerics/layers.hpp"
#include "cslab/world_model/world_model.hpp"

namespace cslab::disc {

// g(x) = 1.5 tanh(x) + 0.5 tanh(-3x)
double ternary_activation(double x);
// Nearest of {-1, 0, 1}; |v| = 0.5 rounds away from zero.
int ternary_round(double v);
Code ternary_quantize(std::span<const double> x);
// Forward: round(g(x)); backward: gradient of g (straight-through rounding).
nn::Var ternary_quantize(nn::Var x);

struct QbnConfig {
  std::size_t bottleneck_width = 8;
  std::size_t encoder_hidden = 64;
  std::size_t decoder_hidden = 64;
  std::size_t head_hidden = 64;
  std::size_t action_embed_dim = 64;
  double distill_weight = 1.0;
  double reconstruction_weight = 1.0;
  // Std of Gaussian noise added to the encoder input while training.
  double input_noise = 0.0;

  int epochs = 10;
  int batch_size = 256;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
};

void to_json(nlohmann::json& j, const QbnConfig& c);
void from_json(const nlohmann::json& j, QbnConfig& c);

// Quantized bottleneck over world-model hidden states: encoder s -> b ternary
// units, decoder code -> s, and a prediction head on concat(code, embed(a)).
class Qbn {
 public:
  Qbn() = default;
  Qbn(const QbnConfig& config, std::size_t hidden_dim, envs::ObservationSpec obs, int num_actions);

  const QbnConfig& config() const { return config_; }
  std::size_t hidden_dim() const { return hidden_dim_; }
  const envs::ObservationSpec& obs() const { return obs_; }
  int num_actions() const { return num_actions_; }

  Code encode(std::span<const double> hidden) const;
  // Codes for every row of an N x hidden_dim matrix.
  std::vector<Code> encode_rows(const nn::Tensor& hidden) const;

  nn::Var code(nn::Tape& t, nn::Var hidden) { return ternary_quantize(encoder.forward(t, hidden)); }
  nn::Var code(nn::Tape& t, nn::Var hidden) const {
    return ternary_quantize(encoder.forward(t, hidden));
  }
  nn::Var reconstruct(nn::Tape& t, nn::Var codes) { return decoder.forward(t, codes); }
  nn::Var reconstruct(nn::Tape& t, nn::Var codes) const { return decoder.forward(t, codes); }
  // Logits (categorical) or values (real) for the next observation.
  nn::Var predict(nn::Tape& t, nn::Var codes, std::span<const int> actions) {
    return predictor.forward(t, concat_cols(codes, action_embedding.forward(t, actions)));
  }
  nn::Var predict(nn::Tape& t, nn::Var codes, std::span<const int> actions) const {
    return predictor.forward(t, concat_cols(codes, action_embedding.forward(t, actions)));
  }

  nn::Mlp encoder;
  nn::Mlp decoder;
  nn::Embedding action_embedding;
  nn::Mlp predictor;

  template <class F>
  void for_each_parameter(F&& f) {
    encoder.for_each_parameter(f);
    decoder.for_each_parameter(f);
    action_embedding.for_each_parameter(f);
    predictor.for_each_parameter(f);
  }
  template <class F>
  void for_each_parameter(F&& f) const {
    encoder.for_each_parameter(f);
    decoder.for_each_parameter(f);
    action_embedding.for_each_parameter(f);
    predictor.for_each_parameter(f);
  }

 private:
  QbnConfig config_;
  std::size_t hidden_dim_ = 0;
  envs::ObservationSpec obs_;
  int num_actions_ = 0;
};

// Teacher outputs of the world model for every record: next-symbol
// probabilities (categorical) or predicted values (real).
nn::Tensor teacher_outputs(const wm::WorldModel& model, const wm::HiddenStateDataset& data);

struct QbnEpochLog {
  int epoch = 0;
  double distill_loss = 0.0;  // KL(teacher || student) in nats, or MSE for real observations
  double reconstruction_loss = 0.0;
  double wall_time_s = 0.0;
};

struct QbnFit {
  Qbn qbn;
  DiscreteStateMap map;
  std::vector<int> ids;  // id of every hidden row, assigned after training
  std::vector<QbnEpochLog> history;
};

// Distils the world model's predictions into the bottleneck. The world model
// is only read. Throws TrainingError naming the epoch on divergence.
QbnFit train_qbn_distill(const wm::WorldModel& model, const wm::HiddenStateDataset& data,
                         const QbnConfig& config,
                         const std::function<void(const QbnEpochLog&)>& on_epoch = {});

// Mean next-step log-loss (or MSE) of the discrete path on the observed
// next observations of `data`.
double student_next_step_loss(const Qbn& qbn, const wm::HiddenStateDataset& data);

}  // namespace cslab::disc
