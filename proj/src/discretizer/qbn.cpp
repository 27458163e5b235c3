#include "cslab/discretizer/qbn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "cslab/common/errors.hpp"
#include "cslab/common/random.hpp"
#include "cslab/numerics/rmsprop.hpp"

namespace cslab::disc {

using nlohmann::json;
using nn::Tape;
using nn::Tensor;
using nn::Var;

double ternary_activation(double x) { return 1.5 * std::tanh(x) + 0.5 * std::tanh(-3.0 * x); }

int ternary_round(double v) {
  if (v >= 0.5) return 1;
  if (v <= -0.5) return -1;
  return 0;
}

Code ternary_quantize(std::span<const double> x) {
  Code out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = ternary_round(ternary_activation(x[i]));
  return out;
}

Var ternary_quantize(Var x) {
  Var g = add(scale(tanh(x), 1.5), scale(tanh(scale(x, -3.0)), 0.5));
  Tensor rounded = g.value();
  for (double& v : rounded.values()) v = double(ternary_round(v));
  return straight_through(g, std::move(rounded));
}

// ---- config -------------------------------------------------------------------

void QbnConfig::validate() const {
  if (bottleneck_width < 1) throw ConfigError("qbn: bottleneck_width must be >= 1");
  for (std::size_t d : {encoder_hidden, decoder_hidden, head_hidden, action_embed_dim}) {
    if (d < 1) throw ConfigError("qbn: hidden dims must be >= 1");
  }
  if (distill_weight < 0.0 || reconstruction_weight < 0.0 || input_noise < 0.0) {
    throw ConfigError("qbn: loss weights must be >= 0");
  }
  if (epochs < 0 || batch_size < 1) throw ConfigError("qbn: epochs >= 0 and batch_size >= 1 required");
  if (!(learning_rate > 0.0)) throw ConfigError("qbn: learning_rate must be > 0");
}

void to_json(json& j, const QbnConfig& c) {
  j = json{{"bottleneck_width", c.bottleneck_width},
           {"encoder_hidden", c.encoder_hidden},
           {"decoder_hidden", c.decoder_hidden},
           {"head_hidden", c.head_hidden},
           {"action_embed_dim", c.action_embed_dim},
           {"distill_weight", c.distill_weight},
           {"reconstruction_weight", c.reconstruction_weight},
           {"input_noise", c.input_noise},
           {"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"learning_rate", c.learning_rate},
           {"seed", c.seed}};
}

void from_json(const json& j, QbnConfig& c) {
  const QbnConfig d;
  c.bottleneck_width = j.value("bottleneck_width", d.bottleneck_width);
  c.encoder_hidden = j.value("encoder_hidden", d.encoder_hidden);
  c.decoder_hidden = j.value("decoder_hidden", d.decoder_hidden);
  c.head_hidden = j.value("head_hidden", d.head_hidden);
  c.action_embed_dim = j.value("action_embed_dim", d.action_embed_dim);
  c.distill_weight = j.value("distill_weight", d.distill_weight);
  c.reconstruction_weight = j.value("reconstruction_weight", d.reconstruction_weight);
  c.input_noise = j.value("input_noise", d.input_noise);
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.seed = j.value("seed", d.seed);
}

// ---- model --------------------------------------------------------------------

Qbn::Qbn(const QbnConfig& config, std::size_t hidden_dim, envs::ObservationSpec obs, int num_actions)
    : config_(config), hidden_dim_(hidden_dim), obs_(obs), num_actions_(num_actions) {
  config_.validate();
  if (hidden_dim < 1 || obs.size < 1 || num_actions < 1) {
    throw ConfigError("qbn: hidden_dim, observation size and num_actions must be >= 1");
  }
  Rng rng = make_rng(config_.seed, "qbn.init");
  const std::size_t b = config_.bottleneck_width;
  const std::size_t enc[] = {hidden_dim, config_.encoder_hidden, b};
  const std::size_t dec[] = {b, config_.decoder_hidden, hidden_dim};
  const std::size_t head[] = {b + config_.action_embed_dim, config_.head_hidden, std::size_t(obs.size)};
  encoder = nn::Mlp("qbn.enc", enc, false, rng);
  decoder = nn::Mlp("qbn.dec", dec, false, rng);
  action_embedding = nn::Embedding("qbn.action", std::size_t(num_actions), config_.action_embed_dim, rng);
  predictor = nn::Mlp("qbn.eta", head, false, rng);
}

Code Qbn::encode(std::span<const double> hidden) const {
  if (hidden.size() != hidden_dim_) {
    throw DimensionError("qbn: hidden state of size " + std::to_string(hidden.size()) +
                         ", expected " + std::to_string(hidden_dim_));
  }
  Tape t;
  const Tensor pre = encoder.forward(t, t.constant(Tensor({1, hidden.size()},
                                                          std::vector<double>(hidden.begin(), hidden.end()))))
                         .value();
  return ternary_quantize(pre.values());
}

std::vector<Code> Qbn::encode_rows(const Tensor& hidden) const {
  if (hidden.cols() != hidden_dim_) throw DimensionError("qbn: hidden matrix " + hidden.shape_string());
  std::vector<Code> out;
  out.reserve(hidden.rows());
  constexpr std::size_t kChunk = 4096;
  for (std::size_t begin = 0; begin < hidden.rows(); begin += kChunk) {
    Tape t;
    const std::size_t n = std::min(kChunk, hidden.rows() - begin);
    Var pre = encoder.forward(t, slice_rows(t.constant(hidden), begin, n));
    for (std::size_t r = 0; r < n; ++r) out.push_back(ternary_quantize(pre.value().row_span(r)));
  }
  return out;
}

// ---- distillation ---------------------------------------------------------------

namespace {

Tensor gather(const Tensor& m, std::span<const std::size_t> rows) {
  Tensor out = Tensor::matrix(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = m.row_span(rows[i]);
    std::copy(src.begin(), src.end(), out.values().begin() + std::ptrdiff_t(i * m.cols()));
  }
  return out;
}

Tensor record_hidden(const wm::HiddenStateDataset& data, std::span<const std::size_t> records) {
  std::vector<std::size_t> rows;
  rows.reserve(records.size());
  for (std::size_t r : records) rows.push_back(data.records[r].row);
  return gather(data.hidden, rows);
}

Tensor jitter(Tensor x, double sd, Rng& rng) {
  std::normal_distribution<double> n(0.0, sd);
  for (double& v : x.values()) v += n(rng);
  return x;
}

double row_entropy_sum(const Tensor& probs) {
  double h = 0.0;
  for (double p : probs.values()) h -= p > 0.0 ? p * std::log(p) : 0.0;
  return h;
}

}  // namespace

Tensor teacher_outputs(const wm::WorldModel& model, const wm::HiddenStateDataset& data) {
  const std::size_t N = data.size(), out_dim = std::size_t(model.config().obs.size);
  Tensor out = Tensor::matrix(N, out_dim);
  constexpr std::size_t kChunk = 4096;
  std::vector<std::size_t> idx(N);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t begin = 0; begin < N; begin += kChunk) {
    const std::size_t n = std::min(kChunk, N - begin);
    const std::span<const std::size_t> chunk(idx.data() + begin, n);
    std::vector<int> actions;
    for (std::size_t r : chunk) actions.push_back(data.records[r].action);
    Tape t;
    Tensor pred = model.predict(t, t.constant(record_hidden(data, chunk)), actions).value();
    if (model.config().obs.categorical()) pred = nn::softmax_rows(pred);
    std::copy(pred.values().begin(), pred.values().end(),
              out.values().begin() + std::ptrdiff_t(begin * out_dim));
  }
  return out;
}

QbnFit train_qbn_distill(const wm::WorldModel& model, const wm::HiddenStateDataset& data,
                         const QbnConfig& config,
                         const std::function<void(const QbnEpochLog&)>& on_epoch) {
  if (data.size() == 0) throw ValidationError("qbn: empty hidden-state dataset");
  const bool categorical = model.config().obs.categorical();
  QbnFit fit;
  fit.qbn = Qbn(config, model.hidden_dim(), model.config().obs, model.config().num_actions);
  const Tensor teacher = teacher_outputs(model, data);
  const nn::ParamList params = nn::parameters_of(fit.qbn);
  nn::Rmsprop opt({config.learning_rate});
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const auto bs = std::size_t(config.batch_size);
  for (int e = 1; e <= config.epochs; ++e) {
    const auto start = std::chrono::steady_clock::now();
    Rng rng = make_rng(config.seed, "qbn.shuffle", std::uint64_t(e));
    std::shuffle(order.begin(), order.end(), rng);
    double distill_sum = 0.0, recon_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += bs) {
      const std::size_t n = std::min(bs, order.size() - begin);
      const std::span<const std::size_t> batch(order.data() + begin, n);
      std::vector<int> actions;
      for (std::size_t r : batch) actions.push_back(data.records[r].action);
      const Tensor target = gather(teacher, batch);
      Tape t;
      nn::zero_grad(params);
      Var hidden = t.constant(record_hidden(data, batch));
      Var codes = fit.qbn.code(t, config.input_noise > 0.0 ? t.constant(jitter(hidden.value(), config.input_noise, rng))
                                                            : hidden);
      Var out = fit.qbn.predict(t, codes, actions);
      Var distill = categorical ? softmax_cross_entropy(out, target) : mse(out, target);
      Var recon = mse(fit.qbn.reconstruct(t, codes), hidden);
      Var loss = add(scale(distill, config.distill_weight), scale(recon, config.reconstruction_weight));
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        throw TrainingError("qbn: loss diverged (non-finite) in epoch " + std::to_string(e));
      }
      t.backward(loss);
      nn::clip_grad_norm(params, 5.0);
      try {
        opt.step(params);
      } catch (const TrainingError& err) {
        throw TrainingError("qbn: epoch " + std::to_string(e) + ": " + err.what());
      }
      double d = distill.value().item() * double(n);
      if (categorical) d -= row_entropy_sum(target);  // cross-entropy minus teacher entropy = KL
      distill_sum += d;
      recon_sum += recon.value().item() * double(n);
    }
    QbnEpochLog log;
    log.epoch = e;
    log.distill_loss = distill_sum / double(order.size());
    log.reconstruction_loss = recon_sum / double(order.size());
    log.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    fit.history.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  for (const Code& c : fit.qbn.encode_rows(data.hidden)) fit.ids.push_back(fit.map.insert(c));
  return fit;
}

double student_next_step_loss(const Qbn& qbn, const wm::HiddenStateDataset& data) {
  if (data.size() == 0) throw ValidationError("qbn: empty hidden-state dataset");
  const bool categorical = qbn.obs().categorical();
  constexpr std::size_t kChunk = 4096;
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  double total = 0.0;
  for (std::size_t begin = 0; begin < idx.size(); begin += kChunk) {
    const std::size_t n = std::min(kChunk, idx.size() - begin);
    const std::span<const std::size_t> chunk(idx.data() + begin, n);
    std::vector<int> actions, symbols;
    Tensor values = Tensor::matrix(n, std::size_t(qbn.obs().size));
    for (std::size_t i = 0; i < n; ++i) {
      const auto& rec = data.records[chunk[i]];
      actions.push_back(rec.action);
      if (categorical) {
        symbols.push_back(envs::symbol_of(rec.next_observation));
      } else {
        const auto v = envs::encode(rec.next_observation, qbn.obs());
        std::copy(v.begin(), v.end(), values.values().begin() + std::ptrdiff_t(i * values.cols()));
      }
    }
    Tape t;
    Var out = qbn.predict(t, qbn.code(t, t.constant(record_hidden(data, chunk))), actions);
    Var loss = categorical ? softmax_cross_entropy(out, symbols) : mse(out, values);
    total += loss.value().item() * double(n);
  }
  return total / double(data.size());
}

}  // namespace cslab::disc
