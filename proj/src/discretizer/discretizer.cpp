#include "cslab/discretizer/discretizer.hpp"

#include <algorithm>
#include <fstream>
#include <utility>
#include <nlohmann/json.hpp>

#include "cslab/common/errors.hpp"
#include "cslab/numerics/checkpoint.hpp"

namespace cslab::disc {

using nlohmann::json;

std::string method_name(Method m) {
  switch (m) {
    case Method::kQbn: return "qbn";
    case Method::kKmeans: return "kmeans";
    case Method::kVq: return "vq";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  if (name == "qbn") return Method::kQbn;
  if (name == "kmeans") return Method::kKmeans;
  if (name == "vq") return Method::kVq;
  throw ConfigError("unknown discretizer method '" + name + "' (qbn, kmeans, vq)");
}

void to_json(json& j, const DiscretizerConfig& c) {
  j = json{{"method", method_name(c.method)},
           {"qbn", c.qbn},
           {"k", c.k},
           {"kmeans_iterations", c.kmeans.iterations},
           {"kmeans_batch_size", c.kmeans.batch_size},
           {"vq_epochs", c.vq.epochs},
           {"vq_decay", c.vq.decay},
           {"seed", c.seed}};
}

void from_json(const json& j, DiscretizerConfig& c) {
  const DiscretizerConfig d;
  c.method = parse_method(j.value("method", method_name(d.method)));
  c.qbn = j.contains("qbn") ? j.at("qbn").get<QbnConfig>() : d.qbn;
  c.k = j.value("k", d.k);
  c.kmeans.iterations = j.value("kmeans_iterations", d.kmeans.iterations);
  c.kmeans.batch_size = j.value("kmeans_batch_size", d.kmeans.batch_size);
  c.vq.epochs = j.value("vq_epochs", d.vq.epochs);
  c.vq.decay = j.value("vq_decay", d.vq.decay);
  c.seed = j.value("seed", d.seed);
  if (c.k < 1) throw ConfigError("discretizer: k must be >= 1");
  if (c.kmeans.iterations < 0 || c.kmeans.batch_size < 1) throw ConfigError("discretizer: bad k-means options");
  if (c.vq.epochs < 0 || !(c.vq.decay > 0.0 && c.vq.decay < 1.0)) {
    throw ConfigError("discretizer: vq_decay must lie in (0, 1)");
  }
}

Discretizer::Discretizer(Qbn qbn, DiscreteStateMap map)
    : method_(Method::kQbn), qbn_(std::move(qbn)), map_(std::move(map)) {}

Discretizer::Discretizer(Method method, KmeansModel centroids, DiscreteStateMap map)
    : method_(method), centroids_(std::move(centroids)), map_(std::move(map)) {
  if (method == Method::kQbn) throw ValidationError("discretizer: centroids given for a qbn discretizer");
}

std::size_t Discretizer::hidden_dim() const {
  if (qbn_) return qbn_->hidden_dim();
  if (centroids_) return centroids_->centroids.cols();
  return 0;
}

Code Discretizer::code_of(std::span<const double> hidden) const {
  if (qbn_) return qbn_->encode(hidden);
  if (centroids_) return Code{centroids_->assign(hidden)};
  throw UsageError("discretizer: not fitted");
}

int Discretizer::lookup(std::span<const double> hidden) const { return map_.find(code_of(hidden)); }

int Discretizer::assign(std::span<const double> hidden) { return map_.insert(code_of(hidden)); }

nn::Tensor Discretizer::decode(const Code& code) const {
  if (qbn_) {
    if (code.size() != qbn_->config().bottleneck_width) throw DimensionError("discretizer: code width mismatch");
    nn::Tape t;
    const std::vector<double> v(code.begin(), code.end());
    return qbn_->reconstruct(t, t.constant(nn::Tensor({1, v.size()}, v))).value();
  }
  if (centroids_) {
    if (code.size() != 1 || code[0] < 0 || std::size_t(code[0]) >= centroids_->k()) {
      throw DimensionError("discretizer: no centroid for code " + format_code(code));
    }
    const auto row = centroids_->centroids.row_span(std::size_t(code[0]));
    return nn::Tensor({1, row.size()}, std::vector<double>(row.begin(), row.end()));
  }
  throw UsageError("discretizer: not fitted");
}

// ---- closed-loop tracking ----------------------------------------------------------------

DiscreteStateTracker::DiscreteStateTracker(const wm::WorldModel& model, const Discretizer& discretizer)
    : tracker_(model), discretizer_(&discretizer) {
  if (discretizer.hidden_dim() != model.hidden_dim()) {
    throw DimensionError("discretizer expects hidden states of size " + std::to_string(discretizer.hidden_dim()) +
                         ", world model has " + std::to_string(model.hidden_dim()));
  }
}

DiscreteStateTracker::DiscreteStateTracker(const wm::WorldModel& model, Discretizer& discretizer)
    : DiscreteStateTracker(model, std::as_const(discretizer)) {
  inserting_ = &discretizer;
}

int DiscreteStateTracker::settle() {
  hidden_ = tracker_.state();
  const Code code = discretizer_->code_of(hidden_.values());
  id_ = inserting_ ? inserting_->mutable_map().insert(code) : discretizer_->map().find(code);
  tracker_.set_state(discretizer_->decode(code));
  return id_;
}

int DiscreteStateTracker::reset(const envs::Observation& first) {
  tracker_.reset(first);
  return settle();
}

int DiscreteStateTracker::update(int action, const envs::Observation& next) {
  tracker_.update(action, next);
  return settle();
}

namespace {

template <class D>
StateDataset export_impl(const wm::WorldModel& model, D& discretizer, std::span<const envs::Trajectory> trajectories) {
  StateDataset out;
  std::size_t rows = 0;
  for (const auto& traj : trajectories) rows += traj.length();
  const std::size_t H = model.hidden_dim();
  out.data.hidden = nn::Tensor::matrix(rows, H);
  out.ids.reserve(rows);
  DiscreteStateTracker tracker(model, discretizer);
  std::size_t row = 0;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const envs::Trajectory& traj = trajectories[i];
    if (traj.length() < 2) throw ValidationError("export_states: trajectory shorter than 2");
    out.data.first_row.push_back(row);
    for (std::size_t t = 0; t < traj.length(); ++t) {
      out.ids.push_back(t == 0 ? tracker.reset(traj.records[0].observation)
                               : tracker.update(traj.records[t - 1].action, traj.records[t].observation));
      const auto h = tracker.hidden().values();
      std::copy(h.begin(), h.end(), out.data.hidden.values().begin() + std::ptrdiff_t((row + t) * H));
      if (t + 1 < traj.length()) {
        wm::HiddenRecord rec;
        rec.trajectory = int(i);
        rec.t = int(t);
        rec.row = row + t;
        rec.next_row = row + t + 1;
        rec.action = traj.records[t].action;
        rec.next_observation = traj.records[t + 1].observation;
        rec.next_reward = traj.records[t + 1].reward;
        rec.true_state = traj.records[t].true_state;
        rec.next_true_state = traj.records[t + 1].true_state;
        out.data.records.push_back(std::move(rec));
      }
    }
    row += traj.length();
  }
  return out;
}

}  // namespace

StateDataset export_states(const wm::WorldModel& model, const Discretizer& discretizer,
                           std::span<const envs::Trajectory> trajectories) {
  return export_impl(model, discretizer, trajectories);
}

StateDataset export_states(const wm::WorldModel& model, Discretizer& discretizer,
                           std::span<const envs::Trajectory> trajectories, bool insert_unseen) {
  if (!insert_unseen) return export_impl(model, std::as_const(discretizer), trajectories);
  return export_impl(model, discretizer, trajectories);
}

DiscretizerFit fit_discretizer(const wm::WorldModel& model, std::span<const envs::Trajectory> trajectories,
                               const DiscretizerConfig& config,
                               const std::function<void(const QbnEpochLog&)>& on_epoch) {
  const wm::HiddenStateDataset open_loop = wm::export_hidden_states(model, trajectories);
  DiscretizerFit out;
  if (config.method == Method::kQbn) {
    QbnFit fit = train_qbn_distill(model, open_loop, config.qbn, on_epoch);
    out.history = std::move(fit.history);
    out.discretizer = Discretizer(std::move(fit.qbn), DiscreteStateMap{});
    out.states = export_states(model, out.discretizer, trajectories, true);
    return out;
  }
  KmeansModel km = config.method == Method::kKmeans
                       ? kmeans_fit(open_loop.hidden, config.k, config.seed, config.kmeans)
                       : vq_fit(open_loop.hidden, config.k, config.seed, config.vq);
  // Ids are centroid indices; counts come from the closed-loop pass.
  std::vector<Code> codes;
  for (int c = 0; c < config.k; ++c) codes.push_back(Code{c});
  out.discretizer = Discretizer(config.method, std::move(km),
                                DiscreteStateMap::from_codes(std::move(codes), std::vector<long long>(std::size_t(config.k), 0)));
  out.states = export_states(model, out.discretizer, trajectories, true);
  return out;
}

SufficiencyGap sufficiency_gap(const wm::WorldModel& model, const Discretizer& discretizer,
                               std::span<const envs::Trajectory> trajectories) {
  SufficiencyGap out;
  out.continuous = wm::mean_next_step_loss(model, trajectories);
  const StateDataset states = export_states(model, discretizer, trajectories);
  const auto& data = states.data;
  if (const Qbn* qbn = discretizer.qbn()) {
    out.discrete = student_next_step_loss(*qbn, data);
    return out;
  }
  if (data.size() == 0) throw ValidationError("sufficiency_gap: no transitions");
  const envs::ObservationSpec obs = model.config().obs;
  const std::size_t dim = discretizer.hidden_dim();
  const std::size_t cols = data.hidden.cols();
  constexpr std::size_t kChunk = 4096;
  double total = 0.0;
  for (std::size_t begin = 0; begin < data.size(); begin += kChunk) {
    const std::size_t n = std::min(kChunk, data.size() - begin);
    nn::Tensor snapped = nn::Tensor::matrix(n, dim);
    nn::Tensor values = nn::Tensor::matrix(n, std::size_t(obs.size));
    std::vector<int> actions, symbols;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& rec = data.records[begin + i];
      const std::span<const double> h(data.hidden.values().data() + rec.row * cols, cols);
      const nn::Tensor s = discretizer.snap(h);
      std::copy(s.values().begin(), s.values().end(), snapped.values().begin() + std::ptrdiff_t(i * dim));
      actions.push_back(rec.action);
      if (obs.categorical()) {
        symbols.push_back(envs::symbol_of(rec.next_observation));
      } else {
        const auto v = envs::encode(rec.next_observation, obs);
        std::copy(v.begin(), v.end(), values.values().begin() + std::ptrdiff_t(i * values.cols()));
      }
    }
    nn::Tape t;
    nn::Var pred = model.predict(t, t.constant(snapped), actions);
    nn::Var loss = obs.categorical() ? nn::softmax_cross_entropy(pred, symbols) : nn::mse(pred, values);
    total += loss.value().item() * double(n);
  }
  out.discrete = total / double(data.size());
  return out;
}

void save_discretizer(const std::filesystem::path& path, const Discretizer& d) {
  json meta{{"type", "discretizer"}, {"method", method_name(d.method())}};
  json codes = json::array();
  for (const Code& c : d.map().codes()) codes.push_back(c);
  meta["codes"] = codes;
  meta["counts"] = d.map().counts();
  nn::Checkpoint ckpt;
  if (const Qbn* q = d.qbn()) {
    meta["qbn"] = q->config();
    meta["hidden_dim"] = q->hidden_dim();
    meta["obs_kind"] = q->obs().categorical() ? "categorical" : "real";
    meta["obs_size"] = q->obs().size;
    meta["num_actions"] = q->num_actions();
    ckpt = nn::capture(nn::parameters_of(*q));
  } else if (const KmeansModel* km = d.centroids()) {
    meta["inertia"] = km->inertia;
    meta["cluster_counts"] = km->counts;
    ckpt.tensors.emplace_back("centroids", km->centroids);
  } else {
    throw UsageError("discretizer: nothing to save");
  }
  ckpt.metadata = meta.dump();
  nn::save_checkpoint(path, ckpt);
}

Discretizer load_discretizer(const std::filesystem::path& path) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(path);
  try {
    const json meta = json::parse(ckpt.metadata);
    if (meta.value("type", std::string()) != "discretizer") {
      throw ValidationError(path.string() + " is not a discretizer checkpoint");
    }
    std::vector<Code> codes = meta.at("codes").get<std::vector<Code>>();
    std::vector<long long> counts = meta.at("counts").get<std::vector<long long>>();
    DiscreteStateMap map = DiscreteStateMap::from_codes(std::move(codes), std::move(counts));
    const Method method = parse_method(meta.at("method").get<std::string>());
    if (method == Method::kQbn) {
      envs::ObservationSpec obs;
      obs.kind = meta.at("obs_kind").get<std::string>() == "real" ? envs::ObservationSpec::Kind::kReal
                                                                  : envs::ObservationSpec::Kind::kCategorical;
      obs.size = meta.at("obs_size").get<int>();
      Qbn q(meta.at("qbn").get<QbnConfig>(), meta.at("hidden_dim").get<std::size_t>(), obs,
            meta.at("num_actions").get<int>());
      nn::restore(nn::parameters_of(q), ckpt);
      return Discretizer(std::move(q), std::move(map));
    }
    KmeansModel km;
    const nn::Tensor* c = ckpt.find("centroids");
    if (!c) throw ValidationError(path.string() + ": missing centroids");
    km.centroids = *c;
    km.inertia = meta.at("inertia").get<double>();
    km.counts = meta.at("cluster_counts").get<std::vector<long long>>();
    return Discretizer(method, std::move(km), std::move(map));
  } catch (const json::exception& e) {
    throw ValidationError("discretizer checkpoint " + path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ValidationError("discretizer checkpoint " + path.string() + ": " + e.what());
  }
}

void write_state_map_csv(const std::filesystem::path& path, const DiscreteStateMap& map) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "id,code,count\r\n";
  for (std::size_t i = 0; i < map.size(); ++i) {
    os << i << ',' << format_code(map.code(int(i))) << ',' << map.counts()[i] << "\r\n";
  }
}

void write_qbn_log(const std::filesystem::path& path, std::span<const QbnEpochLog> history) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "epoch,distill_loss,reconstruction_loss,wall_time_s\r\n";
  os.precision(10);
  for (const auto& e : history) {
    os << e.epoch << ',' << e.distill_loss << ',' << e.reconstruction_loss << ',' << e.wall_time_s << "\r\n";
  }
}

}  // namespace cslab::disc
