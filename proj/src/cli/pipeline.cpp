#include "cslab/cli/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>

#include "cslab/analysis/labeling.hpp"
#include "cslab/common/errors.hpp"
#include "cslab/common/random.hpp"
#include "cslab/rl/common.hpp"
#include "cslab/rl/featurizer.hpp"

#ifndef CSLAB_BUILD_ID
#define CSLAB_BUILD_ID "unknown"
#endif

namespace cslab::cli {

using nlohmann::json;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const MissingArtifactError*>(&e)) return kExitMissingArtifact;
  if (dynamic_cast<const TrainingError*>(&e)) return kExitDivergence;
  return kExitFailure;
}

std::string build_id() { return CSLAB_BUILD_ID; }

fs::path output_root(const ExperimentConfig& config, const std::string& out_flag) {
  if (!out_flag.empty()) return out_flag;
  if (const char* env = std::getenv("CSLAB_OUT"); env && *env) return env;
  return config.output;
}

fs::path seed_dir(const fs::path& root, std::uint64_t seed) { return root / ("seed_" + std::to_string(seed)); }

void atomic_write_with(const fs::path& path, const std::function<void(const fs::path&)>& writer) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  writer(tmp);
  fs::rename(tmp, path);
}

void atomic_write(const fs::path& path, const std::string& text) {
  atomic_write_with(path, [&](const fs::path& tmp) {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os << text;
    if (!os) throw std::runtime_error("short write to " + tmp.string());
  });
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string csv_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += csv_field(fields[i]);
  }
  return out + "\r\n";
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c != '"') {
        field += c;
      } else if (i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else {
        quoted = false;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw ValidationError("csv: unterminated quoted field");
  if (any || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::string hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError(path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string now_utc() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string format_double(double v) {
  std::ostringstream ss;
  ss.precision(10);
  ss << v;
  return ss.str();
}

// Conditional entropy of the next toy symbol given the causal state and
// action, in nats. Only defined for discrete rendering.
json toy_entropy(const ExperimentConfig& c) {
  if (c.env.kind != "toy" || c.env.toy.obs_mode != envs::ToyObsMode::kDiscrete) return nullptr;
  const double p = c.env.toy.p;
  const double q = (1.0 - p) / double(c.env.toy.alphabet_size - 1);
  double h = p > 0.0 ? -p * std::log(p) : 0.0;
  if (q > 0.0) h -= (1.0 - p) * std::log(q);
  return h;
}

int num_symbols(const envs::Environment& env) {
  const auto spec = env.observation_spec();
  return spec.categorical() ? spec.size : 0;
}

// Serializes stderr progress lines across parallel seed workers.
std::mutex& output_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

std::string hash_text(std::string_view text) { return hex(fnv1a64(text)); }
std::string hash_file(const fs::path& path) { return hash_text(read_file(path)); }

Run::Run(ExperimentConfig config, std::uint64_t seed, fs::path dir, RunOptions options)
    : config_(std::move(config)), seed_(seed), dir_(std::move(dir)), options_(options) {
  config_.seeds = {seed_};
  fs::create_directories(dir_);
  const json resolved = resolved_json(config_);
  atomic_write(path(artifacts::kResolvedConfig), resolved.dump(2) + "\n");
  if (fs::exists(path(artifacts::kManifest))) {
    try {
      manifest_ = read_json(path(artifacts::kManifest));
    } catch (const ValidationError&) {
      manifest_ = json::object();
    }
  }
  if (!manifest_.is_object()) manifest_ = json::object();
  if (!manifest_.contains("stages")) manifest_["stages"] = json::object();
  manifest_["config"] = resolved;
  manifest_["build"] = build_id();
  manifest_["seed"] = seed_;
}

std::uint64_t Run::stage_seed(std::string_view stage, std::uint64_t offset) const {
  return derive_seed(seed_, stage, offset);
}

fs::path Run::require(const char* rel) const {
  const fs::path p = path(rel);
  if (!fs::exists(p)) throw MissingArtifactError(p.string());
  return p;
}

std::string Run::input_hash(const json& slice, const std::vector<fs::path>& inputs) const {
  std::string text = slice.dump() + "|seed=" + std::to_string(seed_);
  for (const auto& p : inputs) text += "|" + p.filename().string() + "=" + hash_file(p);
  return hash_text(text);
}

bool Run::up_to_date(const std::string& stage, const std::string& hash) const {
  if (options_.force) return false;
  const json& stages = manifest_.at("stages");
  if (!stages.contains(stage)) return false;
  const json& rec = stages.at(stage);
  if (rec.value("hash", std::string()) != hash) return false;
  for (const auto& a : rec.value("artifacts", json::array())) {
    if (!fs::exists(dir_ / a.get<std::string>())) return false;
  }
  return true;
}

void Run::record(const std::string& stage, const std::string& hash, double seconds,
                 const std::vector<fs::path>& outputs, json extra) {
  json rec{{"hash", hash}, {"wall_time_s", seconds}, {"finished", now_utc()}};
  json list = json::array();
  for (const auto& o : outputs) list.push_back(fs::relative(o, dir_).generic_string());
  rec["artifacts"] = list;
  if (!extra.is_null()) rec["summary"] = std::move(extra);
  manifest_["stages"][stage] = rec;
  atomic_write(path(artifacts::kManifest), manifest_.dump(2) + "\n");
}

void Run::log(const std::string& stage, const std::string& event, json fields) {
  json line{{"time", now_utc()}, {"seed", seed_}, {"stage", stage}, {"event", event}};
  if (fields.is_object()) line.update(fields);
  {
    std::ofstream os(path(artifacts::kLog), std::ios::app);
    os << line.dump() << "\n";
  }
  if (!options_.quiet) {
    std::lock_guard lock(output_mutex());
    std::cerr << "[seed " << seed_ << "] " << stage << ": " << event;
    if (fields.is_object() && !fields.empty()) std::cerr << " " << fields.dump();
    std::cerr << "\n";
  }
}

template <class F>
bool Run::run_stage(const std::string& stage, const std::string& hash, F&& body) {
  if (up_to_date(stage, hash)) {
    log(stage, "up to date");
    return false;
  }
  log(stage, "start");
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<fs::path> outputs;
  json summary = body(outputs);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  record(stage, hash, seconds, outputs, summary);
  log(stage, "done", json{{"wall_time_s", seconds}});
  return true;
}

bool Run::collect() {
  const json full = resolved_json(config_);
  const json slice{{"env", full.at("env")}, {"collect", full.at("collect")}};
  return run_stage("collect", input_hash(slice, {}), [&](std::vector<fs::path>& out) {
    const auto env = make_environment(config_);
    if (config_.collect.episodes == 0) log("collect", "warning", json{{"message", "0 episodes: empty dataset"}});
    const auto train = envs::collect_random(*env, config_.collect.episodes, stage_seed("collect.train"));
    const auto heldout = envs::collect_random(*env, config_.collect.heldout_episodes, stage_seed("collect.heldout"));
    out = {path(artifacts::kTrainData), path(artifacts::kHeldoutData)};
    atomic_write_with(out[0], [&](const fs::path& p) { envs::save_jsonl(p, train); });
    atomic_write_with(out[1], [&](const fs::path& p) { envs::save_jsonl(p, heldout); });
    long long steps = 0;
    for (const auto& t : train) steps += (long long)t.length();
    return json{{"train_episodes", train.size()}, {"heldout_episodes", heldout.size()}, {"train_records", steps}};
  });
}

bool Run::train_world_model() {
  const fs::path train_path = require(artifacts::kTrainData);
  const json slice{{"world_model", resolved_json(config_).at("world_model")}};
  return run_stage("train-wm", input_hash(slice, {train_path}), [&](std::vector<fs::path>& out) {
    const auto env = make_environment(config_);
    wm::WorldModelConfig wc = config_.world_model;
    wc.obs = env->observation_spec();
    wc.num_actions = env->num_actions();
    wc.seed = stage_seed("world_model", config_.world_model.seed);
    wc.validate();
    const auto train = envs::load_jsonl(train_path);
    if (train.empty()) throw ValidationError("train-wm: the training dataset is empty");
    const auto run = wm::train_world_model(train, wc, [&](const wm::EpochLog& e) {
      log("train-wm", "epoch", json{{"epoch", e.epoch}, {"mean_loss", e.mean_loss}});
    });
    out = {path(artifacts::kWorldModel), path(artifacts::kWorldModelLog), path(artifacts::kWorldModelMetrics)};
    atomic_write_with(out[0], [&](const fs::path& p) { wm::save_world_model(p, run.model); });
    atomic_write_with(out[1], [&](const fs::path& p) { wm::write_training_log(p, run.history); });
    json metrics{{"seed", wc.seed}, {"train_loss", wm::mean_next_step_loss(run.model, train)}};
    if (fs::exists(path(artifacts::kHeldoutData))) {
      const auto heldout = envs::load_jsonl(path(artifacts::kHeldoutData));
      if (!heldout.empty()) metrics["heldout_loss"] = wm::mean_next_step_loss(run.model, heldout);
    }
    atomic_write(out[2], metrics.dump(2) + "\n");
    return metrics;
  });
}

bool Run::distill() {
  const fs::path train_path = require(artifacts::kTrainData);
  const fs::path model_path = require(artifacts::kWorldModel);
  const json slice{{"discretizer", resolved_json(config_).at("discretizer")}};
  return run_stage("distill", input_hash(slice, {train_path, model_path}), [&](std::vector<fs::path>& out) {
    const auto model = wm::load_world_model(model_path);
    const auto train = envs::load_jsonl(train_path);
    disc::DiscretizerConfig dc = config_.discretizer;
    dc.seed = stage_seed("discretizer", config_.discretizer.seed);
    dc.qbn.seed = stage_seed("discretizer.qbn", config_.discretizer.qbn.seed);
    const auto fit = disc::fit_discretizer(model, train, dc, [&](const disc::QbnEpochLog& e) {
      log("distill", "epoch",
          json{{"epoch", e.epoch}, {"distill_loss", e.distill_loss}, {"reconstruction_loss", e.reconstruction_loss}});
    });
    out = {path(artifacts::kDiscretizer), path(artifacts::kStateMap), path(artifacts::kDiscretizerSummary)};
    atomic_write_with(out[0], [&](const fs::path& p) { disc::save_discretizer(p, fit.discretizer); });
    atomic_write_with(out[1], [&](const fs::path& p) { disc::write_state_map_csv(p, fit.discretizer.map()); });
    if (!fit.history.empty()) {
      out.push_back(path(artifacts::kQbnLog));
      atomic_write_with(out.back(), [&](const fs::path& p) { disc::write_qbn_log(p, fit.history); });
    }
    json summary{{"method", disc::method_name(dc.method)},
                 {"num_states", fit.discretizer.num_states()},
                 {"seed", dc.method == disc::Method::kQbn ? dc.qbn.seed : dc.seed}};
    atomic_write(out[2], summary.dump(2) + "\n");
    return summary;
  });
}

bool Run::analyze() {
  const bool oracle = config_.analysis.labels == "oracle";
  const fs::path heldout_path = require(artifacts::kHeldoutData);
  std::vector<fs::path> inputs{heldout_path};
  if (!oracle) {
    inputs.push_back(require(artifacts::kWorldModel));
    inputs.push_back(require(artifacts::kDiscretizer));
  }
  const json full = resolved_json(config_);
  const json slice{{"analysis", full.at("analysis")}, {"env", full.at("env")}};
  return run_stage("analyze", input_hash(slice, inputs), [&](std::vector<fs::path>& out) {
    const auto env = make_environment(config_);
    auto data = envs::load_jsonl(heldout_path);
    if (data.empty()) {
      log("analyze", "warning", json{{"message", "no held-out episodes, using the training data"}});
      data = envs::load_jsonl(require(artifacts::kTrainData));
    }
    analysis::ObservationLabeler labeler;
    const auto oracle_trans = analysis::oracle_transitions(data, labeler);
    const auto oracle_csm =
        analysis::estimate_csm(oracle_trans, env->num_ground_truth_states(), env->num_actions(), num_symbols(*env));
    const auto oracle_unif = analysis::unifilarity_entropy(oracle_csm, config_.analysis.min_visits);

    analysis::EmpiricalCsm csm;
    analysis::UnifilarityReport unif;
    analysis::PurityReport purity;
    json sufficiency{{"analytic_entropy", toy_entropy(config_)}};
    long long unknown_rows = 0;
    if (oracle) {
      csm = oracle_csm;
      unif = oracle_unif;
      std::vector<int> labels;
      for (const auto& t : oracle_trans) labels.push_back(t.state);
      purity = analysis::refinement_purity(labels, labels);
    } else {
      const auto model = wm::load_world_model(inputs[1]);
      const auto d = disc::load_discretizer(inputs[2]);
      const auto states = disc::export_states(model, d, data);
      const auto trans = analysis::learned_transitions(states.data, states.ids, labeler);
      csm = analysis::estimate_csm(trans, int(d.num_states()), env->num_actions(), num_symbols(*env));
      unif = analysis::unifilarity_entropy(csm, config_.analysis.min_visits);
      const auto oracle_rows = analysis::oracle_row_labels(states.data);
      std::vector<int> learned, truth;
      for (std::size_t r = 0; r < states.ids.size(); ++r) {
        if (states.ids[r] < 0) {
          ++unknown_rows;
          continue;
        }
        learned.push_back(states.ids[r]);
        truth.push_back(oracle_rows[r]);
      }
      purity = analysis::refinement_purity(learned, truth);
      const auto gap = disc::sufficiency_gap(model, d, data);
      sufficiency["continuous_loss"] = gap.continuous;
      sufficiency["discrete_loss"] = gap.discrete;
      sufficiency["gap"] = gap.gap();
    }
    const auto merged = analysis::merge_equivalent_states(csm, config_.analysis.merge);
    std::set<int> blocks(merged.mapping.begin(), merged.mapping.end());
    int visited = 0;
    for (int s = 0; s < csm.num_states(); ++s) visited += csm.visits(s) > 0;

    json unif_json = analysis::unifilarity_to_json(unif);
    unif_json["oracle_entropy_bits"] = oracle_unif.entropy_bits;
    json purity_json = analysis::purity_to_json(purity);
    purity_json["unknown_rows"] = unknown_rows;
    json merge_json{{"states", csm.num_states()},
                    {"visited_states", visited},
                    {"merged_states", merged.csm.num_states()},
                    {"rounds", merged.rounds},
                    {"mapping", merged.mapping}};

    out = {path(artifacts::kUnifilarity), path(artifacts::kPurity), path(artifacts::kSufficiency),
           path(artifacts::kCsmJson),     path(artifacts::kCsmDot),  path(artifacts::kMerge)};
    atomic_write(out[0], unif_json.dump(2) + "\n");
    atomic_write(out[1], purity_json.dump(2) + "\n");
    atomic_write(out[2], sufficiency.dump(2) + "\n");
    atomic_write(out[3], analysis::csm_to_json(csm).dump() + "\n");
    atomic_write(out[4], analysis::csm_to_dot(csm));
    atomic_write(out[5], merge_json.dump(2) + "\n");
    return json{{"labels", config_.analysis.labels},
                {"unifilarity_bits", unif.entropy_bits},
                {"purity", purity.purity},
                {"sufficiency_gap", sufficiency.value("gap", json(nullptr))},
                {"merged_states", merged.csm.num_states()}};
  });
}

std::string Run::rl_name() const { return config_.rl.method + "-" + config_.rl.featurizer; }

bool Run::train_rl() {
  const auto kind = rl::parse_feature(config_.rl.featurizer);
  std::vector<fs::path> inputs;
  if (kind == rl::FeatureKind::kHidden || kind == rl::FeatureKind::kDiscrete) {
    inputs.push_back(require(artifacts::kWorldModel));
  }
  if (kind == rl::FeatureKind::kDiscrete) {
    inputs.push_back(require(artifacts::kDiscretizer));
    if (config_.rl.merge_states) inputs.push_back(require(artifacts::kMerge));
  }
  const json full = resolved_json(config_);
  const json slice{{"env", full.at("env")}, {"rl", full.at("rl")}};
  const std::string hash = input_hash(slice, inputs);
  const std::string name = rl_name();
  const fs::path out_dir = dir_ / "rl" / name;
  return run_stage("train-rl/" + name, hash, [&](std::vector<fs::path>& out) {
    const auto env = make_environment(config_);
    std::unique_ptr<rl::Featurizer> featurizer;
    std::shared_ptr<const wm::WorldModel> model;
    if (!inputs.empty()) model = std::make_shared<const wm::WorldModel>(wm::load_world_model(inputs[0]));
    switch (kind) {
      case rl::FeatureKind::kObservation:
        featurizer = rl::make_observation_featurizer(env->observation_spec());
        break;
      case rl::FeatureKind::kHistory: {
        int window = config_.rl.history_window;
        if (window == 0) window = config_.env.kind == "toy" ? config_.env.toy.window_length() : 1;
        featurizer = rl::make_history_featurizer(env->observation_spec(), window);
        break;
      }
      case rl::FeatureKind::kHidden:
        featurizer = rl::make_hidden_featurizer(model);
        break;
      case rl::FeatureKind::kDiscrete: {
        auto d = std::make_shared<const disc::Discretizer>(disc::load_discretizer(inputs[1]));
        std::vector<int> mapping;
        if (config_.rl.merge_states) mapping = read_json(inputs[2]).at("mapping").get<std::vector<int>>();
        featurizer = rl::make_discrete_featurizer(model, d, std::move(mapping));
        break;
      }
      case rl::FeatureKind::kGroundTruth:
        featurizer = rl::make_ground_truth_featurizer(env->num_ground_truth_states());
        break;
    }

    const std::uint64_t train_seed = stage_seed("rl." + config_.rl.method);
    // Policies point into these results, which must outlive the evaluation.
    std::optional<rl::TabularResult> tabular;
    std::optional<rl::DqnResult> dqn;
    std::optional<rl::DrqnResult> drqn;
    std::unique_ptr<rl::Policy> policy;
    std::vector<rl::CurvePoint>* curve = nullptr;
    const fs::path model_path = out_dir / "model.ckpt";
    if (config_.rl.method == "tabular") {
      auto c = config_.rl.tabular;
      c.seed = derive_seed(train_seed, "offset", c.seed);
      tabular = rl::tabular_q_learning(*env, *featurizer, c);
      atomic_write_with(model_path, [&](const fs::path& p) { rl::save_qtable(p, tabular->q); });
      policy = std::make_unique<rl::QTablePolicy>(tabular->q);
      curve = &tabular->curve;
    } else if (config_.rl.method == "dqn") {
      auto c = config_.rl.dqn;
      c.seed = derive_seed(train_seed, "offset", c.seed);
      dqn = rl::dqn_train(*env, *featurizer, c);
      atomic_write_with(model_path, [&](const fs::path& p) { rl::save_q_network(p, dqn->q); });
      policy = std::make_unique<rl::QNetworkPolicy>(dqn->q);
      curve = &dqn->curve;
    } else {
      auto c = config_.rl.drqn;
      c.seed = derive_seed(train_seed, "offset", c.seed);
      drqn = rl::drqn_train(*env, *featurizer, c);
      atomic_write_with(model_path, [&](const fs::path& p) { rl::save_recurrent_q_network(p, drqn->q); });
      policy = std::make_unique<rl::RecurrentQPolicy>(drqn->q);
      curve = &drqn->curve;
    }

    // Final greedy evaluation: one episode per derived seed, so the spread is
    // across episodes.
    std::vector<std::uint64_t> eval_seeds;
    for (int e = 0; e < config_.rl.final_eval_episodes; ++e) eval_seeds.push_back(stage_seed("rl.final_eval", e));
    const auto ev = rl::evaluate(*policy, *env, *featurizer, 1, eval_seeds);

    const fs::path curve_path = out_dir / "curve.csv";
    const fs::path result_path = out_dir / "result.json";
    const fs::path results_path = out_dir / std::string(kResultsFile);
    atomic_write_with(curve_path, [&](const fs::path& p) { rl::write_learning_curve(p, *curve, seed_); });
    json result{{"env", env->descriptor()},         {"method", config_.rl.method},
                {"featurizer", config_.rl.featurizer}, {"seed", seed_},
                {"eval_mean", ev.mean},               {"eval_std", ev.std},
                {"episodes", eval_seeds.size()},       {"config_hash", hash_text(slice.dump())}};
    atomic_write(result_path, result.dump(2) + "\n");
    atomic_write(results_path,
                 csv_row({"env", "method", "featurizer", "seed", "eval_mean", "eval_std", "episodes", "config_hash"}) +
                     csv_row({env->descriptor(), config_.rl.method, config_.rl.featurizer, std::to_string(seed_),
                              format_double(ev.mean), format_double(ev.std), std::to_string(eval_seeds.size()),
                              result["config_hash"].get<std::string>()}));
    out = {model_path, curve_path, result_path, results_path};
    return json{{"eval_mean", ev.mean}, {"eval_std", ev.std}};
  });
}

bool Run::plan() {
  const bool oracle = config_.planner.states == "oracle";
  std::vector<fs::path> inputs{require(artifacts::kTrainData)};
  if (!oracle) {
    inputs.push_back(require(artifacts::kWorldModel));
    inputs.push_back(require(artifacts::kDiscretizer));
  }
  const json full = resolved_json(config_);
  const json slice{{"env", full.at("env")}, {"planner", full.at("planner")}};
  return run_stage("plan", input_hash(slice, inputs), [&](std::vector<fs::path>& out) {
    auto env = make_environment(config_);
    const auto data = envs::load_jsonl(inputs[0]);
    analysis::ObservationLabeler labeler;
    analysis::EmpiricalCsm csm;
    std::unique_ptr<rl::Featurizer> featurizer;
    if (oracle) {
      csm = analysis::estimate_csm(analysis::oracle_transitions(data, labeler), env->num_ground_truth_states(),
                                   env->num_actions(), num_symbols(*env));
      featurizer = rl::make_ground_truth_featurizer(env->num_ground_truth_states());
    } else {
      auto model = std::make_shared<const wm::WorldModel>(wm::load_world_model(inputs[1]));
      auto d = std::make_shared<const disc::Discretizer>(disc::load_discretizer(inputs[2]));
      const auto states = disc::export_states(*model, *d, data);
      csm = analysis::estimate_csm(analysis::learned_transitions(states.data, states.ids, labeler),
                                   int(d->num_states()), env->num_actions(), num_symbols(*env));
      featurizer = rl::make_discrete_featurizer(model, d);
    }
    const auto graph = planner::build_graph(csm, config_.planner.graph);

    // The plan from the start state of the first episode, for inspection.
    const std::uint64_t first_seed = stage_seed("plan.episode", 0);
    featurizer->reset(*env, env->reset(first_seed));
    const auto initial = planner::dijkstra(graph, featurizer->id());

    std::string csv = csv_row({"episode", "env_seed", "total_reward", "steps", "metric", "replans", "goals_reached"});
    std::vector<double> metrics;
    for (int e = 0; e < config_.planner.episodes; ++e) {
      const std::uint64_t s = stage_seed("plan.episode", e);
      const auto o = planner::execute_plan(*env, *featurizer, graph, s, config_.planner.execution);
      metrics.push_back(o.metric);
      csv += csv_row({std::to_string(e), std::to_string(s), format_double(o.total_reward), std::to_string(o.steps),
                      format_double(o.metric), std::to_string(o.replans), std::to_string(o.goals_reached)});
    }
    const auto summary_stats = rl::summarize(metrics);
    double optimum = 0.0;
    if (config_.env.kind == "toy") {
      optimum = envs::optimal_expected_reward(config_.env.toy);
    } else {
      optimum = envs::solve_grid(grid_config(config_)).reward_per_step;
    }
    json summary{{"states", config_.planner.states}, {"nodes", graph.num_nodes},
                 {"edges", graph.edge_count()},      {"metric_mean", summary_stats.mean},
                 {"metric_std", summary_stats.std},  {"optimum", optimum},
                 {"episodes", metrics.size()}};
    out = {path(artifacts::kPlanGraph), path(artifacts::kPlan), path(artifacts::kPlanExecution),
           path(artifacts::kPlanSummary)};
    atomic_write(out[0], planner::graph_to_json(graph).dump() + "\n");
    atomic_write(out[1], planner::plan_to_json(initial).dump(2) + "\n");
    atomic_write(out[2], csv);
    atomic_write(out[3], summary.dump(2) + "\n");
    return summary;
  });
}

void Run::all() {
  collect();
  const auto kind = rl::parse_feature(config_.rl.featurizer);
  const bool need_model = config_.analysis.labels == "learned" || config_.planner.states == "discrete" ||
                          kind == rl::FeatureKind::kHidden || kind == rl::FeatureKind::kDiscrete;
  if (need_model) {
    train_world_model();
    distill();
  }
  analyze();
  train_rl();
  plan();
}

std::vector<ReportRow> aggregate_results(const std::vector<fs::path>& dirs) {
  struct Group {
    ReportRow row;
    std::map<std::string, std::vector<std::string>> hashes;  // hash -> files
  };
  std::map<std::tuple<std::string, std::string, std::string>, Group> groups;
  int files = 0;
  for (const auto& dir : dirs) {
    if (!fs::exists(dir)) throw MissingArtifactError(dir.string());
    std::vector<fs::path> found;
    if (fs::is_regular_file(dir)) {
      found.push_back(dir);
    } else {
      for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().filename() == kResultsFile) found.push_back(e.path());
      }
    }
    std::sort(found.begin(), found.end());
    for (const auto& f : found) {
      ++files;
      const auto rows = parse_csv(read_file(f));
      if (rows.empty()) continue;
      std::map<std::string, std::size_t> col;
      for (std::size_t i = 0; i < rows[0].size(); ++i) col[rows[0][i]] = i;
      for (const char* need : {"env", "method", "featurizer", "eval_mean", "config_hash"}) {
        if (!col.count(need)) throw ValidationError(f.string() + ": missing column " + need);
      }
      for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != rows[0].size()) throw ValidationError(f.string() + ": ragged row");
        auto& g = groups[{row[col["env"]], row[col["method"]], row[col["featurizer"]]}];
        g.row.env = row[col["env"]];
        g.row.method = row[col["method"]];
        g.row.featurizer = row[col["featurizer"]];
        g.row.values.push_back(std::stod(row[col["eval_mean"]]));
        g.hashes[row[col["config_hash"]]].push_back(f.string());
      }
    }
  }
  if (files == 0) throw MissingArtifactError("no " + std::string(kResultsFile) + " under the given directories");
  std::vector<std::string> conflicts;
  std::vector<ReportRow> out;
  for (auto& [key, g] : groups) {
    if (g.hashes.size() > 1) {
      std::string msg = g.row.env + " / " + g.row.method + " / " + g.row.featurizer + ":";
      for (const auto& [h, fs_] : g.hashes) msg += " config " + h + " (" + fs_.front() + ")";
      conflicts.push_back(msg);
      continue;
    }
    const auto s = rl::summarize(g.row.values);
    g.row.mean = s.mean;
    g.row.std = s.std;
    g.row.n = int(g.row.values.size());
    out.push_back(std::move(g.row));
  }
  if (!conflicts.empty()) {
    std::string msg = "report: incompatible configurations:";
    for (const auto& c : conflicts) msg += "\n  " + c;
    throw ConfigError(msg);
  }
  return out;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::string csv = csv_row({"env", "method", "featurizer", "eval_mean", "eval_std", "n", "flag"});
  for (const auto& r : rows) {
    csv += csv_row({r.env, r.method, r.featurizer, format_double(r.mean), format_double(r.std), std::to_string(r.n),
                    r.n == 1 ? "n=1" : ""});
  }
  return csv;
}

}  // namespace cslab::cli
