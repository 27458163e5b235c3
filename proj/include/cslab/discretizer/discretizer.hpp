#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cslab/discretizer/kmeans.hpp"
#include "cslab/discretizer/qbn.hpp"
#include "cslab/discretizer/state_map.hpp"

namespace cslab::disc {

enum class Method { kQbn, kKmeans, kVq };

std::string method_name(Method m);
// Throws ConfigError for an unknown name.
Method parse_method(const std::string& name);

struct DiscretizerConfig {
  Method method = Method::kQbn;
  QbnConfig qbn;
  int k = 16;  // clusters for k-means / VQ
  KmeansOptions kmeans;
  VqOptions vq;
  std::uint64_t seed = 0;  // centroid methods; QBN uses qbn.seed
};

void to_json(nlohmann::json& j, const DiscretizerConfig& c);
void from_json(const nlohmann::json& j, DiscretizerConfig& c);

// Maps world-model hidden states to discrete state ids. A QBN yields a ternary
// code per state; centroid methods yield the index of the nearest centroid.
class Discretizer {
 public:
  Discretizer() = default;
  Discretizer(Qbn qbn, DiscreteStateMap map);
  Discretizer(Method method, KmeansModel centroids, DiscreteStateMap map);

  Method method() const { return method_; }
  std::size_t hidden_dim() const;
  std::size_t num_states() const { return map_.size(); }
  const DiscreteStateMap& map() const { return map_; }
  const Qbn* qbn() const { return qbn_ ? &*qbn_ : nullptr; }
  const KmeansModel* centroids() const { return centroids_ ? &*centroids_ : nullptr; }

  Code code_of(std::span<const double> hidden) const;
  // Id of the state, or -1 if its code was never seen.
  int lookup(std::span<const double> hidden) const;
  // Like lookup but unseen codes become new states.
  int assign(std::span<const double> hidden);
  // Continuous state represented by the code of `hidden`: the QBN decoding
  // or the nearest centroid (1 x hidden_dim).
  nn::Tensor snap(std::span<const double> hidden) const { return decode(code_of(hidden)); }
  nn::Tensor decode(const Code& code) const;
  DiscreteStateMap& mutable_map() { return map_; }

 private:
  Method method_ = Method::kQbn;
  std::optional<Qbn> qbn_;
  std::optional<KmeansModel> centroids_;
  DiscreteStateMap map_;
};

// Filters discrete states online. The recurrence runs through the
// bottleneck: after each step s_t is replaced by snap(s_t), so the next id is
// a function of (id, action, observation) and the machine is unifilar by
// construction.
class DiscreteStateTracker {
 public:
  // Unseen codes are reported as -1.
  DiscreteStateTracker(const wm::WorldModel& model, const Discretizer& discretizer);
  // Unseen codes are added to the discretizer's map.
  DiscreteStateTracker(const wm::WorldModel& model, Discretizer& discretizer);

  int reset(const envs::Observation& first);
  int update(int action, const envs::Observation& next);
  int state() const { return id_; }
  // s_t before snapping.
  const nn::Tensor& hidden() const { return hidden_; }

 private:
  int settle();

  wm::HiddenStateTracker tracker_;
  const Discretizer* discretizer_;
  Discretizer* inserting_ = nullptr;
  nn::Tensor hidden_;
  int id_ = -1;
};

// Closed-loop hidden states (before snapping) for every step, with their ids.
struct StateDataset {
  wm::HiddenStateDataset data;
  std::vector<int> ids;  // per hidden row
};

StateDataset export_states(const wm::WorldModel& model, const Discretizer& discretizer,
                           std::span<const envs::Trajectory> trajectories);
StateDataset export_states(const wm::WorldModel& model, Discretizer& discretizer,
                           std::span<const envs::Trajectory> trajectories, bool insert_unseen);

struct DiscretizerFit {
  Discretizer discretizer;
  StateDataset states;  // closed-loop states of the training trajectories
  std::vector<QbnEpochLog> history;  // empty for centroid methods
};

// Fits on the open-loop hidden states of `trajectories`, then builds the state
// map from their closed-loop rollout.
DiscretizerFit fit_discretizer(const wm::WorldModel& model, std::span<const envs::Trajectory> trajectories,
                               const DiscretizerConfig& config,
                               const std::function<void(const QbnEpochLog&)>& on_epoch = {});

// Next-step loss of the continuous path (the world model) and of the discrete
// path on closed-loop states: the QBN head on the code, or the world model's
// predictor on the snapped centroid.
struct SufficiencyGap {
  double continuous = 0.0;
  double discrete = 0.0;
  double gap() const { return discrete - continuous; }
};

SufficiencyGap sufficiency_gap(const wm::WorldModel& model, const Discretizer& discretizer,
                               std::span<const envs::Trajectory> trajectories);

void save_discretizer(const std::filesystem::path& path, const Discretizer& d);
// Throws MissingArtifactError when absent, ValidationError when malformed.
Discretizer load_discretizer(const std::filesystem::path& path);

// CSV "id,code,count"; codes are ';'-joined.
void write_state_map_csv(const std::filesystem::path& path, const DiscreteStateMap& map);
void write_qbn_log(const std::filesystem::path& path, std::span<const QbnEpochLog> history);

}  // namespace cslab::disc
