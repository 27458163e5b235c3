#pragma once

#include <memory>
#include <string>
#include <vector>

#include "cslab/discretizer/discretizer.hpp"
#include "cslab/envs/environment.hpp"
#include "cslab/world_model/world_model.hpp"

namespace cslab::rl {

enum class FeatureKind { kObservation, kHistory, kHidden, kDiscrete, kGroundTruth };

// "obs", "history", "hidden", "discrete", "gt".
std::string feature_name(FeatureKind kind);
// Throws ConfigError for an unknown name.
FeatureKind parse_feature(const std::string& name);

// Turns the observation stream of one episode into a fixed-size feature
// vector and, for discrete representations, an integer id.
class Featurizer {
 public:
  virtual ~Featurizer() = default;

  virtual FeatureKind kind() const = 0;
  virtual std::size_t dim() const = 0;
  // Number of distinct ids, 0 when the features are continuous.
  virtual int num_ids() const { return 0; }
  virtual void reset(const envs::Environment& env, const envs::Observation& first) = 0;
  virtual void update(const envs::Environment& env, int action, const envs::Observation& next) = 0;
  virtual std::unique_ptr<Featurizer> clone() const = 0;

  const std::vector<double>& features() const { return features_; }
  // Throws UsageError for continuous featurizers.
  int id() const;

 protected:
  std::vector<double> features_;
  int id_ = -1;
};

// Current observation only. Categorical observations also give ids.
std::unique_ptr<Featurizer> make_observation_featurizer(const envs::ObservationSpec& spec);
// Last `window` observations, oldest first; slots before the episode start are
// zero. Ids exist for categorical observations when the count stays below 10^6.
std::unique_ptr<Featurizer> make_history_featurizer(const envs::ObservationSpec& spec, int window);
// World-model hidden state s_t.
std::unique_ptr<Featurizer> make_hidden_featurizer(std::shared_ptr<const wm::WorldModel> model);
// Discrete state id from the closed-loop tracker; one-hot with one extra slot
// (the last) for codes outside the state map. A non-empty `merge` relabels
// tracker ids (e.g. with the minimized machine's mapping); ids it does not
// cover count as unknown.
std::unique_ptr<Featurizer> make_discrete_featurizer(std::shared_ptr<const wm::WorldModel> model,
                                                     std::shared_ptr<const disc::Discretizer> discretizer,
                                                     std::vector<int> merge = {});
// The environment's ground-truth state, one-hot.
std::unique_ptr<Featurizer> make_ground_truth_featurizer(int num_states);

}  // namespace cslab::rl
