#include "cslab/rl/featurizer.hpp"

#include <algorithm>
#include <deque>

#include "cslab/common/errors.hpp"

namespace cslab::rl {

std::string feature_name(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::kObservation: return "obs";
    case FeatureKind::kHistory: return "history";
    case FeatureKind::kHidden: return "hidden";
    case FeatureKind::kDiscrete: return "discrete";
    case FeatureKind::kGroundTruth: return "gt";
  }
  return "?";
}

FeatureKind parse_feature(const std::string& name) {
  for (FeatureKind k : {FeatureKind::kObservation, FeatureKind::kHistory, FeatureKind::kHidden,
                        FeatureKind::kDiscrete, FeatureKind::kGroundTruth}) {
    if (feature_name(k) == name) return k;
  }
  throw ConfigError("unknown featurizer '" + name + "' (obs, history, hidden, discrete, gt)");
}

int Featurizer::id() const {
  if (num_ids() <= 0) throw UsageError("featurizer '" + feature_name(kind()) + "' has no discrete ids");
  return id_;
}

namespace {

class ObservationFeaturizer final : public Featurizer {
 public:
  explicit ObservationFeaturizer(envs::ObservationSpec spec) : spec_(spec) {}

  FeatureKind kind() const override { return FeatureKind::kObservation; }
  std::size_t dim() const override { return std::size_t(spec_.size); }
  int num_ids() const override { return spec_.categorical() ? spec_.size : 0; }
  void reset(const envs::Environment&, const envs::Observation& first) override { set(first); }
  void update(const envs::Environment&, int, const envs::Observation& next) override { set(next); }
  std::unique_ptr<Featurizer> clone() const override { return std::make_unique<ObservationFeaturizer>(*this); }

 private:
  void set(const envs::Observation& obs) {
    features_ = envs::encode(obs, spec_);
    if (spec_.categorical()) id_ = envs::symbol_of(obs);
  }

  envs::ObservationSpec spec_;
};

class HistoryFeaturizer final : public Featurizer {
 public:
  HistoryFeaturizer(envs::ObservationSpec spec, int window) : spec_(spec), window_(window) {
    if (window < 1) throw ConfigError("history featurizer: window must be >= 1");
    if (spec.categorical()) {
      long long n = 1;
      for (int i = 0; i < window && n <= 1'000'000; ++i) n *= spec.size + 1;
      ids_ = n <= 1'000'000 ? int(n) : 0;
    }
  }

  FeatureKind kind() const override { return FeatureKind::kHistory; }
  std::size_t dim() const override { return std::size_t(window_ * spec_.size); }
  int num_ids() const override { return ids_; }
  void reset(const envs::Environment&, const envs::Observation& first) override {
    recent_.clear();
    push(first);
  }
  void update(const envs::Environment&, int, const envs::Observation& next) override { push(next); }
  std::unique_ptr<Featurizer> clone() const override { return std::make_unique<HistoryFeaturizer>(*this); }

 private:
  void push(const envs::Observation& obs) {
    recent_.push_back(obs);
    if (int(recent_.size()) > window_) recent_.pop_front();
    features_.assign(dim(), 0.0);
    // Right-aligned: the newest observation fills the last slot.
    const std::size_t offset = std::size_t(window_) - recent_.size();
    id_ = 0;
    for (std::size_t i = 0; i < recent_.size(); ++i) {
      const auto v = envs::encode(recent_[i], spec_);
      std::copy(v.begin(), v.end(), features_.begin() + std::ptrdiff_t((offset + i) * std::size_t(spec_.size)));
    }
    if (ids_ > 0) {
      // Base |O|+1 digits, oldest most significant; 0 marks an empty slot.
      for (int i = 0; i < window_; ++i) {
        const int slot = i - int(offset);
        id_ = id_ * (spec_.size + 1) + (slot >= 0 ? envs::symbol_of(recent_[std::size_t(slot)]) + 1 : 0);
      }
    }
  }

  envs::ObservationSpec spec_;
  int window_;
  int ids_ = 0;
  std::deque<envs::Observation> recent_;
};

class HiddenFeaturizer final : public Featurizer {
 public:
  explicit HiddenFeaturizer(std::shared_ptr<const wm::WorldModel> model)
      : model_(std::move(model)), tracker_(*model_) {}
  HiddenFeaturizer(const HiddenFeaturizer& o) : Featurizer(o), model_(o.model_), tracker_(*model_) {}

  FeatureKind kind() const override { return FeatureKind::kHidden; }
  std::size_t dim() const override { return model_->hidden_dim(); }
  void reset(const envs::Environment&, const envs::Observation& first) override { set(tracker_.reset(first)); }
  void update(const envs::Environment&, int action, const envs::Observation& next) override {
    set(tracker_.update(action, next));
  }
  std::unique_ptr<Featurizer> clone() const override { return std::make_unique<HiddenFeaturizer>(*this); }

 private:
  void set(const nn::Tensor& h) { features_.assign(h.values().begin(), h.values().end()); }

  std::shared_ptr<const wm::WorldModel> model_;
  wm::HiddenStateTracker tracker_;
};

class DiscreteFeaturizer final : public Featurizer {
 public:
  DiscreteFeaturizer(std::shared_ptr<const wm::WorldModel> model, std::shared_ptr<const disc::Discretizer> d,
                     std::vector<int> merge)
      : model_(std::move(model)), discretizer_(std::move(d)), tracker_(*model_, *discretizer_), merge_(std::move(merge)) {
    known_ = int(discretizer_->num_states());
    if (!merge_.empty()) {
      if (*std::min_element(merge_.begin(), merge_.end()) < 0) throw ValidationError("discrete featurizer: negative merged id");
      known_ = *std::max_element(merge_.begin(), merge_.end()) + 1;
    }
  }
  DiscreteFeaturizer(const DiscreteFeaturizer& o)
      : Featurizer(o),
        model_(o.model_),
        discretizer_(o.discretizer_),
        tracker_(*model_, *discretizer_),
        merge_(o.merge_),
        known_(o.known_) {}

  FeatureKind kind() const override { return FeatureKind::kDiscrete; }
  std::size_t dim() const override { return std::size_t(known_) + 1; }
  int num_ids() const override { return known_ + 1; }
  void reset(const envs::Environment&, const envs::Observation& first) override { set(tracker_.reset(first)); }
  void update(const envs::Environment&, int action, const envs::Observation& next) override {
    set(tracker_.update(action, next));
  }
  std::unique_ptr<Featurizer> clone() const override { return std::make_unique<DiscreteFeaturizer>(*this); }

 private:
  void set(int state) {
    if (!merge_.empty()) state = state >= 0 && std::size_t(state) < merge_.size() ? merge_[std::size_t(state)] : -1;
    id_ = state < 0 ? known_ : state;
    features_.assign(dim(), 0.0);
    features_[std::size_t(id_)] = 1.0;
  }

  std::shared_ptr<const wm::WorldModel> model_;
  std::shared_ptr<const disc::Discretizer> discretizer_;
  disc::DiscreteStateTracker tracker_;
  std::vector<int> merge_;
  int known_ = 0;
};

class GroundTruthFeaturizer final : public Featurizer {
 public:
  explicit GroundTruthFeaturizer(int n) : n_(n) {
    if (n < 1) throw ConfigError("ground-truth featurizer: need at least one state");
  }

  FeatureKind kind() const override { return FeatureKind::kGroundTruth; }
  std::size_t dim() const override { return std::size_t(n_); }
  int num_ids() const override { return n_; }
  void reset(const envs::Environment& env, const envs::Observation&) override { set(env); }
  void update(const envs::Environment& env, int, const envs::Observation&) override { set(env); }
  std::unique_ptr<Featurizer> clone() const override { return std::make_unique<GroundTruthFeaturizer>(*this); }

 private:
  void set(const envs::Environment& env) {
    id_ = env.ground_truth_state();
    if (id_ < 0 || id_ >= n_) {
      throw ValidationError("ground-truth state " + std::to_string(id_) + " outside [0, " + std::to_string(n_) + ")");
    }
    features_.assign(std::size_t(n_), 0.0);
    features_[std::size_t(id_)] = 1.0;
  }

  int n_;
};

}  // namespace

std::unique_ptr<Featurizer> make_observation_featurizer(const envs::ObservationSpec& spec) {
  return std::make_unique<ObservationFeaturizer>(spec);
}

std::unique_ptr<Featurizer> make_history_featurizer(const envs::ObservationSpec& spec, int window) {
  return std::make_unique<HistoryFeaturizer>(spec, window);
}

std::unique_ptr<Featurizer> make_hidden_featurizer(std::shared_ptr<const wm::WorldModel> model) {
  if (!model) throw UsageError("hidden featurizer: no world model");
  return std::make_unique<HiddenFeaturizer>(std::move(model));
}

std::unique_ptr<Featurizer> make_discrete_featurizer(std::shared_ptr<const wm::WorldModel> model,
                                                     std::shared_ptr<const disc::Discretizer> discretizer,
                                                     std::vector<int> merge) {
  if (!model || !discretizer) throw UsageError("discrete featurizer: needs a world model and a discretizer");
  return std::make_unique<DiscreteFeaturizer>(std::move(model), std::move(discretizer), std::move(merge));
}

std::unique_ptr<Featurizer> make_ground_truth_featurizer(int num_states) {
  return std::make_unique<GroundTruthFeaturizer>(num_states);
}

}  // namespace cslab::rl
