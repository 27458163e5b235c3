#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

namespace cslab::envs {

// A discrete symbol or a real-valued vector.
using Observation = std::variant<int, std::vector<double>>;

struct ObservationSpec {
  enum class Kind { kCategorical, kReal };
  Kind kind = Kind::kCategorical;
  int size = 0;  // alphabet size or vector dimension

  bool categorical() const { return kind == Kind::kCategorical; }
  bool operator==(const ObservationSpec&) const = default;
};

struct Step {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  // The episode ended on the time/step limit rather than a terminal state.
  bool truncated = false;
};

// Feature vector of an observation: one-hot for symbols, values otherwise.
std::vector<double> encode(const Observation& obs, const ObservationSpec& spec);
int symbol_of(const Observation& obs);

class Environment {
 public:
  virtual ~Environment() = default;

  virtual Observation reset(std::uint64_t seed) = 0;
  // Throws UsageError after the episode is done.
  virtual Step step(int action) = 0;

  virtual int num_actions() const = 0;
  virtual ObservationSpec observation_spec() const = 0;
  virtual bool done() const = 0;
  virtual int episode_limit() const = 0;

  // Minimal Markov state of the environment (oracle causal state for the toy
  // process, (position, has_key) for gridworlds).
  virtual int ground_truth_state() const = 0;
  virtual int num_ground_truth_states() const = 0;

  // "toy" or "gridworld"; decides the evaluation metric.
  virtual std::string kind() const = 0;
  virtual std::string descriptor() const = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;
};

}  // namespace cslab::envs
