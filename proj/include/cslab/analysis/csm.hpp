#pragma once

#include <filesystem>
#include <map>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cslab/envs/environment.hpp"

namespace cslab::analysis {

// One step s_t --(a_t, o_{t+1})--> s_{t+1} with the reward received on arrival.
struct LabeledTransition {
  int state = 0;
  int action = 0;
  int symbol = 0;
  int next_state = 0;
  double reward = 0.0;
  bool terminal = false;  // the episode ended at s_{t+1}
};

// Integer labels for observations: symbols map to themselves, real vectors
// are interned by exact value in order of first appearance.
class ObservationLabeler {
 public:
  int label(const envs::Observation& obs);
  std::size_t size() const { return vectors_.size(); }

 private:
  std::map<std::vector<double>, int> vectors_;
};

struct CsmEntry {
  int symbol = 0;
  int next_state = 0;
  long long count = 0;
  double reward_sum = 0.0;
  long long terminal_count = 0;
};

// Empirical causal-state machine: counts N[s, a, o, s'] and the derived
// input-conditional transition probabilities T^{o|a}_{s s'}.
class EmpiricalCsm {
 public:
  EmpiricalCsm() = default;
  EmpiricalCsm(int n_states, int n_actions, int n_symbols);

  int num_states() const { return n_states_; }
  int num_actions() const { return n_actions_; }
  int num_symbols() const { return n_symbols_; }

  void add(const LabeledTransition& tr);

  // Entries of row (s, a) sorted by (symbol, next_state); empty when unseen.
  const std::vector<CsmEntry>& entries(int s, int a) const;
  long long row_total(int s, int a) const;
  bool occupied(int s, int a) const { return row_total(s, a) > 0; }
  // Occupancy of s: the larger of its outgoing and incoming transition counts.
  long long visits(int s) const;
  long long outgoing(int s) const;
  long long incoming(int s) const;
  long long total() const;

  // T^{o|a}_{s s'}; 0 for an unseen row.
  double probability(int s, int a, int o, int s_next) const;
  // P(o | s, a); empty for an unseen row.
  std::vector<double> next_symbol_distribution(int s, int a) const;

  // Relabels states through `mapping` (old id -> new id in [0, n)).
  EmpiricalCsm relabeled(std::span<const int> mapping, int n) const;

 private:
  std::vector<CsmEntry>& row(int s, int a);
  void check_state(int s) const;

  int n_states_ = 0;
  int n_actions_ = 0;
  int n_symbols_ = 0;
  std::vector<std::vector<CsmEntry>> rows_;  // index s * n_actions + a
  std::vector<long long> row_totals_;
  std::vector<long long> in_totals_;
};

// Sizes are inferred from the labels when left at 0. Throws ValidationError on
// an empty input or negative labels.
EmpiricalCsm estimate_csm(std::span<const LabeledTransition> transitions, int n_states = 0,
                          int n_actions = 0, int n_symbols = 0);

struct SuccessorDistribution {
  int state = 0;
  int action = 0;
  int symbol = 0;
  long long count = 0;
  std::map<int, long long> successors;
  double entropy_bits = 0.0;
};

struct UnifilarityReport {
  // Count-weighted H[S_{t+1} | S_t, A_t, O_{t+1}] in bits.
  double entropy_bits = 0.0;
  std::vector<SuccessorDistribution> triples;
  std::optional<SuccessorDistribution> worst;  // largest count * entropy
  long long counted_transitions = 0;
  // States with fewer than min_visits visits, and transitions into or out of them.
  int excluded_states = 0;
  long long excluded_transitions = 0;
};

UnifilarityReport unifilarity_entropy(const EmpiricalCsm& csm, long long min_visits = 10);

struct PurityReport {
  std::vector<int> learned_labels;  // sorted distinct labels (rows)
  std::vector<int> oracle_labels;   // sorted distinct labels (columns)
  std::vector<std::vector<long long>> table;
  double purity = 0.0;
  long long total = 0;
};

// Majority-label fraction of learned states against oracle states. Throws
// ValidationError on length mismatch or empty input.
PurityReport refinement_purity(std::span<const int> learned, std::span<const int> oracle);

struct MergeResult {
  EmpiricalCsm csm;
  std::vector<int> mapping;  // old state -> merged state
  int rounds = 0;
};

struct MergeOptions {
  double tau = 0.05;  // total-variation tolerance
  long long min_visits = 10;
  // When > 0, the tolerance is widened by an L1 concentration bound at this
  // confidence level for each pair's sample sizes, so sampling noise alone
  // does not split states. 0 compares empirical distributions directly.
  double delta = 0.0;
};

// Coarsest partition, up to tolerance, in which members of a block share their
// per-action distributions over (symbol, successor block). Starts from one
// block of well-visited states and splits until stable. States with fewer than
// min_visits visits stay singletons and transitions into them are ignored.
MergeResult merge_equivalent_states(const EmpiricalCsm& csm, const MergeOptions& options = {});

// Plug-in I[O_{t+1}; (S_t, A_t)] in bits.
double next_step_mi(std::span<const LabeledTransition> transitions);

nlohmann::json csm_to_json(const EmpiricalCsm& csm);
EmpiricalCsm csm_from_json(const nlohmann::json& j);
nlohmann::json unifilarity_to_json(const UnifilarityReport& r);
nlohmann::json purity_to_json(const PurityReport& r);
// Nodes = states, edge labels "a/o : prob".
std::string csm_to_dot(const EmpiricalCsm& csm);

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace cslab::analysis
