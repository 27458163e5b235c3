#include "cslab/analysis/labeling.hpp"

#include "cslab/common/errors.hpp"

namespace cslab::analysis {

std::vector<LabeledTransition> oracle_transitions(std::span<const envs::Trajectory> trajectories,
                                                  ObservationLabeler& labeler) {
  std::vector<LabeledTransition> out;
  for (const auto& tr : trajectories) {
    for (std::size_t t = 0; t + 1 < tr.records.size(); ++t) {
      const auto& cur = tr.records[t];
      const auto& nxt = tr.records[t + 1];
      if (cur.true_state < 0 || nxt.true_state < 0) throw ValidationError("trajectory lacks oracle states");
      out.push_back({cur.true_state, cur.action, labeler.label(nxt.observation), nxt.true_state, nxt.reward,
                     nxt.done && t + 2 == tr.records.size()});
    }
  }
  return out;
}

std::vector<LabeledTransition> learned_transitions(const wm::HiddenStateDataset& data, std::span<const int> ids,
                                                   ObservationLabeler& labeler) {
  if (ids.size() != data.hidden.rows()) {
    throw ValidationError("labels: " + std::to_string(ids.size()) + " ids for " +
                          std::to_string(data.hidden.rows()) + " hidden rows");
  }
  std::vector<LabeledTransition> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& r = data.records[i];
    const int s = ids[r.row], s_next = ids[r.next_row];
    const int symbol = labeler.label(r.next_observation);
    if (s < 0 || s_next < 0) continue;
    const bool last = i + 1 == data.size() || data.records[i + 1].trajectory != r.trajectory;
    out.push_back({s, r.action, symbol, s_next, r.next_reward, last});
  }
  return out;
}

std::vector<int> oracle_row_labels(const wm::HiddenStateDataset& data) {
  std::vector<int> out(data.hidden.rows(), -1);
  for (const auto& r : data.records) {
    out[r.row] = r.true_state;
    out[r.next_row] = r.next_true_state;
  }
  return out;
}

}  // namespace cslab::analysis
