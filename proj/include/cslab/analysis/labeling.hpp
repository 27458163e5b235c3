#pragma once

#include <span>
#include <vector>

#include "cslab/analysis/csm.hpp"
#include "cslab/envs/trajectory.hpp"
#include "cslab/world_model/world_model.hpp"

namespace cslab::analysis {

// Transitions labeled with the oracle state stored in each trajectory record.
std::vector<LabeledTransition> oracle_transitions(std::span<const envs::Trajectory> trajectories,
                                                  ObservationLabeler& labeler);

// Transitions labeled with per-row state ids of an exported hidden-state
// dataset (ids[r] labels data.hidden row r). Rows with id -1 are dropped.
std::vector<LabeledTransition> learned_transitions(const wm::HiddenStateDataset& data, std::span<const int> ids,
                                                   ObservationLabeler& labeler);

// Oracle label of every hidden row, aligned with learned ids.
std::vector<int> oracle_row_labels(const wm::HiddenStateDataset& data);

}  // namespace cslab::analysis
