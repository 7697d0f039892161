#pragma once

// Whole-trajectory minibatches laid out time-major: row t * size + b holds
// step t of trajectory b. Trajectories are ordered by decreasing length
// (stable), so the ones still running at step t are exactly b < active(t).
// Shorter trajectories are zero-padded; padded rows come after every real
// row of their trajectory, so causal encoders never see them before a real
// step.

#include <array>
#include <span>
#include <string>
#include <vector>

#include "seqstate/cohort/cohort.hpp"

namespace seqstate::encoders {

using numcore::Index;
using numcore::Matrix;

enum class InputMode { kObs, kObsDemog };

const char* mode_name(InputMode mode);
InputMode parse_mode(const std::string& name);
Index obs_width(InputMode mode);  // 33 or 38

struct Batch {
  Index steps = 0;
  Index size = 0;
  Matrix obs;          // O_t (+ demographics)
  Matrix prev_action;  // one-hot A_{t-1}; zero at t = 0
  Matrix action;       // one-hot A_t
  std::vector<int> action_ids;  // A_t, -1 on padding
  std::vector<Index> lengths;      // non-increasing
  std::vector<std::string> ids;
  std::vector<Index> source;       // position of trajectory b in the caller's list
  std::vector<Index> valid_rows;  // t < length
  std::vector<Index> pair_rows;   // t < length - 1, i.e. O_{t+1} exists
  std::vector<Index> next_rows;   // pair_rows[i] + size
  Matrix targets;                 // O_{t+1} (33 columns) for each pair row
  std::array<std::vector<double>, 3> scores;  // sofa, saps2, oasis on valid rows

  Index rows() const { return steps * size; }
  Index row(Index t, Index b) const { return t * size + b; }
  // Number of trajectories with a real step t.
  Index active(Index t) const;
};

Batch make_batch(std::span<const cohort::Trajectory* const> trajectories, InputMode mode);
Batch make_batch(const cohort::Trajectory& trajectory, InputMode mode);

Matrix one_hot(std::span<const int> ids, Index classes);

}  // namespace seqstate::encoders
