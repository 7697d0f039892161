#include "seqstate/encoders/batch.hpp"

#include <algorithm>
#include <numeric>

#include "seqstate/errors.hpp"

namespace seqstate::encoders {

using cohort::kNumActions;
using cohort::kNumDemog;
using cohort::kNumObs;

const char* mode_name(InputMode mode) { return mode == InputMode::kObs ? "obs" : "obs+demog"; }

InputMode parse_mode(const std::string& name) {
  if (name == "obs") return InputMode::kObs;
  if (name == "obs+demog" || name == "obs_demog") return InputMode::kObsDemog;
  throw ContractError("unknown input mode '" + name + "' (expected obs or obs+demog)");
}

Index obs_width(InputMode mode) { return mode == InputMode::kObs ? kNumObs : kNumObs + kNumDemog; }

Matrix one_hot(std::span<const int> ids, Index classes) {
  Matrix m = Matrix::Zero(static_cast<Index>(ids.size()), classes);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= 0) {
      if (ids[i] >= classes) throw ContractError("one_hot: id out of range");
      m(static_cast<Index>(i), ids[i]) = 1.0;
    }
  }
  return m;
}

Batch make_batch(std::span<const cohort::Trajectory* const> trajectories, InputMode mode) {
  if (trajectories.empty()) throw ContractError("make_batch: no trajectories");
  Batch b;
  b.size = static_cast<Index>(trajectories.size());
  b.source.resize(trajectories.size());
  std::iota(b.source.begin(), b.source.end(), Index{0});
  std::stable_sort(b.source.begin(), b.source.end(), [&](Index x, Index y) {
    return trajectories[static_cast<std::size_t>(x)]->length() > trajectories[static_cast<std::size_t>(y)]->length();
  });
  std::vector<const cohort::Trajectory*> ordered;
  for (Index i : b.source) {
    const cohort::Trajectory* t = trajectories[static_cast<std::size_t>(i)];
    if (t->length() < 1) throw ContractError("make_batch: empty trajectory");
    ordered.push_back(t);
    b.steps = std::max(b.steps, t->length());
    b.lengths.push_back(t->length());
    b.ids.push_back(t->patient_id);
  }
  const Index width = obs_width(mode);
  const Index rows = b.rows();
  b.obs = Matrix::Zero(rows, width);
  b.prev_action = Matrix::Zero(rows, kNumActions);
  b.action = Matrix::Zero(rows, kNumActions);
  b.action_ids.assign(static_cast<std::size_t>(rows), -1);
  for (Index j = 0; j < b.size; ++j) {
    const cohort::Trajectory& t = *ordered[static_cast<std::size_t>(j)];
    for (Index s = 0; s < t.length(); ++s) {
      const Index r = b.row(s, j);
      b.obs.row(r).head(kNumObs) = t.obs.row(s);
      if (mode == InputMode::kObsDemog) b.obs.row(r).tail(kNumDemog) = t.demog.row(s);
      const int a = t.actions[static_cast<std::size_t>(s)];
      b.action(r, a) = 1.0;
      b.action_ids[static_cast<std::size_t>(r)] = a;
      if (s + 1 < b.steps) b.prev_action(b.row(s + 1, j), a) = 1.0;
    }
  }
  // Row order of valid/pair rows is time-major as well.
  for (Index s = 0; s < b.steps; ++s) {
    for (Index j = 0; j < b.size; ++j) {
      const Index len = b.lengths[static_cast<std::size_t>(j)];
      const cohort::Trajectory& t = *ordered[static_cast<std::size_t>(j)];
      if (s < len) {
        b.valid_rows.push_back(b.row(s, j));
        b.scores[0].push_back(t.sofa[static_cast<std::size_t>(s)]);
        b.scores[1].push_back(t.saps2[static_cast<std::size_t>(s)]);
        b.scores[2].push_back(t.oasis[static_cast<std::size_t>(s)]);
      }
      if (s + 1 < len) {
        b.pair_rows.push_back(b.row(s, j));
        b.next_rows.push_back(b.row(s + 1, j));
      }
    }
  }
  b.targets.resize(static_cast<Index>(b.pair_rows.size()), kNumObs);
  for (std::size_t i = 0; i < b.pair_rows.size(); ++i) {
    b.targets.row(static_cast<Index>(i)) = b.obs.row(b.next_rows[i]).head(kNumObs);
  }
  return b;
}

Index Batch::active(Index t) const {
  Index n = 0;
  while (n < size && lengths[static_cast<std::size_t>(n)] > t) ++n;
  return n;
}

Batch make_batch(const cohort::Trajectory& trajectory, InputMode mode) {
  const cohort::Trajectory* p = &trajectory;
  return make_batch(std::span<const cohort::Trajectory* const>(&p, 1), mode);
}

}  // namespace seqstate::encoders
