#include "seqstate/policy/buffer.hpp"

#include "seqstate/errors.hpp"

namespace seqstate::policy {

std::vector<Episode> make_episodes(std::span<const encoders::LatentSequence> latents, const cohort::Cohort& cohort,
                                   const RewardSpec& reward) {
  if (latents.size() != cohort.size()) throw ContractError("make_episodes: one latent sequence per trajectory");
  std::vector<Episode> out;
  out.reserve(latents.size());
  for (std::size_t i = 0; i < latents.size(); ++i) {
    const cohort::Trajectory& t = cohort.trajectories[i];
    const encoders::LatentSequence& z = latents[i];
    if (z.latents.rows() != t.length() || z.trajectory_id != t.patient_id) {
      throw ContractError("make_episodes: latents for " + z.trajectory_id + " do not match trajectory " + t.patient_id);
    }
    out.push_back({t.patient_id, z.latents, t.actions, t.died ? reward.died : reward.survived, t.died});
  }
  return out;
}

std::vector<Episode> make_episodes(const encoders::EncoderModel& model, const cohort::Cohort& cohort,
                                   const RewardSpec& reward) {
  const auto latents = encoders::decision_trajectories(model, cohort.trajectories);
  return make_episodes(latents, cohort, reward);
}

std::vector<Index> TransitionBuffer::sample(numcore::Rng& rng, Index count) const {
  if (size() == 0) throw ContractError("cannot sample from an empty buffer");
  std::vector<Index> idx(static_cast<std::size_t>(count));
  for (Index& i : idx) i = static_cast<Index>(rng.index(size()));
  return idx;
}

std::vector<std::size_t> TransitionBuffer::action_counts() const {
  std::vector<std::size_t> counts(cohort::kNumActions, 0);
  for (int a : actions) ++counts[static_cast<std::size_t>(a)];
  return counts;
}

TransitionBuffer build_buffer(std::span<const Episode> episodes) {
  if (episodes.empty()) throw DataError("cannot build a transition buffer from an empty split");
  const Index d = episodes.front().states.cols();
  Index n = 0;
  for (const Episode& e : episodes) {
    if (e.states.cols() != d) throw ContractError("episodes disagree on latent width");
    if (e.length() < 1 || static_cast<std::size_t>(e.length()) != e.actions.size()) {
      throw ContractError("episode " + e.id + " needs one action per state");
    }
    n += e.length();
  }
  TransitionBuffer b;
  b.states.resize(n, d);
  b.next_states.resize(n, d);
  b.actions.reserve(static_cast<std::size_t>(n));
  b.rewards.reserve(static_cast<std::size_t>(n));
  b.done.reserve(static_cast<std::size_t>(n));
  Index row = 0;
  for (const Episode& e : episodes) {
    const Index len = e.length();
    for (Index t = 0; t < len; ++t, ++row) {
      const bool last = t + 1 == len;
      const int a = e.actions[static_cast<std::size_t>(t)];
      if (a < 0 || a >= cohort::kNumActions) throw DataError("episode " + e.id + " has an out-of-range action");
      b.states.row(row) = e.states.row(t);
      b.next_states.row(row) = e.states.row(last ? t : t + 1);
      b.actions.push_back(a);
      b.rewards.push_back(last ? e.terminal_reward : 0.0);
      b.done.push_back(last ? 1 : 0);
    }
  }
  return b;
}

TransitionBuffer build_buffer(const encoders::EncoderModel& model, const cohort::Cohort& train,
                              const RewardSpec& reward) {
  if (train.size() == 0) throw DataError("cannot build a transition buffer from an empty split");
  const auto episodes = make_episodes(model, train, reward);
  return build_buffer(episodes);
}

}  // namespace seqstate::policy
