#pragma once

// Transitions over frozen latent states. Rewards are zero except at the last
// step of a trajectory, where they carry the outcome.

#include <span>
#include <string>
#include <vector>

#include "seqstate/cohort/cohort.hpp"
#include "seqstate/encoders/model.hpp"
#include "seqstate/numcore/random.hpp"

namespace seqstate::policy {

using numcore::Index;
using numcore::Matrix;

struct RewardSpec {
  double survived = 1.0;
  double died = -1.0;
};

// One trajectory as a policy sees it: decision states and logged actions.
struct Episode {
  std::string id;
  Matrix states;  // T x d_s
  std::vector<int> actions;
  double terminal_reward = 0.0;
  bool died = false;

  Index length() const { return states.rows(); }
};

// Pairs latent sequences with the cohort they were computed from (same order).
std::vector<Episode> make_episodes(std::span<const encoders::LatentSequence> latents, const cohort::Cohort& cohort,
                                   const RewardSpec& reward = {});
// Encodes `cohort` with the model's decision states first.
std::vector<Episode> make_episodes(const encoders::EncoderModel& model, const cohort::Cohort& cohort,
                                   const RewardSpec& reward = {});

struct TransitionBuffer {
  Matrix states;       // n x d_s
  Matrix next_states;  // n x d_s; a copy of the state on terminal rows
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<unsigned char> done;

  std::size_t size() const { return actions.size(); }
  Index latent_dim() const { return states.cols(); }
  // Uniform with replacement.
  std::vector<Index> sample(numcore::Rng& rng, Index count) const;
  // Transitions per action class.
  std::vector<std::size_t> action_counts() const;
  bool operator==(const TransitionBuffer&) const = default;
};

// One transition per step, sum of T_i in total; the last of each episode is terminal.
TransitionBuffer build_buffer(std::span<const Episode> episodes);
TransitionBuffer build_buffer(const encoders::EncoderModel& model, const cohort::Cohort& train,
                              const RewardSpec& reward = {});

}  // namespace seqstate::policy
