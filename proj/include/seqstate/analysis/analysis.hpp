#pragma once

// PCA of latent states, latent/acuity correlation tables and sweep
// aggregation. Everything here is a pure function of finished run artifacts.

#include <array>
#include <span>
#include <string>
#include <vector>

#include "seqstate/cohort/cohort.hpp"
#include "seqstate/encoders/model.hpp"

namespace seqstate::analysis {

using numcore::Index;
using numcore::Matrix;

struct PcaModel {
  Matrix mean;        // 1 x d
  Matrix components;  // k x d, orthonormal rows
  std::vector<double> explained_ratio;  // nonincreasing

  Index dim() const { return components.cols(); }
  Index rank() const { return components.rows(); }
};

// Top-k eigenvectors of the sample covariance. ContractError unless n > k >= 1 and k <= d.
PcaModel pca_fit(const Matrix& x, Index k);
Matrix pca_project(const PcaModel& model, const Matrix& x);

inline const std::array<const char*, 3> kScoreNames{"sofa", "saps2", "oasis"};

// Mean over latent dimensions of the Pearson coefficient between each latent
// column and the score, all time steps of all trajectories pooled.
std::array<double, 3> latent_score_correlation(std::span<const encoders::LatentSequence> latents,
                                               const cohort::Cohort& cohort);

struct CorrelationRow {
  std::string model;
  std::array<double, 3> rho{};  // sofa, saps2, oasis
};

// `model,sofa,saps2,oasis`
std::string correlation_csv(std::span<const CorrelationRow> rows);

struct ProjectionRow {
  std::string patient_id;
  std::string which;  // "first" or "last"
  double pc1 = 0.0;
  double pc2 = 0.0;
  int outcome = 0;
  double sofa = 0.0;
};

// First and last state of every trajectory in PCA coordinates. A one-step
// trajectory yields a single "first" row, which is also its last state.
std::vector<ProjectionRow> endpoint_projection(std::span<const encoders::LatentSequence> latents,
                                               const cohort::Cohort& cohort, const PcaModel& pca);
// `patient_id,which,pc1,pc2,outcome,sofa`
std::string projection_csv(std::span<const ProjectionRow> rows);

struct RunRecord {
  std::string kind;
  Index d_s = 0;
  std::string mode;
  bool reg = false;
  std::uint64_t seed = 0;
  double val_mse = 0.0;
  bool operator==(const RunRecord&) const = default;
};

// `kind,d_s,mode,reg,seed,val_mse`, rows in canonical order.
std::string sweep_csv(std::vector<RunRecord> runs);
std::vector<RunRecord> parse_sweep_csv(const std::string& text);

struct SweepGroup {
  std::string kind;
  Index d_s = 0;
  std::string mode;
  bool reg = false;
  std::size_t runs = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single run
  double error_bar() const { return 2.0 * std; }
};

struct SweepTable {
  std::vector<SweepGroup> groups;  // canonical order
  std::vector<SweepGroup> best;    // lowest mean per kind
};

// Independent of input order. ContractError on empty input.
SweepTable aggregate_sweep(std::span<const RunRecord> runs);
// `kind,d_s,mode,reg,runs,mean_val_mse,std_val_mse,error_bar`
std::string aggregate_csv(const SweepTable& table);
// `kind,best_mse,d_s,setting`
std::string best_csv(const SweepTable& table);
std::string setting_name(const std::string& mode, bool reg);

}  // namespace seqstate::analysis
