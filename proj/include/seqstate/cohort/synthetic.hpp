#pragma once

// Deterministic synthetic sepsis-like cohort and the surrogate acuity scores.
//
// Each patient carries a scalar latent health h (higher is healthier) with
// severity sev = softplus(-h). Per step:
//   vaso dose  = exp(1.5 * coupling * (sev - 0.7) + 0.7 z1)
//   fluid dose = exp(coupling * (sev - 0.7) + 0.7 z2)
//   u = sigmoid(log dose) per dose type
//   h' = clip(h + trend + 0.05 (0.8 - h) + effect * sev * (1.2 u_v + 0.8 u_f) + noise, -5, 5)
// The recorded action bins each dose at the quintiles of the pilot dose
// distribution. Observations are fixed affine loadings of sev plus AR(1)
// noise, with vasopressor and fluid doses of the previous step shifting the
// blood-pressure and fluid-sensitive features. A patient dies when the mean
// of the last two observed health values and the post-trajectory value falls
// below a threshold calibrated so that a pilot cohort simulated with
// `calibration_effect` has the target mortality; moving `treatment_effect`
// away from it moves mortality.

#include <array>
#include <cstdint>
#include <span>

#include "seqstate/cohort/cohort.hpp"

namespace seqstate::cohort {

struct SyntheticConfig {
  int min_steps = 6;
  int max_steps = kDefaultMaxSteps;
  double target_mortality = 0.09;
  double treatment_effect = 0.15;
  double calibration_effect = 0.15;
  double action_severity_coupling = 1.0;
  double initial_health_mean = 1.0;
  double initial_health_sd = 0.8;
  double trend_sd = 0.08;
  double health_noise = 0.25;
  double obs_noise = 0.5;
  int pilot_patients = 4000;
};

// Reference location and scale per observation feature, in raw units.
struct FeatureReference {
  std::array<double, kNumObs> center{}, scale{}, loading{};
};
const FeatureReference& feature_reference();

Cohort generate_synthetic(int n_patients, std::uint64_t seed, const SyntheticConfig& config = {});

// Mortality threshold and dose quintile edges for a config.
struct Calibration {
  double death_threshold = 0.0;
  std::array<double, 4> vaso_edges{}, fluid_edges{};
};
Calibration calibrate(const SyntheticConfig& config);

struct AcuityScores {
  double sofa = 0, saps2 = 0, oasis = 0;
};

// Surrogate scores on raw observations. Each listed feature earns one point
// per threshold {1, 2, 3} its reference z-score magnitude reaches; SAPS II
// and OASIS add max(0, (age - 40) / 10).
//   SOFA-like:   GCS, mean BP, platelets, PaO2/FiO2, creatinine, bilirubin
//   SAPS II-like: GCS, HR, sys BP, temp, PaO2/FiO2, BUN, WBC, K, Na, HCO3, bilirubin
//   OASIS-like:  GCS, HR, mean BP, respiratory rate, temp
AcuityScores surrogate_acuity(std::span<const double> obs, std::span<const double> demog);

inline constexpr std::array<int, 6> kSofaFeatures{0, 4, 17, 24, 28, 31};
inline constexpr std::array<int, 11> kSaps2Features{0, 1, 2, 6, 24, 27, 16, 8, 9, 25, 31};
inline constexpr std::array<int, 5> kOasisFeatures{0, 1, 4, 5, 6};

struct ChiSquareResult {
  double statistic = 0;
  int dof = 0;
  double p_value = 1;
};

// Pearson chi-square test of independence on a contingency table; empty
// rows and columns are dropped.
ChiSquareResult chi_square_independence(const std::vector<std::vector<double>>& table);

// Independence of the first action of each trajectory and its outcome.
ChiSquareResult first_action_outcome_test(const Cohort& cohort);

}  // namespace seqstate::cohort
