#pragma once

// Patient trajectories, CSV ingestion, splitting and normalization.
//
// Observation columns, in schema order (obs_0 .. obs_32):
//   GCS, heart rate, systolic BP, diastolic BP, mean BP, respiratory rate,
//   temperature, FiO2, potassium, sodium, chloride, glucose, INR, magnesium,
//   calcium, hemoglobin, WBC, platelets, PTT, PT, arterial pH, lactate, PaO2,
//   PaCO2, PaO2/FiO2, bicarbonate, SpO2, BUN, creatinine, SGOT, SGPT,
//   bilirubin, base excess.
// Demographic columns (demog_0 .. demog_4):
//   age, gender, weight, ventilation status, re-admission status.
// Only age and weight are continuous and normalized.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqstate/numcore/tensor.hpp"

namespace seqstate::cohort {

using numcore::Index;
using numcore::Matrix;

inline constexpr int kNumObs = 33;
inline constexpr int kNumDemog = 5;
inline constexpr int kNumActions = 25;
inline constexpr int kActionBins = 5;
inline constexpr int kDefaultMaxSteps = 19;
inline constexpr std::array<int, 2> kContinuousDemog{0, 2};

struct Trajectory {
  std::string patient_id;
  Matrix obs;    // T x 33
  Matrix demog;  // T x 5
  std::vector<int> actions;
  std::vector<double> sofa, saps2, oasis;
  bool died = false;

  Index length() const { return obs.rows(); }
  int outcome() const { return died ? 1 : 0; }
  bool operator==(const Trajectory& other) const;
};

struct NormStats {
  std::array<double, kNumObs> obs_mean{}, obs_std{};
  std::array<double, kNumDemog> demog_mean{}, demog_std{};
  // true where the feature was passed through (std < 1e-12 or not continuous)
  std::array<bool, kNumObs> obs_passthrough{};
  std::array<bool, kNumDemog> demog_passthrough{};
  bool operator==(const NormStats&) const = default;
};

struct Provenance {
  enum class Kind { kSynthetic, kIngested };
  Kind kind = Kind::kSynthetic;
  std::uint64_t seed = 0;
  std::string path;
  std::string content_hash;  // FNV-1a of the CSV bytes, filled on save/load
  bool operator==(const Provenance&) const = default;
};

struct Cohort {
  std::vector<Trajectory> trajectories;
  std::optional<NormStats> normalization;  // stats applied, if normalized
  Provenance provenance;

  std::size_t size() const { return trajectories.size(); }
  std::size_t deaths() const;
  double mortality() const;
  bool operator==(const Cohort&) const = default;
};

// Checks the Trajectory and Cohort invariants; throws DataError.
void validate(const Cohort& cohort, int max_steps = kDefaultMaxSteps);

// CSV with the exact header below plus a JSON sidecar at path + ".json"
// holding normalization stats and provenance.
std::string csv_header();
void save_cohort(const Cohort& cohort, const std::filesystem::path& path);
Cohort load_cohort(const std::filesystem::path& path, int max_steps = kDefaultMaxSteps);
Cohort parse_cohort_csv(const std::string& text, int max_steps = kDefaultMaxSteps);
std::string cohort_to_csv(const Cohort& cohort);

struct SplitSpec {
  double train = 0.70, val = 0.15, test = 0.15;
  std::uint64_t seed = 0;
};

struct Splits {
  Cohort train, val, test;
};

Splits stratified_split(const Cohort& cohort, const SplitSpec& spec);

// Moments pooled over every row of every trajectory (population std).
NormStats compute_stats(const Cohort& cohort);
Cohort znormalize(const Cohort& cohort, const NormStats& stats);
Cohort denormalize(const Cohort& cohort);

nlohmann::json stats_to_json(const NormStats& stats);
NormStats stats_from_json(const nlohmann::json& j);

int encode_action(int vaso_bin, int fluid_bin);
std::pair<int, int> decode_action(int action_id);

}  // namespace seqstate::cohort
