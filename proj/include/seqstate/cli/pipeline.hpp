#pragma once

// The commands behind the `seqstate` executable, callable in-process.
//
// A run directory is the unit passed between commands:
//   encoder run:  config.json  encoder.bundle  encoder.json  history.csv
//   policy run:   config.json  policy.bundle   policy.json   learning_curve.csv
//   sweep:        one encoder run per tuple under runs/, plus sweep.csv,
//                 aggregate.csv, best.csv and failures.csv at the root
//   analysis:     correlations.csv  projection_<run>.csv  summary.csv  summary.json
// Every file is written through write_file_atomic, manifests last.

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqstate/analysis/analysis.hpp"
#include "seqstate/cohort/cohort.hpp"
#include "seqstate/encoders/train.hpp"
#include "seqstate/policy/bcq.hpp"

namespace seqstate::cli {

namespace fs = std::filesystem;
using encoders::EncoderKind;
using encoders::InputMode;
using numcore::Index;

// {4, 8, 16, 32, 64, 128, 256}
const std::vector<Index>& paper_dims();
// Comma-separated sizes, or "paper" for the grid above.
std::vector<Index> parse_dims(const std::string& text);

struct GenDataOptions {
  int patients = 2000;
  std::uint64_t seed = 0;
  double mortality = 0.09;
  fs::path out = "cohort.csv";
};

struct GenDataResult {
  std::size_t patients = 0;
  std::size_t deaths = 0;
  std::size_t rows = 0;
  double mortality = 0.0;
};

GenDataResult gen_data(const GenDataOptions& options);

// The three splits of a cohort file, normalized with training-split moments
// unless the file already carries normalization.
struct PreparedData {
  cohort::Cohort train, val, test;
  nlohmann::json reference;  // path, content hash, split spec
};

PreparedData prepare_data(const fs::path& cohort_path, std::uint64_t split_seed);

struct EncoderRunOptions {
  fs::path cohort;
  EncoderKind kind = EncoderKind::kAIS;
  Index latent_dim = 16;
  InputMode mode = InputMode::kObs;
  bool regularize = false;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  // Unset fields fall back to default_train_config(kind, d_s).
  std::optional<int> epochs;
  std::optional<double> learning_rate;
  std::optional<double> lambda;
  std::optional<Index> batch_size;
  int cde_substeps = 4;
  fs::path out;
};

struct EncoderRunResult {
  fs::path dir;
  encoders::TrainResult train;
  double test_mse = 0.0;
  double mean_predictor_val_mse = 0.0;
};

EncoderRunResult train_encoder_run(const EncoderRunOptions& options, std::ostream* log = nullptr);
// Same, reusing already prepared splits.
EncoderRunResult train_encoder_run(const EncoderRunOptions& options, const PreparedData& data,
                                   std::ostream* log = nullptr);

struct SweepOptions {
  fs::path cohort;
  std::vector<EncoderKind> kinds;
  std::vector<Index> dims;
  std::vector<InputMode> modes{InputMode::kObs};
  std::vector<bool> regularize{false};
  std::vector<std::uint64_t> seeds{0};
  std::uint64_t split_seed = 0;
  int workers = 1;
  std::optional<int> epochs;
  std::optional<double> learning_rate;
  std::optional<Index> batch_size;
  int cde_substeps = 4;
  fs::path out;
};

struct SweepResult {
  std::size_t planned = 0;
  std::vector<analysis::RunRecord> completed;
  std::vector<std::pair<std::string, std::string>> failures;  // run name, message
  analysis::SweepTable table;
};

std::string run_name(EncoderKind kind, Index d, InputMode mode, bool reg, std::uint64_t seed);
SweepResult run_sweep(const SweepOptions& options, std::ostream* log = nullptr);

struct PolicyRunOptions {
  fs::path encoder_dir;
  std::optional<fs::path> cohort;  // defaults to the path in the encoder manifest
  std::optional<long> iterations;
  std::optional<long> eval_every;
  std::optional<double> learning_rate;
  std::uint64_t seed = 0;
  int behavior_epochs = 30;
  fs::path out;  // defaults to <encoder_dir>/policy
};

struct PolicyRunResult {
  fs::path dir;
  std::vector<policy::CurveRow> curve;
  double behavior_accuracy = 0.0;
  std::size_t transitions = 0;
};

PolicyRunResult train_policy_run(const PolicyRunOptions& options, std::ostream* log = nullptr);

struct AnalyzeOptions {
  std::vector<fs::path> runs;  // encoder run directories
  fs::path cohort;
  fs::path out;
};

struct AnalyzeResult {
  std::vector<analysis::CorrelationRow> correlations;
  analysis::SweepTable table;
};

// DataError when a run was trained on a different cohort file.
AnalyzeResult analyze_runs(const AnalyzeOptions& options, std::ostream* log = nullptr);

// Parses argv and dispatches. Returns the process exit code:
// 0 success, 2 usage, 3 data or IO error, 4 numerical failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace seqstate::cli
