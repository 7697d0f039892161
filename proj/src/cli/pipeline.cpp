#include "seqstate/cli/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "seqstate/cohort/synthetic.hpp"
#include "seqstate/encoders/serialize.hpp"
#include "seqstate/io.hpp"
#include "seqstate/policy/serialize.hpp"
#include "seqstate/policy/wis.hpp"

namespace seqstate::cli {

using json = nlohmann::json;

const std::vector<Index>& paper_dims() {
  static const std::vector<Index> dims{4, 8, 16, 32, 64, 128, 256};
  return dims;
}

std::vector<Index> parse_dims(const std::string& text) {
  if (text == "paper" || text == "grid") return paper_dims();
  std::vector<Index> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    long v = 0;
    try {
      v = std::stol(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || v < 1) throw ContractError("bad latent size '" + item + "'");
    out.push_back(static_cast<Index>(v));
  }
  if (out.empty()) throw ContractError("no latent sizes given");
  return out;
}

GenDataResult gen_data(const GenDataOptions& options) {
  if (options.patients < 1) throw ContractError("gen-data: --n must be >= 1");
  cohort::SyntheticConfig config;
  config.target_mortality = options.mortality;
  const cohort::Cohort c = cohort::generate_synthetic(options.patients, options.seed, config);
  if (options.out.has_parent_path()) fs::create_directories(options.out.parent_path());
  cohort::save_cohort(c, options.out);
  GenDataResult r;
  r.patients = c.size();
  r.deaths = c.deaths();
  r.mortality = c.mortality();
  for (const auto& t : c.trajectories) r.rows += static_cast<std::size_t>(t.length());
  return r;
}

PreparedData prepare_data(const fs::path& cohort_path, std::uint64_t split_seed) {
  const cohort::Cohort raw = cohort::load_cohort(cohort_path);
  const cohort::SplitSpec spec{0.70, 0.15, 0.15, split_seed};
  cohort::Splits s = cohort::stratified_split(raw, spec);
  PreparedData d;
  if (raw.normalization) {
    d.train = std::move(s.train);
    d.val = std::move(s.val);
    d.test = std::move(s.test);
  } else {
    const cohort::NormStats stats = cohort::compute_stats(s.train);
    d.train = cohort::znormalize(s.train, stats);
    d.val = cohort::znormalize(s.val, stats);
    d.test = cohort::znormalize(s.test, stats);
  }
  d.reference = {{"path", fs::absolute(cohort_path).lexically_normal().string()},
                 {"fnv1a", raw.provenance.content_hash},
                 {"patients", raw.size()},
                 {"split", {{"train", spec.train}, {"val", spec.val}, {"test", spec.test}, {"seed", split_seed}}},
                 {"normalization", cohort::stats_to_json(*d.train.normalization)}};
  return d;
}

namespace {

encoders::TrainConfig resolve_config(const EncoderRunOptions& o) {
  encoders::TrainConfig c = encoders::default_train_config(o.kind, o.latent_dim);
  c.seed = o.seed;
  c.regularize = o.regularize;
  if (o.epochs) c.epochs = *o.epochs;
  if (o.learning_rate) c.learning_rate = *o.learning_rate;
  if (o.lambda) c.lambda = *o.lambda;
  if (o.batch_size) c.batch_size = *o.batch_size;
  return c;
}

void check_hash(const json& manifest, const PreparedData& data, const std::string& what) {
  const std::string trained_on = manifest.at("cohort").at("fnv1a").get<std::string>();
  const std::string given = data.reference.at("fnv1a").get<std::string>();
  if (trained_on != given) {
    throw DataError(what + " was trained on cohort " + trained_on + " but " + data.reference.at("path").get<std::string>() +
                    " has content hash " + given);
  }
}

}  // namespace

EncoderRunResult train_encoder_run(const EncoderRunOptions& options, std::ostream* log) {
  const PreparedData data = prepare_data(options.cohort, options.split_seed);
  return train_encoder_run(options, data, log);
}

EncoderRunResult train_encoder_run(const EncoderRunOptions& options, const PreparedData& data, std::ostream* log) {
  if (options.out.empty()) throw ContractError("train-encoder: an output directory is required");
  encoders::EncoderSpec spec;
  spec.kind = options.kind;
  spec.latent_dim = options.latent_dim;
  spec.mode = options.mode;
  spec.seed = options.seed;
  spec.cde_substeps = options.cde_substeps;
  const encoders::TrainConfig config = resolve_config(options);
  auto model = encoders::build_encoder(spec);

  fs::create_directories(options.out);
  const json run_config = {{"command", "train-encoder"},
                           {"spec", encoders::spec_to_json(spec)},
                           {"train", encoders::config_to_json(config)},
                           {"cohort", data.reference}};
  write_file_atomic(options.out / "config.json", run_config.dump(2) + "\n");

  EncoderRunResult r;
  r.dir = options.out;
  r.train = encoders::train_encoder(*model, data.train, data.val, config, [&](const encoders::EpochRecord& e) {
    if (log) *log << model->arch_tag() << " epoch " << e.epoch << " train " << e.train_mse << " val " << e.val_mse << '\n';
  });
  r.test_mse = encoders::prediction_mse(*model, data.test);
  r.mean_predictor_val_mse = encoders::mean_predictor_mse(data.train, data.val);
  write_file_atomic(options.out / "history.csv", encoders::history_csv(r.train.history));
  const json metrics = {{"best_epoch", r.train.best_epoch},
                        {"best_val_mse", r.train.best_val_mse},
                        {"epoch1_val_mse", r.train.history.front().val_mse},
                        {"final_val_mse", r.train.history.back().val_mse},
                        {"test_mse", r.test_mse},
                        {"mean_predictor_val_mse", r.mean_predictor_val_mse}};
  encoders::save_encoder(*model, options.out,
                         {{"train", encoders::config_to_json(config)}, {"cohort", data.reference}, {"metrics", metrics}});
  return r;
}

std::string run_name(EncoderKind kind, Index d, InputMode mode, bool reg, std::uint64_t seed) {
  return std::string(encoders::kind_name(kind)) + "_d" + std::to_string(d) + "_" +
         (mode == InputMode::kObs ? "obs" : "obsdemog") + (reg ? "_reg" : "_noreg") + "_s" + std::to_string(seed);
}

SweepResult run_sweep(const SweepOptions& options, std::ostream* log) {
  if (options.kinds.empty() || options.dims.empty() || options.modes.empty() || options.regularize.empty() ||
      options.seeds.empty()) {
    throw ContractError("sweep: every axis needs at least one value");
  }
  if (options.workers < 1) throw ContractError("sweep: --workers must be >= 1");
  if (options.out.empty()) throw ContractError("sweep: an output directory is required");
  const PreparedData data = prepare_data(options.cohort, options.split_seed);

  std::vector<EncoderRunOptions> jobs;
  for (EncoderKind k : options.kinds) {
    for (Index d : options.dims) {
      for (InputMode m : options.modes) {
        for (bool reg : options.regularize) {
          for (std::uint64_t seed : options.seeds) {
            EncoderRunOptions o;
            o.cohort = options.cohort;
            o.kind = k;
            o.latent_dim = d;
            o.mode = m;
            o.regularize = reg;
            o.seed = seed;
            o.split_seed = options.split_seed;
            o.epochs = options.epochs;
            o.learning_rate = options.learning_rate;
            o.batch_size = options.batch_size;
            o.cde_substeps = options.cde_substeps;
            o.out = options.out / "runs" / run_name(k, d, m, reg, seed);
            jobs.push_back(o);
          }
        }
      }
    }
  }
  fs::create_directories(options.out / "runs");

  SweepResult result;
  result.planned = jobs.size();
  std::vector<std::optional<analysis::RunRecord>> records(jobs.size());
  std::vector<std::string> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
      const EncoderRunOptions& o = jobs[i];
      const std::string name = o.out.filename().string();
      try {
        const EncoderRunResult r = train_encoder_run(o, data, nullptr);
        records[i] = analysis::RunRecord{encoders::kind_name(o.kind), o.latent_dim, encoders::mode_name(o.mode),
                                         o.regularize, o.seed, r.train.best_val_mse};
        if (log) {
          std::lock_guard lock(log_mutex);
          *log << "done " << name << " val_mse " << r.train.best_val_mse << '\n';
        }
      } catch (const std::exception& e) {
        errors[i] = e.what();
        if (log) {
          std::lock_guard lock(log_mutex);
          *log << "FAILED " << name << ": " << e.what() << '\n';
        }
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const int n = std::min<int>(options.workers, static_cast<int>(jobs.size()));
    for (int w = 0; w < n; ++w) pool.emplace_back(worker);
  }
  std::string failures = "run,error\n";
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (records[i]) {
      result.completed.push_back(*records[i]);
    } else {
      std::string msg = errors[i];
      for (char& c : msg) {
        if (c == ',' || c == '\n') c = ' ';
      }
      result.failures.emplace_back(jobs[i].out.filename().string(), msg);
      failures += jobs[i].out.filename().string() + "," + msg + "\n";
    }
  }
  write_file_atomic(options.out / "failures.csv", failures);
  if (result.completed.empty()) throw NumericalError("sweep: every run failed; see failures.csv");
  result.table = analysis::aggregate_sweep(result.completed);
  write_file_atomic(options.out / "sweep.csv", analysis::sweep_csv(result.completed));
  write_file_atomic(options.out / "aggregate.csv", analysis::aggregate_csv(result.table));
  write_file_atomic(options.out / "best.csv", analysis::best_csv(result.table));
  return result;
}

PolicyRunResult train_policy_run(const PolicyRunOptions& options, std::ostream* log) {
  const encoders::LoadedEncoder enc = encoders::load_encoder(options.encoder_dir);
  const json& ref = enc.manifest.at("cohort");
  const fs::path cohort_path = options.cohort ? *options.cohort : fs::path(ref.at("path").get<std::string>());
  const PreparedData data = prepare_data(cohort_path, ref.at("split").at("seed").get<std::uint64_t>());
  check_hash(enc.manifest, data, options.encoder_dir.string());

  policy::BcqConfig config = policy::default_bcq_config(enc.model->kind());
  config.seed = options.seed;
  if (options.iterations) config.iterations = *options.iterations;
  if (options.eval_every) config.eval_every = *options.eval_every;
  if (options.learning_rate) config.learning_rate = *options.learning_rate;

  PolicyRunResult r;
  r.dir = options.out.empty() ? options.encoder_dir / "policy" : options.out;
  fs::create_directories(r.dir);
  const json run_config = {{"command", "train-policy"},
                           {"encoder", fs::absolute(options.encoder_dir).lexically_normal().string()},
                           {"bcq", policy::bcq_config_to_json(config)},
                           {"behavior_epochs", options.behavior_epochs},
                           {"cohort", data.reference}};
  write_file_atomic(r.dir / "config.json", run_config.dump(2) + "\n");

  const auto train_eps = policy::make_episodes(*enc.model, data.train);
  const auto test_eps = policy::make_episodes(*enc.model, data.test);
  const policy::TransitionBuffer buffer = policy::build_buffer(train_eps);
  r.transitions = buffer.size();
  policy::BcConfig bc_config;
  bc_config.epochs = options.behavior_epochs;
  bc_config.seed = numcore::derive_seed(options.seed, 0xbc);
  const policy::BcResult bc = policy::behavior_clone(buffer, bc_config);
  r.behavior_accuracy = bc.train_accuracy;
  if (log) {
    *log << "buffer " << buffer.size() << " transitions, behavior accuracy " << bc.train_accuracy;
    if (!bc.missing_actions.empty()) *log << ", " << bc.missing_actions.size() << " actions never logged";
    *log << '\n';
  }
  const auto evaluate = [&](const policy::QPolicy& p) {
    return policy::wis_evaluate(p, bc.policy, test_eps, config.epsilon);
  };
  const policy::BcqResult trained = policy::train_bcq(buffer, config, evaluate, [&](const policy::CurveRow& row) {
    if (log) *log << "iteration " << row.iteration << " wis " << row.wis_return << " ess " << row.ess << '\n';
  });
  r.curve = trained.curve;
  write_file_atomic(r.dir / "learning_curve.csv", policy::curve_csv(r.curve));
  json extra = {{"encoder", fs::absolute(options.encoder_dir).lexically_normal().string()},
                {"encoder_bundle_fnv1a", enc.manifest.at("bundle_fnv1a")},
                {"gamma", config.gamma},
                {"epsilon", config.epsilon},
                {"seed", config.seed},
                {"bcq", policy::bcq_config_to_json(config)},
                {"behavior_accuracy", bc.train_accuracy},
                {"missing_actions", bc.missing_actions}};
  if (!r.curve.empty()) extra["final_wis_return"] = r.curve.back().wis_return;
  policy::save_policy(trained.policy, bc.policy, r.dir, extra);
  return r;
}

AnalyzeResult analyze_runs(const AnalyzeOptions& options, std::ostream* log) {
  if (options.runs.empty()) throw ContractError("analyze: no run directories given");
  if (options.out.empty()) throw ContractError("analyze: an output directory is required");
  std::map<std::uint64_t, PreparedData> prepared;
  std::vector<analysis::RunRecord> records;
  AnalyzeResult result;
  std::vector<std::pair<std::string, std::string>> projections;
  for (const fs::path& dir : options.runs) {
    if (!fs::is_directory(dir)) throw DataError("run directory not found: " + dir.string());
    const encoders::LoadedEncoder enc = encoders::load_encoder(dir);
    const std::uint64_t split_seed = enc.manifest.at("cohort").at("split").at("seed").get<std::uint64_t>();
    auto it = prepared.find(split_seed);
    if (it == prepared.end()) it = prepared.emplace(split_seed, prepare_data(options.cohort, split_seed)).first;
    const PreparedData& data = it->second;
    check_hash(enc.manifest, data, dir.string());

    std::string name = dir.filename().string();
    if (name.empty()) name = dir.parent_path().filename().string();
    const auto latents = encoders::encode_trajectories(*enc.model, data.test.trajectories);
    result.correlations.push_back({name, analysis::latent_score_correlation(latents, data.test)});

    Index rows = 0;
    for (const auto& l : latents) rows += l.latents.rows();
    numcore::Matrix all(rows, enc.model->latent_dim());
    Index r = 0;
    for (const auto& l : latents) {
      all.middleRows(r, l.latents.rows()) = l.latents;
      r += l.latents.rows();
    }
    const analysis::PcaModel pca = analysis::pca_fit(all, std::min<Index>(2, enc.model->latent_dim()));
    projections.emplace_back(name, analysis::projection_csv(analysis::endpoint_projection(latents, data.test, pca)));

    const encoders::EncoderSpec& spec = enc.model->spec();
    records.push_back({encoders::kind_name(spec.kind), spec.latent_dim, encoders::mode_name(spec.mode),
                       enc.manifest.at("train").value("regularize", false), spec.seed,
                       enc.manifest.at("metrics").at("best_val_mse").get<double>()});
    if (log) *log << "analyzed " << name << '\n';
  }
  result.table = analysis::aggregate_sweep(records);

  fs::create_directories(options.out);
  for (const auto& [name, csv] : projections) write_file_atomic(options.out / ("projection_" + name + ".csv"), csv);
  write_file_atomic(options.out / "correlations.csv", analysis::correlation_csv(result.correlations));
  write_file_atomic(options.out / "summary.csv", analysis::best_csv(result.table));
  json best = json::array();
  for (const auto& g : result.table.best) {
    best.push_back({{"kind", g.kind}, {"best_mse", g.mean}, {"d_s", g.d_s}, {"setting", analysis::setting_name(g.mode, g.reg)}});
  }
  const json summary = {{"cohort", prepared.begin()->second.reference.at("fnv1a")},
                        {"runs", options.runs.size()},
                        {"best", best}};
  write_file_atomic(options.out / "summary.json", summary.dump(2) + "\n");
  return result;
}

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<EncoderKind> parse_kinds(const std::string& text) {
  if (text == "all") return {encoders::kAllKinds.begin(), encoders::kAllKinds.end()};
  std::vector<EncoderKind> out;
  for (const auto& k : split_list(text)) out.push_back(encoders::parse_kind(k));
  if (out.empty()) throw ContractError("no encoder kinds given");
  return out;
}

std::vector<bool> parse_reg(const std::string& text) {
  if (text == "off") return {false};
  if (text == "on") return {true};
  if (text == "both") return {false, true};
  throw ContractError("--reg must be off, on or both");
}

// "5" means seeds 0..4; a comma list is taken literally.
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  if (text.find(',') == std::string::npos) {
    for (Index n : parse_dims(text)) {
      for (Index i = 0; i < n; ++i) out.push_back(static_cast<std::uint64_t>(i));
    }
    return out;
  }
  for (const auto& s : split_list(text)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(s, &used));
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw ContractError("bad seed '" + s + "'");
    }
  }
  return out;
}

template <class T>
void copy_opt(CLI::Option* opt, const T& value, std::optional<T>& target) {
  if (opt->count() > 0) target = value;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sequential patient-state encoders and batch-constrained treatment policies", "seqstate"};
  app.set_config("--config", "", "TOML or INI file with options; command-line flags take precedence");
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress output");

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic cohort CSV and its stats sidecar");
  gen_cmd->add_option("--n", gen.patients, "Number of patients")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  gen_cmd->add_option("--mortality", gen.mortality, "Target in-hospital mortality")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output CSV path")->capture_default_str();

  EncoderRunOptions enc;
  std::string enc_kind, enc_mode = "obs";
  int enc_epochs = 0;
  double enc_lr = 0, enc_lambda = 0;
  Index enc_batch = 0;
  auto* enc_cmd = app.add_subcommand("train-encoder", "Train one encoder and write a run directory");
  enc_cmd->add_option("--cohort", enc.cohort, "Cohort CSV")->required();
  enc_cmd->add_option("--kind", enc_kind, "AE, RNN, AIS, DDM, DST, ODE or CDE")->required();
  enc_cmd->add_option("--d", enc.latent_dim, "Latent size d_s")->capture_default_str();
  enc_cmd->add_option("--mode", enc_mode, "obs or obs+demog")->capture_default_str();
  enc_cmd->add_flag("--reg", enc.regularize, "Add the acuity correlation regularizer");
  enc_cmd->add_option("--seed", enc.seed, "Model seed")->capture_default_str();
  enc_cmd->add_option("--split-seed", enc.split_seed, "Seed of the train/val/test split")->capture_default_str();
  auto* enc_epochs_opt = enc_cmd->add_option("--epochs", enc_epochs, "Override the per-kind default");
  auto* enc_lr_opt = enc_cmd->add_option("--lr", enc_lr, "Override the per-kind learning rate");
  auto* enc_lambda_opt = enc_cmd->add_option("--lambda", enc_lambda, "Regularizer weight");
  auto* enc_batch_opt = enc_cmd->add_option("--batch-size", enc_batch, "Trajectories per batch");
  enc_cmd->add_option("--cde-substeps", enc.cde_substeps, "RK4 steps per interval for CDE")->capture_default_str();
  enc_cmd->add_option("--out", enc.out, "Run directory")->required();

  SweepOptions sw;
  std::string sw_kinds = "all", sw_dims = "paper", sw_modes = "obs", sw_reg = "off", sw_seeds = "1";
  int sw_epochs = 0;
  double sw_lr = 0;
  Index sw_batch = 0;
  auto* sw_cmd = app.add_subcommand("sweep", "Train a grid of encoders and aggregate validation MSE");
  sw_cmd->add_option("--cohort", sw.cohort, "Cohort CSV")->required();
  sw_cmd->add_option("--kinds", sw_kinds, "Comma list of kinds, or all")->capture_default_str();
  sw_cmd->add_option("--dims", sw_dims, "Comma list of latent sizes, or paper for 4..256")->capture_default_str();
  sw_cmd->add_option("--modes", sw_modes, "Comma list of obs, obs+demog")->capture_default_str();
  sw_cmd->add_option("--reg", sw_reg, "off, on or both")->capture_default_str();
  sw_cmd->add_option("--seeds", sw_seeds, "Seed count, or comma list of seeds")->capture_default_str();
  sw_cmd->add_option("--split-seed", sw.split_seed, "Seed of the train/val/test split")->capture_default_str();
  sw_cmd->add_option("--workers", sw.workers, "Runs trained concurrently")->capture_default_str();
  auto* sw_epochs_opt = sw_cmd->add_option("--epochs", sw_epochs, "Override the per-kind default");
  auto* sw_lr_opt = sw_cmd->add_option("--lr", sw_lr, "Override the per-kind learning rate");
  auto* sw_batch_opt = sw_cmd->add_option("--batch-size", sw_batch, "Trajectories per batch");
  sw_cmd->add_option("--cde-substeps", sw.cde_substeps, "RK4 steps per interval for CDE")->capture_default_str();
  sw_cmd->add_option("--out", sw.out, "Sweep directory")->required();

  PolicyRunOptions pol;
  std::string pol_cohort;
  long pol_iters = 0, pol_eval = 0;
  double pol_lr = 0;
  auto* pol_cmd = app.add_subcommand("train-policy", "Train a BCQ policy on an encoder's latent states");
  pol_cmd->add_option("--encoder", pol.encoder_dir, "Encoder run directory")->required();
  auto* pol_cohort_opt = pol_cmd->add_option("--cohort", pol_cohort, "Cohort CSV (default: the one the encoder used)");
  auto* pol_iters_opt = pol_cmd->add_option("--iterations", pol_iters, "Gradient updates (default 20000)");
  auto* pol_eval_opt = pol_cmd->add_option("--eval-every", pol_eval, "Iterations between WIS evaluations (default 500)");
  auto* pol_lr_opt = pol_cmd->add_option("--lr", pol_lr, "Override the per-kind learning rate");
  pol_cmd->add_option("--seed", pol.seed, "Policy seed")->capture_default_str();
  pol_cmd->add_option("--behavior-epochs", pol.behavior_epochs, "Behavior cloning epochs")->capture_default_str();
  pol_cmd->add_option("--out", pol.out, "Policy run directory (default: <encoder>/policy)");

  AnalyzeOptions an;
  auto* an_cmd = app.add_subcommand("analyze", "Correlation tables, PCA projections and best-setting summary");
  an_cmd->add_option("--runs", an.runs, "Encoder run directories")->required();
  an_cmd->add_option("--cohort", an.cohort, "Cohort CSV the runs were trained on")->required();
  an_cmd->add_option("--out", an.out, "Output directory")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const bool help = e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success);
    app.exit(e, out, err);
    return help ? 0 : 2;
  }

  std::ostream* log = quiet ? nullptr : &err;
  try {
    if (*gen_cmd) {
      const GenDataResult r = gen_data(gen);
      out << "wrote " << gen.out.string() << ": " << r.patients << " patients, " << r.rows << " rows, mortality "
          << format_double(r.mortality) << '\n';
    } else if (*enc_cmd) {
      enc.kind = encoders::parse_kind(enc_kind);
      enc.mode = encoders::parse_mode(enc_mode);
      copy_opt(enc_epochs_opt, enc_epochs, enc.epochs);
      copy_opt(enc_lr_opt, enc_lr, enc.learning_rate);
      copy_opt(enc_lambda_opt, enc_lambda, enc.lambda);
      copy_opt(enc_batch_opt, enc_batch, enc.batch_size);
      const EncoderRunResult r = train_encoder_run(enc, log);
      out << enc.out.string() << ": best val mse " << format_double(r.train.best_val_mse) << " (epoch "
          << r.train.best_epoch << "), test mse " << format_double(r.test_mse) << ", mean predictor "
          << format_double(r.mean_predictor_val_mse) << '\n';
    } else if (*sw_cmd) {
      sw.kinds = parse_kinds(sw_kinds);
      sw.dims = parse_dims(sw_dims);
      sw.modes.clear();
      for (const auto& m : split_list(sw_modes)) sw.modes.push_back(encoders::parse_mode(m));
      sw.regularize = parse_reg(sw_reg);
      sw.seeds = parse_seeds(sw_seeds);
      copy_opt(sw_epochs_opt, sw_epochs, sw.epochs);
      copy_opt(sw_lr_opt, sw_lr, sw.learning_rate);
      copy_opt(sw_batch_opt, sw_batch, sw.batch_size);
      const SweepResult r = run_sweep(sw, log);
      out << sw.out.string() << ": " << r.completed.size() << " of " << r.planned << " runs completed\n"
          << analysis::best_csv(r.table);
    } else if (*pol_cmd) {
      if (pol_cohort_opt->count() > 0) pol.cohort = fs::path(pol_cohort);
      copy_opt(pol_iters_opt, pol_iters, pol.iterations);
      copy_opt(pol_eval_opt, pol_eval, pol.eval_every);
      copy_opt(pol_lr_opt, pol_lr, pol.learning_rate);
      const PolicyRunResult r = train_policy_run(pol, log);
      out << r.dir.string() << ": " << r.curve.size() << " evaluations";
      if (!r.curve.empty()) out << ", final WIS " << format_double(r.curve.back().wis_return);
      out << '\n';
    } else if (*an_cmd) {
      const AnalyzeResult r = analyze_runs(an, log);
      out << analysis::correlation_csv(r.correlations) << analysis::best_csv(r.table);
    }
  } catch (const ContractError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}

}  // namespace seqstate::cli
