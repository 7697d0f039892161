#include <unistd.h>

#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "seqstate/cli/pipeline.hpp"
#include "seqstate/errors.hpp"
#include "seqstate/io.hpp"
#include "seqstate/numcore/random.hpp"

using namespace seqstate;
using namespace seqstate::cli;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("seqstate_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct Outcome {
  int code;
  std::string out, err;
};

Outcome invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  std::vector<std::string> full{"--quiet"};
  full.insert(full.end(), args.begin(), args.end());
  const int code = run(full, out, err);
  return {code, out.str(), err.str()};
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

const TempDir& shared_dir() {
  static TempDir dir;
  return dir;
}

// One small cohort reused by every test below.
std::string cohort_path() {
  static const std::string path = [] {
    const std::string p = shared_dir() / "cohort.csv";
    const Outcome o = invoke({"gen-data", "--n", "150", "--seed", "11", "--out", p});
    REQUIRE(o.code == 0);
    return p;
  }();
  return path;
}

}  // namespace

TEST_CASE("usage errors") {
  CHECK(invoke({}).code == 2);
  CHECK(invoke({"bogus"}).code == 2);
  CHECK(invoke({"--help"}).code == 0);
  CHECK(invoke({"train-encoder", "--help"}).code == 0);
  const Outcome o = invoke({"train-encoder", "--cohort", cohort_path(), "--kind", "LSTM", "--out", shared_dir() / "x"});
  CHECK(o.code == 2);
  CHECK(o.err.find("LSTM") != std::string::npos);
  CHECK(invoke({"train-encoder", "--cohort", cohort_path(), "--kind", "AE", "--mode", "vitals", "--out", shared_dir() / "x"})
            .code == 2);
  CHECK(invoke({"sweep", "--cohort", cohort_path(), "--dims", "4,x", "--out", shared_dir() / "x"}).code == 2);
  CHECK(invoke({"gen-data", "--n", "many"}).code == 2);
}

TEST_CASE("latent size grid") {
  CHECK(parse_dims("paper") == std::vector<Index>{4, 8, 16, 32, 64, 128, 256});
  CHECK(parse_dims("4,16") == std::vector<Index>{4, 16});
  CHECK_THROWS_AS(parse_dims("0"), ContractError);
  CHECK_THROWS_AS(parse_dims(""), ContractError);
}

TEST_CASE("gen-data row count, determinism and reload") {
  TempDir dir;
  const std::string a = dir / "a.csv", b = dir / "b.csv";
  const Outcome o = invoke({"gen-data", "--n", "100", "--seed", "5", "--out", a});
  REQUIRE(o.code == 0);
  CHECK(o.out.find("mortality") != std::string::npos);
  REQUIRE(invoke({"gen-data", "--n", "100", "--seed", "5", "--out", b}).code == 0);
  CHECK(read_file(a) == read_file(b));
  CHECK(read_file(a + ".json") == read_file(b + ".json"));
  const cohort::Cohort c = cohort::load_cohort(a);
  std::size_t rows = 0;
  for (const auto& t : c.trajectories) rows += static_cast<std::size_t>(t.length());
  CHECK(c.size() == 100);
  CHECK(count_lines(read_file(a)) == rows + 1);
}

TEST_CASE("config file with flag override") {
  TempDir dir;
  const std::string ini = dir / "run.ini";
  write_file_atomic(ini, "[gen-data]\nn = 40\nseed = 3\nout = \"" + (dir / "from_file.csv") + "\"\n");
  REQUIRE(invoke({"--config", ini, "gen-data"}).code == 0);
  CHECK(cohort::load_cohort(dir / "from_file.csv").size() == 40);
  REQUIRE(invoke({"--config", ini, "gen-data", "--n", "25"}).code == 0);
  CHECK(cohort::load_cohort(dir / "from_file.csv").size() == 25);
}

TEST_CASE("train-encoder run directory and idempotence") {
  TempDir dir;
  const std::vector<std::string> base{"train-encoder", "--cohort", cohort_path(), "--kind", "ais", "--d", "4",
                                      "--epochs", "2", "--seed", "7"};
  auto args = base;
  args.insert(args.end(), {"--out", dir / "a"});
  const Outcome o = invoke(args);
  REQUIRE(o.code == 0);
  args = base;
  args.insert(args.end(), {"--out", dir / "b"});
  REQUIRE(invoke(args).code == 0);
  for (const char* f : {"config.json", "encoder.bundle", "encoder.json", "history.csv"}) {
    CAPTURE(f);
    REQUIRE(fs::exists(dir.path / "a" / f));
    CHECK(read_file(dir.path / "a" / f) == read_file(dir.path / "b" / f));
  }
  const json m = json::parse(read_file(dir.path / "a" / "encoder.json"));
  CHECK(m.at("train").at("epochs") == 2);
  CHECK(m.at("metrics").contains("mean_predictor_val_mse"));
  CHECK(count_lines(read_file(dir.path / "a" / "history.csv")) == 3);
  CHECK(invoke({"train-encoder", "--cohort", dir / "none.csv", "--kind", "AE", "--out", dir / "c"}).code == 3);
}

TEST_CASE("sweep layout and independence from worker count") {
  TempDir dir;
  const std::vector<std::string> base{"sweep", "--cohort", cohort_path(), "--kinds", "AE,RNN", "--dims", "4,8",
                                      "--epochs", "2"};
  auto one = base, four = base;
  one.insert(one.end(), {"--workers", "1", "--out", dir / "w1"});
  four.insert(four.end(), {"--workers", "4", "--out", dir / "w4"});
  REQUIRE(invoke(one).code == 0);
  REQUIRE(invoke(four).code == 0);
  std::size_t runs = 0;
  for (const auto& e : fs::directory_iterator(dir.path / "w1" / "runs")) runs += e.is_directory();
  CHECK(runs == 4);
  CHECK(fs::exists(dir.path / "w1" / "runs" / "RNN_d8_obs_noreg_s0" / "encoder.json"));
  for (const char* f : {"sweep.csv", "aggregate.csv", "best.csv", "failures.csv"}) {
    CAPTURE(f);
    CHECK(read_file(dir.path / "w1" / f) == read_file(dir.path / "w4" / f));
  }
  CHECK(count_lines(read_file(dir.path / "w1" / "aggregate.csv")) == 5);
  CHECK(read_file(dir.path / "w1" / "failures.csv") == "run,error\n");
  CHECK(read_file(dir.path / "w1" / "best.csv").rfind("kind,best_mse,d_s,setting\nAE,", 0) == 0);
}

TEST_CASE("sweep records partial failures") {
  TempDir dir;
  SweepOptions o;
  o.cohort = cohort_path();
  o.kinds = {encoders::EncoderKind::kAE};
  o.dims = {4, 0};  // a zero-width encoder cannot be built
  o.epochs = 1;
  o.out = dir.path / "s";
  const SweepResult r = run_sweep(o);
  CHECK(r.planned == 2);
  CHECK(r.completed.size() == 1);
  REQUIRE(r.failures.size() == 1);
  CHECK(r.failures[0].first == "AE_d0_obs_noreg_s0");
  CHECK(count_lines(read_file(o.out / "failures.csv")) == 2);
  CHECK(count_lines(read_file(o.out / "aggregate.csv")) == 2);
  const Outcome all_fail = invoke({"sweep", "--cohort", cohort_path(), "--kinds", "AE", "--dims", "4", "--epochs", "1",
                                   "--lr", "1e300", "--out", dir / "t"});
  CHECK(all_fail.code == 4);
  CHECK(count_lines(read_file(dir.path / "t" / "failures.csv")) == 2);
}

TEST_CASE("train-policy curve, defaults and reruns") {
  TempDir dir;
  const policy::BcqConfig desk = policy::default_bcq_config(encoders::EncoderKind::kAIS);
  CHECK(desk.iterations / desk.eval_every == 40);
  CHECK(policy::default_bcq_config(encoders::EncoderKind::kCDE).learning_rate == 1e-5);

  REQUIRE(invoke({"train-encoder", "--cohort", cohort_path(), "--kind", "RNN", "--d", "4", "--epochs", "1", "--out",
               dir / "enc"})
              .code == 0);
  const std::vector<std::string> base{"train-policy", "--encoder", dir / "enc", "--iterations", "300",
                                      "--eval-every", "100", "--behavior-epochs", "2", "--seed", "3"};
  auto a = base, b = base;
  b.insert(b.end(), {"--out", dir / "p2"});
  const Outcome o = invoke(a);
  REQUIRE(o.code == 0);
  REQUIRE(invoke(b).code == 0);
  const fs::path p1 = dir.path / "enc" / "policy";
  const std::string curve = read_file(p1 / "learning_curve.csv");
  CHECK(curve.rfind("iteration,wis_return,ess,q_loss,filter_loss\n100,", 0) == 0);
  CHECK(count_lines(curve) == 4);
  CHECK(curve == read_file(dir.path / "p2" / "learning_curve.csv"));
  CHECK(read_file(p1 / "policy.bundle") == read_file(dir.path / "p2" / "policy.bundle"));
  const json cfg = json::parse(read_file(p1 / "config.json"));
  CHECK(cfg.at("bcq").at("iterations") == 300);

  // A CDE encoder picks up the smaller policy learning rate.
  REQUIRE(invoke({"train-encoder", "--cohort", cohort_path(), "--kind", "CDE", "--d", "4", "--epochs", "1",
               "--cde-substeps", "1", "--out", dir / "cde"})
              .code == 0);
  REQUIRE(invoke({"train-policy", "--encoder", dir / "cde", "--iterations", "100", "--eval-every", "100",
               "--behavior-epochs", "1"})
              .code == 0);
  const json cde_cfg = json::parse(read_file(dir.path / "cde" / "policy" / "config.json"));
  CHECK(cde_cfg.at("bcq").at("learning_rate").get<double>() == 1e-5);

  const Outcome missing = invoke({"train-policy", "--encoder", dir / "nowhere"});
  CHECK(missing.code == 3);
  CHECK(missing.err.find("nowhere") != std::string::npos);
}

TEST_CASE("analyze outputs and provenance checks") {
  TempDir dir;
  REQUIRE(invoke({"train-encoder", "--cohort", cohort_path(), "--kind", "AE", "--d", "4", "--epochs", "1", "--out",
               dir / "ae"})
              .code == 0);
  REQUIRE(invoke({"train-encoder", "--cohort", cohort_path(), "--kind", "AIS", "--d", "1", "--epochs", "1", "--out",
               dir / "ais"})
              .code == 0);
  const Outcome o = invoke({"analyze", "--runs", dir / "ae", dir / "ais", "--cohort", cohort_path(), "--out", dir / "an"});
  REQUIRE(o.code == 0);
  const std::string corr = read_file(dir.path / "an" / "correlations.csv");
  CHECK(corr.rfind("model,sofa,saps2,oasis\nae,", 0) == 0);
  CHECK(count_lines(corr) == 3);
  CHECK(fs::exists(dir.path / "an" / "projection_ae.csv"));
  CHECK(read_file(dir.path / "an" / "projection_ais.csv").rfind("patient_id,which,pc1,pc2,outcome,sofa\n", 0) == 0);
  CHECK(read_file(dir.path / "an" / "summary.csv").rfind("kind,best_mse,d_s,setting\nAE,", 0) == 0);
  const json summary = json::parse(read_file(dir.path / "an" / "summary.json"));
  CHECK(summary.at("best").size() == 2);
  CHECK(summary.at("best")[1].at("setting") == "obs");

  const Outcome missing = invoke({"analyze", "--runs", dir / "gone", "--cohort", cohort_path(), "--out", dir / "an2"});
  CHECK(missing.code == 3);
  CHECK(missing.err.find("gone") != std::string::npos);

  const std::string other = dir / "other.csv";
  REQUIRE(invoke({"gen-data", "--n", "150", "--seed", "12", "--out", other}).code == 0);
  const Outcome mismatch = invoke({"analyze", "--runs", dir / "ae", "--cohort", other, "--out", dir / "an3"});
  CHECK(mismatch.code == 3);
  CHECK(mismatch.err.find("content hash") != std::string::npos);
  CHECK_FALSE(fs::exists(dir.path / "an3" / "summary.json"));
}

TEST_CASE("analyze on a cohort whose scores carry no signal") {
  TempDir dir;
  cohort::Cohort c = cohort::load_cohort(cohort_path());
  numcore::Rng rng(99);
  for (auto& t : c.trajectories) {
    for (std::size_t s = 0; s < t.sofa.size(); ++s) {
      t.sofa[s] = rng.uniform(0, 24);
      t.saps2[s] = rng.uniform(0, 100);
      t.oasis[s] = rng.uniform(0, 60);
    }
  }
  const std::string null_path = dir / "null.csv";
  cohort::save_cohort(c, null_path);
  REQUIRE(invoke({"train-encoder", "--cohort", null_path, "--kind", "RNN", "--d", "8", "--epochs", "3", "--out",
                  dir / "rnn"})
              .code == 0);
  const AnalyzeResult r = analyze_runs({{dir.path / "rnn"}, null_path, dir.path / "an"});
  REQUIRE(r.correlations.size() == 1);
  for (double rho : r.correlations[0].rho) CHECK(std::abs(rho) < 0.1);
}
