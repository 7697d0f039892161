#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <iostream>

#include "seqstate/cli/pipeline.hpp"
#include "seqstate/encoders/serialize.hpp"
#include "seqstate/errors.hpp"
#include "seqstate/policy/wis.hpp"
#include "seqstate/runtime.hpp"
#include "seqstate/seqmath/signature.hpp"

namespace py = pybind11;
using namespace seqstate;
using numcore::Index;
using numcore::Matrix;

namespace {

py::dict history_dict(const encoders::EpochRecord& e) {
  py::dict d;
  d["epoch"] = e.epoch;
  d["train_mse"] = e.train_mse;
  d["val_mse"] = e.val_mse;
  return d;
}

py::dict curve_dict(const policy::CurveRow& r) {
  py::dict d;
  d["iteration"] = r.iteration;
  d["wis_return"] = r.wis_return;
  d["ess"] = r.ess;
  d["q_loss"] = r.q_loss;
  d["filter_loss"] = r.filter_loss;
  return d;
}

py::dict group_dict(const analysis::SweepGroup& g) {
  py::dict d;
  d["kind"] = g.kind;
  d["d_s"] = g.d_s;
  d["mode"] = g.mode;
  d["reg"] = g.reg;
  d["runs"] = g.runs;
  d["mean"] = g.mean;
  d["std"] = g.std;
  return d;
}

std::vector<encoders::EncoderKind> to_kinds(const std::vector<std::string>& names) {
  std::vector<encoders::EncoderKind> out;
  for (const auto& n : names) out.push_back(encoders::parse_kind(n));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  tune_allocator();
  m.doc() = "Sequential patient-state encoders and batch-constrained treatment policies";

  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_IOError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("kinds", [] {
    std::vector<std::string> out;
    for (auto k : encoders::kAllKinds) out.emplace_back(encoders::kind_name(k));
    return out;
  });
  m.def("paper_dims", &cli::paper_dims);
  m.def(
      "parameter_count",
      [](const std::string& kind, Index d, const std::string& mode) {
        return encoders::build_encoder(encoders::parse_kind(kind), d, encoders::parse_mode(mode))->parameter_count();
      },
      py::arg("kind"), py::arg("latent_dim"), py::arg("mode") = "obs");

  py::class_<cohort::Cohort>(m, "Cohort")
      .def("__len__", &cohort::Cohort::size)
      .def_property_readonly("deaths", &cohort::Cohort::deaths)
      .def_property_readonly("mortality", &cohort::Cohort::mortality)
      .def_property_readonly("content_hash", [](const cohort::Cohort& c) { return c.provenance.content_hash; })
      .def_property_readonly("patient_ids",
                             [](const cohort::Cohort& c) {
                               std::vector<std::string> ids;
                               for (const auto& t : c.trajectories) ids.push_back(t.patient_id);
                               return ids;
                             })
      .def("trajectory", [](const cohort::Cohort& c, std::size_t i) {
        if (i >= c.size()) throw py::index_error("trajectory index out of range");
        const auto& t = c.trajectories[i];
        py::dict d;
        d["patient_id"] = t.patient_id;
        d["obs"] = t.obs;
        d["demog"] = t.demog;
        d["actions"] = t.actions;
        d["sofa"] = t.sofa;
        d["saps2"] = t.saps2;
        d["oasis"] = t.oasis;
        d["died"] = t.died;
        return d;
      });
  m.def("load_cohort", [](const std::filesystem::path& p) { return cohort::load_cohort(p); }, py::arg("path"));

  m.def(
      "gen_data",
      [](int n, std::uint64_t seed, double mortality, const std::filesystem::path& out) {
        const cli::GenDataResult r = cli::gen_data({n, seed, mortality, out});
        py::dict d;
        d["patients"] = r.patients;
        d["deaths"] = r.deaths;
        d["rows"] = r.rows;
        d["mortality"] = r.mortality;
        return d;
      },
      py::arg("n"), py::arg("seed"), py::arg("mortality") = 0.09, py::arg("out"));

  m.def(
      "train_encoder",
      [](const std::filesystem::path& cohort, const std::string& kind, Index latent_dim, const std::string& mode,
         bool regularize, std::uint64_t seed, std::uint64_t split_seed, std::optional<int> epochs,
         std::optional<double> lr, std::optional<double> lambda, std::optional<Index> batch_size, int cde_substeps,
         const std::filesystem::path& out) {
        cli::EncoderRunOptions o;
        o.cohort = cohort;
        o.kind = encoders::parse_kind(kind);
        o.latent_dim = latent_dim;
        o.mode = encoders::parse_mode(mode);
        o.regularize = regularize;
        o.seed = seed;
        o.split_seed = split_seed;
        o.epochs = epochs;
        o.learning_rate = lr;
        o.lambda = lambda;
        o.batch_size = batch_size;
        o.cde_substeps = cde_substeps;
        o.out = out;
        cli::EncoderRunResult r;
        {
          py::gil_scoped_release release;
          r = cli::train_encoder_run(o);
        }
        py::dict d;
        d["dir"] = r.dir;
        d["best_val_mse"] = r.train.best_val_mse;
        d["best_epoch"] = r.train.best_epoch;
        d["test_mse"] = r.test_mse;
        d["mean_predictor_val_mse"] = r.mean_predictor_val_mse;
        py::list hist;
        for (const auto& e : r.train.history) hist.append(history_dict(e));
        d["history"] = hist;
        return d;
      },
      py::arg("cohort"), py::arg("kind"), py::arg("latent_dim") = 16, py::arg("mode") = "obs",
      py::arg("regularize") = false, py::arg("seed") = 0, py::arg("split_seed") = 0, py::arg("epochs") = py::none(),
      py::arg("lr") = py::none(), py::arg("lambda_") = py::none(), py::arg("batch_size") = py::none(),
      py::arg("cde_substeps") = 4, py::arg("out"));

  m.def(
      "sweep",
      [](const std::filesystem::path& cohort, const std::vector<std::string>& kinds, const std::vector<Index>& dims,
         const std::vector<std::string>& modes, const std::vector<bool>& regularize,
         const std::vector<std::uint64_t>& seeds, int workers, std::optional<int> epochs,
         const std::filesystem::path& out) {
        cli::SweepOptions o;
        o.cohort = cohort;
        o.kinds = to_kinds(kinds);
        o.dims = dims;
        o.modes.clear();
        for (const auto& md : modes) o.modes.push_back(encoders::parse_mode(md));
        o.regularize = regularize;
        o.seeds = seeds;
        o.workers = workers;
        o.epochs = epochs;
        o.out = out;
        cli::SweepResult r;
        {
          py::gil_scoped_release release;
          r = cli::run_sweep(o);
        }
        py::dict d;
        d["planned"] = r.planned;
        d["completed"] = r.completed.size();
        d["failures"] = r.failures;
        py::list groups, best;
        for (const auto& g : r.table.groups) groups.append(group_dict(g));
        for (const auto& g : r.table.best) best.append(group_dict(g));
        d["groups"] = groups;
        d["best"] = best;
        return d;
      },
      py::arg("cohort"), py::arg("kinds"), py::arg("dims"), py::arg("modes") = std::vector<std::string>{"obs"},
      py::arg("regularize") = std::vector<bool>{false}, py::arg("seeds") = std::vector<std::uint64_t>{0},
      py::arg("workers") = 1, py::arg("epochs") = py::none(), py::arg("out"));

  m.def(
      "train_policy",
      [](const std::filesystem::path& encoder_dir, std::optional<long> iterations, std::optional<long> eval_every,
         std::optional<double> lr, std::uint64_t seed, int behavior_epochs,
         const std::optional<std::filesystem::path>& out) {
        cli::PolicyRunOptions o;
        o.encoder_dir = encoder_dir;
        o.iterations = iterations;
        o.eval_every = eval_every;
        o.learning_rate = lr;
        o.seed = seed;
        o.behavior_epochs = behavior_epochs;
        if (out) o.out = *out;
        cli::PolicyRunResult r;
        {
          py::gil_scoped_release release;
          r = cli::train_policy_run(o);
        }
        py::dict d;
        d["dir"] = r.dir;
        d["behavior_accuracy"] = r.behavior_accuracy;
        d["transitions"] = r.transitions;
        py::list curve;
        for (const auto& row : r.curve) curve.append(curve_dict(row));
        d["curve"] = curve;
        return d;
      },
      py::arg("encoder_dir"), py::arg("iterations") = py::none(), py::arg("eval_every") = py::none(),
      py::arg("lr") = py::none(), py::arg("seed") = 0, py::arg("behavior_epochs") = 30,
      py::arg("out") = py::none());

  m.def(
      "analyze",
      [](const std::vector<std::filesystem::path>& runs, const std::filesystem::path& cohort,
         const std::filesystem::path& out) {
        cli::AnalyzeResult r;
        {
          py::gil_scoped_release release;
          r = cli::analyze_runs({runs, cohort, out});
        }
        py::dict corr;
        for (const auto& row : r.correlations) {
          py::dict x;
          for (std::size_t k = 0; k < 3; ++k) x[analysis::kScoreNames[k]] = row.rho[k];
          corr[py::str(row.model)] = x;
        }
        py::list best;
        for (const auto& g : r.table.best) best.append(group_dict(g));
        py::dict d;
        d["correlations"] = corr;
        d["best"] = best;
        return d;
      },
      py::arg("runs"), py::arg("cohort"), py::arg("out"));

  m.def(
      "encode",
      [](const std::filesystem::path& run_dir, const std::string& split) {
        const encoders::LoadedEncoder enc = encoders::load_encoder(run_dir);
        const auto& ref = enc.manifest.at("cohort");
        const cli::PreparedData data = cli::prepare_data(ref.at("path").get<std::string>(),
                                                         ref.at("split").at("seed").get<std::uint64_t>());
        const cohort::Cohort* c = split == "train" ? &data.train : split == "val" ? &data.val : &data.test;
        if (split != "train" && split != "val" && split != "test") throw ContractError("split must be train, val or test");
        const auto latents = encoders::encode_trajectories(*enc.model, c->trajectories);
        py::dict d;
        for (const auto& l : latents) d[py::str(l.trajectory_id)] = l.latents;
        return d;
      },
      py::arg("run_dir"), py::arg("split") = "test", "Latent states of one split, keyed by patient id");

  m.def(
      "signature",
      [](const Matrix& path, int depth) { return seqmath::signature(path, depth).coeffs; }, py::arg("path"),
      py::arg("depth"));
  m.def("stream_signature", py::overload_cast<const Matrix&, int>(&seqmath::stream_signature), py::arg("path"),
        py::arg("depth"));
  m.def(
      "wis_estimate",
      [](const std::vector<double>& w, const std::vector<double>& r) {
        const policy::WisResult res = policy::wis_estimate(w, r);
        return py::make_tuple(res.value, res.ess);
      },
      py::arg("weights"), py::arg("returns"), "Returns (value, effective sample size)");
  m.def(
      "bcq_filter", [](const std::vector<double>& p, double tau) { return policy::bcq_filter(p, tau); },
      py::arg("probs"), py::arg("tau") = 0.3);

  m.def(
      "cli",
      [](const std::vector<std::string>& args) {
        py::gil_scoped_release release;
        return cli::run(args, std::cout, std::cerr);
      },
      py::arg("args"), "Runs the command-line front end in-process; returns the exit code");
}
