#include "seqstate/analysis/analysis.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>
#include <tuple>

#include "seqstate/errors.hpp"
#include "seqstate/io.hpp"
#include "seqstate/numcore/stats.hpp"

namespace seqstate::analysis {

PcaModel pca_fit(const Matrix& x, Index k) {
  const Index n = x.rows(), d = x.cols();
  if (k < 1 || k > d) throw ContractError("pca_fit: need 1 <= k <= d (k=" + std::to_string(k) + ", d=" + std::to_string(d) + ")");
  if (n <= k) throw ContractError("pca_fit: need more rows than components");
  if (!x.allFinite()) throw NumericalError("pca_fit: non-finite input");
  PcaModel m;
  m.mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - m.mean.row(0);
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericalError("pca_fit: eigendecomposition failed");
  const Eigen::VectorXd values = eig.eigenvalues().cwiseMax(0.0);  // ascending
  const double total = values.sum();
  m.components.resize(k, d);
  for (Index i = 0; i < k; ++i) {
    const Index col = d - 1 - i;
    Eigen::VectorXd v = eig.eigenvectors().col(col);
    // Fix the sign so the largest-magnitude entry is positive.
    Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    m.components.row(i) = v.transpose();
    m.explained_ratio.push_back(total > 0 ? values(col) / total : 0.0);
  }
  return m;
}

Matrix pca_project(const PcaModel& model, const Matrix& x) {
  if (x.cols() != model.dim()) throw ContractError("pca_project: width does not match the fitted model");
  return (x.rowwise() - model.mean.row(0)) * model.components.transpose();
}

namespace {

void check_aligned(std::span<const encoders::LatentSequence> latents, const cohort::Cohort& cohort) {
  if (latents.empty()) throw ContractError("no latent sequences given");
  if (latents.size() != cohort.size()) throw ContractError("latents and cohort differ in size");
  for (std::size_t i = 0; i < latents.size(); ++i) {
    const auto& t = cohort.trajectories[i];
    if (latents[i].trajectory_id != t.patient_id || latents[i].latents.rows() != t.length()) {
      throw ContractError("latents for " + latents[i].trajectory_id + " do not line up with " + t.patient_id);
    }
  }
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

int kind_rank(const std::string& kind) {
  for (std::size_t i = 0; i < encoders::kAllKinds.size(); ++i) {
    if (kind == encoders::kind_name(encoders::kAllKinds[i])) return static_cast<int>(i);
  }
  return static_cast<int>(encoders::kAllKinds.size());
}

auto group_key(const std::string& kind, Index d, const std::string& mode, bool reg) {
  return std::make_tuple(kind_rank(kind), kind, d, mode, reg);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <class T>
T parse_number(const std::string& s, const char* what) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw DataError(std::string("sweep csv: bad ") + what + " '" + s + "'");
  return v;
}

}  // namespace

std::array<double, 3> latent_score_correlation(std::span<const encoders::LatentSequence> latents,
                                               const cohort::Cohort& cohort) {
  check_aligned(latents, cohort);
  Index rows = 0;
  for (const auto& l : latents) rows += l.latents.rows();
  const Index d = latents.front().latents.cols();
  Matrix z(rows, d);
  std::array<std::vector<double>, 3> scores;
  Index r = 0;
  for (std::size_t i = 0; i < latents.size(); ++i) {
    const auto& t = cohort.trajectories[i];
    z.middleRows(r, t.length()) = latents[i].latents;
    r += t.length();
    scores[0].insert(scores[0].end(), t.sofa.begin(), t.sofa.end());
    scores[1].insert(scores[1].end(), t.saps2.begin(), t.saps2.end());
    scores[2].insert(scores[2].end(), t.oasis.begin(), t.oasis.end());
  }
  std::array<double, 3> out{};
  const numcore::Var zv = numcore::constant(z);
  for (std::size_t s = 0; s < 3; ++s) out[s] = numcore::column_pearson(zv, scores[s]).value().mean();
  return out;
}

std::string correlation_csv(std::span<const CorrelationRow> rows) {
  std::ostringstream out;
  out << "model,sofa,saps2,oasis\n";
  for (const auto& r : rows) {
    out << r.model << ',' << format_double(r.rho[0]) << ',' << format_double(r.rho[1]) << ','
        << format_double(r.rho[2]) << '\n';
  }
  return out.str();
}

std::vector<ProjectionRow> endpoint_projection(std::span<const encoders::LatentSequence> latents,
                                               const cohort::Cohort& cohort, const PcaModel& pca) {
  check_aligned(latents, cohort);
  std::vector<ProjectionRow> out;
  for (std::size_t i = 0; i < latents.size(); ++i) {
    const auto& t = cohort.trajectories[i];
    if (t.length() < 1) throw ContractError("empty trajectory " + t.patient_id);
    const Matrix& z = latents[i].latents;
    Matrix ends(t.length() > 1 ? 2 : 1, z.cols());
    ends.row(0) = z.row(0);
    if (t.length() > 1) ends.row(1) = z.row(t.length() - 1);
    const Matrix p = pca_project(pca, ends);
    for (Index j = 0; j < ends.rows(); ++j) {
      const std::size_t step = j == 0 ? 0 : static_cast<std::size_t>(t.length() - 1);
      out.push_back({t.patient_id, j == 0 ? "first" : "last", p(j, 0), p.cols() > 1 ? p(j, 1) : 0.0, t.outcome(),
                     t.sofa[step]});
    }
  }
  return out;
}

std::string projection_csv(std::span<const ProjectionRow> rows) {
  std::ostringstream out;
  out << "patient_id,which,pc1,pc2,outcome,sofa\n";
  for (const auto& r : rows) {
    out << r.patient_id << ',' << r.which << ',' << format_double(r.pc1) << ',' << format_double(r.pc2) << ','
        << r.outcome << ',' << format_double(r.sofa) << '\n';
  }
  return out.str();
}

std::string sweep_csv(std::vector<RunRecord> runs) {
  std::sort(runs.begin(), runs.end(), [](const RunRecord& a, const RunRecord& b) {
    return std::tuple_cat(group_key(a.kind, a.d_s, a.mode, a.reg), std::make_tuple(a.seed)) <
           std::tuple_cat(group_key(b.kind, b.d_s, b.mode, b.reg), std::make_tuple(b.seed));
  });
  std::ostringstream out;
  out << "kind,d_s,mode,reg,seed,val_mse\n";
  for (const auto& r : runs) {
    out << r.kind << ',' << r.d_s << ',' << r.mode << ',' << bool_str(r.reg) << ',' << r.seed << ','
        << format_double(r.val_mse) << '\n';
  }
  return out.str();
}

std::vector<RunRecord> parse_sweep_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "kind,d_s,mode,reg,seed,val_mse") throw DataError("sweep csv: unexpected header");
  std::vector<RunRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 6) throw DataError("sweep csv: expected 6 fields in '" + line + "'");
    if (f[3] != "true" && f[3] != "false") throw DataError("sweep csv: bad reg flag '" + f[3] + "'");
    out.push_back({f[0], parse_number<Index>(f[1], "d_s"), f[2], f[3] == "true",
                   parse_number<std::uint64_t>(f[4], "seed"), parse_number<double>(f[5], "val_mse")});
  }
  return out;
}

SweepTable aggregate_sweep(std::span<const RunRecord> runs) {
  if (runs.empty()) throw ContractError("aggregate_sweep: no completed runs");
  using Key = decltype(group_key(std::string{}, 0, std::string{}, false));
  std::map<Key, std::vector<double>> buckets;
  for (const auto& r : runs) buckets[group_key(r.kind, r.d_s, r.mode, r.reg)].push_back(r.val_mse);
  SweepTable table;
  for (auto& [key, values] : buckets) {
    // Sorted so the floating-point sums do not depend on input order.
    std::sort(values.begin(), values.end());
    SweepGroup g;
    g.kind = std::get<1>(key);
    g.d_s = std::get<2>(key);
    g.mode = std::get<3>(key);
    g.reg = std::get<4>(key);
    g.runs = values.size();
    double sum = 0.0;
    for (double v : values) sum += v;
    g.mean = sum / static_cast<double>(values.size());
    if (values.size() > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - g.mean) * (v - g.mean);
      g.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    table.groups.push_back(g);
  }
  // Groups are in canonical order, so a strict comparison keeps the first of ties.
  std::map<std::pair<int, std::string>, SweepGroup> best;
  for (const auto& g : table.groups) {
    const auto key = std::make_pair(kind_rank(g.kind), g.kind);
    const auto it = best.find(key);
    if (it == best.end() || g.mean < it->second.mean) best[key] = g;
  }
  for (auto& [key, g] : best) table.best.push_back(g);
  return table;
}

std::string aggregate_csv(const SweepTable& table) {
  std::ostringstream out;
  out << "kind,d_s,mode,reg,runs,mean_val_mse,std_val_mse,error_bar\n";
  for (const auto& g : table.groups) {
    out << g.kind << ',' << g.d_s << ',' << g.mode << ',' << bool_str(g.reg) << ',' << g.runs << ','
        << format_double(g.mean) << ',' << format_double(g.std) << ',' << format_double(g.error_bar()) << '\n';
  }
  return out.str();
}

std::string setting_name(const std::string& mode, bool reg) { return mode + (reg ? "+reg" : ""); }

std::string best_csv(const SweepTable& table) {
  std::ostringstream out;
  out << "kind,best_mse,d_s,setting\n";
  for (const auto& g : table.best) {
    out << g.kind << ',' << format_double(g.mean) << ',' << g.d_s << ',' << setting_name(g.mode, g.reg) << '\n';
  }
  return out.str();
}

}  // namespace seqstate::analysis
