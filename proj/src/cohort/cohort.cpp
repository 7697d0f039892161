#include "seqstate/cohort/cohort.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string_view>

#include "json.hpp"
#include "seqstate/errors.hpp"
#include "seqstate/io.hpp"
#include "seqstate/numcore/random.hpp"

namespace seqstate::cohort {

using json = nlohmann::json;

bool Trajectory::operator==(const Trajectory& o) const {
  auto same = [](const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
  };
  return patient_id == o.patient_id && same(obs, o.obs) && same(demog, o.demog) && actions == o.actions &&
         sofa == o.sofa && saps2 == o.saps2 && oasis == o.oasis && died == o.died;
}

std::size_t Cohort::deaths() const {
  return static_cast<std::size_t>(
      std::count_if(trajectories.begin(), trajectories.end(), [](const Trajectory& t) { return t.died; }));
}

double Cohort::mortality() const {
  return trajectories.empty() ? 0.0 : static_cast<double>(deaths()) / static_cast<double>(trajectories.size());
}

void validate(const Cohort& cohort, int max_steps) {
  std::set<std::string> ids;
  for (const Trajectory& t : cohort.trajectories) {
    const std::string who = "patient " + t.patient_id + ": ";
    if (!ids.insert(t.patient_id).second) throw DataError(who + "duplicate patient_id");
    const Index n = t.length();
    if (n < 1 || n > max_steps) throw DataError(who + "trajectory length " + std::to_string(n) + " out of range");
    if (t.obs.cols() != kNumObs || t.demog.rows() != n || t.demog.cols() != kNumDemog) {
      throw DataError(who + "feature matrix shape mismatch");
    }
    const auto un = static_cast<std::size_t>(n);
    if (t.actions.size() != un || t.sofa.size() != un || t.saps2.size() != un || t.oasis.size() != un) {
      throw DataError(who + "per-step column length mismatch");
    }
    for (int a : t.actions) {
      if (a < 0 || a >= kNumActions) throw DataError(who + "action id out of range");
    }
    if (!numcore::all_finite(t.obs) || !numcore::all_finite(t.demog)) throw DataError(who + "non-finite feature");
    for (const auto* v : {&t.sofa, &t.saps2, &t.oasis}) {
      for (double x : *v) {
        if (!std::isfinite(x)) throw DataError(who + "non-finite score");
      }
    }
  }
}

// ---------------------------------------------------------------- CSV

namespace {

constexpr int kColumns = 7 + kNumDemog + kNumObs;

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

double parse_real(std::string_view s, const char* column, std::size_t row) {
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw IngestError(std::string("cannot parse ") + column + " value '" + std::string(s) + "'", row);
  }
  if (!std::isfinite(v)) throw IngestError(std::string("non-finite ") + column, row);
  return v;
}

long long parse_int(std::string_view s, const char* column, std::size_t row) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw IngestError(std::string("cannot parse ") + column + " value '" + std::string(s) + "'", row);
  }
  return v;
}

struct RawRow {
  long long step;
  int action;
  int outcome;
  double sofa, saps2, oasis;
  std::array<double, kNumDemog> demog;
  std::array<double, kNumObs> obs;
  std::size_t row;
};

}  // namespace

std::string csv_header() {
  std::string h = "patient_id,step,action_id,outcome,sofa,saps2,oasis";
  for (int i = 0; i < kNumDemog; ++i) h += ",demog_" + std::to_string(i);
  for (int i = 0; i < kNumObs; ++i) h += ",obs_" + std::to_string(i);
  return h;
}

std::string cohort_to_csv(const Cohort& cohort) {
  std::string out = csv_header() + "\n";
  for (const Trajectory& t : cohort.trajectories) {
    for (Index s = 0; s < t.length(); ++s) {
      const auto us = static_cast<std::size_t>(s);
      out += t.patient_id;
      out += ',' + std::to_string(s) + ',' + std::to_string(t.actions[us]) + ',' + std::to_string(t.outcome());
      out += ',' + format_double(t.sofa[us]) + ',' + format_double(t.saps2[us]) + ',' + format_double(t.oasis[us]);
      for (Index j = 0; j < kNumDemog; ++j) out += ',' + format_double(t.demog(s, j));
      for (Index j = 0; j < kNumObs; ++j) out += ',' + format_double(t.obs(s, j));
      out += '\n';
    }
  }
  return out;
}

Cohort parse_cohort_csv(const std::string& text, int max_steps) {
  std::string_view rest(text);
  auto next_line = [&rest](std::string_view& line) {
    if (rest.empty()) return false;
    const std::size_t pos = rest.find('\n');
    line = rest.substr(0, pos);
    rest = pos == std::string_view::npos ? std::string_view{} : rest.substr(pos + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return true;
  };

  std::string_view line;
  if (!next_line(line)) throw IngestError("empty file", 0);
  if (line.size() >= 3 && line.substr(0, 3) == "\xEF\xBB\xBF") line.remove_prefix(3);
  {
    const auto got = split_fields(line);
    const auto want_str = csv_header();
    const auto want = split_fields(want_str);
    for (std::size_t i = 0; i < want.size(); ++i) {
      if (i >= got.size() || got[i] != want[i]) {
        throw IngestError("missing or misplaced column '" + std::string(want[i]) + "'", 0);
      }
    }
    if (got.size() != want.size()) throw IngestError("unexpected extra columns", 0);
  }

  std::vector<std::string> order;
  std::map<std::string, std::vector<RawRow>> groups;
  std::size_t row = 0;
  while (next_line(line)) {
    ++row;
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (static_cast<int>(f.size()) != kColumns) {
      throw IngestError("expected " + std::to_string(kColumns) + " fields, got " + std::to_string(f.size()), row);
    }
    if (f[0].empty()) throw IngestError("empty patient_id", row);
    RawRow r{};
    r.row = row;
    r.step = parse_int(f[1], "step", row);
    if (r.step < 0) throw IngestError("negative step", row);
    const long long action = parse_int(f[2], "action_id", row);
    if (action < 0 || action >= kNumActions) {
      throw IngestError("action_id " + std::to_string(action) + " out of range [0, 24]", row);
    }
    r.action = static_cast<int>(action);
    const long long outcome = parse_int(f[3], "outcome", row);
    if (outcome != 0 && outcome != 1) throw IngestError("outcome must be 0 or 1", row);
    r.outcome = static_cast<int>(outcome);
    r.sofa = parse_real(f[4], "sofa", row);
    r.saps2 = parse_real(f[5], "saps2", row);
    r.oasis = parse_real(f[6], "oasis", row);
    for (int j = 0; j < kNumDemog; ++j) r.demog[static_cast<std::size_t>(j)] = parse_real(f[7 + j], "demog", row);
    for (int j = 0; j < kNumObs; ++j) {
      r.obs[static_cast<std::size_t>(j)] = parse_real(f[7 + kNumDemog + j], "obs", row);
    }
    std::string id(f[0]);
    auto [it, inserted] = groups.try_emplace(id);
    if (inserted) order.push_back(id);
    it->second.push_back(r);
  }

  Cohort cohort;
  cohort.provenance.kind = Provenance::Kind::kIngested;
  for (const std::string& id : order) {
    auto& rows = groups[id];
    std::stable_sort(rows.begin(), rows.end(), [](const RawRow& a, const RawRow& b) { return a.step < b.step; });
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].step == rows[i - 1].step) {
        throw IngestError("duplicate (patient, step) for patient " + id + " step " + std::to_string(rows[i].step),
                          std::max(rows[i].row, rows[i - 1].row));
      }
      if (rows[i].outcome != rows[0].outcome) throw IngestError("outcome differs within patient " + id, rows[i].row);
    }
    if (static_cast<int>(rows.size()) > max_steps) {
      throw IngestError("patient " + id + " has more than " + std::to_string(max_steps) + " steps", rows.back().row);
    }
    Trajectory t;
    t.patient_id = id;
    const auto n = static_cast<Index>(rows.size());
    t.obs.resize(n, kNumObs);
    t.demog.resize(n, kNumDemog);
    for (Index s = 0; s < n; ++s) {
      const RawRow& r = rows[static_cast<std::size_t>(s)];
      for (Index j = 0; j < kNumObs; ++j) t.obs(s, j) = r.obs[static_cast<std::size_t>(j)];
      for (Index j = 0; j < kNumDemog; ++j) t.demog(s, j) = r.demog[static_cast<std::size_t>(j)];
      t.actions.push_back(r.action);
      t.sofa.push_back(r.sofa);
      t.saps2.push_back(r.saps2);
      t.oasis.push_back(r.oasis);
    }
    t.died = rows[0].outcome == 1;
    cohort.trajectories.push_back(std::move(t));
  }
  if (cohort.trajectories.empty()) throw IngestError("no data rows", row);
  return cohort;
}

json stats_to_json(const NormStats& s) {
  return json{{"obs_mean", s.obs_mean},         {"obs_std", s.obs_std},
              {"demog_mean", s.demog_mean},     {"demog_std", s.demog_std},
              {"obs_passthrough", s.obs_passthrough}, {"demog_passthrough", s.demog_passthrough}};
}

NormStats stats_from_json(const json& j) {
  NormStats s;
  j.at("obs_mean").get_to(s.obs_mean);
  j.at("obs_std").get_to(s.obs_std);
  j.at("demog_mean").get_to(s.demog_mean);
  j.at("demog_std").get_to(s.demog_std);
  j.at("obs_passthrough").get_to(s.obs_passthrough);
  j.at("demog_passthrough").get_to(s.demog_passthrough);
  return s;
}

namespace {

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  std::filesystem::path p = path;
  p += ".json";
  return p;
}

}  // namespace

void save_cohort(const Cohort& cohort, const std::filesystem::path& path) {
  validate(cohort);
  const std::string csv = cohort_to_csv(cohort);
  write_file_atomic(path, csv);
  json side;
  side["format"] = "seqstate-cohort";
  side["version"] = 1;
  side["patients"] = cohort.size();
  side["deaths"] = cohort.deaths();
  side["csv_fnv1a"] = fnv1a_hex(csv);
  const Provenance& p = cohort.provenance;
  side["provenance"] = {{"kind", p.kind == Provenance::Kind::kSynthetic ? "synthetic" : "ingested"},
                        {"seed", p.seed},
                        {"path", p.path}};
  side["normalization"] = cohort.normalization ? stats_to_json(*cohort.normalization) : json(nullptr);
  write_file_atomic(sidecar_path(path), side.dump(2) + "\n");
}

Cohort load_cohort(const std::filesystem::path& path, int max_steps) {
  const std::string text = read_file(path);
  Cohort cohort = parse_cohort_csv(text, max_steps);
  cohort.provenance.kind = Provenance::Kind::kIngested;
  cohort.provenance.path = path.string();
  cohort.provenance.content_hash = fnv1a_hex(text);
  const auto side = sidecar_path(path);
  if (std::filesystem::exists(side)) {
    json j;
    try {
      j = json::parse(read_file(side));
      const json& p = j.at("provenance");
      if (p.at("kind").get<std::string>() == "synthetic") {
        cohort.provenance.kind = Provenance::Kind::kSynthetic;
        cohort.provenance.seed = p.at("seed").get<std::uint64_t>();
        cohort.provenance.path.clear();
      }
      if (!j.at("normalization").is_null()) cohort.normalization = stats_from_json(j.at("normalization"));
    } catch (const json::exception& e) {
      throw DataError("malformed sidecar " + side.string() + ": " + e.what());
    }
  }
  validate(cohort, max_steps);
  return cohort;
}

// ---------------------------------------------------------------- split

Splits stratified_split(const Cohort& cohort, const SplitSpec& spec) {
  const double total = spec.train + spec.val + spec.test;
  if (std::abs(total - 1.0) > 1e-9 || spec.train < 0 || spec.val < 0 || spec.test < 0) {
    throw ContractError("stratified_split: ratios must be nonnegative and sum to 1");
  }
  std::array<std::vector<std::size_t>, 2> cls;
  for (std::size_t i = 0; i < cohort.size(); ++i) cls[cohort.trajectories[i].died ? 1 : 0].push_back(i);
  for (int c = 0; c < 2; ++c) {
    if (cls[static_cast<std::size_t>(c)].size() < 3) {
      throw DataError("stratified_split: outcome class " + std::to_string(c) + " has fewer than 3 patients");
    }
  }
  const auto n = static_cast<long long>(cohort.size());
  const std::array<double, 3> ratio{spec.train, spec.val, spec.test};
  std::array<long long, 3> sizes{};
  sizes[1] = std::llround(ratio[1] * static_cast<double>(n));
  sizes[2] = std::llround(ratio[2] * static_cast<double>(n));
  sizes[0] = n - sizes[1] - sizes[2];

  // Survivors: largest-remainder rounding of their exact share of each split.
  // Deaths fill the rest, so both classes sit within one patient of exact.
  const auto n0 = static_cast<long long>(cls[0].size());
  std::array<long long, 3> alive{};
  std::array<double, 3> frac{};
  long long assigned = 0;
  for (int s = 0; s < 3; ++s) {
    const double exact = static_cast<double>(n0) * static_cast<double>(sizes[static_cast<std::size_t>(s)]) /
                         static_cast<double>(n);
    alive[static_cast<std::size_t>(s)] = static_cast<long long>(std::floor(exact));
    frac[static_cast<std::size_t>(s)] = exact - std::floor(exact);
    assigned += alive[static_cast<std::size_t>(s)];
  }
  std::array<int, 3> by_frac{0, 1, 2};
  std::stable_sort(by_frac.begin(), by_frac.end(),
                   [&](int a, int b) { return frac[static_cast<std::size_t>(a)] > frac[static_cast<std::size_t>(b)]; });
  for (long long k = 0; k < n0 - assigned; ++k) ++alive[static_cast<std::size_t>(by_frac[static_cast<std::size_t>(k)])];

  numcore::Rng rng(spec.seed);
  for (auto& v : cls) rng.shuffle(v);

  Splits out;
  std::array<Cohort*, 3> dst{&out.train, &out.val, &out.test};
  for (Cohort* c : dst) {
    c->provenance = cohort.provenance;
    c->normalization = cohort.normalization;
  }
  std::array<std::size_t, 2> cursor{};
  for (int s = 0; s < 3; ++s) {
    const auto us = static_cast<std::size_t>(s);
    const std::array<long long, 2> take{alive[us], sizes[us] - alive[us]};
    for (int c = 0; c < 2; ++c) {
      const auto uc = static_cast<std::size_t>(c);
      for (long long k = 0; k < take[uc]; ++k) {
        dst[us]->trajectories.push_back(cohort.trajectories[cls[uc][cursor[uc]++]]);
      }
    }
  }
  // Keep the cohort's original order inside each split.
  std::map<std::string, std::size_t> rank;
  for (std::size_t i = 0; i < cohort.size(); ++i) rank[cohort.trajectories[i].patient_id] = i;
  for (Cohort* c : dst) {
    std::sort(c->trajectories.begin(), c->trajectories.end(),
              [&](const Trajectory& a, const Trajectory& b) { return rank[a.patient_id] < rank[b.patient_id]; });
  }
  return out;
}

// ---------------------------------------------------------------- normalization

NormStats compute_stats(const Cohort& cohort) {
  NormStats s;
  Index rows = 0;
  Eigen::RowVectorXd obs_sum = Eigen::RowVectorXd::Zero(kNumObs), demog_sum = Eigen::RowVectorXd::Zero(kNumDemog);
  for (const Trajectory& t : cohort.trajectories) {
    obs_sum += t.obs.colwise().sum();
    demog_sum += t.demog.colwise().sum();
    rows += t.length();
  }
  if (rows == 0) throw DataError("compute_stats: empty cohort");
  const Eigen::RowVectorXd obs_mean = obs_sum / static_cast<double>(rows);
  const Eigen::RowVectorXd demog_mean = demog_sum / static_cast<double>(rows);
  Eigen::RowVectorXd obs_ss = Eigen::RowVectorXd::Zero(kNumObs), demog_ss = Eigen::RowVectorXd::Zero(kNumDemog);
  for (const Trajectory& t : cohort.trajectories) {
    obs_ss += (t.obs.rowwise() - obs_mean).array().square().matrix().colwise().sum();
    demog_ss += (t.demog.rowwise() - demog_mean).array().square().matrix().colwise().sum();
  }
  for (int j = 0; j < kNumObs; ++j) {
    const auto u = static_cast<std::size_t>(j);
    s.obs_mean[u] = obs_mean(j);
    s.obs_std[u] = std::sqrt(obs_ss(j) / static_cast<double>(rows));
    s.obs_passthrough[u] = s.obs_std[u] < 1e-12;
  }
  for (int j = 0; j < kNumDemog; ++j) {
    const auto u = static_cast<std::size_t>(j);
    const bool continuous = std::find(kContinuousDemog.begin(), kContinuousDemog.end(), j) != kContinuousDemog.end();
    s.demog_mean[u] = demog_mean(j);
    s.demog_std[u] = std::sqrt(demog_ss(j) / static_cast<double>(rows));
    s.demog_passthrough[u] = !continuous || s.demog_std[u] < 1e-12;
  }
  return s;
}

Cohort znormalize(const Cohort& cohort, const NormStats& stats) {
  if (cohort.normalization) throw ContractError("znormalize: cohort is already normalized");
  Cohort out = cohort;
  for (Trajectory& t : out.trajectories) {
    for (int j = 0; j < kNumObs; ++j) {
      const auto u = static_cast<std::size_t>(j);
      if (!stats.obs_passthrough[u]) t.obs.col(j) = (t.obs.col(j).array() - stats.obs_mean[u]) / stats.obs_std[u];
    }
    for (int j = 0; j < kNumDemog; ++j) {
      const auto u = static_cast<std::size_t>(j);
      if (!stats.demog_passthrough[u]) {
        t.demog.col(j) = (t.demog.col(j).array() - stats.demog_mean[u]) / stats.demog_std[u];
      }
    }
  }
  out.normalization = stats;
  return out;
}

Cohort denormalize(const Cohort& cohort) {
  if (!cohort.normalization) throw ContractError("denormalize: cohort is not normalized");
  const NormStats& stats = *cohort.normalization;
  Cohort out = cohort;
  for (Trajectory& t : out.trajectories) {
    for (int j = 0; j < kNumObs; ++j) {
      const auto u = static_cast<std::size_t>(j);
      if (!stats.obs_passthrough[u]) t.obs.col(j) = t.obs.col(j).array() * stats.obs_std[u] + stats.obs_mean[u];
    }
    for (int j = 0; j < kNumDemog; ++j) {
      const auto u = static_cast<std::size_t>(j);
      if (!stats.demog_passthrough[u]) {
        t.demog.col(j) = t.demog.col(j).array() * stats.demog_std[u] + stats.demog_mean[u];
      }
    }
  }
  out.normalization.reset();
  return out;
}

// ---------------------------------------------------------------- actions

int encode_action(int vaso_bin, int fluid_bin) {
  if (vaso_bin < 0 || vaso_bin >= kActionBins || fluid_bin < 0 || fluid_bin >= kActionBins) {
    throw ContractError("encode_action: bins must be in [0, 4]");
  }
  return kActionBins * vaso_bin + fluid_bin;
}

std::pair<int, int> decode_action(int action_id) {
  if (action_id < 0 || action_id >= kNumActions) throw ContractError("decode_action: id must be in [0, 24]");
  return {action_id / kActionBins, action_id % kActionBins};
}

}  // namespace seqstate::cohort
