#include "seqstate/cohort/synthetic.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <string>

#include "seqstate/errors.hpp"
#include "seqstate/numcore/random.hpp"

namespace seqstate::cohort {

namespace {

double softplus(double x) { return x > 30 ? x : std::log1p(std::exp(x)); }
double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

constexpr double kSevRef = 0.7;
constexpr double kSevGain = 1.5;
constexpr std::uint64_t kPilotSeed = 0x5eed0fca11b7a7e1ULL;

}  // namespace

const FeatureReference& feature_reference() {
  static const FeatureReference ref = [] {
    FeatureReference r;
    // clang-format off
    const double table[kNumObs][3] = {
      {13, 3, -0.9},     {90, 18, 0.8},     {120, 20, -0.8},   {62, 12, -0.7},   {80, 14, -0.9},
      {20, 5, 0.7},      {37, 0.8, 0.5},    {0.45, 0.15, 0.6}, {4.1, 0.6, 0.15}, {139, 4.5, 0.15},
      {104, 6, 0.15},    {140, 45, 0.5},    {1.4, 0.45, 0.7},  {2.0, 0.35, 0.1}, {8.3, 0.8, -0.5},
      {10.3, 1.9, -0.6}, {12, 6, 0.7},      {200, 100, -0.8},  {36, 12, 0.6},    {15, 4, 0.7},
      {7.39, 0.07, -0.8},{2.2, 1.5, 1.0},   {110, 45, -0.5},   {40, 8, 0.1},     {260, 110, -0.9},
      {24, 4.5, -0.7},   {96.5, 2.8, -0.6}, {30, 20, 0.8},     {1.5, 1.2, 0.9},  {80, 90, 0.6},
      {60, 70, 0.5},     {1.6, 1.8, 0.8},   {0.2, 4.5, -0.8},
    };
    // clang-format on
    for (int j = 0; j < kNumObs; ++j) {
      const auto u = static_cast<std::size_t>(j);
      r.center[u] = table[j][0];
      r.scale[u] = table[j][1];
      r.loading[u] = table[j][2];
    }
    return r;
  }();
  return ref;
}

namespace {

struct LatentPath {
  int length = 0;
  std::array<double, kNumDemog> demog{};
  std::vector<double> h;             // length + 1 (last is post-trajectory)
  std::vector<double> vaso, fluid;   // continuous doses, length
  double death_stat = 0;
};

void check_config(const SyntheticConfig& c) {
  if (c.min_steps < 1 || c.max_steps < c.min_steps) throw ContractError("synthetic: need 1 <= min_steps <= max_steps");
  if (!(c.target_mortality > 0 && c.target_mortality < 1)) throw ContractError("synthetic: target_mortality in (0,1)");
  if (c.initial_health_sd < 0 || c.trend_sd < 0 || c.health_noise < 0 || c.obs_noise < 0) {
    throw ContractError("synthetic: noise scales must be nonnegative");
  }
  if (c.initial_health_sd == 0 && c.trend_sd == 0 && c.health_noise == 0) {
    throw ContractError("synthetic: degenerate config, every patient would share one health path");
  }
  if (c.pilot_patients < 100) throw ContractError("synthetic: pilot_patients must be >= 100");
}

LatentPath simulate_latent(numcore::Rng& rng, const SyntheticConfig& c, double effect) {
  LatentPath p;
  double age = std::clamp(rng.normal(65, 15), 18.0, 95.0);
  p.demog[0] = age;
  p.demog[1] = rng.bernoulli(0.45) ? 1.0 : 0.0;
  p.demog[2] = std::clamp(rng.normal(80, 18), 40.0, 200.0);
  p.demog[4] = rng.bernoulli(0.15) ? 1.0 : 0.0;
  p.length = c.min_steps + static_cast<int>(rng.index(static_cast<std::size_t>(c.max_steps - c.min_steps + 1)));
  const double trend = c.trend_sd * rng.normal();
  double h = c.initial_health_mean + c.initial_health_sd * rng.normal() - 0.015 * (age - 65);
  p.demog[3] = rng.bernoulli(softplus(-h) > 1.0 ? 0.6 : 0.3) ? 1.0 : 0.0;
  p.h.push_back(h);
  for (int t = 0; t < p.length; ++t) {
    const double sev = softplus(-h);
    const double v = std::exp(1.5 * c.action_severity_coupling * (sev - kSevRef) + 0.7 * rng.normal());
    const double f = std::exp(c.action_severity_coupling * (sev - kSevRef) + 0.7 * rng.normal());
    p.vaso.push_back(v);
    p.fluid.push_back(f);
    const double uv = logistic(std::log(v)), uf = logistic(std::log(f));
    h += trend + 0.05 * (0.8 - h) + effect * sev * (1.2 * uv + 0.8 * uf) + c.health_noise * rng.normal();
    h = std::clamp(h, -5.0, 5.0);
    p.h.push_back(h);
  }
  const std::size_t n = p.h.size();
  const std::size_t from = n >= 3 ? n - 3 : 0;
  double s = 0;
  for (std::size_t i = from; i < n; ++i) s += p.h[i];
  p.death_stat = s / static_cast<double>(n - from);
  return p;
}

std::array<double, 4> quintile_edges(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::array<double, 4> e{};
  for (int q = 1; q <= 4; ++q) {
    const double pos = q / 5.0 * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    e[static_cast<std::size_t>(q - 1)] = v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  }
  return e;
}

int bin_of(double x, const std::array<double, 4>& edges) {
  return static_cast<int>(std::upper_bound(edges.begin(), edges.end(), x) - edges.begin());
}

}  // namespace

Calibration calibrate(const SyntheticConfig& config) {
  check_config(config);
  std::vector<double> stats, vaso, fluid;
  for (int i = 0; i < config.pilot_patients; ++i) {
    numcore::Rng rng(numcore::derive_seed(kPilotSeed, static_cast<std::uint64_t>(2 * i)));
    LatentPath p = simulate_latent(rng, config, config.calibration_effect);
    stats.push_back(p.death_stat);
    vaso.insert(vaso.end(), p.vaso.begin(), p.vaso.end());
    fluid.insert(fluid.end(), p.fluid.begin(), p.fluid.end());
  }
  std::sort(stats.begin(), stats.end());
  const auto k = static_cast<std::size_t>(std::llround(config.target_mortality * static_cast<double>(stats.size())));
  if (k == 0 || k >= stats.size() || stats[k - 1] == stats[k]) {
    throw ContractError("synthetic: degenerate config, cannot place the mortality threshold");
  }
  Calibration cal;
  cal.death_threshold = 0.5 * (stats[k - 1] + stats[k]);
  cal.vaso_edges = quintile_edges(std::move(vaso));
  cal.fluid_edges = quintile_edges(std::move(fluid));
  return cal;
}

Cohort generate_synthetic(int n_patients, std::uint64_t seed, const SyntheticConfig& config) {
  if (n_patients < 10) throw ContractError("generate_synthetic: need at least 10 patients");
  const Calibration cal = calibrate(config);
  const FeatureReference& ref = feature_reference();
  const int width = std::max(5, static_cast<int>(std::to_string(n_patients).size()));

  Cohort cohort;
  cohort.provenance.kind = Provenance::Kind::kSynthetic;
  cohort.provenance.seed = seed;
  for (int i = 0; i < n_patients; ++i) {
    numcore::Rng lat(numcore::derive_seed(seed, static_cast<std::uint64_t>(2 * i)));
    numcore::Rng obs_rng(numcore::derive_seed(seed, static_cast<std::uint64_t>(2 * i + 1)));
    const LatentPath p = simulate_latent(lat, config, config.treatment_effect);

    Trajectory t;
    const std::string num = std::to_string(i);
    t.patient_id = "p" + std::string(static_cast<std::size_t>(width) - std::min<std::size_t>(num.size(), width), '0') + num;
    const Index n = p.length;
    t.obs.resize(n, kNumObs);
    t.demog.resize(n, kNumDemog);
    std::array<double, kNumObs> noise{};
    for (auto& e : noise) e = obs_rng.normal();
    double prev_uv = 0.5, prev_uf = 0.5;
    for (Index s = 0; s < n; ++s) {
      const auto us = static_cast<std::size_t>(s);
      const double sev = softplus(-p.h[us]);
      std::array<double, kNumObs> z{};
      for (int j = 0; j < kNumObs; ++j) {
        const auto u = static_cast<std::size_t>(j);
        if (s > 0) noise[u] = 0.5 * noise[u] + std::sqrt(0.75) * obs_rng.normal();
        z[u] = ref.loading[u] * kSevGain * (sev - kSevRef) + config.obs_noise * noise[u];
      }
      // Direct effects of the previous step's treatment.
      const double dv = prev_uv - 0.5, df = prev_uf - 0.5;
      z[2] += 0.8 * dv;
      z[3] += 0.8 * dv;
      z[4] += 0.8 * dv + 0.3 * df;
      z[15] -= 0.4 * df;
      z[21] -= 0.3 * df;
      for (int j = 0; j < kNumObs; ++j) {
        const auto u = static_cast<std::size_t>(j);
        t.obs(s, j) = ref.center[u] + ref.scale[u] * z[u];
      }
      for (int j = 0; j < kNumDemog; ++j) t.demog(s, j) = p.demog[static_cast<std::size_t>(j)];
      const int vb = bin_of(p.vaso[us], cal.vaso_edges);
      const int fb = bin_of(p.fluid[us], cal.fluid_edges);
      t.actions.push_back(encode_action(vb, fb));
      const AcuityScores sc = surrogate_acuity(std::span<const double>(t.obs.row(s).data(), kNumObs),
                                               std::span<const double>(t.demog.row(s).data(), kNumDemog));
      t.sofa.push_back(sc.sofa);
      t.saps2.push_back(sc.saps2);
      t.oasis.push_back(sc.oasis);
      prev_uv = logistic(std::log(p.vaso[us]));
      prev_uf = logistic(std::log(p.fluid[us]));
    }
    t.died = p.death_stat < cal.death_threshold;
    cohort.trajectories.push_back(std::move(t));
  }
  validate(cohort, config.max_steps);
  return cohort;
}

AcuityScores surrogate_acuity(std::span<const double> obs, std::span<const double> demog) {
  if (obs.size() != kNumObs || demog.size() != kNumDemog) throw ContractError("surrogate_acuity: bad input width");
  const FeatureReference& ref = feature_reference();
  auto points = [&](int j) {
    const auto u = static_cast<std::size_t>(j);
    const double z = std::abs((obs[u] - ref.center[u]) / ref.scale[u]);
    return (z >= 1 ? 1.0 : 0.0) + (z >= 2 ? 1.0 : 0.0) + (z >= 3 ? 1.0 : 0.0);
  };
  const double age_term = std::max(0.0, (demog[0] - 40.0) / 10.0);
  AcuityScores s;
  for (int j : kSofaFeatures) s.sofa += points(j);
  for (int j : kSaps2Features) s.saps2 += points(j);
  for (int j : kOasisFeatures) s.oasis += points(j);
  s.saps2 += age_term;
  s.oasis += age_term;
  return s;
}

ChiSquareResult chi_square_independence(const std::vector<std::vector<double>>& table) {
  if (table.empty()) throw ContractError("chi_square_independence: empty table");
  const std::size_t cols = table[0].size();
  std::vector<double> row_sum, col_sum(cols, 0.0);
  std::vector<std::size_t> rows_kept;
  double total = 0;
  for (std::size_t r = 0; r < table.size(); ++r) {
    if (table[r].size() != cols) throw ContractError("chi_square_independence: ragged table");
    double s = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (table[r][c] < 0) throw ContractError("chi_square_independence: negative count");
      s += table[r][c];
      col_sum[c] += table[r][c];
    }
    if (s > 0) rows_kept.push_back(r);
    row_sum.push_back(s);
    total += s;
  }
  std::vector<std::size_t> cols_kept;
  for (std::size_t c = 0; c < cols; ++c) {
    if (col_sum[c] > 0) cols_kept.push_back(c);
  }
  ChiSquareResult res;
  if (rows_kept.size() < 2 || cols_kept.size() < 2) return res;
  for (std::size_t r : rows_kept) {
    for (std::size_t c : cols_kept) {
      const double expected = row_sum[r] * col_sum[c] / total;
      const double d = table[r][c] - expected;
      res.statistic += d * d / expected;
    }
  }
  res.dof = static_cast<int>((rows_kept.size() - 1) * (cols_kept.size() - 1));
  boost::math::chi_squared dist(res.dof);
  res.p_value = boost::math::cdf(boost::math::complement(dist, res.statistic));
  return res;
}

ChiSquareResult first_action_outcome_test(const Cohort& cohort) {
  std::vector<std::vector<double>> table(kNumActions, std::vector<double>(2, 0.0));
  for (const Trajectory& t : cohort.trajectories) {
    if (t.actions.empty()) continue;
    table[static_cast<std::size_t>(t.actions[0])][static_cast<std::size_t>(t.outcome())] += 1;
  }
  return chi_square_independence(table);
}

}  // namespace seqstate::cohort
