#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "seqstate/cohort/synthetic.hpp"
#include "seqstate/encoders/model.hpp"
#include "seqstate/numcore/random.hpp"
#include "seqstate/policy/serialize.hpp"
#include "seqstate/policy/wis.hpp"

using namespace seqstate;
using namespace seqstate::policy;
using numcore::Rng;

namespace {

Episode episode(const std::string& id, const Matrix& states, std::vector<int> actions, double reward) {
  return Episode{id, states, std::move(actions), reward, reward < 0};
}

// Buffer of one-step episodes with the given states, actions and rewards.
TransitionBuffer one_step_buffer(const Matrix& states, const std::vector<int>& actions, const std::vector<double>& rewards) {
  std::vector<Episode> eps;
  for (Index i = 0; i < states.rows(); ++i) {
    eps.push_back(episode("e" + std::to_string(i), states.row(i), {actions[static_cast<std::size_t>(i)]},
                          rewards[static_cast<std::size_t>(i)]));
  }
  return build_buffer(eps);
}

Matrix one_hot_state(Index k, Index width) {
  Matrix m = Matrix::Zero(1, width);
  m(0, k) = 1.0;
  return m;
}

}  // namespace

TEST_CASE("bcq_filter examples") {
  std::vector<double> uniform(25, 1.0 / 25);
  for (double tau : {0.0, 0.3, 1.0}) CHECK(bcq_filter(uniform, tau).size() == 25);

  std::vector<double> p(25, 0.0);
  p[0] = 0.5;
  p[1] = 0.3;
  p[2] = 0.15;
  p[3] = 0.05;
  CHECK(bcq_filter(p, 0.3) == std::vector<int>{0, 1, 2});
  CHECK(bcq_filter(p, 0.0) == std::vector<int>{0, 1, 2, 3});
  CHECK(bcq_filter(p, 1.0) == std::vector<int>{0});

  CHECK_THROWS_AS(bcq_filter(std::vector<double>(25, 0.0), 0.3), ContractError);
  CHECK_THROWS_AS(bcq_filter(std::vector<double>{0.5, -0.1}, 0.3), ContractError);
  CHECK_THROWS_AS(bcq_filter(std::vector<double>{}, 0.3), ContractError);
}

TEST_CASE("bcq_filter is monotone in tau and never empty") {
  Rng rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> p(25);
    double total = 0.0;
    for (double& x : p) total += (x = rng.bernoulli(0.3) ? 0.0 : rng.uniform());
    if (total == 0.0) p[3] = total = 1.0;
    for (double& x : p) x /= total;
    std::vector<int> previous = bcq_filter(p, 0.0);
    for (double tau = 0.05; tau <= 1.0; tau += 0.05) {
      const std::vector<int> now = bcq_filter(p, tau);
      REQUIRE_FALSE(now.empty());
      CHECK(std::includes(previous.begin(), previous.end(), now.begin(), now.end()));
      previous = now;
    }
  }
}

TEST_CASE("transition buffer from episodes") {
  Rng rng(1);
  const Matrix states = rng.normal_matrix(5, 3);
  std::vector<Episode> eps{episode("a", states, {1, 2, 3, 4, 5}, 1.0)};
  TransitionBuffer b = build_buffer(eps);
  CHECK(b.size() == 5);
  CHECK(b.latent_dim() == 3);
  CHECK(b.done == std::vector<unsigned char>{0, 0, 0, 0, 1});
  CHECK(b.rewards == std::vector<double>{0, 0, 0, 0, 1});
  CHECK(b.next_states.row(2) == states.row(3));
  CHECK(b.next_states.row(4) == states.row(4));

  eps.push_back(episode("b", rng.normal_matrix(2, 3), {0, 0}, -1.0));
  b = build_buffer(eps);
  CHECK(b.size() == 7);
  CHECK(b.rewards.back() == -1.0);
  CHECK(b.action_counts()[0] == 2);
  CHECK(build_buffer(eps) == b);

  CHECK_THROWS_AS(build_buffer(std::vector<Episode>{}), DataError);
  CHECK_THROWS_AS(build_buffer(std::vector<Episode>{episode("c", states, {1, 2}, 1.0)}), ContractError);
  CHECK_THROWS_AS(build_buffer(std::vector<Episode>{episode("c", states.topRows(1), {25}, 1.0)}), DataError);
}

TEST_CASE("buffer from an encoder and a cohort") {
  const cohort::Cohort c = cohort::generate_synthetic(20, 3);
  const auto model = encoders::build_encoder(encoders::EncoderKind::kAIS, 4, encoders::InputMode::kObs, 1);
  const TransitionBuffer b = build_buffer(*model, c);
  std::size_t steps = 0, terminal = 0;
  for (const auto& t : c.trajectories) steps += static_cast<std::size_t>(t.length());
  for (unsigned char d : b.done) terminal += d;
  CHECK(b.size() == steps);
  CHECK(terminal == c.size());
  double reward_sum = 0.0;
  for (double r : b.rewards) reward_sum += r;
  CHECK(reward_sum == static_cast<double>(c.size()) - 2.0 * static_cast<double>(c.deaths()));
  CHECK(build_buffer(*model, c) == b);
  CHECK_THROWS_AS(build_buffer(*model, cohort::Cohort{}), DataError);
}

TEST_CASE("DDM decision states precede the action they inform") {
  Rng rng(5);
  const cohort::Cohort c = cohort::generate_synthetic(12, 2);
  const auto model = encoders::build_encoder(encoders::EncoderKind::kDDM, 4, encoders::InputMode::kObs, 1);
  const auto& traj = c.trajectories.front();
  REQUIRE(traj.length() >= 3);
  const Matrix states = encoders::decision_trajectories(*model, std::span(&traj, 1)).front().latents;
  const Matrix latents = encoders::encode_trajectory(*model, traj).latents;
  CHECK(states.bottomRows(traj.length() - 1) == latents.topRows(traj.length() - 1));
  for (Index t = 0; t < traj.length(); ++t) {
    cohort::Trajectory changed = traj;
    changed.actions[static_cast<std::size_t>(t)] = (changed.actions[static_cast<std::size_t>(t)] + 1) % 25;
    const Matrix again = encoders::decision_trajectories(*model, std::span(&changed, 1)).front().latents;
    CHECK(again.topRows(t + 1) == states.topRows(t + 1));
  }
  // Other kinds: the decision state is the latent itself.
  const auto ais = encoders::build_encoder(encoders::EncoderKind::kAIS, 4, encoders::InputMode::kObs, 1);
  CHECK(encoders::decision_trajectories(*ais, std::span(&traj, 1)).front().latents ==
        encoders::encode_trajectory(*ais, traj).latents);
}

TEST_CASE("behavior cloning: separable behavior") {
  Rng rng(7);
  const Index n = 5000, d = 4;
  const Matrix w = rng.normal_matrix(d, 25);
  const Matrix states = rng.normal_matrix(n, d);
  std::vector<int> actions(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    Index a = 0;
    (states.row(i) * w).maxCoeff(&a);
    actions[static_cast<std::size_t>(i)] = static_cast<int>(a);
  }
  const TransitionBuffer b = one_step_buffer(states, actions, std::vector<double>(static_cast<std::size_t>(n), 1.0));
  BcConfig cfg;
  cfg.epochs = 60;
  cfg.seed = 1;
  const BcResult r = behavior_clone(b, cfg);
  CHECK(r.train_accuracy > 0.95);
  const Matrix p = r.policy.probabilities(states.topRows(200));
  CHECK((p.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
}

TEST_CASE("behavior cloning: random behavior stays at chance") {
  Rng rng(8);
  const Index n = 10000;
  const Matrix states = rng.normal_matrix(n, 4);
  std::vector<int> actions(static_cast<std::size_t>(n));
  for (int& a : actions) a = static_cast<int>(rng.index(25));
  const TransitionBuffer b = one_step_buffer(states, actions, std::vector<double>(static_cast<std::size_t>(n), 1.0));
  const BcResult r = behavior_clone(b, BcConfig{});
  CHECK(std::abs(r.train_accuracy - 1.0 / 25) <= 0.02);
  CHECK(r.missing_actions.empty());
}

TEST_CASE("behavior cloning flags unseen actions") {
  Rng rng(9);
  const Matrix states = rng.normal_matrix(40, 2);
  std::vector<int> actions(40);
  for (std::size_t i = 0; i < 40; ++i) actions[i] = static_cast<int>(i % 3);
  BcConfig cfg;
  cfg.epochs = 1;
  const BcResult r = behavior_clone(one_step_buffer(states, actions, std::vector<double>(40, 0.0)), cfg);
  CHECK(r.missing_actions.size() == 22);
  CHECK(r.missing_actions.front() == 3);
}

TEST_CASE("BCQ two-action bandit picks the rewarded action") {
  const Index n = 400;
  Matrix states = Matrix::Ones(n, 1);
  std::vector<int> actions(static_cast<std::size_t>(n));
  std::vector<double> rewards(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < actions.size(); ++i) {
    actions[i] = i % 2 == 0 ? 3 : 11;
    rewards[i] = i % 2 == 0 ? 1.0 : -1.0;
  }
  const TransitionBuffer b = one_step_buffer(states, actions, rewards);
  BcqConfig cfg;
  cfg.iterations = 1500;
  cfg.eval_every = 500;
  cfg.seed = 2;
  const BcqResult r = train_bcq(b, cfg);
  CHECK(r.policy.greedy_actions(Matrix::Ones(1, 1)) == std::vector<int>{3});
  const Matrix q = r.policy.q_values(Matrix::Ones(1, 1));
  CHECK(q(0, 3) == doctest::Approx(1.0).epsilon(0.05));
  CHECK(q(0, 11) == doctest::Approx(-1.0).epsilon(0.05));
  const Matrix p = r.policy.filter_probabilities(Matrix::Ones(1, 1));
  CHECK(p(0, 3) + p(0, 11) > 0.95);
}

TEST_CASE("BCQ with gamma 0 learns per-cell mean rewards") {
  Rng rng(10);
  const Index cells = 4, n = 4000;
  const std::vector<std::vector<int>> allowed{{0, 5}, {1, 2, 3}, {7}, {4, 24}};
  Matrix states(n, cells);
  std::vector<int> actions;
  std::vector<double> rewards;
  std::map<std::pair<Index, int>, std::pair<double, int>> cell_stats;
  for (Index i = 0; i < n; ++i) {
    const Index s = static_cast<Index>(rng.index(cells));
    const auto& acts = allowed[static_cast<std::size_t>(s)];
    const int a = acts[rng.index(acts.size())];
    const double pr = 0.2 + 0.15 * static_cast<double>(s) + 0.02 * a;  // P(r = +1)
    const double r = rng.bernoulli(pr) ? 1.0 : -1.0;
    states.row(i) = one_hot_state(s, cells);
    actions.push_back(a);
    rewards.push_back(r);
    auto& [sum, count] = cell_stats[{s, a}];
    sum += r;
    ++count;
  }
  // Multi-step episodes would bootstrap; gamma 0 must ignore that anyway, so
  // mark only every other transition terminal.
  std::vector<Episode> eps;
  for (Index i = 0; i < n; i += 2) {
    Matrix st(2, cells);
    st << states.row(i), states.row(i + 1);
    eps.push_back(Episode{"e", st, {actions[static_cast<std::size_t>(i)], actions[static_cast<std::size_t>(i + 1)]},
                          rewards[static_cast<std::size_t>(i + 1)], false});
  }
  TransitionBuffer b = build_buffer(eps);
  b.rewards = rewards;  // every step carries its own reward here
  BcqConfig cfg;
  cfg.gamma = 0.0;
  cfg.batch_size = 512;  // smaller minibatch noise around the cell means
  cfg.iterations = 4000;
  cfg.eval_every = 1000;
  cfg.seed = 3;
  const BcqResult r = train_bcq(b, cfg);
  for (const auto& [key, value] : cell_stats) {
    const double mean = value.first / value.second;
    const double q = r.policy.q_values(one_hot_state(key.first, cells))(0, key.second);
    CAPTURE(key.first);
    CAPTURE(key.second);
    CHECK(std::abs(q - mean) < 0.05);
  }
}

TEST_CASE("BCQ never selects actions outside the logged support") {
  Rng rng(11);
  const Index n = 3000, d = 3;
  const Matrix states = rng.normal_matrix(n, d);
  std::vector<int> actions(static_cast<std::size_t>(n));
  std::vector<double> rewards(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < actions.size(); ++i) {
    actions[i] = static_cast<int>(rng.index(5)) * 2;  // even actions 0..8 only
    rewards[i] = actions[i] == 4 ? 1.0 : -1.0;
  }
  const TransitionBuffer b = one_step_buffer(states, actions, rewards);
  BcqConfig cfg;
  cfg.iterations = 2000;
  cfg.eval_every = 1000;
  cfg.seed = 4;
  const BcqResult r = train_bcq(b, cfg);
  const Matrix queries = rng.normal_matrix(10000, d);
  const std::vector<int> chosen = r.policy.greedy_actions(queries);
  const auto out_of_support = std::count_if(chosen.begin(), chosen.end(), [](int a) { return a % 2 == 1 || a > 8; });
  CHECK(out_of_support == 0);
  CHECK(static_cast<double>(std::count(chosen.begin(), chosen.end(), 4)) > 0.9 * 10000);
}

TEST_CASE("target network is frozen between refreshes") {
  QPolicy p(3, 8, 0.3, 1);
  Rng rng(12);
  const Matrix s = rng.normal_matrix(5, 3);
  numcore::NoGradGuard guard;
  const Matrix before = p.q_target(numcore::constant(s)).value();
  CHECK(before == p.q(numcore::constant(s)).value());
  for (const auto& [name, v] : p.q_params()) {
    Var handle = v;
    handle.mutable_value().array() += 0.1;
  }
  CHECK(p.q_target(numcore::constant(s)).value() == before);
  CHECK(p.q(numcore::constant(s)).value() != before);
  p.sync_target();
  CHECK(p.q_target(numcore::constant(s)).value() == p.q(numcore::constant(s)).value());
}

TEST_CASE("BCQ training is deterministic and writes a learning curve") {
  Rng rng(13);
  const Matrix states = rng.normal_matrix(200, 2);
  std::vector<int> actions(200);
  std::vector<double> rewards(200);
  for (std::size_t i = 0; i < 200; ++i) {
    actions[i] = static_cast<int>(rng.index(25));
    rewards[i] = rng.bernoulli(0.5) ? 1 : -1;
  }
  const TransitionBuffer b = one_step_buffer(states, actions, rewards);
  BcqConfig cfg;
  cfg.iterations = 1000;
  cfg.eval_every = 250;
  cfg.seed = 9;
  std::vector<Episode> eval_eps{episode("x", states.topRows(3), {1, 2, 3}, 1.0), episode("y", states.row(5), {4}, -1.0)};
  const BcResult bc = behavior_clone(b, BcConfig{});
  int rows_seen = 0;
  const auto evaluate = [&](const QPolicy& p) { return wis_evaluate(p, bc.policy, eval_eps, cfg.epsilon); };
  const BcqResult r1 = train_bcq(b, cfg, evaluate, [&](const CurveRow&) { ++rows_seen; });
  const BcqResult r2 = train_bcq(b, cfg, evaluate);
  CHECK(rows_seen == 4);
  REQUIRE(r1.curve.size() == 4);
  CHECK(r1.curve.back().iteration == 1000);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(r1.curve[i].q_loss == r2.curve[i].q_loss);
    CHECK(r1.curve[i].wis_return == r2.curve[i].wis_return);
    CHECK(r1.curve[i].wis_return >= -1.0);
    CHECK(r1.curve[i].wis_return <= 1.0);
    CHECK(r1.curve[i].ess >= 1.0);
    CHECK(r1.curve[i].ess <= 2.0);
  }
  for (std::size_t i = 0; i < r1.policy.params().size(); ++i) {
    CHECK(r1.policy.params()[i].second.value() == r2.policy.params()[i].second.value());
  }
  const std::string csv = curve_csv(r1.curve);
  CHECK(csv.rfind("iteration,wis_return,ess,q_loss,filter_loss\n250,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);

  BcqConfig bad = cfg;
  bad.iterations = 0;
  CHECK_THROWS_AS(train_bcq(b, bad), ContractError);
  bad = cfg;
  bad.learning_rate = 1e300;
  bad.clip_norm = 1e300;
  CHECK_THROWS_AS(train_bcq(b, bad), NumericalError);
}

TEST_CASE("default policy configs") {
  CHECK(default_bcq_config(encoders::EncoderKind::kAIS).hidden == 64);
  CHECK(default_bcq_config(encoders::EncoderKind::kDDM).hidden == 128);
  CHECK(default_bcq_config(encoders::EncoderKind::kCDE).learning_rate == 1e-5);
  CHECK(default_bcq_config(encoders::EncoderKind::kODE).learning_rate == 1e-3);
  const BcqConfig c = default_bcq_config(encoders::EncoderKind::kRNN);
  CHECK(c.iterations / c.eval_every == 40);
  CHECK(c.tau == 0.3);
  CHECK(c.gamma == 0.99);
  CHECK(c.epsilon == 0.01);
  CHECK(c.target_update == 1000);
  const BcqConfig back = bcq_config_from_json(bcq_config_to_json(c));
  CHECK(back.iterations == c.iterations);
  CHECK(back.learning_rate == c.learning_rate);
  CHECK(back.hidden == c.hidden);
}

TEST_CASE("WIS hand examples") {
  const std::vector<double> w{1, 3}, r{1, -1};
  const WisResult res = wis_estimate(w, r);
  CHECK(res.value == -0.5);
  CHECK(res.ess == doctest::Approx(16.0 / 10.0));

  CHECK(wis_estimate(std::vector<double>{1e-3}, std::vector<double>{-1.0}).value == -1.0);
  CHECK(wis_estimate(std::vector<double>{1e6}, std::vector<double>{0.25}).value == 0.25);

  const WisResult clipped = wis_estimate(std::vector<double>{1e12, 1e-20, 0.0}, std::vector<double>{1, 1, 1});
  CHECK(clipped.weights == std::vector<double>{1e8, 1e-8, 0.0});

  CHECK_THROWS_AS(wis_estimate(std::vector<double>{0, 0}, std::vector<double>{1, 1}), NumericalError);
  CHECK_THROWS_AS(wis_estimate(std::vector<double>{}, std::vector<double>{}), ContractError);
  CHECK_THROWS_AS(wis_estimate(std::vector<double>{1}, std::vector<double>{1, 2}), ContractError);
  CHECK_THROWS_AS(wis_estimate(std::vector<double>{-1}, std::vector<double>{1}), ContractError);
}

TEST_CASE("WIS convex combination and scale invariance") {
  Rng rng(14);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.index(30);
    std::vector<double> w(n), r(n);
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = std::exp(rng.uniform(-15, 15));
      r[i] = rng.uniform(-1, 1);
    }
    const WisResult res = wis_estimate(w, r);
    CHECK(res.value >= *std::min_element(r.begin(), r.end()) - 1e-12);
    CHECK(res.value <= *std::max_element(r.begin(), r.end()) + 1e-12);
    CHECK(res.ess >= 1.0 - 1e-12);
    CHECK(res.ess <= static_cast<double>(n) + 1e-9);
    std::vector<double> scaled = w;
    for (double& x : scaled) x *= 7.5;
    CHECK(wis_estimate(scaled, r).value == doctest::Approx(res.value).epsilon(1e-12));
  }
}

TEST_CASE("WIS with identical policies returns the mean outcome") {
  Rng rng(15);
  std::vector<Episode> eps;
  double total = 0.0;
  for (int i = 0; i < 37; ++i) {
    const Index len = 1 + static_cast<Index>(rng.index(10));
    std::vector<int> acts(static_cast<std::size_t>(len));
    for (int& a : acts) a = static_cast<int>(rng.index(25));
    const double r = rng.bernoulli(0.3) ? -1.0 : 1.0;
    total += r;
    eps.push_back(episode("p" + std::to_string(i), rng.normal_matrix(len, 3), acts, r));
  }
  const BcPolicy behavior(3, 16, 1);
  const auto probs = [&](const Matrix& s) { return behavior.probabilities(s); };
  const WisResult res = wis_evaluate(probs, probs, eps);
  for (double w : res.weights) CHECK(w == 1.0);
  CHECK(res.value == total / 37.0);
  CHECK(res.ess == 37.0);
}

TEST_CASE("WIS weight is the product of per-step ratios") {
  Rng rng(16);
  const Matrix s = rng.normal_matrix(3, 2);
  const std::vector<Episode> eps{episode("a", s, {0, 1, 2}, 1.0), episode("b", s.topRows(1), {0}, -1.0)};
  const auto eval = [](const Matrix& st) {
    Matrix p = Matrix::Constant(st.rows(), 25, 0.5 / 24);
    p.col(0).setConstant(0.5);
    return p;
  };
  const auto behavior = [](const Matrix& st) { return Matrix(Matrix::Constant(st.rows(), 25, 1.0 / 25)); };
  const WisResult res = wis_evaluate(eval, behavior, eps);
  const double small = (0.5 / 24) * 25;
  CHECK(res.weights[0] == doctest::Approx(12.5 * small * small).epsilon(1e-12));
  CHECK(res.weights[1] == doctest::Approx(12.5).epsilon(1e-12));

  QPolicy q(2, 8, 0.3, 1);
  const Matrix pe = q.action_probabilities(s, 0.01);
  CHECK((pe.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK(pe.maxCoeff() == doctest::Approx(0.99 + 0.01 / 25));
  CHECK(pe.minCoeff() == doctest::Approx(0.01 / 25));
  CHECK_THROWS_AS(wis_evaluate(eval, behavior, std::vector<Episode>{}), ContractError);
}

TEST_CASE("policy save and load") {
  const auto dir = std::filesystem::temp_directory_path() / "seqstate_test_policy";
  std::filesystem::remove_all(dir);
  QPolicy q(5, 16, 0.25, 3);
  BcPolicy bc(5, 12, 4);
  save_policy(q, bc, dir, {{"encoder", "runs/x"}, {"gamma", 0.99}});
  const LoadedPolicy back = load_policy(dir);
  CHECK(back.manifest.at("encoder") == "runs/x");
  CHECK(back.policy.tau() == 0.25);
  Rng rng(1);
  const Matrix s = rng.normal_matrix(7, 5);
  CHECK(back.policy.q_values(s) == q.q_values(s));
  CHECK(back.policy.filter_probabilities(s) == q.filter_probabilities(s));
  CHECK(back.behavior.probabilities(s) == bc.probabilities(s));
  numcore::NoGradGuard guard;
  CHECK(back.policy.q_target(numcore::constant(s)).value() == q.q_values(s));
  {
    std::fstream f(dir / "policy.bundle", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-1, std::ios::end);
    f.put('\x11');
  }
  CHECK_THROWS_AS(load_policy(dir), DataError);
  CHECK_THROWS_AS(load_policy(dir / "nope"), DataError);
  std::filesystem::remove_all(dir);
}
