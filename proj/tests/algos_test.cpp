#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "unilite/algo/estimators.hpp"
#include "unilite/algo/nstep.hpp"
#include "unilite/algo/ppo.hpp"

namespace ua = unilite::algo;
using oracle::Grid;
using oracle::Mat;
using oracle::Vec;

namespace {

double max_abs_diff(const Grid<double>& a, const Grid<double>& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace

TEST(Gae, MatchesBruteForceOn500Instances) {
  for (std::uint64_t s = 0; s < 500; ++s) {
    const auto c = oracle::random_case(s);
    const auto est = ua::gae(c.rewards, c.values, c.terminated, c.truncated, c.bootstrap,
                             c.gamma, c.lam, &c.truncation_values);
    const auto ref = oracle::gae_brute_force(c);
    ASSERT_LE(max_abs_diff(est.advantages, ref), 1e-10) << "instance " << s;
    ASSERT_LE(max_abs_diff(est.returns, ref + c.values), 1e-10) << "instance " << s;
  }
}

TEST(Gae, HandComputedTwoSteps) {
  Grid<double> r(2, 1), v(2, 1), z = Grid<double>::Zero(2, 1);
  r << 1.0, 2.0;
  v << 0.5, 0.25;
  Vec<double> boot(1);
  boot << 4.0;
  const auto est = ua::gae(r, v, z, z, boot, 0.9, 0.5);
  const double d1 = 2.0 + 0.9 * 4.0 - 0.25;
  const double d0 = 1.0 + 0.9 * 0.25 - 0.5;
  EXPECT_NEAR(est.advantages(1, 0), d1, 1e-12);
  EXPECT_NEAR(est.advantages(0, 0), d0 + 0.45 * d1, 1e-12);
}

TEST(Gae, TerminationStopsBootstrap) {
  Grid<double> r(1, 1), v(1, 1), term(1, 1), z = Grid<double>::Zero(1, 1);
  r << 1.0;
  v << 0.3;
  term << 1.0;
  Vec<double> boot(1);
  boot << 100.0;
  const auto est = ua::gae(r, v, term, z, boot, 0.99, 0.95);
  EXPECT_DOUBLE_EQ(est.advantages(0, 0), 1.0 - 0.3);
}

TEST(Vtrace, MatchesBruteForceOn500Instances) {
  for (std::uint64_t s = 0; s < 500; ++s) {
    const auto c = oracle::random_case(1000 + s);
    const auto est = ua::vtrace(c.behavior_log_prob, c.target_log_prob, c.rewards, c.values,
                                c.terminated, c.bootstrap, c.gamma, c.rho_bar, c.c_bar,
                                &c.truncated, &c.truncation_values);
    const auto ref = oracle::vtrace_brute_force(c);
    ASSERT_LE(max_abs_diff(est.vs, ref.vs), 1e-10) << "instance " << s;
    ASSERT_LE(max_abs_diff(est.pg_advantages, ref.pg), 1e-10) << "instance " << s;
  }
}

TEST(Vtrace, OnPolicyEqualsLambdaOneReturns) {
  for (std::uint64_t s = 0; s < 500; ++s) {
    auto c = oracle::random_case(5000 + s);
    c.target_log_prob = c.behavior_log_prob;
    const double clip = 1.0 + static_cast<double>(s % 3);
    const auto est = ua::vtrace(c.behavior_log_prob, c.target_log_prob, c.rewards, c.values,
                                c.terminated, c.bootstrap, c.gamma, clip, clip,
                                &c.truncated, &c.truncation_values);
    ASSERT_LE(max_abs_diff(est.vs, oracle::lambda_one_returns(c)), 1e-10) << s;
    const auto gae1 = ua::gae(c.rewards, c.values, c.terminated, c.truncated, c.bootstrap,
                              c.gamma, 1.0, &c.truncation_values);
    ASSERT_LE(max_abs_diff(est.vs, gae1.returns), 1e-10) << s;
  }
}

TEST(Vtrace, RejectsShapeMismatch) {
  Grid<double> a = Grid<double>::Zero(2, 2), b = Grid<double>::Zero(3, 2);
  Vec<double> boot = Vec<double>::Zero(2);
  EXPECT_THROW(ua::vtrace(a, a, b, a, a, boot, 0.9, 1.0, 1.0), std::invalid_argument);
}

// Explicit n-step oracle: for each env, slide over its reward stream.
TEST(NStep, MatchesWindowOracle) {
  const int envs = 3, obs_dim = 2, act_dim = 1, n = 3, steps = 40;
  const double gamma = 0.9;
  unilite::CounterRng rng(11, 0, unilite::RngPurpose::eval);
  ua::NStepPacker<double> packer(envs, obs_dim, act_dim, n, gamma);

  std::vector<std::vector<double>> rew(envs), term(envs), trunc(envs), tag(envs);
  std::vector<std::tuple<double, double, double, double>> got;  // tag, R, term, n_used
  for (int t = 0; t < steps; ++t) {
    Mat<double> obs(envs, obs_dim), next(envs, obs_dim), act(envs, act_dim);
    Vec<double> r(envs), te(envs), tr(envs);
    for (int b = 0; b < envs; ++b) {
      obs(b, 0) = b * 1000 + t;  // unique tag per (env, step)
      obs(b, 1) = 0;
      next.row(b) = obs.row(b);
      next(b, 1) = 1;
      act(b, 0) = t;
      r(b) = rng.uniform(-1, 1);
      const double u = rng.uniform();
      te(b) = u < 0.1 ? 1 : 0;
      tr(b) = (u >= 0.1 && u < 0.15) ? 1 : 0;
      rew[b].push_back(r(b));
      term[b].push_back(te(b));
      trunc[b].push_back(tr(b));
    }
    const auto rows = packer.push(obs, act, r, next, te, tr);
    for (Eigen::Index i = 0; i < rows.size(); ++i) {
      got.emplace_back(rows.obs(i, 0), rows.reward(i), rows.terminated(i), rows.n_used(i));
      // next_obs is the observation after the window's last step
      const int b = static_cast<int>(rows.obs(i, 0)) / 1000;
      const int start = static_cast<int>(rows.obs(i, 0)) % 1000;
      ASSERT_EQ(rows.next_obs(i, 0), b * 1000 + start + rows.n_used(i) - 1);
    }
  }
  for (const auto& [tg, R, te, used] : got) {
    const int b = static_cast<int>(tg) / 1000, t0 = static_cast<int>(tg) % 1000;
    double ret = 0;
    int k = 0;
    bool ended_term = false;
    for (; k < n && t0 + k < steps; ++k) {
      ret += std::pow(gamma, k) * rew[b][t0 + k];
      if (term[b][t0 + k] != 0) {
        ended_term = true;
        ++k;
        break;
      }
      if (trunc[b][t0 + k] != 0) {
        ++k;
        break;
      }
    }
    EXPECT_NEAR(R, ret, 1e-12);
    EXPECT_EQ(used, k);
    EXPECT_EQ(te, ended_term ? 1.0 : 0.0);
  }
  EXPECT_GT(got.size(), static_cast<std::size_t>(envs * (steps - n)));
}

TEST(NStep, OneStepIsIdentity) {
  ua::NStepPacker<double> p(2, 1, 1, 1, 0.99);
  Mat<double> o(2, 1), a(2, 1), nx(2, 1);
  o << 1, 2;
  a << 3, 4;
  nx << 5, 6;
  Vec<double> r(2), z = Vec<double>::Zero(2);
  r << 0.5, -0.5;
  const auto rows = p.push(o, a, r, nx, z, z);
  ASSERT_EQ(rows.size(), 2);
  EXPECT_EQ(rows.reward(1), -0.5);
  EXPECT_EQ(rows.n_used(0), 1);
  EXPECT_EQ(rows.next_obs(1, 0), 6);
}

TEST(RewardNormalizer, ScaleCoversReturnSpread) {
  ua::RewardNormalizer norm(4, 0.99, 5.0);
  unilite::CounterRng rng(3, 0, unilite::RngPurpose::eval);
  Vec<double> ret = Vec<double>::Zero(4);
  double max_abs = 0;
  for (int t = 0; t < 2000; ++t) {
    Vec<double> r(4), done = Vec<double>::Zero(4);
    for (int b = 0; b < 4; ++b) r(b) = 50 + 10 * rng.normal();
    const Vec<double> s = norm.update_apply(r, done);
    ret = 0.99 * ret + r;
    max_abs = std::max(max_abs, ret.cwiseAbs().maxCoeff());
    for (int b = 0; b < 4; ++b) {
      ASSERT_GE(r(b) / s(b), max_abs / 5.0 * (1 - 1e-12));
    }
  }
}

TEST(AdaptiveLr, DeadBandRule) {
  ua::PpoConfig cfg;
  cfg.desired_kl = 0.01;
  cfg.adaptive_kl_beta = 0.5;
  cfg.adaptive_lr_growth = 1.5;
  cfg.adaptive_lr_decay = 1.5;
  cfg.adaptive_lr_update_interval = 1;
  EXPECT_DOUBLE_EQ(ua::adaptive_lr_step(1e-3, 0.03, cfg, 0), 1e-3 / 1.5);
  EXPECT_DOUBLE_EQ(ua::adaptive_lr_step(1e-3, 0.001, cfg, 0), 1e-3 * 1.5);
  EXPECT_DOUBLE_EQ(ua::adaptive_lr_step(1e-3, 0.01, cfg, 0), 1e-3);
  EXPECT_DOUBLE_EQ(ua::adaptive_lr_step(1e-2, 0.0, cfg, 0), 1e-2);  // clamped
  cfg.adaptive_lr_update_interval = 5;
  EXPECT_DOUBLE_EQ(ua::adaptive_lr_step(1e-3, 0.03, cfg, 3), 1e-3);
  cfg.schedule = ua::LrSchedule::fixed;
  EXPECT_DOUBLE_EQ(ua::adaptive_lr_step(1e-3, 0.03, cfg, 0), 1e-3);
}

TEST(Ppo, NormalizedAdvantagesHaveZeroMeanUnitStd) {
  Vec<double> a(5);
  a << 1, 2, 3, 4, 10;
  const Vec<double> n = ua::normalize_advantages(a);
  EXPECT_NEAR(n.mean(), 0, 1e-12);
  EXPECT_NEAR(std::sqrt((n.array() - n.mean()).square().mean()), 1, 1e-6);
}

TEST(Ppo, PermutationIsAPermutation) {
  unilite::CounterRng rng(1, 0, unilite::RngPurpose::minibatch);
  auto p = ua::permutation(100, rng);
  std::sort(p.begin(), p.end());
  for (Eigen::Index i = 0; i < 100; ++i) EXPECT_EQ(p[static_cast<std::size_t>(i)], i);
}

TEST(Ppo, ClipFractionCountsRatiosOutsideBand) {
  unilite::CounterRng rng(5, 0, unilite::RngPurpose::eval);
  ua::ActorCritic<double> ac{oracle::random_net({2, {3}, 1}, rng, true),
                             oracle::random_net({2, {3}, 1}, rng, false)};
  ua::PpoBatch<double> b;
  b.obs = oracle::random_mat(4, 2, rng, -1, 1);
  b.critic_obs = b.obs;
  b.actions = oracle::random_mat(4, 1, rng, -1, 1);
  const Vec<double> logp = unilite::net::gaussian_log_prob(
      unilite::net::forward(ac.actor, b.obs), ac.actor.log_std, b.actions);
  b.old_log_prob = logp;
  b.old_log_prob(0) -= 1.0;  // ratio e
  b.old_log_prob(1) += 1.0;  // ratio 1/e
  b.old_values = Vec<double>::Zero(4);
  b.advantages = Vec<double>::Ones(4);
  b.returns = Vec<double>::Zero(4);
  const auto l = ua::ppo_loss(ac, b, ua::PpoConfig{}, false);
  EXPECT_DOUBLE_EQ(l.clip_fraction, 0.5);
}
