#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cmath>

#include "unilite/env/pool.hpp"
#include "unilite/env/randomization.hpp"
#include "unilite/env/reward.hpp"

namespace ue = unilite::env;
using unilite::CounterRng;
using unilite::MatD;
using unilite::RngPurpose;

namespace {

MatD random_actions(int n, int a, CounterRng& rng, double scale = 1.2) {
  MatD m(n, a);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
  return m;
}

std::vector<double> row(const std::vector<double>& v, int i, int w) {
  return {v.begin() + i * w, v.begin() + (i + 1) * w};
}

}  // namespace

TEST(Reward, TrackingKernelValues) {
  EXPECT_DOUBLE_EQ(ue::tracking_kernel(0, 0.25), 1.0);
  EXPECT_NEAR(ue::tracking_kernel(0.25, 0.25), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(ue::tracking_kernel(0.5, 0.25), std::exp(-4.0), 1e-15);
}

TEST(Reward, JoystickRewardExample) {
  const std::vector<double> v{0.5, 0.0}, c{0.25, 0.0}, a{1.0, -1.0}, p{0.0, 0.0};
  const double r = ue::joystick_reward(v, c, a, p, {1.0, -0.005}, 0.25, 0.02);
  EXPECT_NEAR(r, 0.02 * (std::exp(-1.0) - 0.005 * 2.0), 1e-15);
}

// Replays one control step of the double integrator by hand.
TEST(PointMass, DecimationMatchesHandIntegration) {
  auto task = ue::pointmass_task();
  task.obs_noise_scale = 0;
  task.decimation = 4;
  task.dt_sim = 0.005;
  auto pool = ue::EnvPool::materialize(task, 3, "pointmass", 5);
  CounterRng rng(1, 0, RngPurpose::eval);
  for (int t = 0; t < 20; ++t) {
    const MatD act = random_actions(3, 2, rng);
    const auto pos0 = pool.positions(), vel0 = pool.velocities(), prev0 = pool.prev_actions();
    const auto cmd = pool.commands();
    const auto& out = pool.step(act);
    for (int i = 0; i < 3; ++i) {
      if (out.done(i)) continue;
      double p[2] = {pos0[2 * i], pos0[2 * i + 1]}, v[2] = {vel0[2 * i], vel0[2 * i + 1]};
      double a[2], err2 = 0, rate2 = 0;
      for (int k = 0; k < 2; ++k) a[k] = std::clamp(act(i, k), -1.0, 1.0);
      for (int s = 0; s < 4; ++s) {
        for (int k = 0; k < 2; ++k) {
          v[k] += 0.005 * (a[k] * 5.0 / 1.0 - 0.1 * v[k]);
          p[k] += 0.005 * v[k];
        }
      }
      for (int k = 0; k < 2; ++k) {
        EXPECT_NEAR(pool.positions()[2 * i + k], p[k], 1e-12);
        EXPECT_NEAR(pool.velocities()[2 * i + k], v[k], 1e-12);
        err2 += (v[k] - cmd[2 * i + k]) * (v[k] - cmd[2 * i + k]);
        rate2 += (a[k] - prev0[2 * i + k]) * (a[k] - prev0[2 * i + k]);
      }
      const double kernel = std::exp(-err2 / (0.25 * 0.25));
      EXPECT_NEAR(out.reward(i), 0.02 * (kernel - 0.005 * rate2), 1e-12);
      EXPECT_NEAR(out.tracking(i), kernel, 1e-12);
      EXPECT_NEAR(out.obs(i, 0), v[0], 1e-12);
      EXPECT_NEAR(out.obs(i, 4), a[0], 1e-12);
    }
  }
}

TEST(Pool, ShapesAndCapabilities) {
  auto pm = ue::EnvPool::materialize(ue::pointmass_task(), 4, "pointmass", 1);
  EXPECT_EQ(pm.obs_dim(), 6);
  EXPECT_EQ(pm.critic_obs_dim(), 9);
  EXPECT_TRUE(pm.capabilities().supports_reset(ue::kMassDelta));
  EXPECT_TRUE(pm.capabilities().supports_interval(ue::kPushDeltaV));
  EXPECT_FALSE(pm.capabilities().supports_reset(ue::kGravity));
  auto pd = ue::EnvPool::materialize(ue::pendulum_task(), 4, "pendulum", 1);
  EXPECT_EQ(pd.obs_dim(), 5);
  EXPECT_EQ(pd.critic_obs_dim(), 6);
  EXPECT_FALSE(pd.capabilities().supports_reset(ue::kComOffset));
  EXPECT_FALSE(pd.capabilities().supports_interval(ue::kPushDeltaV));
  EXPECT_THROW(ue::EnvPool::materialize(ue::pointmass_task(), 4, "pendulum", 1),
               std::invalid_argument);
  EXPECT_THROW(ue::EnvPool::materialize(ue::pointmass_task(), 4, "walker", 1), std::exception);
}

TEST(Pool, IdenticalSeedsAreBitwiseDeterministic) {
  auto task = ue::pointmass_task();
  task.dr.randomize_base_mass = true;
  task.dr.push_enabled = true;
  task.dr.push_interval_steps = 7;
  auto a = ue::EnvPool::materialize(task, 16, "pointmass", 9);
  auto b = ue::EnvPool::materialize(task, 16, "pointmass", 9);
  CounterRng rng(2, 0, RngPurpose::eval);
  for (int t = 0; t < 200; ++t) {
    const MatD act = random_actions(16, 2, rng, 3);
    const auto& sa = a.step(act);
    const auto& sb = b.step(act);
    ASSERT_EQ(sa.obs, sb.obs);
    ASSERT_EQ(sa.reward, sb.reward);
  }
}

TEST(Pool, TruncatesAtEpisodeLength) {
  auto task = ue::pointmass_task();
  task.episode_length_s = 0.1;  // 5 control steps
  auto pool = ue::EnvPool::materialize(task, 2, "pointmass", 1);
  const MatD zero = MatD::Zero(2, 2);
  for (int t = 1; t <= 5; ++t) {
    const auto& s = pool.step(zero);
    for (int i = 0; i < 2; ++i) {
      EXPECT_EQ(s.truncated[i], t == 5 ? 1 : 0);
      EXPECT_EQ(s.terminated[i], 0);
      EXPECT_EQ(s.episode_step[i], t);
    }
  }
  EXPECT_EQ(pool.episode_steps()[0], 0);
}

TEST(Pool, TerminatesOnExcessSpeed) {
  auto task = ue::pointmass_task();
  task.obs_noise_scale = 0;
  task.termination_speed_max = 0.3;
  auto pool = ue::EnvPool::materialize(task, 2, "pointmass", 1);
  MatD act(2, 2);
  act << 1, 0, 0, 0;
  bool ended = false;
  for (int t = 0; t < 20 && !ended; ++t) {
    const auto& s = pool.step(act);
    EXPECT_EQ(s.terminated[1], 0);
    if (s.terminated[0]) {
      ended = true;
      EXPECT_GT(std::abs(s.final_obs(0, 0)), 0.3);  // pre-reset velocity
      EXPECT_EQ(s.obs(0, 0), 0.0);                  // fresh state
    }
  }
  EXPECT_TRUE(ended);
}

TEST(SparseReset, UntouchedEnvsAreBitwiseUnchanged) {
  auto task = ue::pointmass_task();
  task.dr.randomize_base_mass = true;
  task.dr.random_com = true;
  auto a = ue::EnvPool::materialize(task, 8, "pointmass", 3);
  auto b = ue::EnvPool::materialize(task, 8, "pointmass", 3);
  CounterRng rng(4, 0, RngPurpose::eval);
  for (int t = 0; t < 30; ++t) {
    const MatD act = random_actions(8, 2, rng);
    a.step(act);
    b.step(act);
  }
  const std::vector<int> ids{2, 5};
  CounterRng prng(7, 0, RngPurpose::reset_payload);
  const auto payload = ue::sample_reset_payload(task.dr, a.capabilities(), ids, prng);
  const MatD fresh = a.reset(ids, &payload);
  EXPECT_EQ(fresh.rows(), 2);
  for (int i = 0; i < 8; ++i) {
    const bool touched = i == 2 || i == 5;
    const bool same = row(a.positions(), i, 2) == row(b.positions(), i, 2) &&
                      row(a.velocities(), i, 2) == row(b.velocities(), i, 2) &&
                      row(a.commands(), i, 2) == row(b.commands(), i, 2) &&
                      row(a.prev_actions(), i, 2) == row(b.prev_actions(), i, 2) &&
                      a.bodies()[i].mass == b.bodies()[i].mass &&
                      a.episode_steps()[i] == b.episode_steps()[i] &&
                      a.observations().row(i) == b.observations().row(i);
    EXPECT_EQ(same, !touched) << "env " << i;
  }
  EXPECT_EQ(a.episode_steps()[2], 0);
  EXPECT_EQ(a.bodies()[5].mass, 1.0 + payload.fields.at(ue::kMassDelta)(1, 0));

  // Later trajectories of untouched envs stay identical too.
  for (int t = 0; t < 50; ++t) {
    const MatD act = random_actions(8, 2, rng);
    const auto& sa = a.step(act);
    const auto& sb = b.step(act);
    for (int i : {0, 1, 3, 4, 6, 7}) ASSERT_EQ(sa.obs.row(i), sb.obs.row(i));
  }
}

TEST(SparseReset, RejectsBadIds) {
  auto pool = ue::EnvPool::materialize(ue::pointmass_task(), 4, "pointmass", 1);
  EXPECT_THROW(pool.reset({4}), std::out_of_range);
  EXPECT_THROW(pool.reset({1, 1}), std::invalid_argument);
  EXPECT_THROW(pool.reset({-1}), std::out_of_range);
}

TEST(CapabilityFiltering, UnsupportedFieldsAreDroppedAndLogged) {
  auto task = ue::pendulum_task();
  task.dr.randomize_base_mass = true;
  task.dr.random_com = true;
  task.dr.randomize_gravity = true;
  task.dr.push_enabled = true;
  task.dr.push_interval_steps = 5;
  auto pool = ue::EnvPool::materialize(task, 6, "pendulum", 2);
  std::vector<std::string> at_start;
  for (const auto& s : pool.skip_log()) {
    EXPECT_EQ(s.global_step, 0);
    EXPECT_EQ(s.env_count, 6u);
    at_start.push_back(s.field);
  }
  std::sort(at_start.begin(), at_start.end());
  EXPECT_EQ(at_start, (std::vector<std::string>{ue::kComOffset, ue::kGravity}));
  for (int i = 0; i < 6; ++i) EXPECT_NE(pool.bodies()[i].mass, 1.0);  // mass applied

  const MatD zero = MatD::Zero(6, 1);
  for (int t = 0; t < 5; ++t) pool.step(zero);
  const auto& last = pool.skip_log().back();
  EXPECT_EQ(last.field, ue::kPushDeltaV);
  EXPECT_EQ(last.global_step, 5);
  EXPECT_EQ(last.env_count, 6u);
  for (auto s : pool.last_push_step()) EXPECT_EQ(s, -1);

  auto pm_task = ue::pointmass_task();
  pm_task.dr.randomize_gravity = true;
  auto pm = ue::EnvPool::materialize(pm_task, 3, "pointmass", 2);
  ASSERT_EQ(pm.skip_log().size(), 1u);
  EXPECT_EQ(pm.skip_log()[0].field, ue::kGravity);
}

TEST(Push, AppliedExactlyAtIntervalMultiples) {
  auto task = ue::pointmass_task();
  task.dr.push_enabled = true;
  EXPECT_EQ(task.dr.push_interval_steps, 625);
  task.episode_length_s = 100;  // no truncation in the window
  task.termination_speed_max = 1e9;
  task.obs_noise_scale = 0;
  auto pool = ue::EnvPool::materialize(task, 4, "pointmass", 6);
  auto twin_task = task;
  twin_task.dr.push_enabled = false;
  auto twin = ue::EnvPool::materialize(twin_task, 4, "pointmass", 6);
  const MatD zero = MatD::Zero(4, 2);
  std::vector<std::int64_t> pushes;
  for (int t = 1; t <= 1900; ++t) {
    const auto before = pool.last_push_step();
    pool.step(zero);
    twin.step(zero);
    if (pool.last_push_step() != before) {
      pushes.push_back(pool.global_step());
      for (auto s : pool.last_push_step()) EXPECT_EQ(s, pool.global_step());
    }
    if (t < 625) ASSERT_EQ(pool.velocities(), twin.velocities()) << t;
    if (t == 625) ASSERT_NE(pool.velocities(), twin.velocities());
  }
  EXPECT_EQ(pushes, (std::vector<std::int64_t>{625, 1250, 1875}));
  for (std::int64_t s : {1, 624, 626, 1249}) EXPECT_FALSE(ue::push_due(task.dr, s));
  EXPECT_TRUE(ue::push_due(task.dr, 1250));
  EXPECT_FALSE(ue::push_due(task.dr, 1251));
}

TEST(Push, PlanDrawsWithinBounds) {
  ue::DRConfig dr;
  dr.push_enabled = true;
  dr.push_interval_steps = 10;
  dr.push_max_delta_v = {0.5, 2.0};
  CounterRng rng(1, 0, RngPurpose::push);
  const auto plan = ue::build_interval_plan(dr, 20, {true, false, true}, rng);
  EXPECT_EQ(plan.env_ids, (std::vector<int>{0, 2}));
  EXPECT_LE(plan.delta_v.col(0).cwiseAbs().maxCoeff(), 0.5);
  EXPECT_LE(plan.delta_v.col(1).cwiseAbs().maxCoeff(), 2.0);
  EXPECT_TRUE(ue::build_interval_plan(dr, 21, {true}, rng).empty());
}

// Reset work is proportional to the number of ids, not the pool size.
TEST(SparseReset, CostScalesWithIdCount) {
  auto task = ue::pointmass_task();
  task.dr.randomize_base_mass = true;
  auto pool = ue::EnvPool::materialize(task, 8192, "pointmass", 1);
  auto time_reset = [&](int k) {
    std::vector<int> ids(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) ids[static_cast<std::size_t>(i)] = i * (8192 / k);
    double best = 1e18;
    for (int rep = 0; rep < 15; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      pool.reset(ids);
      const auto t1 = std::chrono::steady_clock::now();
      best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    }
    return best;
  };
  const double small = time_reset(64), large = time_reset(8192);
  EXPECT_GT(large / small, 8.0) << "small " << small << " large " << large;
}
