#pragma once

// Backprop vs central differences for the four training losses on random tiny
// networks.

#include <string>

#include "oracles.hpp"

namespace oracle {

namespace un = unilite::net;
namespace ua = unilite::algo;

template <class U>
ua::PpoBatch<U> cast_batch(const ua::PpoBatch<double>& b) {
  return {b.obs.cast<U>(),          b.critic_obs.cast<U>(), b.actions.cast<U>(),
          b.old_log_prob.cast<U>(), b.old_values.cast<U>(), b.advantages.cast<U>(),
          b.returns.cast<U>()};
}

template <class U>
ua::SacBatch<U> cast_batch(const ua::SacBatch<double>& b) {
  return {b.obs.cast<U>(),      b.action.cast<U>(),     b.reward.cast<U>(),
          b.next_obs.cast<U>(), b.terminated.cast<U>(), b.n_used.cast<U>()};
}

template <class U>
ua::SacNets<U> cast_nets(const ua::SacNets<double>& n) {
  ua::SacNets<U> o;
  o.actor = n.actor.cast<U>();
  o.q1 = n.q1.cast<U>();
  o.q2 = n.q2.cast<U>();
  o.q1_targ = n.q1_targ.cast<U>();
  o.q2_targ = n.q2_targ.cast<U>();
  o.log_alpha = static_cast<U>(n.log_alpha);
  return o;
}

struct TinyShape {
  int obs_dim, critic_obs_dim, action_dim;
  std::vector<int> hidden;
};

inline TinyShape random_shape(CounterRng& rng) {
  TinyShape s;
  s.obs_dim = 1 + static_cast<int>(rng.below(4));
  s.critic_obs_dim = s.obs_dim + static_cast<int>(rng.below(3));
  s.action_dim = 1 + static_cast<int>(rng.below(3));
  const int layers = 1 + static_cast<int>(rng.below(2));
  for (int i = 0; i < layers; ++i) s.hidden.push_back(2 + static_cast<int>(rng.below(4)));
  return s;
}

inline ua::ActorCritic<double> random_actor_critic(const TinyShape& s, CounterRng& rng) {
  return {random_net({s.obs_dim, s.hidden, s.action_dim}, rng, true),
          random_net({s.critic_obs_dim, s.hidden, 1}, rng, false)};
}

inline ua::PpoConfig gradcheck_ppo_config() {
  ua::PpoConfig cfg;
  cfg.clip_param = 0.2;
  cfg.entropy_coef = 0.01;
  cfg.value_loss_coef = 1.0;
  cfg.use_clipped_value_loss = true;
  return cfg;
}

// Checks ppo_loss on a fixed batch (also used for APPO batches).
inline GradCheck check_ppo_loss(const ua::ActorCritic<double>& ac,
                                const ua::PpoBatch<double>& batch, const ua::PpoConfig& cfg) {
  const auto loss = ua::ppo_loss(ac, batch, cfg);
  const Vec<double> analytic = concat<double>({&loss.actor_grad, &loss.critic_grad});
  ua::ActorCritic<LD> acl{ac.actor.cast<LD>(), ac.critic.cast<LD>()};
  const auto bl = cast_batch<LD>(batch);
  const Vec<LD> x0 = concat<LD>({&acl.actor, &acl.critic});
  return check_gradient(
      [&](const Vec<LD>& x) {
        auto net = acl;
        scatter<LD>(x, {&net.actor, &net.critic});
        return ua::ppo_loss(net, bl, cfg, false).total;
      },
      x0, analytic);
}

inline GradCheck ppo_case(std::uint64_t seed) {
  CounterRng rng(seed, 1, RngPurpose::eval);
  const auto s = random_shape(rng);
  const auto ac = random_actor_critic(s, rng);
  const int n = 4 + static_cast<int>(rng.below(8));
  ua::PpoBatch<double> b;
  b.obs = random_mat(n, s.obs_dim, rng, -1.5, 1.5);
  b.critic_obs = random_mat(n, s.critic_obs_dim, rng, -1.5, 1.5);
  b.actions = random_mat(n, s.action_dim, rng, -2, 2);
  const Vec<double> logp =
      un::gaussian_log_prob(un::forward(ac.actor, b.obs), ac.actor.log_std, b.actions);
  const Mat<double> v = un::forward(ac.critic, b.critic_obs);
  b.old_log_prob = logp + random_mat(n, 1, rng, -0.4, 0.4).col(0);
  b.old_values = v.col(0) + random_mat(n, 1, rng, -0.4, 0.4).col(0);
  b.advantages = random_mat(n, 1, rng, -2, 2).col(0);
  b.returns = random_mat(n, 1, rng, -2, 2).col(0);
  return check_ppo_loss(ac, b, gradcheck_ppo_config());
}

// APPO: V-trace targets from the current weights, then the surrogate with the
// targets held fixed.
inline GradCheck appo_case(std::uint64_t seed) {
  CounterRng rng(seed, 2, RngPurpose::eval);
  const auto s = random_shape(rng);
  const auto ac = random_actor_critic(s, rng);
  ua::RolloutSegment<double> seg;
  seg.steps = 2 + static_cast<int>(rng.below(4));
  seg.envs = 1 + static_cast<int>(rng.below(3));
  const int n = seg.steps * seg.envs;
  seg.obs = random_mat(n, s.obs_dim, rng, -1.5, 1.5);
  seg.critic_obs = random_mat(n, s.critic_obs_dim, rng, -1.5, 1.5);
  seg.actions = random_mat(n, s.action_dim, rng, -2, 2);
  const Vec<double> logp =
      un::gaussian_log_prob(un::forward(ac.actor, seg.obs), ac.actor.log_std, seg.actions);
  seg.behavior_log_prob = Grid<double>(seg.steps, seg.envs);
  for (int i = 0; i < n; ++i) seg.behavior_log_prob.data()[i] = logp(i) + rng.uniform(-0.4, 0.4);
  seg.rewards = random_mat(seg.steps, seg.envs, rng, -1, 1);
  seg.values = Grid<double>::Zero(seg.steps, seg.envs);
  seg.terminated = Grid<double>::Zero(seg.steps, seg.envs);
  seg.truncated = Grid<double>::Zero(seg.steps, seg.envs);
  seg.truncation_values = Grid<double>::Zero(seg.steps, seg.envs);
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    if (u < 0.15) seg.terminated.data()[i] = 1;
    else if (u < 0.25) seg.truncated.data()[i] = 1;
  }
  seg.bootstrap_value = Vec<double>::Zero(seg.envs);
  seg.bootstrap_critic_obs = random_mat(seg.envs, s.critic_obs_dim, rng, -1.5, 1.5);
  seg.truncation_critic_obs = random_mat(n, s.critic_obs_dim, rng, -1.5, 1.5);
  ua::AppoConfig cfg;
  static_cast<ua::PpoConfig&>(cfg) = gradcheck_ppo_config();
  cfg.gamma = 0.95;
  const auto batch = ua::prepare_appo_batch(ac, seg, cfg);
  return check_ppo_loss(ac, batch, cfg);
}

struct SacCase {
  ua::SacNets<double> nets;
  ua::SacBatch<double> batch;
  Mat<double> next_noise, noise;
  ua::SacConfig cfg;
};

inline SacCase random_sac_case(std::uint64_t seed, int stream) {
  CounterRng rng(seed, static_cast<std::uint64_t>(stream), RngPurpose::eval);
  const auto s = random_shape(rng);
  SacCase c;
  c.cfg.gamma = 0.97;
  c.cfg.target_entropy_ratio = rng.uniform(0, 1);
  c.nets = ua::make_sac_nets<double>(s.obs_dim, s.action_dim, s.hidden, s.hidden, c.cfg,
                                     rng.next_u64());
  const int a = s.action_dim;
  c.nets.actor = random_net({s.obs_dim, s.hidden, 2 * a}, rng, false);
  c.nets.q1 = random_net({s.obs_dim + a, s.hidden, 1}, rng, false);
  c.nets.q2 = random_net({s.obs_dim + a, s.hidden, 1}, rng, false);
  c.nets.q1_targ = random_net({s.obs_dim + a, s.hidden, 1}, rng, false);
  c.nets.q2_targ = random_net({s.obs_dim + a, s.hidden, 1}, rng, false);
  c.nets.log_alpha = rng.uniform(-3, 0);
  const int n = 4 + static_cast<int>(rng.below(8));
  c.batch.obs = random_mat(n, s.obs_dim, rng, -1.5, 1.5);
  c.batch.action = random_mat(n, a, rng, -0.95, 0.95);
  c.batch.reward = random_mat(n, 1, rng, -1, 1).col(0);
  c.batch.next_obs = random_mat(n, s.obs_dim, rng, -1.5, 1.5);
  c.batch.terminated = Vec<double>(n);
  c.batch.n_used = Vec<double>(n);
  for (int i = 0; i < n; ++i) {
    c.batch.terminated(i) = rng.uniform() < 0.2 ? 1 : 0;
    c.batch.n_used(i) = 1 + static_cast<double>(rng.below(3));
  }
  c.next_noise = ua::standard_normal<double>(n, a, rng);
  c.noise = ua::standard_normal<double>(n, a, rng);
  return c;
}

inline GradCheck sac_critic_case(std::uint64_t seed) {
  const auto c = random_sac_case(seed, 3);
  const Vec<double> y = ua::sac_critic_target(c.nets, c.batch, c.cfg.gamma, c.next_noise);
  const auto loss = ua::sac_critic_loss(c.nets, c.batch, y);
  const Vec<double> analytic = concat<double>({&loss.q1_grad, &loss.q2_grad});
  const auto nl = cast_nets<LD>(c.nets);
  const auto bl = cast_batch<LD>(c.batch);
  const Vec<LD> yl = y.cast<LD>();
  return check_gradient(
      [&](const Vec<LD>& x) {
        auto n = nl;
        scatter<LD>(x, {&n.q1, &n.q2});
        return ua::sac_critic_loss(n, bl, yl, false).loss;
      },
      concat<LD>({&nl.q1, &nl.q2}), analytic);
}

inline GradCheck sac_actor_case(std::uint64_t seed) {
  const auto c = random_sac_case(seed, 4);
  const auto loss = ua::sac_actor_loss(c.nets, c.batch.obs, c.noise);
  const auto nl = cast_nets<LD>(c.nets);
  const Mat<LD> obs = c.batch.obs.cast<LD>(), noise = c.noise.cast<LD>();
  auto actor = check_gradient(
      [&](const Vec<LD>& x) {
        auto n = nl;
        scatter<LD>(x, {&n.actor});
        return ua::sac_actor_loss(n, obs, noise, false).loss;
      },
      nl.actor.flat(), loss.actor_grad.flat());

  // Temperature: log pi held fixed at its current value.
  const double target = -c.cfg.target_entropy_ratio * c.nets.action_dim();
  const auto al = ua::sac_alpha_loss(c.nets.log_alpha, loss.mean_log_prob, target);
  Vec<LD> la(1);
  la << static_cast<LD>(c.nets.log_alpha);
  Vec<double> ga(1);
  ga << al.grad;
  const auto alpha = check_gradient(
      [&](const Vec<LD>& x) {
        return ua::sac_alpha_loss<LD>(x(0), static_cast<LD>(loss.mean_log_prob),
                                      static_cast<LD>(target))
            .loss;
      },
      la, ga);
  actor.max_rel_error = std::max(actor.max_rel_error, alpha.max_rel_error);
  actor.components += alpha.components;
  return actor;
}

struct GradSuite {
  double ppo = 0, appo = 0, sac_critic = 0, sac_actor = 0;
  std::size_t components = 0;
  double worst() const { return std::max({ppo, appo, sac_critic, sac_actor}); }
};

inline GradSuite run_gradient_suite(int nets, std::uint64_t seed = 7) {
  GradSuite s;
  for (int i = 0; i < nets; ++i) {
    const std::uint64_t k = seed * 1000003ull + static_cast<std::uint64_t>(i);
    for (auto [fn, slot] : {std::pair{&ppo_case, &s.ppo}, std::pair{&appo_case, &s.appo},
                            std::pair{&sac_critic_case, &s.sac_critic},
                            std::pair{&sac_actor_case, &s.sac_actor}}) {
      const auto r = fn(k);
      *slot = std::max(*slot, r.max_rel_error);
      s.components += r.components;
    }
  }
  return s;
}

}  // namespace oracle
