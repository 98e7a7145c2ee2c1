#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "unilite/algo/config.hpp"
#include "unilite/algo/estimators.hpp"
#include "unilite/algo/rollout.hpp"
#include "unilite/algo/stats.hpp"
#include "unilite/core/error.hpp"
#include "unilite/core/rng.hpp"
#include "unilite/net/adam.hpp"
#include "unilite/net/gaussian.hpp"
#include "unilite/net/mlp.hpp"

namespace unilite::algo {

// Gaussian actor (state-independent log-std) and scalar critic.
template <class T>
struct ActorCritic {
  net::ModelParams<T> actor;
  net::ModelParams<T> critic;

  std::vector<net::ModelParams<T>*> parts() { return {&actor, &critic}; }
  std::vector<const net::ModelParams<T>*> parts() const { return {&actor, &critic}; }
};

// Flat per-sample training data.
template <class T>
struct PpoBatch {
  Mat<T> obs;
  Mat<T> critic_obs;
  Mat<T> actions;
  Vec<T> old_log_prob;
  Vec<T> old_values;
  Vec<T> advantages;
  Vec<T> returns;

  Eigen::Index size() const { return obs.rows(); }

  PpoBatch select(const std::vector<Eigen::Index>& idx) const {
    const auto n = static_cast<Eigen::Index>(idx.size());
    PpoBatch out;
    out.obs.resize(n, obs.cols());
    out.critic_obs.resize(n, critic_obs.cols());
    out.actions.resize(n, actions.cols());
    out.old_log_prob.resize(n);
    out.old_values.resize(n);
    out.advantages.resize(n);
    out.returns.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index j = idx[static_cast<std::size_t>(i)];
      out.obs.row(i) = obs.row(j);
      out.critic_obs.row(i) = critic_obs.row(j);
      out.actions.row(i) = actions.row(j);
      out.old_log_prob(i) = old_log_prob(j);
      out.old_values(i) = old_values(j);
      out.advantages(i) = advantages(j);
      out.returns(i) = returns(j);
    }
    return out;
  }

  void validate() const {
    const auto n = size();
    if (critic_obs.rows() != n || actions.rows() != n || old_log_prob.size() != n ||
        old_values.size() != n || advantages.size() != n || returns.size() != n) {
      throw std::invalid_argument("ppo batch shapes are inconsistent");
    }
  }
};

template <class T>
Vec<T> flatten(const Grid<T>& g) {
  return Eigen::Map<const Vec<T>>(g.data(), g.size());
}

// Segment plus GAE -> flat batch (rows t*B + b).
template <class T>
PpoBatch<T> prepare_ppo_batch(const RolloutSegment<T>& seg, const PpoConfig& cfg) {
  seg.validate();
  const auto est = gae(seg.rewards, seg.values, seg.terminated, seg.truncated,
                       seg.bootstrap_value, static_cast<T>(cfg.gamma),
                       static_cast<T>(cfg.lam), &seg.truncation_values);
  PpoBatch<T> b;
  b.obs = seg.obs;
  b.critic_obs = seg.critic_obs;
  b.actions = seg.actions;
  b.old_log_prob = flatten(seg.behavior_log_prob);
  b.old_values = flatten(seg.values);
  b.advantages = flatten(est.advantages);
  b.returns = flatten(est.returns);
  return b;
}

// Zero mean, unit (population) std.
template <class T>
Vec<T> normalize_advantages(const Vec<T>& a) {
  if (a.size() == 0) return a;
  const T mean = a.mean();
  const T var = (a.array() - mean).square().mean();
  return ((a.array() - mean) / (std::sqrt(var) + T(1e-8))).matrix();
}

template <class T>
struct PpoLoss {
  T total = 0;
  T policy = 0;
  T value = 0;
  T entropy = 0;
  T kl = 0;
  T clip_fraction = 0;
  net::ModelParams<T> actor_grad;
  net::ModelParams<T> critic_grad;
};

// Clipped surrogate + (optionally clipped) value loss - entropy bonus, with
// exact gradients:
//   policy = -mean(min(r A, clip(r, 1-eps, 1+eps) A)),  r = exp(logp - old)
//   value  = mean(max((v-R)^2, (old_v + clip(v-old_v, -eps, eps) - R)^2))
template <class T>
PpoLoss<T> ppo_loss(const ActorCritic<T>& ac, const PpoBatch<T>& mb,
                    const PpoConfig& cfg, bool with_grad = true) {
  mb.validate();
  const Eigen::Index n = mb.size();
  if (n == 0) throw std::invalid_argument("ppo_loss: empty batch");
  const T eps = static_cast<T>(cfg.clip_param);
  const T inv_n = T(1) / static_cast<T>(n);

  net::ForwardCache<T> acache, ccache;
  const Mat<T> mean = net::forward(ac.actor, mb.obs, with_grad ? &acache : nullptr);
  const Mat<T> vout = net::forward(ac.critic, mb.critic_obs, with_grad ? &ccache : nullptr);
  const Vec<T> logp = net::gaussian_log_prob(mean, ac.actor.log_std, mb.actions);

  PpoLoss<T> out;
  Vec<T> dlogp(n);
  Mat<T> dv(n, 1);
  T clipped = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const T ratio = std::exp(logp(i) - mb.old_log_prob(i));
    const T adv = mb.advantages(i);
    const T s1 = ratio * adv;
    const T s2 = std::clamp(ratio, T(1) - eps, T(1) + eps) * adv;
    out.policy -= std::min(s1, s2) * inv_n;
    dlogp(i) = s1 <= s2 ? -adv * ratio * inv_n : T(0);
    if (std::abs(ratio - T(1)) > eps) clipped += T(1);
    out.kl += (mb.old_log_prob(i) - logp(i)) * inv_n;

    const T v = vout(i, 0);
    const T err = v - mb.returns(i);
    T l = err * err;
    T grad = T(2) * err * inv_n;
    if (cfg.use_clipped_value_loss) {
      const T vc = mb.old_values(i) + std::clamp(v - mb.old_values(i), -eps, eps);
      const T lc = (vc - mb.returns(i)) * (vc - mb.returns(i));
      if (lc > l) {
        l = lc;
        grad = T(0);
      }
    }
    out.value += l * inv_n;
    dv(i, 0) = static_cast<T>(cfg.value_loss_coef) * grad;
  }
  out.clip_fraction = clipped * inv_n;
  out.entropy = net::gaussian_entropy(ac.actor.log_std);
  out.total = out.policy + static_cast<T>(cfg.value_loss_coef) * out.value -
              static_cast<T>(cfg.entropy_coef) * out.entropy;
  if (!std::isfinite(out.total)) {
    throw DivergenceError("non-finite PPO loss");
  }
  if (!with_grad) return out;

  Mat<T> dmean;
  Vec<T> dlog_std;
  net::gaussian_log_prob_grad(mean, ac.actor.log_std, mb.actions, dlogp, dmean,
                              dlog_std);
  out.actor_grad = net::backward(ac.actor, acache, dmean);
  out.actor_grad.log_std =
      dlog_std.array() - static_cast<T>(cfg.entropy_coef);
  out.critic_grad = net::backward(ac.critic, ccache, dv);
  return out;
}

// Dead-band rule, evaluated every `adaptive_lr_update_interval` updates.
inline double adaptive_lr_step(double lr, double measured_kl, const PpoConfig& cfg,
                               std::int64_t update_index) {
  if (cfg.schedule != LrSchedule::adaptive) return lr;
  if (update_index % cfg.adaptive_lr_update_interval != 0) return lr;
  if (measured_kl > cfg.desired_kl / cfg.adaptive_kl_beta) {
    lr /= cfg.adaptive_lr_decay;
  } else if (measured_kl < cfg.desired_kl * cfg.adaptive_kl_beta) {
    lr *= cfg.adaptive_lr_growth;
  }
  return std::clamp(lr, 1e-6, 1e-2);
}

inline std::vector<Eigen::Index> permutation(Eigen::Index n, CounterRng& rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::swap(idx[i - 1], idx[rng.below(i)]);
  }
  return idx;
}

// Mutable learner-side bookkeeping carried across updates.
struct PpoProgress {
  std::int64_t epochs_done = 0;  // drives the adaptive-lr interval
};

// epochs x minibatches of clipped-PPO steps on one batch. Advantages are
// normalized over the whole batch first.
template <class T>
UpdateStats ppo_update(ActorCritic<T>& ac, net::OptState<T>& opt, PpoBatch<T> batch,
                       const PpoConfig& cfg, CounterRng& rng, PpoProgress& progress) {
  batch.validate();
  const Eigen::Index n = batch.size();
  if (n == 0 || n % cfg.minibatches != 0) {
    throw std::invalid_argument("ppo_update: minibatch count must divide batch size " +
                                std::to_string(n));
  }
  batch.advantages = normalize_advantages(batch.advantages);
  const Eigen::Index mb_size = n / cfg.minibatches;

  UpdateStats stats;
  double policy = 0, value = 0, entropy = 0, clipfrac = 0, kl = 0;
  int count = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = permutation(n, rng);
    T epoch_kl = 0;
    for (int m = 0; m < cfg.minibatches; ++m) {
      std::vector<Eigen::Index> idx(order.begin() + m * mb_size,
                                    order.begin() + (m + 1) * mb_size);
      const auto loss = ppo_loss(ac, batch.select(idx), cfg);
      net::adam_step<T>(ac.parts(), {&loss.actor_grad, &loss.critic_grad}, opt);
      policy += loss.policy;
      value += loss.value;
      entropy += loss.entropy;
      clipfrac += loss.clip_fraction;
      ++count;
      epoch_kl = loss.kl;
    }
    kl += epoch_kl;
    ++progress.epochs_done;
    opt.lr = static_cast<T>(adaptive_lr_step(opt.lr, epoch_kl, cfg, progress.epochs_done));
  }
  stats.policy_loss = policy / count;
  stats.value_loss = value / count;
  stats.entropy = entropy / count;
  stats.clip_fraction = clipfrac / count;
  stats.kl = kl / cfg.epochs;
  stats.lr = opt.lr;
  return stats;
}

// APPO: re-evaluate the segment under the current weights, form V-trace
// targets, then run the PPO machinery on (vs, pg advantages).
template <class T>
PpoBatch<T> prepare_appo_batch(const ActorCritic<T>& ac, const RolloutSegment<T>& seg,
                               const AppoConfig& cfg) {
  seg.validate();
  const Mat<T> mean = net::forward(ac.actor, seg.obs);
  const Vec<T> logp = net::gaussian_log_prob(mean, ac.actor.log_std, seg.actions);
  const Mat<T> v = net::forward(ac.critic, seg.critic_obs);

  const int steps = seg.steps, envs = seg.envs;
  auto to_grid = [&](const Vec<T>& flat) {
    return Grid<T>(Eigen::Map<const Grid<T>>(flat.data(), steps, envs));
  };
  const Grid<T> target_lp = to_grid(logp);
  const Grid<T> values = to_grid(Eigen::Map<const Vec<T>>(v.data(), v.rows()));

  Vec<T> bootstrap = seg.bootstrap_value;
  if (seg.bootstrap_critic_obs.size()) {
    const Mat<T> bv = net::forward(ac.critic, seg.bootstrap_critic_obs);
    bootstrap = Eigen::Map<const Vec<T>>(bv.data(), bv.rows());
  }
  Grid<T> trunc_values = seg.truncation_values;
  if (seg.truncation_critic_obs.size()) {
    const Mat<T> tv = net::forward(ac.critic, seg.truncation_critic_obs);
    const Grid<T> tg = to_grid(Eigen::Map<const Vec<T>>(tv.data(), tv.rows()));
    trunc_values = (seg.truncated != T(0)).select(tg, T(0));
  }

  const auto vt = vtrace(seg.behavior_log_prob, target_lp, seg.rewards, values,
                         seg.terminated, bootstrap, static_cast<T>(cfg.gamma),
                         static_cast<T>(cfg.vtrace_clip_rho),
                         static_cast<T>(cfg.vtrace_clip_c), &seg.truncated,
                         &trunc_values);
  PpoBatch<T> b;
  b.obs = seg.obs;
  b.critic_obs = seg.critic_obs;
  b.actions = seg.actions;
  b.old_log_prob = flatten(seg.behavior_log_prob);
  b.old_values = flatten(values);
  b.advantages = flatten(vt.pg_advantages);
  b.returns = flatten(vt.vs);
  return b;
}

template <class T>
UpdateStats appo_update(ActorCritic<T>& ac, net::OptState<T>& opt,
                        const RolloutSegment<T>& seg, const AppoConfig& cfg,
                        CounterRng& rng, PpoProgress& progress,
                        std::uint64_t learner_version) {
  auto stats = ppo_update(ac, opt, prepare_appo_batch(ac, seg, cfg), cfg, rng, progress);
  stats.staleness = static_cast<double>(learner_version) -
                    static_cast<double>(seg.behavior_version);
  return stats;
}

}  // namespace unilite::algo
