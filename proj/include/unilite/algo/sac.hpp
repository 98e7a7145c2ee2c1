#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "unilite/algo/config.hpp"
#include "unilite/algo/stats.hpp"
#include "unilite/core/error.hpp"
#include "unilite/core/rng.hpp"
#include "unilite/net/adam.hpp"
#include "unilite/net/gaussian.hpp"
#include "unilite/net/mlp.hpp"

namespace unilite::algo {

// The actor emits [mean | raw] per action dimension; log_std = lo + (hi-lo)
// * (tanh(raw) + 1) / 2.
inline constexpr double kSacLogStdMin = -5.0;
inline constexpr double kSacLogStdMax = 2.0;

template <class T>
struct SacNets {
  net::ModelParams<T> actor;
  net::ModelParams<T> q1, q2;
  net::ModelParams<T> q1_targ, q2_targ;
  T log_alpha = 0;

  int action_dim() const { return actor.arch.output_dim / 2; }
  T alpha() const { return std::exp(log_alpha); }
};

template <class T>
struct SacOpts {
  net::OptState<T> actor;
  net::OptState<T> critic;  // q1 and q2 together
  net::OptState<T> alpha;
};

template <class T>
SacNets<T> make_sac_nets(int obs_dim, int action_dim, const std::vector<int>& actor_hidden,
                         const std::vector<int>& critic_hidden, const SacConfig& cfg,
                         std::uint64_t seed) {
  SacNets<T> n;
  n.actor = net::init_params<T>({obs_dim, actor_hidden, 2 * action_dim},
                                splitmix64(seed ^ 1), 0.0, 0.01);
  n.q1 = net::init_params<T>({obs_dim + action_dim, critic_hidden, 1}, splitmix64(seed ^ 2));
  n.q2 = net::init_params<T>({obs_dim + action_dim, critic_hidden, 1}, splitmix64(seed ^ 3));
  n.q1_targ = n.q1;
  n.q2_targ = n.q2;
  n.log_alpha = static_cast<T>(std::log(cfg.alpha_init));
  return n;
}

template <class T>
SacOpts<T> make_sac_opts(const SacNets<T>& n, const SacConfig& cfg) {
  const T mgn = static_cast<T>(cfg.max_grad_norm);
  return {net::OptState<T>::zeros(n.actor.size(), static_cast<T>(cfg.actor_lr), mgn),
          net::OptState<T>::zeros(n.q1.size() + n.q2.size(), static_cast<T>(cfg.critic_lr),
                                  mgn),
          net::OptState<T>::zeros(1, static_cast<T>(cfg.alpha_lr))};
}

template <class T>
struct SacBatch {
  Mat<T> obs;
  Mat<T> action;
  Vec<T> reward;  // n-step return R_n
  Mat<T> next_obs;
  Vec<T> terminated;
  Vec<T> n_used;

  Eigen::Index size() const { return obs.rows(); }

  void validate() const {
    const auto n = size();
    if (action.rows() != n || reward.size() != n || next_obs.rows() != n ||
        terminated.size() != n || n_used.size() != n || next_obs.cols() != obs.cols()) {
      throw std::invalid_argument("sac batch shapes are inconsistent");
    }
  }

  SacBatch slice(Eigen::Index start, Eigen::Index len) const {
    return {obs.middleRows(start, len),       action.middleRows(start, len),
            reward.segment(start, len),       next_obs.middleRows(start, len),
            terminated.segment(start, len),   n_used.segment(start, len)};
  }
};

template <class T>
Mat<T> hcat(const Mat<T>& a, const Mat<T>& b) {
  Mat<T> out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

template <class T>
struct SacHead {
  Mat<T> mean;
  Mat<T> log_std;
  Mat<T> raw;
};

template <class T>
SacHead<T> sac_head(const Mat<T>& out) {
  const Eigen::Index a = out.cols() / 2;
  SacHead<T> h{out.leftCols(a), Mat<T>(out.rows(), a), out.rightCols(a)};
  const T lo = static_cast<T>(kSacLogStdMin), hi = static_cast<T>(kSacLogStdMax);
  h.log_std = h.raw.unaryExpr(
      [&](T r) { return lo + T(0.5) * (hi - lo) * (std::tanh(r) + T(1)); });
  return h;
}

template <class T>
Mat<T> standard_normal(Eigen::Index rows, Eigen::Index cols, CounterRng& rng) {
  Mat<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.normal());
  return m;
}

// Squashed-Gaussian policy draw for given standard-normal noise.
template <class T>
net::SquashedDraw<T> sac_policy(const net::ModelParams<T>& actor, const Mat<T>& obs,
                                const Mat<T>& noise) {
  const auto h = sac_head<T>(net::forward(actor, obs));
  return net::squashed_sample(h.mean, h.log_std, noise);
}

template <class T>
Mat<T> sac_deterministic_action(const net::ModelParams<T>& actor, const Mat<T>& obs) {
  const Mat<T> out = net::forward(actor, obs);
  return out.leftCols(out.cols() / 2).array().tanh().matrix();
}

// y = R_n + gamma^n_used (1 - term) (min Q_targ(s', a') - alpha log pi(a'|s')),
// a' drawn from the current actor with `next_noise`.
template <class T>
Vec<T> sac_critic_target(const SacNets<T>& n, const SacBatch<T>& b, T gamma,
                         const Mat<T>& next_noise) {
  const auto next = sac_policy(n.actor, b.next_obs, next_noise);
  const Mat<T> sa = hcat(b.next_obs, next.actions);
  const Mat<T> t1 = net::forward(n.q1_targ, sa);
  const Mat<T> t2 = net::forward(n.q2_targ, sa);
  const T alpha = n.alpha();
  Vec<T> y(b.size());
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    const T soft = std::min(t1(i, 0), t2(i, 0)) - alpha * next.log_prob(i);
    y(i) = b.reward(i) +
           std::pow(gamma, b.n_used(i)) * (T(1) - b.terminated(i)) * soft;
  }
  return y;
}

template <class T>
struct SacCriticLoss {
  T loss = 0;
  net::ModelParams<T> q1_grad, q2_grad;
};

// Sum of the two Q regressions onto a fixed target y.
template <class T>
SacCriticLoss<T> sac_critic_loss(const SacNets<T>& n, const SacBatch<T>& b,
                                 const Vec<T>& y, bool with_grad = true) {
  const Mat<T> sa = hcat(b.obs, b.action);
  net::ForwardCache<T> c1, c2;
  const Mat<T> q1 = net::forward(n.q1, sa, with_grad ? &c1 : nullptr);
  const Mat<T> q2 = net::forward(n.q2, sa, with_grad ? &c2 : nullptr);
  const T inv = T(1) / static_cast<T>(b.size());
  const Vec<T> e1 = q1.col(0) - y, e2 = q2.col(0) - y;
  SacCriticLoss<T> out;
  out.loss = (e1.squaredNorm() + e2.squaredNorm()) * inv;
  if (!std::isfinite(out.loss)) throw DivergenceError("non-finite SAC critic loss");
  if (!with_grad) return out;
  out.q1_grad = net::backward(n.q1, c1, Mat<T>(T(2) * inv * e1));
  out.q2_grad = net::backward(n.q2, c2, Mat<T>(T(2) * inv * e2));
  return out;
}

template <class T>
struct SacActorLoss {
  T loss = 0;
  T mean_log_prob = 0;
  net::ModelParams<T> actor_grad;
};

// mean(alpha log pi(a|s) - min(Q1, Q2)(s, a)), a reparameterized from `noise`.
// alpha is treated as a constant.
template <class T>
SacActorLoss<T> sac_actor_loss(const SacNets<T>& n, const Mat<T>& obs, const Mat<T>& noise,
                               bool with_grad = true) {
  net::ForwardCache<T> ac;
  const Mat<T> out = net::forward(n.actor, obs, with_grad ? &ac : nullptr);
  const auto h = sac_head<T>(out);
  const auto draw = net::squashed_sample(h.mean, h.log_std, noise);
  const Mat<T> sa = hcat(obs, draw.actions);
  net::ForwardCache<T> c1, c2;
  const Mat<T> q1 = net::forward(n.q1, sa, &c1);
  const Mat<T> q2 = net::forward(n.q2, sa, &c2);
  const T alpha = n.alpha();
  const Eigen::Index rows = obs.rows(), a = h.mean.cols();
  const T inv = T(1) / static_cast<T>(rows);

  SacActorLoss<T> res;
  Mat<T> up1 = Mat<T>::Zero(rows, 1), up2 = Mat<T>::Zero(rows, 1);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const bool first = q1(i, 0) <= q2(i, 0);
    res.loss += (alpha * draw.log_prob(i) - (first ? q1(i, 0) : q2(i, 0))) * inv;
    (first ? up1 : up2)(i, 0) = T(1);
  }
  res.mean_log_prob = draw.log_prob.mean();
  if (!std::isfinite(res.loss)) throw DivergenceError("non-finite SAC actor loss");
  if (!with_grad) return res;

  // dQmin/da through whichever critic is the minimum on each row.
  Mat<T> g1, g2;
  net::backward(n.q1, c1, up1, &g1);
  net::backward(n.q2, c2, up2, &g2);
  const Mat<T> dq_da = (g1 + g2).rightCols(a);

  const T half_range = static_cast<T>(0.5 * (kSacLogStdMax - kSacLogStdMin));
  Mat<T> dout(rows, 2 * a);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index k = 0; k < a; ++k) {
      const T th = draw.actions(i, k);
      const T du = alpha * T(2) * th - dq_da(i, k) * (T(1) - th * th);
      const T dls = -alpha + du * std::exp(h.log_std(i, k)) * noise(i, k);
      const T tr = std::tanh(h.raw(i, k));
      dout(i, k) = du * inv;
      dout(i, a + k) = dls * half_range * (T(1) - tr * tr) * inv;
    }
  }
  res.actor_grad = net::backward(n.actor, ac, dout);
  return res;
}

template <class T>
struct SacAlphaLoss {
  T loss = 0;
  T grad = 0;  // d loss / d log_alpha
};

// -log_alpha (mean log pi + target_entropy), log pi held fixed.
template <class T>
SacAlphaLoss<T> sac_alpha_loss(T log_alpha, T mean_log_prob, T target_entropy) {
  const T gap = mean_log_prob + target_entropy;
  return {-log_alpha * gap, -gap};
}

// target <- (1 - tau) target + tau online
template <class T>
void soft_update(net::ModelParams<T>& target, const net::ModelParams<T>& online, T tau) {
  if (!target.congruent(online)) throw std::invalid_argument("soft_update: shape mismatch");
  target.assign((T(1) - tau) * target.flat() + tau * online.flat());
}

struct SacProgress {
  std::int64_t critic_updates = 0;
};

// One critic step (plus actor and temperature steps every policy_frequency
// critic steps) and the target soft update.
template <class T>
UpdateStats sac_update(SacNets<T>& n, SacOpts<T>& opts, const SacBatch<T>& b,
                       const SacConfig& cfg, CounterRng& rng, SacProgress& progress) {
  b.validate();
  if (b.size() < 2) throw std::invalid_argument("sac_update: batch smaller than 2");
  const int a = n.action_dim();
  UpdateStats stats;

  const Vec<T> y = sac_critic_target(n, b, static_cast<T>(cfg.gamma),
                                     standard_normal<T>(b.size(), a, rng));
  const auto cl = sac_critic_loss(n, b, y);
  net::adam_step<T>({&n.q1, &n.q2}, {&cl.q1_grad, &cl.q2_grad}, opts.critic);
  stats.q_loss = cl.loss;
  ++progress.critic_updates;

  if (progress.critic_updates % cfg.policy_frequency == 0) {
    const auto al = sac_actor_loss(n, b.obs, standard_normal<T>(b.size(), a, rng));
    net::adam_step<T>({&n.actor}, {&al.actor_grad}, opts.actor);
    stats.actor_loss = al.loss;

    const auto tl = sac_alpha_loss(n.log_alpha, al.mean_log_prob,
                                   static_cast<T>(-cfg.target_entropy_ratio * a));
    stats.alpha_loss = tl.loss;
    Vec<T> la(1), g(1);
    la << n.log_alpha;
    g << tl.grad;
    net::adam_step<T>(la, g, opts.alpha);
    n.log_alpha = la(0);
  }
  const T tau = static_cast<T>(cfg.tau);
  soft_update(n.q1_targ, n.q1, tau);
  soft_update(n.q2_targ, n.q2, tau);
  stats.alpha = n.alpha();
  return stats;
}

}  // namespace unilite::algo
