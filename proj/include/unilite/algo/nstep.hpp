#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>
#include <vector>

#include "unilite/core/tensor.hpp"

namespace unilite::algo {

// Replay rows produced by the packer, one per completed window.
template <class T>
struct TransitionRows {
  Mat<T> obs;
  Mat<T> action;
  Vec<T> reward;
  Mat<T> next_obs;
  Vec<T> terminated;
  Vec<T> n_used;

  Eigen::Index size() const { return obs.rows(); }
};

// Per-env sliding windows. A row for step t carries
//   R = sum_{k < n_used} gamma^k r_{t+k}
// where the window is cut at the first terminated/truncated step. next_obs is
// the observation after the window's last step (the pre-reset one at episode
// ends) and `terminated` is set only if the window ended in a termination.
template <class T>
class NStepPacker {
 public:
  NStepPacker(int num_envs, int obs_dim, int action_dim, int n, T gamma)
      : envs_(num_envs), obs_dim_(obs_dim), action_dim_(action_dim), n_(n),
        gamma_(gamma), pending_(static_cast<std::size_t>(num_envs)) {
    if (n < 1) throw std::invalid_argument("n_step must be >= 1");
    if (num_envs < 1 || obs_dim < 1 || action_dim < 1) {
      throw std::invalid_argument("n-step packer dimensions must be positive");
    }
  }

  int n() const { return n_; }

  // One vectorized env step. `next_obs` rows hold the pre-reset observation
  // for envs that ended this step.
  TransitionRows<T> push(const Mat<T>& obs, const Mat<T>& action, const Vec<T>& reward,
                         const Mat<T>& next_obs, const Vec<T>& terminated,
                         const Vec<T>& truncated) {
    if (obs.rows() != envs_ || action.rows() != envs_ || reward.size() != envs_ ||
        next_obs.rows() != envs_ || terminated.size() != envs_ ||
        truncated.size() != envs_ || obs.cols() != obs_dim_ ||
        next_obs.cols() != obs_dim_ || action.cols() != action_dim_) {
      throw std::invalid_argument("n-step packer: step shape mismatch");
    }
    std::vector<Row> out;
    for (int b = 0; b < envs_; ++b) {
      auto& q = pending_[static_cast<std::size_t>(b)];
      q.push_back({obs.row(b), action.row(b), reward(b)});
      const bool term = terminated(b) != T(0);
      if (term || truncated(b) != T(0)) {
        while (!q.empty()) {
          out.push_back(emit(q, q.size(), next_obs.row(b), term));
          q.pop_front();
        }
      } else if (static_cast<int>(q.size()) == n_) {
        out.push_back(emit(q, q.size(), next_obs.row(b), false));
        q.pop_front();
      }
    }
    TransitionRows<T> rows;
    const auto m = static_cast<Eigen::Index>(out.size());
    rows.obs.resize(m, obs_dim_);
    rows.action.resize(m, action_dim_);
    rows.reward.resize(m);
    rows.next_obs.resize(m, obs_dim_);
    rows.terminated.resize(m);
    rows.n_used.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto& r = out[static_cast<std::size_t>(i)];
      rows.obs.row(i) = r.obs;
      rows.action.row(i) = r.action;
      rows.reward(i) = r.reward;
      rows.next_obs.row(i) = r.next_obs;
      rows.terminated(i) = r.terminated;
      rows.n_used(i) = r.n_used;
    }
    return rows;
  }

 private:
  struct Pending {
    Vec<T> obs;
    Vec<T> action;
    T reward;
  };
  struct Row {
    Vec<T> obs, action;
    T reward;
    Vec<T> next_obs;
    T terminated, n_used;
  };

  Row emit(const std::deque<Pending>& q, std::size_t len,
           const Eigen::Ref<const Vec<T>>& next_obs, bool term) const {
    T ret = 0, disc = 1;
    for (std::size_t k = 0; k < len; ++k) {
      ret += disc * q[k].reward;
      disc *= gamma_;
    }
    return {q.front().obs, q.front().action, ret, next_obs, term ? T(1) : T(0),
            static_cast<T>(len)};
  }

  int envs_, obs_dim_, action_dim_, n_;
  T gamma_;
  std::vector<std::deque<Pending>> pending_;
};

// Reward scaling by a running estimate of the discounted-return spread:
//   G <- gamma G (1 - done) + r            (per env)
//   scale = max(sqrt(var(G) + eps), max|G| / g_max)
// so normalized returns stay within about g_max in magnitude.
class RewardNormalizer {
 public:
  RewardNormalizer(int num_envs, double gamma, double g_max)
      : gamma_(gamma), g_max_(g_max), ret_(static_cast<std::size_t>(num_envs), 0.0) {
    if (g_max <= 0) throw std::invalid_argument("normalized_g_max must be > 0");
  }

  // Updates the statistics with one vectorized step and returns the scaled
  // rewards.
  template <class T>
  Vec<T> update_apply(const Vec<T>& reward, const Vec<T>& done) {
    if (reward.size() != static_cast<Eigen::Index>(ret_.size()) ||
        done.size() != reward.size()) {
      throw std::invalid_argument("reward normalizer: shape mismatch");
    }
    for (std::size_t b = 0; b < ret_.size(); ++b) {
      const auto i = static_cast<Eigen::Index>(b);
      ret_[b] = gamma_ * ret_[b] + static_cast<double>(reward(i));
      ++count_;
      const double delta = ret_[b] - mean_;
      mean_ += delta / count_;
      m2_ += delta * (ret_[b] - mean_);
      max_abs_ = std::max(max_abs_, std::abs(ret_[b]));
      if (done(i) != T(0)) ret_[b] = 0.0;
    }
    const double s = scale();
    return (reward.template cast<double>() / s).template cast<T>();
  }

  double scale() const {
    const double var = count_ > 0 ? m2_ / count_ : 0.0;
    return std::max({std::sqrt(var + 1e-8), max_abs_ / g_max_, 1e-8});
  }

  double max_abs_return() const { return max_abs_; }

 private:
  double gamma_, g_max_;
  std::vector<double> ret_;
  double count_ = 0, mean_ = 0, m2_ = 0, max_abs_ = 0;
};

}  // namespace unilite::algo
