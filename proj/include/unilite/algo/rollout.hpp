#pragma once

#include <cstdint>
#include <stdexcept>

#include "unilite/core/tensor.hpp"

namespace unilite::algo {

// Fixed-horizon on-policy data for T steps of B envs. Per-sample matrices are
// time-major: row t*B + b.
template <class T>
struct RolloutSegment {
  int steps = 0;  // T
  int envs = 0;   // B
  Mat<T> obs;
  Mat<T> critic_obs;
  Mat<T> actions;
  Grid<T> behavior_log_prob;
  Grid<T> rewards;
  Grid<T> terminated;  // 0/1
  Grid<T> truncated;   // 0/1, never set together with terminated
  Grid<T> values;
  // Critic value of the pre-reset observation where truncated, else 0.
  Grid<T> truncation_values;
  Vec<T> bootstrap_value;  // value of the observation after the last step
  // Optional inputs that let a learner re-evaluate the two bootstrap terms
  // under newer critic weights: critic obs after the last step (B rows) and
  // pre-reset critic obs on truncated steps (T*B rows, zero elsewhere).
  Mat<T> bootstrap_critic_obs;
  Mat<T> truncation_critic_obs;
  std::uint64_t behavior_version = 0;
  std::uint64_t sequence = 0;

  Eigen::Index samples() const { return static_cast<Eigen::Index>(steps) * envs; }

  void validate() const {
    const auto n = samples();
    auto grid_ok = [&](const Grid<T>& g) {
      return g.rows() == steps && g.cols() == envs;
    };
    if (obs.rows() != n || critic_obs.rows() != n || actions.rows() != n ||
        !grid_ok(behavior_log_prob) || !grid_ok(rewards) ||
        !grid_ok(terminated) || !grid_ok(truncated) || !grid_ok(values) ||
        !grid_ok(truncation_values) || bootstrap_value.size() != envs) {
      throw std::invalid_argument("rollout segment shapes are inconsistent");
    }
    if ((bootstrap_critic_obs.size() && bootstrap_critic_obs.rows() != envs) ||
        (truncation_critic_obs.size() && truncation_critic_obs.rows() != n)) {
      throw std::invalid_argument("rollout segment bootstrap obs shapes are inconsistent");
    }
    if (!behavior_log_prob.allFinite()) {
      throw std::invalid_argument("behavior_log_prob is not finite");
    }
  }
};

}  // namespace unilite::algo
