#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "unilite/core/tensor.hpp"

namespace unilite::algo {

namespace detail {

template <class T>
void check_grid(const Grid<T>& g, const Grid<T>& ref, const char* what) {
  if (g.rows() != ref.rows() || g.cols() != ref.cols()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
  }
}

}  // namespace detail

template <class T>
struct AdvantageEstimate {
  Grid<T> advantages;
  Grid<T> returns;
};

// Generalized advantage estimation over a T x B grid:
//   delta_t = r_t + gamma (1 - term_t) V_next - V_t
//   A_t     = delta_t + gamma lam (1 - done_t) A_{t+1}
// where V_next is the recorded final-observation value on truncated steps,
// `bootstrap` after the last step, and V_{t+1} otherwise.
template <class T>
AdvantageEstimate<T> gae(const Grid<T>& rewards, const Grid<T>& values,
                         const Grid<T>& terminated, const Grid<T>& truncated,
                         const Vec<T>& bootstrap, T gamma, T lam,
                         const Grid<T>* truncation_values = nullptr) {
  detail::check_grid(values, rewards, "gae values");
  detail::check_grid(terminated, rewards, "gae terminated");
  detail::check_grid(truncated, rewards, "gae truncated");
  if (truncation_values) {
    detail::check_grid(*truncation_values, rewards, "gae truncation_values");
  }
  if (bootstrap.size() != rewards.cols()) {
    throw std::invalid_argument("gae bootstrap: shape mismatch");
  }
  const Eigen::Index steps = rewards.rows(), envs = rewards.cols();
  AdvantageEstimate<T> out{Grid<T>(steps, envs), Grid<T>(steps, envs)};
  for (Eigen::Index b = 0; b < envs; ++b) {
    T next_adv = 0;
    for (Eigen::Index t = steps - 1; t >= 0; --t) {
      const bool trunc = truncated(t, b) != T(0);
      const T not_term = T(1) - terminated(t, b);
      const T not_done = trunc ? T(0) : not_term;
      T next_value = t + 1 == steps ? bootstrap(b) : values(t + 1, b);
      if (trunc) next_value = truncation_values ? (*truncation_values)(t, b) : T(0);
      const T delta = rewards(t, b) + gamma * not_term * next_value - values(t, b);
      next_adv = delta + gamma * lam * not_done * next_adv;
      out.advantages(t, b) = next_adv;
    }
  }
  out.returns = out.advantages + values;
  return out;
}

template <class T>
struct VtraceEstimate {
  Grid<T> vs;
  Grid<T> pg_advantages;
  Grid<T> rho;  // clipped importance weights
};

// V-trace targets (IMPALA recursion) with truncated importance weights
//   rho_t = min(rho_bar, pi/mu), c_t = min(c_bar, pi/mu)
//   delta_t = rho_t (r_t + gamma (1 - term_t) V_next - V_t)
//   v_t = V_t + delta_t + gamma (1 - done_t) c_t (v_{t+1} - V_{t+1})
//   pg_t = rho_t (r_t + gamma (1 - term_t) v_next - V_t)
// Truncated steps bootstrap from the final-observation value and cut the trace.
template <class T>
VtraceEstimate<T> vtrace(const Grid<T>& behavior_log_prob,
                         const Grid<T>& target_log_prob, const Grid<T>& rewards,
                         const Grid<T>& values, const Grid<T>& terminated,
                         const Vec<T>& bootstrap, T gamma, T rho_bar, T c_bar,
                         const Grid<T>* truncated = nullptr,
                         const Grid<T>* truncation_values = nullptr) {
  detail::check_grid(behavior_log_prob, rewards, "vtrace behavior_log_prob");
  detail::check_grid(target_log_prob, rewards, "vtrace target_log_prob");
  detail::check_grid(values, rewards, "vtrace values");
  detail::check_grid(terminated, rewards, "vtrace terminated");
  if (truncated) detail::check_grid(*truncated, rewards, "vtrace truncated");
  if (truncation_values) {
    detail::check_grid(*truncation_values, rewards, "vtrace truncation_values");
  }
  if (bootstrap.size() != rewards.cols()) {
    throw std::invalid_argument("vtrace bootstrap: shape mismatch");
  }
  const Eigen::Index steps = rewards.rows(), envs = rewards.cols();
  VtraceEstimate<T> out{Grid<T>(steps, envs), Grid<T>(steps, envs),
                        Grid<T>(steps, envs)};
  for (Eigen::Index b = 0; b < envs; ++b) {
    for (Eigen::Index t = steps - 1; t >= 0; --t) {
      const T ratio = std::exp(target_log_prob(t, b) - behavior_log_prob(t, b));
      const T rho = std::min(rho_bar, ratio);
      const T c = std::min(c_bar, ratio);
      const bool trunc = truncated && (*truncated)(t, b) != T(0);
      const bool last = t + 1 == steps;
      const T not_term = T(1) - terminated(t, b);
      const T not_done = trunc ? T(0) : not_term;

      T next_value = last ? bootstrap(b) : values(t + 1, b);
      T next_vs = last ? bootstrap(b) : out.vs(t + 1, b);
      if (trunc) {
        next_value = truncation_values ? (*truncation_values)(t, b) : T(0);
        next_vs = next_value;
      }
      const T carry = last ? T(0) : out.vs(t + 1, b) - values(t + 1, b);
      const T delta =
          rho * (rewards(t, b) + gamma * not_term * next_value - values(t, b));
      out.rho(t, b) = rho;
      out.vs(t, b) = values(t, b) + delta + gamma * not_done * c * carry;
      out.pg_advantages(t, b) =
          rho * (rewards(t, b) + gamma * not_term * next_vs - values(t, b));
    }
  }
  return out;
}

}  // namespace unilite::algo
