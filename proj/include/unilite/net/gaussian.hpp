#pragma once

#include <cmath>
#include <numbers>

#include "unilite/core/rng.hpp"
#include "unilite/core/tensor.hpp"

namespace unilite::net {

template <class T>
constexpr T half_log_2pi() {
  return static_cast<T>(0.5 * std::log(2.0 * std::numbers::pi));
}

// Diagonal Gaussian with a state-independent log-std shared by all rows.
template <class T>
Vec<T> gaussian_log_prob(const Mat<T>& mean, const Vec<T>& log_std,
                         const Mat<T>& actions) {
  const Eigen::Index n = mean.rows();
  const Eigen::Index a = mean.cols();
  Vec<T> out(n);
  const T base = -log_std.sum() - static_cast<T>(a) * half_log_2pi<T>();
  Vec<T> inv_var = (T(-2) * log_std.array()).exp();
  for (Eigen::Index i = 0; i < n; ++i) {
    T q = 0;
    for (Eigen::Index k = 0; k < a; ++k) {
      const T d = actions(i, k) - mean(i, k);
      q += d * d * inv_var(k);
    }
    out(i) = base - T(0.5) * q;
  }
  return out;
}

// Sum over dimensions of (log_std + 0.5 ln(2 pi e)).
template <class T>
T gaussian_entropy(const Vec<T>& log_std) {
  return log_std.sum() +
         static_cast<T>(log_std.size()) * (half_log_2pi<T>() + T(0.5));
}

template <class T>
struct GaussianDraw {
  Mat<T> actions;
  Vec<T> log_prob;
  T entropy = 0;
};

template <class T>
GaussianDraw<T> gaussian_sample(const Mat<T>& mean, const Vec<T>& log_std,
                                CounterRng& rng) {
  GaussianDraw<T> d;
  d.actions.resize(mean.rows(), mean.cols());
  for (Eigen::Index i = 0; i < mean.rows(); ++i) {
    for (Eigen::Index k = 0; k < mean.cols(); ++k) {
      d.actions(i, k) =
          mean(i, k) + std::exp(log_std(k)) * static_cast<T>(rng.normal());
    }
  }
  d.log_prob = gaussian_log_prob(mean, log_std, d.actions);
  d.entropy = gaussian_entropy(log_std);
  return d;
}

// d log_prob / d mean (rows) and d log_prob / d log_std summed with weights w:
//   dmean(i,k) = w_i (a-mu)/sigma^2,  dlogstd(k) = sum_i w_i ((a-mu)^2/sigma^2 - 1)
template <class T>
void gaussian_log_prob_grad(const Mat<T>& mean, const Vec<T>& log_std,
                            const Mat<T>& actions, const Vec<T>& weights,
                            Mat<T>& dmean, Vec<T>& dlog_std) {
  dmean.resize(mean.rows(), mean.cols());
  dlog_std = Vec<T>::Zero(log_std.size());
  Vec<T> inv_var = (T(-2) * log_std.array()).exp();
  for (Eigen::Index i = 0; i < mean.rows(); ++i) {
    for (Eigen::Index k = 0; k < mean.cols(); ++k) {
      const T d = actions(i, k) - mean(i, k);
      dmean(i, k) = weights(i) * d * inv_var(k);
      dlog_std(k) += weights(i) * (d * d * inv_var(k) - T(1));
    }
  }
}

// log(1 - tanh(u)^2) in a form that stays finite for large |u|.
template <class T>
T log1m_tanh2(T u) {
  const T x = T(-2) * u;
  const T softplus = x > T(20) ? x : std::log1p(std::exp(x));
  return T(2) * (static_cast<T>(std::numbers::ln2) - u - softplus);
}

// Tanh-squashed Gaussian with per-row log-std, sampled by reparameterization
// a = tanh(mu + sigma * eps) for supplied standard-normal `noise`.
template <class T>
struct SquashedDraw {
  Mat<T> pre_tanh;  // u
  Mat<T> actions;   // tanh(u)
  Vec<T> log_prob;
};

template <class T>
SquashedDraw<T> squashed_sample(const Mat<T>& mean, const Mat<T>& log_std,
                                const Mat<T>& noise) {
  SquashedDraw<T> d;
  const Eigen::Index n = mean.rows(), a = mean.cols();
  d.pre_tanh.resize(n, a);
  d.actions.resize(n, a);
  d.log_prob.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    T lp = -static_cast<T>(a) * half_log_2pi<T>();
    for (Eigen::Index k = 0; k < a; ++k) {
      const T u = mean(i, k) + std::exp(log_std(i, k)) * noise(i, k);
      d.pre_tanh(i, k) = u;
      d.actions(i, k) = std::tanh(u);
      lp += -T(0.5) * noise(i, k) * noise(i, k) - log_std(i, k) - log1m_tanh2(u);
    }
    d.log_prob(i) = lp;
  }
  return d;
}

// Density of a given squashed action (|a| < 1).
template <class T>
Vec<T> squashed_log_prob(const Mat<T>& mean, const Mat<T>& log_std,
                         const Mat<T>& actions) {
  const Eigen::Index n = mean.rows(), a = mean.cols();
  Vec<T> out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    T lp = -static_cast<T>(a) * half_log_2pi<T>();
    for (Eigen::Index k = 0; k < a; ++k) {
      const T u = std::atanh(actions(i, k));
      const T z = (u - mean(i, k)) * std::exp(-log_std(i, k));
      lp += -T(0.5) * z * z - log_std(i, k) - log1m_tanh2(u);
    }
    out(i) = lp;
  }
  return out;
}

}  // namespace unilite::net
