#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <vector>

#include "unilite/core/error.hpp"
#include "unilite/core/tensor.hpp"
#include "unilite/net/mlp.hpp"

namespace unilite::net {

template <class T>
struct OptState {
  Vec<T> m;
  Vec<T> v;
  std::int64_t t = 0;
  T lr = T(1e-3);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  T max_grad_norm = T(0);  // <= 0 disables clipping

  static OptState zeros(Eigen::Index n, T lr, T max_grad_norm = T(0)) {
    OptState s;
    s.m = Vec<T>::Zero(n);
    s.v = Vec<T>::Zero(n);
    s.lr = lr;
    s.max_grad_norm = max_grad_norm;
    return s;
  }
};

// Adam with bias correction. Clips the global gradient norm first when
// max_grad_norm > 0. Returns the pre-clip gradient norm.
template <class T>
T adam_step(Vec<T>& params, Vec<T> grads, OptState<T>& opt) {
  if (grads.size() != params.size() || opt.m.size() != params.size() ||
      opt.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  if (!grads.allFinite()) {
    throw DivergenceError("non-finite gradient in adam_step");
  }
  const T norm = grads.norm();
  if (opt.max_grad_norm > T(0) && norm > opt.max_grad_norm) {
    grads *= opt.max_grad_norm / (norm + T(1e-6));
  }
  ++opt.t;
  opt.m = opt.beta1 * opt.m + (T(1) - opt.beta1) * grads;
  opt.v = opt.beta2 * opt.v + (T(1) - opt.beta2) * grads.cwiseAbs2();
  const T bc1 = T(1) - std::pow(opt.beta1, static_cast<T>(opt.t));
  const T bc2 = T(1) - std::pow(opt.beta2, static_cast<T>(opt.t));
  const T step = opt.lr / bc1;
  params.array() -=
      step * opt.m.array() / ((opt.v.array() / bc2).sqrt() + opt.eps);
  return norm;
}

// Several parameter records updated as one flat vector (one optimizer, one
// global clip).
template <class T>
Eigen::Index total_size(const std::vector<const ModelParams<T>*>& ps) {
  Eigen::Index n = 0;
  for (const auto* p : ps) n += p->size();
  return n;
}

template <class T>
Vec<T> concat_flat(const std::vector<const ModelParams<T>*>& ps) {
  Vec<T> out(total_size(ps));
  Eigen::Index off = 0;
  for (const auto* p : ps) {
    out.segment(off, p->size()) = p->flat();
    off += p->size();
  }
  return out;
}

template <class T>
T adam_step(const std::vector<ModelParams<T>*>& params,
            const std::vector<const ModelParams<T>*>& grads, OptState<T>& opt) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("adam_step: params/grads count mismatch");
  }
  std::vector<const ModelParams<T>*> cparams(params.begin(), params.end());
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->congruent(*grads[i])) {
      throw std::invalid_argument("adam_step: gradient not congruent");
    }
  }
  Vec<T> flat = concat_flat(cparams);
  const T norm = adam_step<T>(flat, concat_flat(grads), opt);
  Eigen::Index off = 0;
  for (auto* p : params) {
    p->assign(flat.segment(off, p->size()));
    off += p->size();
  }
  return norm;
}

}  // namespace unilite::net
