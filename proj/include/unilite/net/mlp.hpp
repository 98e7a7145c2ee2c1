#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "unilite/core/rng.hpp"
#include "unilite/core/tensor.hpp"

namespace unilite::net {

struct MlpArch {
  int input_dim = 0;
  std::vector<int> hidden_dims;
  int output_dim = 0;
  std::string activation = "elu";

  void validate() const {
    if (input_dim <= 0 || output_dim <= 0) {
      throw std::invalid_argument("MLP input/output dims must be positive");
    }
    for (int h : hidden_dims) {
      if (h <= 0) throw std::invalid_argument("MLP hidden dims must be positive");
    }
    if (activation != "elu") {
      throw std::invalid_argument("unsupported activation: " + activation);
    }
  }

  // (rows, cols) of each weight matrix, input layer first.
  std::vector<std::pair<int, int>> weight_shapes() const {
    std::vector<std::pair<int, int>> out;
    int in = input_dim;
    for (int h : hidden_dims) {
      out.emplace_back(h, in);
      in = h;
    }
    out.emplace_back(output_dim, in);
    return out;
  }

  friend bool operator==(const MlpArch&, const MlpArch&) = default;
};

template <class T>
struct Layer {
  Mat<T> weight;  // out x in
  Vec<T> bias;    // out
};

// Dense ELU network plus an optional state-independent log-std head. Gradients
// use the same record type.
template <class T>
struct ModelParams {
  MlpArch arch;
  std::vector<Layer<T>> layers;
  Vec<T> log_std;
  std::uint64_t version = 0;   // publication counter, never decreases
  std::uint64_t revision = 0;  // bumped on every in-place modification

  Eigen::Index size() const {
    Eigen::Index n = log_std.size();
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  Vec<T> flat() const {
    Vec<T> out(size());
    Eigen::Index off = 0;
    for (const auto& l : layers) {
      out.segment(off, l.weight.size()) =
          Eigen::Map<const Vec<T>>(l.weight.data(), l.weight.size());
      off += l.weight.size();
      out.segment(off, l.bias.size()) = l.bias;
      off += l.bias.size();
    }
    out.segment(off, log_std.size()) = log_std;
    return out;
  }

  void assign(const Eigen::Ref<const Vec<T>>& values) {
    if (values.size() != size()) {
      throw std::invalid_argument("flat parameter size mismatch");
    }
    Eigen::Index off = 0;
    for (auto& l : layers) {
      Eigen::Map<Vec<T>>(l.weight.data(), l.weight.size()) =
          values.segment(off, l.weight.size());
      off += l.weight.size();
      l.bias = values.segment(off, l.bias.size());
      off += l.bias.size();
    }
    log_std = values.segment(off, log_std.size());
    ++revision;
  }

  ModelParams zeros_like() const {
    ModelParams z;
    z.arch = arch;
    for (const auto& l : layers) {
      z.layers.push_back({Mat<T>::Zero(l.weight.rows(), l.weight.cols()),
                          Vec<T>::Zero(l.bias.size())});
    }
    z.log_std = Vec<T>::Zero(log_std.size());
    return z;
  }

  template <class U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    out.arch = arch;
    for (const auto& l : layers) {
      out.layers.push_back({l.weight.template cast<U>(), l.bias.template cast<U>()});
    }
    out.log_std = log_std.template cast<U>();
    out.version = version;
    out.revision = revision;
    return out;
  }

  bool congruent(const ModelParams& other) const {
    if (layers.size() != other.layers.size() ||
        log_std.size() != other.log_std.size()) {
      return false;
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].weight.rows() != other.layers[i].weight.rows() ||
          layers[i].weight.cols() != other.layers[i].weight.cols()) {
        return false;
      }
    }
    return true;
  }
};

// He-style scaled uniform on fan-in: U(-g*sqrt(6/fan_in), +g*sqrt(6/fan_in)),
// with gain g = 1 on hidden layers and `output_gain` on the last. Biases start
// at zero. `init_noise_std > 0` adds a log-std head at ln(init_noise_std).
template <class T>
ModelParams<T> init_params(const MlpArch& arch, std::uint64_t seed,
                           double init_noise_std = 0.0,
                           double output_gain = 1.0) {
  arch.validate();
  ModelParams<T> p;
  p.arch = arch;
  const auto shapes = arch.weight_shapes();
  for (std::size_t li = 0; li < shapes.size(); ++li) {
    const auto [rows, cols] = shapes[li];
    CounterRng rng(seed, li, RngPurpose::param_init);
    const double gain = li + 1 == shapes.size() ? output_gain : 1.0;
    const double bound = gain * std::sqrt(6.0 / cols);
    Layer<T> l{Mat<T>(rows, cols), Vec<T>::Zero(rows)};
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) {
      l.weight.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
    }
    p.layers.push_back(std::move(l));
  }
  if (init_noise_std > 0) {
    p.log_std = Vec<T>::Constant(arch.output_dim,
                                 static_cast<T>(std::log(init_noise_std)));
  }
  return p;
}

template <class T>
T elu(T z) {
  return z > T(0) ? z : std::expm1(z);
}

template <class T>
T elu_grad(T z) {
  return z > T(0) ? T(1) : std::exp(z);
}

// Inputs to every layer and hidden pre-activations of one forward pass.
template <class T>
struct ForwardCache {
  const ModelParams<T>* params = nullptr;
  std::uint64_t revision = 0;
  std::vector<Mat<T>> inputs;  // inputs[l] feeds layer l
  std::vector<Mat<T>> pre;     // pre[l] = pre-activation of hidden layer l
};

template <class T>
Mat<T> forward(const ModelParams<T>& p, const Mat<T>& x,
               ForwardCache<T>* cache = nullptr) {
  if (x.cols() != p.arch.input_dim) {
    throw std::invalid_argument("forward: input has " +
                                std::to_string(x.cols()) + " columns, expected " +
                                std::to_string(p.arch.input_dim));
  }
  if (cache) {
    cache->params = &p;
    cache->revision = p.revision;
    cache->inputs.clear();
    cache->pre.clear();
  }
  Mat<T> a = x;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    Mat<T> z = a * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    if (cache) cache->inputs.push_back(std::move(a));
    if (l + 1 == p.layers.size()) return z;
    if (cache) cache->pre.push_back(z);
    a = (z.array() > T(0)).select(z.array(), z.array().min(T(0)).exp() - T(1));
  }
  return a;  // unreachable: there is always an output layer
}

// Reverse pass of the cached forward for upstream gradient dL/d(output).
// Returns parameter gradients (log-std slot zero) and optionally dL/d(input).
template <class T>
ModelParams<T> backward(const ModelParams<T>& p, const ForwardCache<T>& cache,
                        const Mat<T>& upstream, Mat<T>* input_grad = nullptr) {
  if (cache.params != &p || cache.revision != p.revision ||
      cache.inputs.size() != p.layers.size()) {
    throw std::logic_error("stale forward cache");
  }
  if (upstream.rows() != cache.inputs.front().rows() ||
      upstream.cols() != p.arch.output_dim) {
    throw std::invalid_argument("backward: upstream gradient shape mismatch");
  }
  ModelParams<T> g = p.zeros_like();
  Mat<T> delta = upstream;
  for (std::size_t l = p.layers.size(); l-- > 0;) {
    g.layers[l].weight.noalias() = delta.transpose() * cache.inputs[l];
    g.layers[l].bias = delta.colwise().sum().transpose();
    if (l == 0 && !input_grad) break;
    Mat<T> back = delta * p.layers[l].weight;
    if (l == 0) {
      *input_grad = std::move(back);
      break;
    }
    const Mat<T>& z = cache.pre[l - 1];
    delta.array() = back.array() * (z.array() > T(0)).select(T(1), z.array().min(T(0)).exp());
  }
  return g;
}

template <class T>
struct AcOutput {
  Mat<T> mean;
  Vec<T> value;
};

template <class T>
AcOutput<T> ac_forward(const ModelParams<T>& actor, const ModelParams<T>& critic,
                       const Mat<T>& obs, const Mat<T>& critic_obs,
                       ForwardCache<T>* actor_cache = nullptr,
                       ForwardCache<T>* critic_cache = nullptr) {
  if (obs.rows() != critic_obs.rows()) {
    throw std::invalid_argument("ac_forward: obs and critic_obs batch differ");
  }
  AcOutput<T> out;
  out.mean = forward(actor, obs, actor_cache);
  Mat<T> v = forward(critic, critic_obs, critic_cache);
  if (v.cols() != 1) throw std::invalid_argument("critic must output 1 value");
  out.value = Eigen::Map<const Vec<T>>(v.data(), v.rows());
  return out;
}

}  // namespace unilite::net
