#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "unilite/algo/config.hpp"
#include "unilite/env/task_config.hpp"
#include "unilite/replay/device.hpp"
#include "unilite/replay/variant.hpp"

namespace unilite::runtime {

enum class Algo { ppo, appo, sac, flashsac };

inline std::string to_string(Algo a) {
  switch (a) {
    case Algo::ppo: return "ppo";
    case Algo::appo: return "appo";
    case Algo::sac: return "sac";
    case Algo::flashsac: return "flashsac";
  }
  return "?";
}

inline Algo parse_algo(const std::string& s) {
  if (s == "ppo") return Algo::ppo;
  if (s == "appo") return Algo::appo;
  if (s == "sac") return Algo::sac;
  if (s == "flashsac") return Algo::flashsac;
  throw std::invalid_argument("unknown algo '" + s + "' (expected ppo, appo, sac or flashsac)");
}

inline bool is_off_policy(Algo a) { return a == Algo::sac || a == Algo::flashsac; }

struct PolicyConfig {
  std::vector<int> actor_hidden_dims{64, 64};
  std::vector<int> critic_hidden_dims{64, 64};
  double init_noise_std = 1.0;
  double output_gain = 0.01;  // actor output layer init scale
};

struct RunConfig {
  env::TaskConfig task;
  std::string backend = "pointmass";
  Algo algo = Algo::ppo;
  algo::PpoConfig ppo;
  algo::AppoConfig appo;
  algo::SacConfig sac;
  PolicyConfig policy;

  int num_envs = 256;
  int steps_per_env = 24;    // on-policy rollout horizon
  int max_iterations = 150;  // rollouts (ppo/appo) or collector rounds (sac)
  int env_steps_per_sync = 1;
  int replay_buffer_n = 512;  // per-env steps kept in replay
  std::uint64_t seed = 1;
  replay::Variant variant = replay::Variant::baseline;
  replay::CostModel transfer_cost;
  bool trace_enabled = true;
  bool deterministic = false;  // round-robin role scheduling
  bool obs_normalization = true;
  double learner_pad_us = 0;  // synthetic learner compute per update (sleep)
  int save_interval = 0;      // checkpoint every N iterations, 0 = final only
  int eval_envs = 64;
  int eval_steps = 250;

  void validate() const {
    task.validate();
    if (num_envs < 1 || steps_per_env < 1 || max_iterations < 1 ||
        env_steps_per_sync < 1 || replay_buffer_n < 1 || eval_envs < 1 ||
        eval_steps < 1) {
      throw std::invalid_argument(
          "num_envs, steps_per_env, max_iterations, env_steps_per_sync, "
          "replay_buffer_n, eval_envs and eval_steps must be positive");
    }
    if (learner_pad_us < 0 || save_interval < 0) {
      throw std::invalid_argument("learner_pad_us and save_interval must be >= 0");
    }
    switch (algo) {
      case Algo::ppo: ppo.validate(); break;
      case Algo::appo: appo.validate(); break;
      case Algo::sac:
      case Algo::flashsac: sac.validate(); break;
    }
    if (!is_off_policy(algo)) {
      const auto& p = algo == Algo::ppo ? ppo : static_cast<const algo::PpoConfig&>(appo);
      if ((static_cast<long long>(num_envs) * steps_per_env) % p.minibatches != 0) {
        throw std::invalid_argument("minibatches must divide num_envs * steps_per_env");
      }
    }
  }

  // Env steps consumed per learner cycle.
  long long env_steps_per_cycle() const {
    return static_cast<long long>(num_envs) *
           (is_off_policy(algo) ? env_steps_per_sync : steps_per_env);
  }
};

}  // namespace unilite::runtime
