#pragma once

#include <stdexcept>
#include <string>

namespace unilite::algo {

enum class LrSchedule { fixed, adaptive };

// Defaults follow the published PPO global defaults.
struct PpoConfig {
  double clip_param = 0.2;
  double entropy_coef = 0.01;
  double value_loss_coef = 1.0;
  bool use_clipped_value_loss = true;
  int epochs = 5;
  int minibatches = 4;
  double lr = 1e-3;
  LrSchedule schedule = LrSchedule::adaptive;
  double gamma = 0.99;
  double lam = 0.95;
  double desired_kl = 0.01;
  double max_grad_norm = 1.0;
  double adaptive_kl_beta = 0.9;
  double adaptive_lr_growth = 1.1;
  double adaptive_lr_decay = 1.2;
  int adaptive_lr_update_interval = 5;

  void validate() const {
    if (!(clip_param > 0)) throw std::invalid_argument("clip_param must be > 0");
    if (!(gamma > 0 && gamma <= 1)) throw std::invalid_argument("gamma must be in (0,1]");
    if (!(lam >= 0 && lam <= 1)) throw std::invalid_argument("lam must be in [0,1]");
    if (adaptive_lr_growth < 1 || adaptive_lr_decay < 1) {
      throw std::invalid_argument("adaptive lr growth/decay must be >= 1");
    }
    if (epochs < 1 || minibatches < 1 || adaptive_lr_update_interval < 1) {
      throw std::invalid_argument("epochs, minibatches, update interval must be >= 1");
    }
  }
};

struct AppoConfig : PpoConfig {
  double vtrace_clip_rho = 1.0;
  double vtrace_clip_c = 1.0;
  int replay_queue_size = 2;

  void validate() const {
    PpoConfig::validate();
    if (!(vtrace_clip_rho > 0 && vtrace_clip_c > 0)) {
      throw std::invalid_argument("vtrace clips must be > 0");
    }
    if (replay_queue_size < 1) {
      throw std::invalid_argument("replay_queue_size must be >= 1");
    }
  }
};

// Defaults follow the published SAC global defaults; the n-step and reward
// normalization fields carry the FlashSAC additions.
struct SacConfig {
  double gamma = 0.97;
  double tau = 0.125;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  double alpha_lr = 3e-4;
  double alpha_init = 0.01;
  double target_entropy_ratio = 0.0;
  int batch_size = 8192;
  int updates_per_step = 4;
  int policy_frequency = 4;
  int learning_starts = 1;
  int n_step = 1;
  bool normalize_reward = false;
  double normalized_g_max = 5.0;
  double max_grad_norm = 0.0;

  void validate() const {
    if (!(tau > 0 && tau <= 1)) throw std::invalid_argument("tau must be in (0,1]");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (n_step < 1) throw std::invalid_argument("n_step must be >= 1");
    if (updates_per_step < 1 || policy_frequency < 1 || learning_starts < 1) {
      throw std::invalid_argument(
          "updates_per_step, policy_frequency, learning_starts must be >= 1");
    }
    if (!(alpha_init > 0)) throw std::invalid_argument("alpha_init must be > 0");
  }
};

}  // namespace unilite::algo
