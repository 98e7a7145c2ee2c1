#pragma once

#include <cmath>
#include <span>

namespace unilite::env {

// exp(-e^2 / sigma^2), in (0, 1].
inline double tracking_kernel(double error_norm, double sigma) {
  return std::exp(-(error_norm * error_norm) / (sigma * sigma));
}

struct JoystickWeights {
  double track = 1.0;
  double action_rate = -0.005;
};

// dt_ctrl * (w_track * kernel(|v - c|) + w_rate * |a - a_prev|^2).
inline double joystick_reward(std::span<const double> velocity,
                              std::span<const double> command,
                              std::span<const double> action,
                              std::span<const double> prev_action,
                              const JoystickWeights& w, double sigma,
                              double dt_ctrl) {
  double err2 = 0;
  for (std::size_t i = 0; i < velocity.size(); ++i) {
    const double d = velocity[i] - command[i];
    err2 += d * d;
  }
  double rate2 = 0;
  for (std::size_t i = 0; i < action.size(); ++i) {
    const double d = action[i] - prev_action[i];
    rate2 += d * d;
  }
  return dt_ctrl *
         (w.track * tracking_kernel(std::sqrt(err2), sigma) + w.action_rate * rate2);
}

}  // namespace unilite::env
