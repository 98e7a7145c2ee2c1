#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace unilite::env {

struct Range {
  double lo = 0;
  double hi = 0;
  bool valid() const { return lo <= hi; }
  friend bool operator==(const Range&, const Range&) = default;
};

// Reset-time and interval randomization switches. Ranges only take effect when
// the matching flag is on.
struct DRConfig {
  bool randomize_base_mass = false;
  Range added_mass_range{-1.0, 3.0};
  bool random_com = false;
  Range com_offset_range{-0.01, 0.01};
  // Requested but not implemented by either toy backend; exercises the
  // capability filter.
  bool randomize_gravity = false;
  Range gravity_range{9.31, 10.31};
  bool push_enabled = false;
  int push_interval_steps = 625;
  std::vector<double> push_max_delta_v{1.0, 1.0};
  double obs_noise_level = 1.0;

  void validate() const {
    if (!added_mass_range.valid() || !com_offset_range.valid() ||
        !gravity_range.valid()) {
      throw std::invalid_argument("DR range with lo > hi");
    }
    if (push_enabled && push_interval_steps < 1) {
      throw std::invalid_argument("push_interval_steps must be >= 1");
    }
    for (double m : push_max_delta_v) {
      if (!(m >= 0)) throw std::invalid_argument("push_max_delta_v must be >= 0");
    }
  }
};

struct TaskConfig {
  std::string name = "pointmass";
  double dt_sim = 0.01;
  int decimation = 2;
  double episode_length_s = 20.0;
  std::vector<double> command_low{-0.6, -0.4};
  std::vector<double> command_high{1.0, 0.4};
  std::map<std::string, double> reward_weights{{"track", 1.0},
                                               {"action_rate", -0.005}};
  double tracking_sigma = 0.25;
  double termination_speed_max = 3.0;
  double obs_noise_scale = 0.02;
  double action_scale = 5.0;
  DRConfig dr;

  double dt_ctrl() const { return dt_sim * decimation; }

  int episode_length_steps() const {
    return static_cast<int>(std::llround(episode_length_s / dt_ctrl()));
  }

  void validate() const {
    if (!(dt_sim > 0)) throw std::invalid_argument("dt_sim must be > 0");
    if (decimation < 1) throw std::invalid_argument("decimation must be >= 1");
    const double steps = episode_length_s / dt_ctrl();
    if (!(steps >= 1) || std::abs(steps - std::round(steps)) > 1e-9) {
      throw std::invalid_argument(
          "episode_length_s must be a whole number of control steps");
    }
    if (command_low.size() != command_high.size()) {
      throw std::invalid_argument("command_low/command_high size mismatch");
    }
    for (std::size_t i = 0; i < command_low.size(); ++i) {
      if (command_low[i] > command_high[i]) {
        throw std::invalid_argument("command_low > command_high");
      }
    }
    if (!(tracking_sigma > 0)) {
      throw std::invalid_argument("tracking_sigma must be > 0");
    }
    if (!reward_weights.contains("track") ||
        !reward_weights.contains("action_rate")) {
      throw std::invalid_argument(
          "reward_weights needs 'track' and 'action_rate'");
    }
    dr.validate();
  }
};

// Planar velocity tracking on the double integrator.
inline TaskConfig pointmass_task() { return TaskConfig{}; }

// Angular-velocity tracking on the torque-driven pendulum.
inline TaskConfig pendulum_task() {
  TaskConfig t;
  t.name = "pendulum";
  t.command_low = {-1.0};
  t.command_high = {1.0};
  t.termination_speed_max = 8.0;
  t.action_scale = 20.0;
  t.dr.push_max_delta_v = {1.0};
  return t;
}

}  // namespace unilite::env
