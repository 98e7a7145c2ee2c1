#pragma once

#include <cmath>
#include <memory>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "unilite/core/rng.hpp"
#include "unilite/env/randomization.hpp"

namespace unilite::env {

struct BodyState {
  double mass = 1.0;
  double com_offset[2] = {0.0, 0.0};
};

// Read-only view of one env's state used to build observations.
struct EnvView {
  std::span<const double> pos;
  std::span<const double> vel;
  std::span<const double> command;
  std::span<const double> prev_action;
  const BodyState& body;
};

// Physics kernel for one env at a time. The pool owns all state and batching;
// a backend only defines dynamics, observation layout and capabilities.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual std::string_view id() const = 0;
  virtual int pos_dim() const = 0;
  // Tracked velocity; commands share this width.
  virtual int vel_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual int actor_obs_dim() const = 0;
  virtual int critic_obs_dim() const = 0;
  virtual double base_mass() const = 0;
  virtual const BackendCapabilities& capabilities() const = 0;

  virtual void initial_state(CounterRng& rng, std::span<double> pos,
                             std::span<double> vel) const = 0;
  virtual void substep(std::span<double> pos, std::span<double> vel,
                       std::span<const double> force, const BodyState& body,
                       double dt) const = 0;
  virtual void actor_obs(const EnvView& v, std::span<double> out) const = 0;
  virtual void critic_obs(const EnvView& v, std::span<double> out) const = 0;
};

// Planar double integrator with linear drag:
//   v' = v + dt (u/m - drag v),  p' = p + dt v'.
class PointMassBackend final : public Backend {
 public:
  static constexpr double kDrag = 0.1;

  PointMassBackend() {
    caps_.supported_reset_fields = {kMassDelta, kComOffset};
    caps_.supported_interval_fields = {kPushDeltaV};
    caps_.body_dim = 2;
  }

  std::string_view id() const override { return "pointmass"; }
  int pos_dim() const override { return 2; }
  int vel_dim() const override { return 2; }
  int action_dim() const override { return 2; }
  // [v(2), c(2), a_prev(2)]
  int actor_obs_dim() const override { return 6; }
  // actor layout + [p + com(2), mass]
  int critic_obs_dim() const override { return 9; }
  double base_mass() const override { return 1.0; }
  const BackendCapabilities& capabilities() const override { return caps_; }

  void initial_state(CounterRng&, std::span<double> pos,
                     std::span<double> vel) const override {
    std::fill(pos.begin(), pos.end(), 0.0);
    std::fill(vel.begin(), vel.end(), 0.0);
  }

  void substep(std::span<double> pos, std::span<double> vel,
               std::span<const double> force, const BodyState& body,
               double dt) const override {
    for (int k = 0; k < 2; ++k) {
      vel[k] += dt * (force[k] / body.mass - kDrag * vel[k]);
      pos[k] += dt * vel[k];
    }
  }

  void actor_obs(const EnvView& v, std::span<double> out) const override {
    out[0] = v.vel[0];
    out[1] = v.vel[1];
    out[2] = v.command[0];
    out[3] = v.command[1];
    out[4] = v.prev_action[0];
    out[5] = v.prev_action[1];
  }

  void critic_obs(const EnvView& v, std::span<double> out) const override {
    actor_obs(v, out.first(6));
    out[6] = v.pos[0] + v.body.com_offset[0];
    out[7] = v.pos[1] + v.body.com_offset[1];
    out[8] = v.body.mass;
  }

 private:
  BackendCapabilities caps_;
};

// Torque-driven pendulum tracking an angular-velocity command:
//   w' = w + dt (-(g/l) sin th + u/(m l^2) - b w),  th' = th + dt w'.
class PendulumBackend final : public Backend {
 public:
  static constexpr double kGravity = 9.81;
  static constexpr double kLength = 1.0;
  static constexpr double kDamping = 0.1;

  PendulumBackend() {
    caps_.supported_reset_fields = {kMassDelta};
    caps_.supported_interval_fields = {};
    caps_.body_dim = 1;
  }

  std::string_view id() const override { return "pendulum"; }
  int pos_dim() const override { return 1; }
  int vel_dim() const override { return 1; }
  int action_dim() const override { return 1; }
  // [cos th, sin th, w, c, a_prev]
  int actor_obs_dim() const override { return 5; }
  // actor layout + [mass]
  int critic_obs_dim() const override { return 6; }
  double base_mass() const override { return 1.0; }
  const BackendCapabilities& capabilities() const override { return caps_; }

  void initial_state(CounterRng& rng, std::span<double> pos,
                     std::span<double> vel) const override {
    pos[0] = rng.uniform(-std::numbers::pi, std::numbers::pi);
    vel[0] = 0.0;
  }

  void substep(std::span<double> pos, std::span<double> vel,
               std::span<const double> force, const BodyState& body,
               double dt) const override {
    const double accel = -(kGravity / kLength) * std::sin(pos[0]) +
                         force[0] / (body.mass * kLength * kLength) -
                         kDamping * vel[0];
    vel[0] += dt * accel;
    pos[0] += dt * vel[0];
  }

  void actor_obs(const EnvView& v, std::span<double> out) const override {
    out[0] = std::cos(v.pos[0]);
    out[1] = std::sin(v.pos[0]);
    out[2] = v.vel[0];
    out[3] = v.command[0];
    out[4] = v.prev_action[0];
  }

  void critic_obs(const EnvView& v, std::span<double> out) const override {
    actor_obs(v, out.first(5));
    out[5] = v.body.mass;
  }

 private:
  BackendCapabilities caps_;
};

inline std::unique_ptr<Backend> make_backend(std::string_view id) {
  if (id == "pointmass") return std::make_unique<PointMassBackend>();
  if (id == "pendulum") return std::make_unique<PendulumBackend>();
  throw std::invalid_argument("unknown backend: " + std::string(id));
}

}  // namespace unilite::env
