#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "unilite/core/rng.hpp"
#include "unilite/core/tensor.hpp"
#include "unilite/env/backend.hpp"
#include "unilite/env/randomization.hpp"
#include "unilite/env/reward.hpp"
#include "unilite/env/task_config.hpp"

namespace unilite::env {

struct StepBatch {
  MatD obs;         // B x D_actor, post-reset rows for envs that ended
  MatD critic_obs;  // B x D_critic
  VecD reward;
  std::vector<std::uint8_t> terminated;
  std::vector<std::uint8_t> truncated;
  std::vector<int> episode_step;  // length of the step count reached this step
  // Pre-reset observations of envs that ended this step (other rows stale).
  MatD final_obs;
  MatD final_critic_obs;
  // Tracking kernel value per env after this step.
  VecD tracking;

  bool done(Eigen::Index i) const {
    return terminated[static_cast<std::size_t>(i)] ||
           truncated[static_cast<std::size_t>(i)];
  }
};

struct TerminationFlags {
  std::vector<std::uint8_t> terminated;
  std::vector<std::uint8_t> truncated;
};

// B parallel environments behind one backend. Owned by one role at a time.
class EnvPool {
 public:
  static EnvPool materialize(const TaskConfig& task, int n_envs,
                             std::string_view backend_id, std::uint64_t seed) {
    task.validate();
    if (n_envs < 1) throw std::invalid_argument("n_envs must be >= 1");
    auto backend = make_backend(backend_id);
    if (static_cast<int>(task.command_low.size()) != backend->vel_dim()) {
      throw std::invalid_argument("command range width does not match backend '" +
                                  std::string(backend_id) + "'");
    }
    EnvPool pool(task, n_envs, std::move(backend), seed);
    std::vector<int> all(static_cast<std::size_t>(n_envs));
    for (int i = 0; i < n_envs; ++i) all[static_cast<std::size_t>(i)] = i;
    auto payload = sample_reset_payload(
        task.dr, pool.capabilities(), all,
        [&pool](int id) -> CounterRng& { return rng(pool.payload_rng_, id); });
    pool.reset_impl(all, &payload);
    return pool;
  }

  EnvPool(EnvPool&&) noexcept = default;
  EnvPool& operator=(EnvPool&&) noexcept = default;

  int n_envs() const { return n_; }
  int action_dim() const { return backend_->action_dim(); }
  int obs_dim() const { return backend_->actor_obs_dim(); }
  int critic_obs_dim() const { return backend_->critic_obs_dim(); }
  std::string_view backend_id() const { return backend_->id(); }
  const BackendCapabilities& capabilities() const {
    return backend_->capabilities();
  }
  const TaskConfig& task() const { return task_; }
  std::int64_t global_step() const { return global_step_; }
  int episode_length() const { return episode_len_; }

  const MatD& observations() const { return obs_; }
  const MatD& critic_observations() const { return critic_obs_; }
  const std::vector<SkipRecord>& skip_log() const { return skip_log_; }
  const std::vector<std::int64_t>& last_push_step() const { return last_push_; }

  // Raw state, exposed for snapshots and tests.
  const std::vector<double>& positions() const { return pos_; }
  const std::vector<double>& velocities() const { return vel_; }
  const std::vector<double>& commands() const { return cmd_; }
  const std::vector<double>& prev_actions() const { return prev_action_; }
  const std::vector<BodyState>& bodies() const { return body_; }
  const std::vector<int>& episode_steps() const { return ep_step_; }

  // Sparse reset of `env_ids`; returns their fresh actor observations.
  MatD reset(const std::vector<int>& env_ids,
             const ResetPayload* randomization = nullptr) {
    validate_ids(env_ids);
    if (randomization) validate_payload(env_ids, *randomization);
    reset_impl(env_ids, randomization);
    MatD out(static_cast<Eigen::Index>(env_ids.size()), obs_.cols());
    for (std::size_t i = 0; i < env_ids.size(); ++i) {
      out.row(static_cast<Eigen::Index>(i)) = obs_.row(env_ids[i]);
    }
    return out;
  }

  TerminationFlags check_termination() const {
    TerminationFlags f;
    f.terminated.assign(static_cast<std::size_t>(n_), 0);
    f.truncated.assign(static_cast<std::size_t>(n_), 0);
    const int vd = backend_->vel_dim();
    for (int i = 0; i < n_; ++i) {
      double s2 = 0;
      for (int k = 0; k < vd; ++k) {
        const double v = vel_[static_cast<std::size_t>(i * vd + k)];
        s2 += v * v;
      }
      const auto idx = static_cast<std::size_t>(i);
      f.terminated[idx] = std::sqrt(s2) > task_.termination_speed_max;
      f.truncated[idx] = !f.terminated[idx] && ep_step_[idx] >= episode_len_;
    }
    return f;
  }

  const StepBatch& step(const MatD& actions) {
    const int ad = backend_->action_dim();
    if (actions.rows() != n_ || actions.cols() != ad) {
      throw std::invalid_argument("actions must be " + std::to_string(n_) +
                                  "x" + std::to_string(ad));
    }
    if (!actions.allFinite()) {
      throw std::invalid_argument("non-finite action");
    }
    ++global_step_;
    apply_interval_plan();

    const int pd = backend_->pos_dim();
    const int vd = backend_->vel_dim();
    const double dt_ctrl = task_.dt_ctrl();
    const JoystickWeights w{task_.reward_weights.at("track"),
                            task_.reward_weights.at("action_rate")};
    std::vector<double> clipped(static_cast<std::size_t>(ad));
    std::vector<double> force(static_cast<std::size_t>(ad));

    for (int i = 0; i < n_; ++i) {
      const auto iu = static_cast<std::size_t>(i);
      for (int k = 0; k < ad; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        clipped[ku] = std::clamp(actions(i, k), -1.0, 1.0);
        force[ku] = clipped[ku] * task_.action_scale;
      }
      auto pos = std::span(pos_).subspan(iu * pd, pd);
      auto vel = std::span(vel_).subspan(iu * vd, vd);
      for (int s = 0; s < task_.decimation; ++s) {
        backend_->substep(pos, vel, force, body_[iu], task_.dt_sim);
      }
      auto cmd = std::span<const double>(cmd_).subspan(iu * vd, vd);
      auto prev = std::span(prev_action_).subspan(iu * ad, ad);
      batch_.reward(i) = joystick_reward(vel, cmd, clipped, prev, w,
                                         task_.tracking_sigma, dt_ctrl);
      double err2 = 0;
      for (int k = 0; k < vd; ++k) {
        const double d = vel[k] - cmd[k];
        err2 += d * d;
      }
      batch_.tracking(i) = tracking_kernel(std::sqrt(err2), task_.tracking_sigma);
      std::copy(clipped.begin(), clipped.end(), prev.begin());
      ++ep_step_[iu];
    }

    const auto flags = check_termination();
    batch_.terminated = flags.terminated;
    batch_.truncated = flags.truncated;
    batch_.episode_step = ep_step_;

    std::vector<int> done_ids;
    for (int i = 0; i < n_; ++i) {
      const auto iu = static_cast<std::size_t>(i);
      if (flags.terminated[iu] || flags.truncated[iu]) done_ids.push_back(i);
    }
    for (int i = 0; i < n_; ++i) write_obs(i);
    for (int i : done_ids) {
      batch_.final_obs.row(i) = obs_.row(i);
      batch_.final_critic_obs.row(i) = critic_obs_.row(i);
    }
    if (!done_ids.empty()) {
      auto payload = sample_reset_payload(
          task_.dr, capabilities(), done_ids,
          [this](int id) -> CounterRng& { return rng(payload_rng_, id); });
      reset_impl(done_ids, &payload);
    }
    batch_.obs = obs_;
    batch_.critic_obs = critic_obs_;
    return batch_;
  }

 private:
  EnvPool(const TaskConfig& task, int n, std::unique_ptr<Backend> backend,
          std::uint64_t seed)
      : task_(task), n_(n), backend_(std::move(backend)) {
    episode_len_ = task_.episode_length_steps();
    const auto nu = static_cast<std::size_t>(n);
    pos_.assign(nu * backend_->pos_dim(), 0.0);
    vel_.assign(nu * backend_->vel_dim(), 0.0);
    cmd_.assign(nu * backend_->vel_dim(), 0.0);
    prev_action_.assign(nu * backend_->action_dim(), 0.0);
    body_.assign(nu, BodyState{backend_->base_mass(), {0.0, 0.0}});
    ep_step_.assign(nu, 0);
    last_push_.assign(nu, -1);
    obs_.setZero(n, backend_->actor_obs_dim());
    critic_obs_.setZero(n, backend_->critic_obs_dim());
    for (int i = 0; i < n; ++i) {
      const auto id = static_cast<std::uint64_t>(i);
      init_rng_.emplace_back(seed, id, RngPurpose::init_state);
      cmd_rng_.emplace_back(seed, id, RngPurpose::command);
      push_rng_.emplace_back(seed, id, RngPurpose::push);
      noise_rng_.emplace_back(seed, id, RngPurpose::obs_noise);
      payload_rng_.emplace_back(seed, id, RngPurpose::reset_payload);
    }
    batch_.obs.setZero(n, backend_->actor_obs_dim());
    batch_.critic_obs.setZero(n, backend_->critic_obs_dim());
    batch_.final_obs.setZero(n, backend_->actor_obs_dim());
    batch_.final_critic_obs.setZero(n, backend_->critic_obs_dim());
    batch_.reward.setZero(n);
    batch_.tracking.setZero(n);
  }

  static CounterRng& rng(std::vector<CounterRng>& streams, int id) {
    return streams[static_cast<std::size_t>(id)];
  }

  void validate_ids(const std::vector<int>& env_ids) const {
    std::vector<bool> seen(static_cast<std::size_t>(n_), false);
    for (int id : env_ids) {
      if (id < 0 || id >= n_) {
        throw std::out_of_range("env id " + std::to_string(id) +
                                " out of range");
      }
      if (seen[static_cast<std::size_t>(id)]) {
        throw std::invalid_argument("duplicate env id " + std::to_string(id));
      }
      seen[static_cast<std::size_t>(id)] = true;
    }
  }

  void validate_payload(const std::vector<int>& env_ids,
                        const ResetPayload& p) const {
    if (!p.env_ids.empty() && p.env_ids != env_ids) {
      throw std::invalid_argument("payload env_ids differ from reset env_ids");
    }
    for (const auto& [name, values] : p.fields) {
      if (values.rows() != static_cast<Eigen::Index>(env_ids.size())) {
        throw std::invalid_argument("payload field '" + name +
                                    "' leading dimension " +
                                    std::to_string(values.rows()) +
                                    " != len(env_ids) " +
                                    std::to_string(env_ids.size()));
      }
    }
  }

  void log_skip(const std::string& field, std::size_t count) {
    skip_log_.push_back({global_step_, field, count});
  }

  // Applies supported payload fields, then draws a fresh state and command.
  void reset_impl(const std::vector<int>& env_ids, const ResetPayload* payload) {
    if (payload) {
      for (const auto& f : payload->skipped) log_skip(f, env_ids.size());
      for (const auto& [name, values] : payload->fields) {
        if (!capabilities().supports_reset(name)) {
          log_skip(name, env_ids.size());
          continue;
        }
        for (std::size_t i = 0; i < env_ids.size(); ++i) {
          auto& body = body_[static_cast<std::size_t>(env_ids[i])];
          const auto r = static_cast<Eigen::Index>(i);
          if (name == kMassDelta) {
            body.mass = backend_->base_mass() + values(r, 0);
          } else if (name == kComOffset) {
            const auto w = std::min<Eigen::Index>(values.cols(), 2);
            for (Eigen::Index k = 0; k < w; ++k) body.com_offset[k] = values(r, k);
          }
        }
      }
    }
    const int pd = backend_->pos_dim();
    const int vd = backend_->vel_dim();
    const int ad = backend_->action_dim();
    for (int id : env_ids) {
      const auto iu = static_cast<std::size_t>(id);
      backend_->initial_state(rng(init_rng_, id),
                              std::span(pos_).subspan(iu * pd, pd),
                              std::span(vel_).subspan(iu * vd, vd));
      for (int k = 0; k < vd; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        cmd_[iu * vd + ku] = rng(cmd_rng_, id).uniform(task_.command_low[ku],
                                                       task_.command_high[ku]);
      }
      std::fill_n(prev_action_.begin() + static_cast<std::ptrdiff_t>(iu * ad),
                  ad, 0.0);
      ep_step_[iu] = 0;
      write_obs(id);
    }
  }

  void apply_interval_plan() {
    if (!push_due(task_.dr, global_step_)) return;
    std::vector<bool> mask(static_cast<std::size_t>(n_), true);
    auto plan = build_interval_plan(
        task_.dr, global_step_, mask,
        [this](int id) -> CounterRng& { return rng(push_rng_, id); });
    if (plan.empty()) return;
    if (!capabilities().supports_interval(kPushDeltaV)) {
      log_skip(kPushDeltaV, plan.env_ids.size());
      return;
    }
    const int vd = backend_->vel_dim();
    const auto w = std::min<Eigen::Index>(plan.delta_v.cols(), vd);
    for (std::size_t i = 0; i < plan.env_ids.size(); ++i) {
      const auto iu = static_cast<std::size_t>(plan.env_ids[i]);
      for (Eigen::Index k = 0; k < w; ++k) {
        vel_[iu * vd + static_cast<std::size_t>(k)] +=
            plan.delta_v(static_cast<Eigen::Index>(i), k);
      }
      last_push_[iu] = global_step_;
    }
  }

  EnvView view(int i) const {
    const auto iu = static_cast<std::size_t>(i);
    const int pd = backend_->pos_dim();
    const int vd = backend_->vel_dim();
    const int ad = backend_->action_dim();
    return EnvView{std::span<const double>(pos_).subspan(iu * pd, pd),
                   std::span<const double>(vel_).subspan(iu * vd, vd),
                   std::span<const double>(cmd_).subspan(iu * vd, vd),
                   std::span<const double>(prev_action_).subspan(iu * ad, ad),
                   body_[iu]};
  }

  void write_obs(int i) {
    const auto v = view(i);
    backend_->actor_obs(v, std::span(obs_.row(i).data(),
                                     static_cast<std::size_t>(obs_.cols())));
    backend_->critic_obs(
        v, std::span(critic_obs_.row(i).data(),
                     static_cast<std::size_t>(critic_obs_.cols())));
    const double sd = task_.obs_noise_scale * task_.dr.obs_noise_level;
    if (sd > 0) {
      auto& r = rng(noise_rng_, i);
      for (Eigen::Index k = 0; k < obs_.cols(); ++k) obs_(i, k) += sd * r.normal();
    }
  }

  TaskConfig task_;
  int n_ = 0;
  int episode_len_ = 0;
  std::unique_ptr<Backend> backend_;
  std::int64_t global_step_ = 0;

  std::vector<double> pos_, vel_, cmd_, prev_action_;
  std::vector<BodyState> body_;
  std::vector<int> ep_step_;
  std::vector<std::int64_t> last_push_;
  std::vector<CounterRng> init_rng_, cmd_rng_, push_rng_, noise_rng_,
      payload_rng_;
  MatD obs_, critic_obs_;
  StepBatch batch_;
  std::vector<SkipRecord> skip_log_;
};

}  // namespace unilite::env
