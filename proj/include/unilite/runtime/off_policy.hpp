#pragma once

#include <atomic>
#include <condition_variable>
#include <exception>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "unilite/algo/nstep.hpp"
#include "unilite/algo/sac.hpp"
#include "unilite/core/error.hpp"
#include "unilite/core/rng.hpp"
#include "unilite/env/pool.hpp"
#include "unilite/net/normalizer.hpp"
#include "unilite/replay/device.hpp"
#include "unilite/replay/pack_slot.hpp"
#include "unilite/replay/storage.hpp"
#include "unilite/replay/variant.hpp"
#include "unilite/runtime/common.hpp"
#include "unilite/runtime/weight_slot.hpp"

namespace unilite::runtime {

struct SacSnapshot {
  net::ModelParams<float> actor;
  net::Normalizer obs_norm;
};

// Replay-based SAC with three roles: collector (acting, env stepping, replay
// inserts, and packing on request), transfer agent (baseline only), and
// learner. Coupling, in collector rounds R and completed learner ticks K:
//   learner tick K may start once R >= K + learning_starts (else learner/gap)
//   collector round r may start once r < K + learning_starts + lead
//     (else collector/stall), lead = 0 for variant C and 1 otherwise.
// One round is env_steps_per_sync vectorized env steps.
class SacPipeline {
 public:
  explicit SacPipeline(const RunConfig& cfg)
      : cfg_(cfg),
        scfg_(cfg.sac),
        tracer_(cfg.trace_enabled),
        pool_(env::EnvPool::materialize(cfg.task, cfg.num_envs, cfg.backend, cfg.seed)),
        layout_{pool_.obs_dim(), pool_.action_dim()},
        storage_(layout_, static_cast<std::size_t>(cfg.replay_buffer_n) *
                              static_cast<std::size_t>(cfg.num_envs)),
        arena_(cfg.transfer_cost),
        batch_rows_(static_cast<Eigen::Index>(cfg.sac.batch_size) * cfg.sac.updates_per_step),
        slots_(arena_, batch_rows_, layout_.width()),
        pinned_(replay::MemoryClass::pinned),
        pageable_(0, replay::MemoryClass::pageable),
        packer_(cfg.num_envs, pool_.obs_dim(), pool_.action_dim(), cfg.sac.n_step,
                static_cast<float>(cfg.sac.gamma)),
        episodes_(cfg.num_envs),
        action_rng_(cfg.seed, 0, RngPurpose::action),
        pack_rng_(cfg.seed, 1, RngPurpose::replay_sample),
        sample_rng_(cfg.seed, 2, RngPurpose::replay_sample),
        update_rng_(cfg.seed, 0, RngPurpose::minibatch),
        obs_norm_(pool_.obs_dim()) {
    if (uses_replay_cache(cfg.variant)) cache_.emplace(arena_, storage_);
    if (cfg.variant == replay::Variant::baseline) {
      agent_ = std::make_unique<replay::TransferAgent>(arena_, slots_, &tracer_,
                                                       !cfg.deterministic);
    }
    if (scfg_.normalize_reward) {
      reward_norm_.emplace(cfg.num_envs, scfg_.gamma, scfg_.normalized_g_max);
    }
    nets_ = algo::make_sac_nets<float>(pool_.obs_dim(), pool_.action_dim(),
                                       cfg.policy.actor_hidden_dims,
                                       cfg.policy.critic_hidden_dims, scfg_,
                                       splitmix64(cfg.seed ^ 0x5acu));
    opts_ = algo::make_sac_opts(nets_, scfg_);
    total_rounds_ = cfg.max_iterations;
    total_ticks_ = std::max(0, cfg.max_iterations - scfg_.learning_starts + 1);
    lead_ = replay::collector_lead(cfg.variant);
  }

  RunResult run(const RunOptions& opts) {
    WallClock clock;
    clock_ = &clock;
    opts_run_ = &opts;
    weights_.publish(snapshot(), &tracer_);
    if (cfg_.deterministic) {
      run_round_robin();
    } else {
      run_threaded();
    }
    if (agent_) agent_->stop();
    RunResult res;
    res.metrics = std::move(rows_);
    res.report.variant = to_string(cfg_.variant);
    res.report.iterations = total_rounds_;
    res.report.total_env_steps = static_cast<long long>(total_rounds_) * cfg_.env_steps_per_cycle();
    res.report.eval = evaluate();
    res.arena_footprint = arena_.footprint();
    if (!opts.out_dir.empty()) {
      save_checkpoint_file(opts, total_ticks_, weights_.version());
    }
    finalize_run(res, cfg_, opts, tracer_, clock.seconds());
    return res;
  }

  const replay::DeviceArena& arena() const { return arena_; }

 private:
  // ---- collector role ----

  void collector_round() {
    const auto rec = weights_.fetch(&tracer_);
    const int B = cfg_.num_envs, A = pool_.action_dim();
    double reward_sum = 0, tracking_sum = 0;
    for (int s = 0; s < cfg_.env_steps_per_sync; ++s) {
      Mat<float> raw = pool_.observations().cast<float>();
      MatD actions_d;
      Mat<float> actions;
      {
        trace::Span inf(&tracer_, "collector/actor_inference");
        const Mat<float> obs = cfg_.obs_normalization ? rec->payload.obs_norm.apply(raw) : raw;
        const auto draw = algo::sac_policy(rec->payload.actor, obs,
                                           algo::standard_normal<float>(B, A, action_rng_));
        actions = draw.actions;
        actions_d = actions.cast<double>();
      }
      const env::StepBatch* b = nullptr;
      {
        trace::Span step(&tracer_, "collector/env_step");
        step.args()["envs"] = B;
        b = &pool_.step(actions_d);
      }
      Mat<float> next = b->obs.cast<float>();
      Vec<float> term(B), trunc(B), done(B);
      for (int e = 0; e < B; ++e) {
        const auto eu = static_cast<std::size_t>(e);
        term(e) = b->terminated[eu] ? 1.f : 0.f;
        trunc(e) = b->truncated[eu] ? 1.f : 0.f;
        done(e) = std::max(term(e), trunc(e));
        if (done(e) != 0.f) next.row(e) = b->final_obs.row(e).cast<float>();
      }
      Vec<float> reward = b->reward.cast<float>();
      if (reward_norm_) reward = reward_norm_->update_apply(reward, done);
      const auto rows = packer_.push(raw, actions, reward, next, term, trunc);
      storage_.insert(replay::pack_rows(layout_, rows), &tracer_);
      reward_sum += b->reward.sum();
      tracking_sum += b->tracking.sum();
      std::lock_guard lk(stats_mu_);
      episodes_.add(b->reward,
                    [&](std::size_t e) { return done(static_cast<Eigen::Index>(e)) != 0.f; });
    }
    std::lock_guard lk(stats_mu_);
    window_reward_ += reward_sum;
    window_tracking_ += tracking_sum;
    window_steps_ += static_cast<double>(cfg_.env_steps_per_sync) * B;
  }

  // With a lead, round k + learning_starts opens once the learner has started
  // tick k's update; without one, once tick k - 1 has finished.
  bool round_allowed_locked(int round) const {
    const int base = lead_ > 0 ? ticks_started_ + lead_ - 1 : ticks_done_;
    return round < total_rounds_ && round < base + scfg_.learning_starts;
  }

  // Baseline: packs the batch for the learner's next tick one tick ahead.
  // Returns true if a batch was packed.
  bool service_pack() {
    if (!agent_) return false;
    {
      std::lock_guard lk(mu_);
      if (rounds_done_ < scfg_.learning_starts || batches_packed_ > ticks_acquired_ ||
          batches_packed_ >= total_ticks_) {
        return false;
      }
    }
    if (agent_->pending() > 0) return false;
    replay::PackSlot* slot = pinned_.free_slot();
    if (!slot) return false;
    replay::pack_with(*slot, &tracer_, [&](Mat<float>& buf) {
      buf = storage_.snapshot_sample(static_cast<std::size_t>(batch_rows_), pack_rng_).rows;
    });
    agent_->submit(*slot);
    std::lock_guard lk(mu_);
    ++batches_packed_;
    return true;
  }

  void collector_loop() {
    for (int r = 0; r < total_rounds_; ++r) {
      std::unique_lock lk(mu_);
      if (!round_allowed_locked(r)) {
        const std::int64_t t0 = tracer_.now();
        const auto deadline = std::chrono::steady_clock::now() + kWatchdog;
        while (!stop_ && !round_allowed_locked(r)) {
          lk.unlock();
          const bool packed = service_pack();
          lk.lock();
          if (packed) continue;
          if (cv_.wait_until(lk, deadline) == std::cv_status::timeout &&
              !round_allowed_locked(r)) {
            throw StallError("collector stalled before round " + std::to_string(r) + "\n" +
                             dump_locked());
          }
        }
        tracer_.record(trace::make_event("collector/stall", t0,
                                         std::max(tracer_.now(), t0 + 1)));
      }
      if (stop_) return;
      lk.unlock();
      collector_round();
      lk.lock();
      ++rounds_done_;
      cv_.notify_all();
      lk.unlock();
      service_pack();
    }
    // Rounds are done; keep packing until the learner has what it needs.
    std::unique_lock lk(mu_);
    while (!stop_ && batches_packed_ < total_ticks_ && agent_) {
      lk.unlock();
      const bool packed = service_pack();
      lk.lock();
      if (!packed) cv_.wait_for(lk, std::chrono::milliseconds(1));
    }
  }

  // ---- learner role ----

  bool tick_ready_locked() const { return rounds_done_ >= ticks_done_ + scfg_.learning_starts; }

  // Fills the hot device batch slot for this tick. Wrapped in
  // learner/replay_sample except for the baseline's boundary wait.
  void acquire_batch(bool deterministic) {
    switch (cfg_.variant) {
      case replay::Variant::C:
      case replay::Variant::B: {
        cache_->lazy_sync_and_gather_into(static_cast<std::size_t>(batch_rows_), sample_rng_,
                                          &tracer_, slots_.hot_buffer());
        break;
      }
      case replay::Variant::A: {
        trace::Span span(&tracer_, "learner/replay_sample");
        using replay::SlotState;
        pageable_.transition(SlotState::FREE, SlotState::PACKING);
        pageable_.buffer() =
            storage_.snapshot_sample(static_cast<std::size_t>(batch_rows_), sample_rng_).rows;
        pageable_.transition(SlotState::PACKING, SlotState::READY);
        pageable_.transition(SlotState::READY, SlotState::TRANSFERRING);
        replay::sync_transfer(arena_, slots_.hot_buffer(), pageable_.buffer(), &tracer_);
        pageable_.transition(SlotState::TRANSFERRING, SlotState::FREE);
        break;
      }
      case replay::Variant::baseline: {
        if (deterministic) {
          if (!slots_.cold_valid()) throw std::logic_error("deterministic tick without batch");
          slots_.acquire(&tracer_, kWatchdog);
        } else {
          try {
            slots_.acquire(&tracer_, kWatchdog);
          } catch (const StallError& e) {
            std::lock_guard lk(mu_);
            throw StallError(std::string(e.what()) + "\n" + dump_locked());
          }
        }
        {
          std::lock_guard lk(mu_);
          ++ticks_acquired_;
        }
        cv_.notify_all();
        agent_->notify();
        trace::Span span(&tracer_, "learner/replay_sample");
        span.args()["slot"] = slots_.hot_index();
        break;
      }
    }
  }

  void learner_tick(int tick, bool deterministic) {
    acquire_batch(deterministic);
    algo::UpdateStats last;
    double q_loss = 0;
    {
      trace::Span span(&tracer_, "learner/update");
      {
        std::lock_guard lk(mu_);
        ++ticks_started_;
      }
      cv_.notify_all();
      auto batch = replay::unpack_rows(layout_, Mat<float>(slots_.hot()));
      if (cfg_.obs_normalization) {
        obs_norm_.update(batch.obs);
        batch.obs = obs_norm_.apply(batch.obs);
        batch.next_obs = obs_norm_.apply(batch.next_obs);
      }
      const Eigen::Index mb = scfg_.batch_size;
      for (int u = 0; u < scfg_.updates_per_step; ++u) {
        try {
          const auto st = algo::sac_update(nets_, opts_, batch.slice(u * mb, mb), scfg_,
                                           update_rng_, progress_);
          q_loss += st.q_loss / scfg_.updates_per_step;
          if (!std::isnan(st.actor_loss)) {
            last.actor_loss = st.actor_loss;
            last.alpha_loss = st.alpha_loss;
          }
          last.alpha = st.alpha;
        } catch (const DivergenceError& e) {
          throw DivergenceError(std::string(e.what()) + " (sac tick " + std::to_string(tick) +
                                ")");
        }
      }
      synthetic_pad(cfg_.learner_pad_us, span);
    }
    last.q_loss = q_loss;
    const auto version = weights_.publish(snapshot(), &tracer_);
    int rounds;
    {
      std::lock_guard lk(mu_);
      ++ticks_done_;
      rounds = rounds_done_;
    }
    cv_.notify_all();
    record_row(tick, rounds, last);
    if (checkpoint_due(cfg_, *opts_run_, tick + 1, false)) {
      save_checkpoint_file(*opts_run_, tick + 1, version);
    }
  }

  void learner_loop() {
    for (int k = 0; k < total_ticks_; ++k) {
      std::unique_lock lk(mu_);
      if (!tick_ready_locked()) {
        const std::int64_t t0 = tracer_.now();
        if (!cv_.wait_for(lk, kWatchdog, [&] { return stop_ || tick_ready_locked(); })) {
          throw StallError("learner made no progress before tick " + std::to_string(k) +
                           "\n" + dump_locked());
        }
        tracer_.record(trace::make_event("learner/gap", t0, std::max(tracer_.now(), t0 + 1)));
      }
      if (stop_) return;
      lk.unlock();
      learner_tick(k, false);
    }
  }

  // ---- scheduling ----

  void run_threaded() {
    std::exception_ptr collector_error;
    std::thread collector([&] {
      try {
        collector_loop();
      } catch (...) {
        collector_error = std::current_exception();
        std::lock_guard lk(mu_);
        stop_ = true;
        cv_.notify_all();
      }
    });
    std::exception_ptr learner_error;
    try {
      learner_loop();
    } catch (...) {
      learner_error = std::current_exception();
    }
    {
      std::lock_guard lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    collector.join();
    if (learner_error) std::rethrow_exception(learner_error);
    if (collector_error) std::rethrow_exception(collector_error);
  }

  // Fixed order per cycle: collector round, pack, transfer, learner tick.
  void run_round_robin() {
    while (ticks_done_ < total_ticks_) {
      bool progressed = false;
      if (round_allowed_locked(rounds_done_)) {
        collector_round();
        ++rounds_done_;
        progressed = true;
      }
      progressed |= service_pack();
      if (agent_) progressed |= agent_->run_pending() > 0;
      if (tick_ready_locked() &&
          (cfg_.variant != replay::Variant::baseline || slots_.cold_valid())) {
        learner_tick(ticks_done_, true);
        progressed = true;
      }
      if (!progressed) {
        throw StallError("round-robin scheduler made no progress\n" + dump_locked());
      }
    }
  }

  std::string dump_locked() const {
    std::ostringstream os;
    os << "pipeline state: variant=" << to_string(cfg_.variant) << " rounds_done=" << rounds_done_
       << "/" << total_rounds_ << " ticks_done=" << ticks_done_ << "/" << total_ticks_
       << " ticks_started=" << ticks_started_ << " ticks_acquired=" << ticks_acquired_
       << " batches_packed=" << batches_packed_
       << " replay_rows=" << storage_.size() << " cold_valid=" << slots_.cold_valid()
       << " hot_slot=" << slots_.hot_index();
    if (agent_) {
      os << " transfer_queue=" << agent_->pending() << " pack_slots=["
         << replay::to_string(pinned_[0].state()) << ","
         << replay::to_string(pinned_[1].state()) << "]";
    }
    return os.str();
  }

  // ---- bookkeeping ----

  SacSnapshot snapshot() const { return {nets_.actor, obs_norm_}; }

  void record_row(int tick, int rounds, const algo::UpdateStats& st) {
    MetricsRow row;
    row.iteration = tick;
    row.env_steps = static_cast<long long>(rounds) * cfg_.env_steps_per_cycle();
    row.wall_time = clock_->seconds();
    row.stats = st;
    {
      std::lock_guard lk(stats_mu_);
      if (window_steps_ > 0) {
        row.mean_reward = window_reward_ / window_steps_;
        row.mean_tracking = window_tracking_ / window_steps_;
      }
      row.mean_episode_reward = episodes_.take_mean();
      window_reward_ = window_tracking_ = window_steps_ = 0;
    }
    rows_.push_back(row);
    if (opts_run_->log && (tick + 1) % 200 == 0) {
      opts_run_->log("tick " + std::to_string(tick + 1) + " env_steps " +
                     std::to_string(row.env_steps) + " reward/step " +
                     format_number(row.mean_reward) + " tracking " +
                     format_number(row.mean_tracking));
    }
  }

  void save_checkpoint_file(const RunOptions& opts, int iteration, std::uint64_t version) const {
    net::Checkpoint<float> ck;
    ck.version = version;
    ck.models["actor"] = nets_.actor;
    ck.models["q1"] = nets_.q1;
    ck.models["q2"] = nets_.q2;
    ck.models["q1_target"] = nets_.q1_targ;
    ck.models["q2_target"] = nets_.q2_targ;
    ck.normalizers["obs"] = obs_norm_;
    net::save_checkpoint(ck, checkpoint_path(opts.out_dir, iteration));
  }

  EvalResult evaluate() const {
    return evaluate_policy(cfg_, [&](const MatD& obs) {
      Mat<float> x = obs.cast<float>();
      if (cfg_.obs_normalization) x = obs_norm_.apply(x);
      return MatD(algo::sac_deterministic_action(nets_.actor, x).cast<double>());
    });
  }

  static constexpr std::chrono::milliseconds kWatchdog{10000};

  const RunConfig& cfg_;
  const algo::SacConfig& scfg_;
  trace::Tracer tracer_;
  env::EnvPool pool_;
  replay::RowLayout layout_;
  replay::ReplayStorage storage_;
  replay::DeviceArena arena_;
  Eigen::Index batch_rows_;
  replay::DeviceBatchSlots slots_;
  std::optional<replay::DeviceReplayCache> cache_;
  replay::PackSlotPair pinned_;
  replay::PackSlot pageable_;
  std::unique_ptr<replay::TransferAgent> agent_;
  algo::NStepPacker<float> packer_;
  std::optional<algo::RewardNormalizer> reward_norm_;
  EpisodeTracker episodes_;
  CounterRng action_rng_, pack_rng_, sample_rng_, update_rng_;

  algo::SacNets<float> nets_;
  algo::SacOpts<float> opts_;
  algo::SacProgress progress_;
  net::Normalizer obs_norm_;
  WeightSlot<SacSnapshot> weights_;

  int total_rounds_ = 0, total_ticks_ = 0, lead_ = 1;
  int rounds_done_ = 0, ticks_done_ = 0, ticks_started_ = 0, ticks_acquired_ = 0,
      batches_packed_ = 0;
  bool stop_ = false;
  mutable std::mutex mu_;
  std::condition_variable cv_;

  std::mutex stats_mu_;
  double window_reward_ = 0, window_tracking_ = 0, window_steps_ = 0;
  std::vector<MetricsRow> rows_;
  WallClock* clock_ = nullptr;
  const RunOptions* opts_run_ = nullptr;
};

inline RunResult run_sac(const RunConfig& cfg, const RunOptions& opts = {}) {
  cfg.validate();
  if (!is_off_policy(cfg.algo)) throw std::invalid_argument("run_sac requires algo=sac|flashsac");
  SacPipeline pipeline(cfg);
  return pipeline.run(opts);
}

}  // namespace unilite::runtime
