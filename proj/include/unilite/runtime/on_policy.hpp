#pragma once

#include <atomic>
#include <exception>
#include <thread>

#include "unilite/algo/ppo.hpp"
#include "unilite/core/rng.hpp"
#include "unilite/env/pool.hpp"
#include "unilite/net/normalizer.hpp"
#include "unilite/runtime/common.hpp"
#include "unilite/runtime/rollout_ring.hpp"
#include "unilite/runtime/weight_slot.hpp"

namespace unilite::runtime {

// What the learner publishes for on-policy collectors.
struct PpoSnapshot {
  algo::ActorCritic<float> ac;
  net::Normalizer obs_norm;
  net::Normalizer critic_norm;
};

struct CollectedSegment {
  algo::RolloutSegment<float> seg;
  Mat<float> raw_obs;         // un-normalized, for the learner's statistics
  Mat<float> raw_critic_obs;
  double mean_reward = 0;
  double mean_tracking = 0;
  double mean_episode_reward = std::nan("");
};

class OnPolicyCollector {
 public:
  explicit OnPolicyCollector(const RunConfig& cfg)
      : cfg_(cfg),
        pool_(env::EnvPool::materialize(cfg.task, cfg.num_envs, cfg.backend, cfg.seed)),
        rng_(cfg.seed, 0, RngPurpose::action),
        episodes_(cfg.num_envs) {}

  const env::EnvPool& pool() const { return pool_; }

  CollectedSegment collect(const PpoSnapshot& snap, std::uint64_t version,
                           std::uint64_t sequence, trace::Tracer* tracer) {
    const int T = cfg_.steps_per_env, B = cfg_.num_envs;
    const int D = pool_.obs_dim(), Dc = pool_.critic_obs_dim(), A = pool_.action_dim();
    CollectedSegment out;
    auto& s = out.seg;
    s.steps = T;
    s.envs = B;
    s.obs.resize(T * B, D);
    s.critic_obs.resize(T * B, Dc);
    s.actions.resize(T * B, A);
    s.behavior_log_prob.resize(T, B);
    s.rewards.resize(T, B);
    s.terminated.resize(T, B);
    s.truncated.resize(T, B);
    s.values.resize(T, B);
    s.truncation_values = Grid<float>::Zero(T, B);
    s.truncation_critic_obs = Mat<float>::Zero(T * B, Dc);
    s.behavior_version = version;
    s.sequence = sequence;
    out.raw_obs.resize(T * B, D);
    out.raw_critic_obs.resize(T * B, Dc);

    double reward_sum = 0, tracking_sum = 0;
    for (int t = 0; t < T; ++t) {
      MatD actions_d;
      {
        trace::Span inf(tracer, "collector/actor_inference");
        const Mat<float> raw = pool_.observations().cast<float>();
        const Mat<float> raw_c = pool_.critic_observations().cast<float>();
        const Mat<float> obs = normalize(snap.obs_norm, raw);
        const Mat<float> cobs = normalize(snap.critic_norm, raw_c);
        const Mat<float> mean = net::forward(snap.ac.actor, obs);
        const auto draw = net::gaussian_sample(mean, snap.ac.actor.log_std, rng_);
        const Mat<float> v = net::forward(snap.ac.critic, cobs);
        s.obs.middleRows(t * B, B) = obs;
        s.critic_obs.middleRows(t * B, B) = cobs;
        s.actions.middleRows(t * B, B) = draw.actions;
        out.raw_obs.middleRows(t * B, B) = raw;
        out.raw_critic_obs.middleRows(t * B, B) = raw_c;
        s.behavior_log_prob.row(t) = draw.log_prob.transpose().array();
        s.values.row(t) = v.col(0).transpose().array();
        actions_d = draw.actions.cast<double>();
      }
      const env::StepBatch* b = nullptr;
      {
        trace::Span step(tracer, "collector/env_step");
        step.args()["envs"] = B;
        b = &pool_.step(actions_d);
      }
      std::vector<int> truncated_ids;
      for (int e = 0; e < B; ++e) {
        const auto eu = static_cast<std::size_t>(e);
        s.rewards(t, e) = static_cast<float>(b->reward(e));
        s.terminated(t, e) = b->terminated[eu] ? 1.f : 0.f;
        s.truncated(t, e) = b->truncated[eu] ? 1.f : 0.f;
        if (b->truncated[eu]) truncated_ids.push_back(e);
      }
      if (!truncated_ids.empty()) {
        trace::Span inf(tracer, "collector/actor_inference");
        Mat<float> fc(static_cast<Eigen::Index>(truncated_ids.size()), Dc);
        for (std::size_t i = 0; i < truncated_ids.size(); ++i) {
          fc.row(static_cast<Eigen::Index>(i)) =
              b->final_critic_obs.row(truncated_ids[i]).cast<float>();
        }
        fc = normalize(snap.critic_norm, fc);
        const Mat<float> tv = net::forward(snap.ac.critic, fc);
        for (std::size_t i = 0; i < truncated_ids.size(); ++i) {
          const int e = truncated_ids[i];
          s.truncation_values(t, e) = tv(static_cast<Eigen::Index>(i), 0);
          s.truncation_critic_obs.row(t * B + e) = fc.row(static_cast<Eigen::Index>(i));
        }
      }
      reward_sum += b->reward.sum();
      tracking_sum += b->tracking.sum();
      episodes_.add(b->reward, [&](std::size_t e) { return b->done(static_cast<Eigen::Index>(e)); });
    }
    {
      trace::Span inf(tracer, "collector/actor_inference");
      const Mat<float> cobs =
          normalize(snap.critic_norm, Mat<float>(pool_.critic_observations().cast<float>()));
      const Mat<float> v = net::forward(snap.ac.critic, cobs);
      s.bootstrap_value = v.col(0);
      s.bootstrap_critic_obs = cobs;
    }
    const double n = static_cast<double>(T) * B;
    out.mean_reward = reward_sum / n;
    out.mean_tracking = tracking_sum / n;
    out.mean_episode_reward = episodes_.take_mean();
    return out;
  }

 private:
  Mat<float> normalize(const net::Normalizer& norm, const Mat<float>& x) const {
    return cfg_.obs_normalization ? norm.apply(x) : x;
  }

  const RunConfig& cfg_;
  env::EnvPool pool_;
  CounterRng rng_;
  EpisodeTracker episodes_;
};

// Owns the trainable actor-critic, its optimizer and observation statistics.
class PpoLearner {
 public:
  PpoLearner(const RunConfig& cfg, int obs_dim, int critic_obs_dim, int action_dim)
      : cfg_(cfg),
        pcfg_(cfg.algo == Algo::appo ? static_cast<const algo::PpoConfig&>(cfg.appo)
                                     : cfg.ppo),
        rng_(cfg.seed, 0, RngPurpose::minibatch),
        obs_norm_(obs_dim),
        critic_norm_(critic_obs_dim) {
    ac_.actor = net::init_params<float>(
        {obs_dim, cfg.policy.actor_hidden_dims, action_dim}, splitmix64(cfg.seed ^ 0xac7u),
        cfg.policy.init_noise_std, cfg.policy.output_gain);
    ac_.critic = net::init_params<float>({critic_obs_dim, cfg.policy.critic_hidden_dims, 1},
                                         splitmix64(cfg.seed ^ 0xc417u));
    opt_ = net::OptState<float>::zeros(ac_.actor.size() + ac_.critic.size(),
                                       static_cast<float>(pcfg_.lr),
                                       static_cast<float>(pcfg_.max_grad_norm));
  }

  PpoSnapshot snapshot() const { return {ac_, obs_norm_, critic_norm_}; }

  algo::UpdateStats update(const CollectedSegment& cs, std::uint64_t learner_version,
                           trace::Tracer* tracer) {
    trace::Span span(tracer, "learner/update");
    algo::UpdateStats st =
        cfg_.algo == Algo::appo
            ? algo::appo_update(ac_, opt_, cs.seg, cfg_.appo, rng_, progress_, learner_version)
            : algo::ppo_update(ac_, opt_, algo::prepare_ppo_batch(cs.seg, pcfg_), pcfg_, rng_,
                               progress_);
    if (cfg_.obs_normalization) {
      obs_norm_.update(cs.raw_obs);
      critic_norm_.update(cs.raw_critic_obs);
    }
    synthetic_pad(cfg_.learner_pad_us, span);
    return st;
  }

  net::Checkpoint<float> checkpoint(std::uint64_t version) const {
    net::Checkpoint<float> ck;
    ck.version = version;
    ck.models["actor"] = ac_.actor;
    ck.models["critic"] = ac_.critic;
    ck.normalizers["obs"] = obs_norm_;
    ck.normalizers["critic_obs"] = critic_norm_;
    return ck;
  }

  EvalResult evaluate() const {
    return evaluate_policy(cfg_, [&](const MatD& obs) {
      Mat<float> x = obs.cast<float>();
      if (cfg_.obs_normalization) x = obs_norm_.apply(x);
      return MatD(net::forward(ac_.actor, x).cast<double>());
    });
  }

 private:
  const RunConfig& cfg_;
  const algo::PpoConfig& pcfg_;
  algo::ActorCritic<float> ac_;
  net::OptState<float> opt_;
  CounterRng rng_;
  algo::PpoProgress progress_;
  net::Normalizer obs_norm_, critic_norm_;
};

inline MetricsRow on_policy_row(int iteration, const RunConfig& cfg,
                                const algo::UpdateStats& st, const CollectedSegment& cs,
                                double wall) {
  MetricsRow row;
  row.iteration = iteration;
  row.env_steps = static_cast<long long>(iteration + 1) * cfg.env_steps_per_cycle();
  row.wall_time = wall;
  row.stats = st;
  row.mean_reward = cs.mean_reward;
  row.mean_episode_reward = cs.mean_episode_reward;
  row.mean_tracking = cs.mean_tracking;
  return row;
}

inline void log_progress(const RunOptions& opts, const MetricsRow& row, int every) {
  if (!opts.log || (row.iteration + 1) % every != 0) return;
  opts.log("iter " + std::to_string(row.iteration + 1) + " env_steps " +
           std::to_string(row.env_steps) + " reward/step " + format_number(row.mean_reward) +
           " tracking " + format_number(row.mean_tracking));
}

// Synchronous PPO: collect with the current weights, update, publish, repeat.
inline RunResult run_ppo_sync(const RunConfig& cfg, const RunOptions& opts = {}) {
  cfg.validate();
  if (cfg.algo != Algo::ppo) throw std::invalid_argument("run_ppo_sync requires algo=ppo");
  trace::Tracer tracer(cfg.trace_enabled);
  WallClock clock;
  OnPolicyCollector collector(cfg);
  const auto& pool = collector.pool();
  PpoLearner learner(cfg, pool.obs_dim(), pool.critic_obs_dim(), pool.action_dim());
  WeightSlot<PpoSnapshot> weights;
  weights.publish(learner.snapshot(), &tracer);

  RunResult res;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    const auto rec = weights.fetch(&tracer);
    const auto cs = collector.collect(rec->payload, rec->version,
                                      static_cast<std::uint64_t>(it), &tracer);
    algo::UpdateStats st;
    try {
      st = learner.update(cs, weights.version(), &tracer);
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string(e.what()) + " (ppo iteration " + std::to_string(it) +
                            ")");
    }
    const auto version = weights.publish(learner.snapshot(), &tracer);
    res.metrics.push_back(on_policy_row(it, cfg, st, cs, clock.seconds()));
    log_progress(opts, res.metrics.back(), 10);
    const bool last = it + 1 == cfg.max_iterations;
    if (checkpoint_due(cfg, opts, it + 1, last)) {
      net::save_checkpoint(learner.checkpoint(version), checkpoint_path(opts.out_dir, it + 1));
    }
  }
  res.report.iterations = cfg.max_iterations;
  res.report.total_env_steps = cfg.max_iterations * cfg.env_steps_per_cycle();
  res.report.eval = learner.evaluate();
  finalize_run(res, cfg, opts, tracer, clock.seconds());
  return res;
}

// APPO: the collector streams segments into a bounded ring while the learner
// drains it; weights are published after every segment update and fetched by
// the collector between segments. In deterministic mode the two roles are
// stepped round-robin on the calling thread.
inline RunResult run_appo(const RunConfig& cfg, const RunOptions& opts = {}) {
  cfg.validate();
  if (cfg.algo != Algo::appo) throw std::invalid_argument("run_appo requires algo=appo");
  trace::Tracer tracer(cfg.trace_enabled);
  WallClock clock;
  OnPolicyCollector collector(cfg);
  const auto& pool = collector.pool();
  PpoLearner learner(cfg, pool.obs_dim(), pool.critic_obs_dim(), pool.action_dim());
  WeightSlot<PpoSnapshot> weights;
  weights.publish(learner.snapshot(), &tracer);
  RolloutRing<CollectedSegment> ring(static_cast<std::size_t>(cfg.appo.replay_queue_size));

  RunResult res;
  std::uint64_t expected_sequence = 0;
  auto consume = [&](const CollectedSegment& cs) {
    if (cs.seg.sequence != expected_sequence) {
      throw std::logic_error("rollout ring delivered segment " +
                             std::to_string(cs.seg.sequence) + ", expected " +
                             std::to_string(expected_sequence));
    }
    const int it = static_cast<int>(expected_sequence++);
    algo::UpdateStats st;
    try {
      st = learner.update(cs, weights.version(), &tracer);
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string(e.what()) + " (appo segment " + std::to_string(it) +
                            ")");
    }
    const auto version = weights.publish(learner.snapshot(), &tracer);
    res.metrics.push_back(on_policy_row(it, cfg, st, cs, clock.seconds()));
    log_progress(opts, res.metrics.back(), 10);
    const bool last = it + 1 == cfg.max_iterations;
    if (checkpoint_due(cfg, opts, it + 1, last)) {
      net::save_checkpoint(learner.checkpoint(version), checkpoint_path(opts.out_dir, it + 1));
    }
  };
  auto produce = [&](std::uint64_t seq) {
    const auto rec = weights.fetch(&tracer);
    return collector.collect(rec->payload, rec->version, seq, &tracer);
  };

  if (cfg.deterministic) {
    std::uint64_t produced = 0;
    while (expected_sequence < static_cast<std::uint64_t>(cfg.max_iterations)) {
      auto seg = ring.try_pop();
      if (produced < static_cast<std::uint64_t>(cfg.max_iterations)) {
        if (!ring.try_push(produce(produced))) {
          throw std::logic_error("deterministic appo: ring unexpectedly full");
        }
        ++produced;
      }
      if (seg) consume(*seg);
    }
  } else {
    std::exception_ptr collector_error;
    std::atomic<bool> stop{false};
    std::thread producer([&] {
      try {
        for (int s = 0; s < cfg.max_iterations && !stop; ++s) {
          auto cs = produce(static_cast<std::uint64_t>(s));
          std::int64_t blocked_at = -1;
          const bool ok = ring.push(std::move(cs), [&] { blocked_at = tracer.now(); });
          if (blocked_at >= 0) {
            tracer.record(trace::make_event("collector/stall", blocked_at,
                                            std::max(tracer.now(), blocked_at + 1)));
          }
          if (!ok) break;
        }
      } catch (...) {
        collector_error = std::current_exception();
      }
      ring.close();
    });
    try {
      while (expected_sequence < static_cast<std::uint64_t>(cfg.max_iterations)) {
        const std::int64_t wait_start = tracer.now();
        const bool empty = ring.size() == 0;
        auto seg = ring.pop();
        if (empty && seg) {
          tracer.record(trace::make_event("learner/gap", wait_start,
                                          std::max(tracer.now(), wait_start + 1)));
        }
        if (!seg) break;
        consume(*seg);
      }
    } catch (...) {
      stop = true;
      ring.close();
      producer.join();
      throw;
    }
    producer.join();
    if (collector_error) std::rethrow_exception(collector_error);
    if (expected_sequence != static_cast<std::uint64_t>(cfg.max_iterations)) {
      throw std::logic_error("appo: ring closed after " + std::to_string(expected_sequence) +
                             " segments");
    }
  }
  res.report.iterations = cfg.max_iterations;
  res.report.total_env_steps = cfg.max_iterations * cfg.env_steps_per_cycle();
  res.report.eval = learner.evaluate();
  finalize_run(res, cfg, opts, tracer, clock.seconds());
  return res;
}

}  // namespace unilite::runtime
