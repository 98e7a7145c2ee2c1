#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "unilite/env/pool.hpp"
#include "unilite/net/checkpoint.hpp"
#include "unilite/runtime/report.hpp"
#include "unilite/runtime/run_config.hpp"
#include "unilite/trace/analysis.hpp"
#include "unilite/trace/chrome.hpp"
#include "unilite/trace/tracer.hpp"

namespace unilite::runtime {

struct RunOptions {
  std::filesystem::path out_dir;  // empty: keep everything in memory
  std::function<void(const std::string&)> log;
};

struct RunResult {
  RunReport report;
  std::vector<MetricsRow> metrics;
  std::vector<trace::TraceEvent> events;
  std::optional<trace::TraceAnalysis> analysis;
  std::map<std::string, std::size_t> arena_footprint;  // sac only
};

// Stands in for device compute the desk-scale learner does not have. Sleeps
// (the calling core stays free for other roles) and labels the span.
inline void synthetic_pad(double pad_us, trace::Span& span) {
  if (pad_us <= 0) return;
  const auto start = std::chrono::steady_clock::now();
  std::this_thread::sleep_until(start + std::chrono::nanoseconds(
                                            static_cast<std::int64_t>(pad_us * 1000.0)));
  const auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                      std::chrono::steady_clock::now() - start)
                      .count();
  span.args()["synthetic_pad_ns"] = ns;
}

class WallClock {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Per-env running episode returns.
class EpisodeTracker {
 public:
  explicit EpisodeTracker(int envs) : ret_(static_cast<std::size_t>(envs), 0.0) {}

  template <class Rewards, class Done>
  void add(const Rewards& reward, const Done& done) {
    for (std::size_t b = 0; b < ret_.size(); ++b) {
      ret_[b] += reward[b];
      if (done(b)) {
        sum_ += ret_[b];
        ++count_;
        ret_[b] = 0;
      }
    }
  }

  // Mean return of episodes finished since the last call (NaN if none).
  double take_mean() {
    const double m = count_ ? sum_ / count_ : std::numeric_limits<double>::quiet_NaN();
    sum_ = 0;
    count_ = 0;
    return m;
  }

 private:
  std::vector<double> ret_;
  double sum_ = 0;
  long long count_ = 0;
};

// Deterministic rollout of a fixed policy on a fresh pool.
template <class Policy>
EvalResult evaluate_policy(const RunConfig& cfg, Policy&& act) {
  auto pool = env::EnvPool::materialize(cfg.task, cfg.eval_envs, cfg.backend,
                                        splitmix64(cfg.seed ^ 0xe7a1u));
  double tracking = 0, reward = 0;
  for (int t = 0; t < cfg.eval_steps; ++t) {
    const MatD actions = act(pool.observations());
    const auto& b = pool.step(actions);
    tracking += b.tracking.mean();
    reward += b.reward.mean();
  }
  return {tracking / cfg.eval_steps, reward / cfg.eval_steps};
}

inline void fill_staleness(RunReport& r, const std::vector<MetricsRow>& rows) {
  double sum = 0, mx = -1;
  int n = 0;
  for (const auto& row : rows) {
    if (std::isnan(row.stats.staleness)) continue;
    sum += row.stats.staleness;
    mx = std::max(mx, row.stats.staleness);
    ++n;
  }
  if (n) {
    r.staleness_mean = sum / n;
    r.staleness_max = mx;
  }
}

inline std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int iteration) {
  return dir / "checkpoints" / ("iter_" + std::to_string(iteration) + ".ckpt");
}

inline bool checkpoint_due(const RunConfig& cfg, const RunOptions& opts, int iteration,
                           bool final) {
  if (opts.out_dir.empty()) return false;
  return final || (cfg.save_interval > 0 && iteration > 0 && iteration % cfg.save_interval == 0);
}

// Fills the report's trace-derived fields and writes metrics.csv, trace.json
// and report.txt when an output directory is set.
inline void finalize_run(RunResult& res, const RunConfig& cfg, const RunOptions& opts,
                         const trace::Tracer& tracer, double wall_s) {
  auto& r = res.report;
  r.algo = cfg.algo;
  r.wall_time_s = wall_s;
  r.env_steps_per_s = wall_s > 0 ? static_cast<double>(r.total_env_steps) / wall_s : 0;
  for (const auto& row : res.metrics) r.reward_curve.push_back(row.mean_reward);
  fill_staleness(r, res.metrics);
  res.events = tracer.snapshot();
  const auto syncs = std::count_if(res.events.begin(), res.events.end(), [](const auto& e) {
    return e.name == "learner/weight_sync_write";
  });
  if (syncs >= trace::kWarmupCycles + 2) {
    res.analysis = trace::analyze(res.events);
    r.retained_cycle_mean_ms = res.analysis->cycles.mean_cycle_ms;
    r.overlap_fraction = res.analysis->cycles.overlap_fraction;
  }
  if (opts.out_dir.empty()) return;
  std::filesystem::create_directories(opts.out_dir);
  r.metrics_path = (opts.out_dir / "metrics.csv").string();
  r.trace_path = (opts.out_dir / "trace.json").string();
  {
    std::ofstream f(r.metrics_path);
    f << format_metrics_csv(res.metrics);
    if (!f) throw std::runtime_error("cannot write " + r.metrics_path);
  }
  trace::export_chrome_json(res.events, r.trace_path);
  std::ofstream f(opts.out_dir / "report.txt");
  f << format_run_report(r, res.analysis);
  if (!f) throw std::runtime_error("cannot write report.txt");
}

}  // namespace unilite::runtime
