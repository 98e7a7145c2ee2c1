#pragma once

#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "unilite/algo/stats.hpp"
#include "unilite/runtime/run_config.hpp"
#include "unilite/trace/analysis.hpp"

namespace unilite::runtime {

struct MetricsRow {
  int iteration = 0;
  long long env_steps = 0;
  double wall_time = 0;
  algo::UpdateStats stats;
  double mean_reward = std::nan("");          // per env step
  double mean_episode_reward = std::nan("");  // episodes finished in this window
  double mean_tracking = std::nan("");
};

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline const char* metrics_header() {
  return "iteration,env_steps,wall_time,policy_loss,value_loss,entropy,kl,lr,"
         "clip_fraction,staleness,q_loss,actor_loss,alpha,alpha_loss,"
         "mean_reward,mean_episode_reward,mean_tracking";
}

inline std::string format_metrics_row(const MetricsRow& r) {
  std::ostringstream os;
  const auto& s = r.stats;
  os << r.iteration << ',' << r.env_steps << ',' << format_number(r.wall_time);
  for (double v : {s.policy_loss, s.value_loss, s.entropy, s.kl, s.lr, s.clip_fraction,
                   s.staleness, s.q_loss, s.actor_loss, s.alpha, s.alpha_loss,
                   r.mean_reward, r.mean_episode_reward, r.mean_tracking}) {
    os << ',' << format_number(v);
  }
  return os.str();
}

inline std::string format_metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = std::string(metrics_header()) + "\n";
  for (const auto& r : rows) out += format_metrics_row(r) + "\n";
  return out;
}

struct EvalResult {
  double mean_tracking = 0;  // tracking kernel per env step
  double mean_reward = 0;    // reward per env step
};

struct RunReport {
  Algo algo = Algo::ppo;
  std::string variant;  // sac only
  int iterations = 0;
  long long total_env_steps = 0;
  double wall_time_s = 0;
  double env_steps_per_s = 0;
  std::optional<double> retained_cycle_mean_ms;
  std::optional<double> overlap_fraction;
  std::vector<double> reward_curve;  // mean per-step reward per metrics row
  double staleness_mean = std::nan("");
  double staleness_max = std::nan("");
  EvalResult eval;
  std::string trace_path;
  std::string metrics_path;
};

inline std::string format_run_report(const RunReport& r,
                                     const std::optional<trace::TraceAnalysis>& analysis) {
  std::ostringstream os;
  os << "algo " << to_string(r.algo) << "\n";
  if (!r.variant.empty()) os << "variant " << r.variant << "\n";
  os << "iterations " << r.iterations << "\n";
  os << "total_env_steps " << r.total_env_steps << "\n";
  os << "wall_time_s " << format_number(r.wall_time_s) << "\n";
  os << "env_steps_per_s " << format_number(r.env_steps_per_s) << "\n";
  os << "retained_cycle_mean_ms "
     << (r.retained_cycle_mean_ms ? format_number(*r.retained_cycle_mean_ms) : "n/a") << "\n";
  os << "overlap_fraction "
     << (r.overlap_fraction ? format_number(*r.overlap_fraction) : "n/a") << "\n";
  os << "staleness_mean " << format_number(r.staleness_mean) << "\n";
  os << "staleness_max " << format_number(r.staleness_max) << "\n";
  os << "eval_mean_tracking " << format_number(r.eval.mean_tracking) << "\n";
  os << "eval_mean_reward " << format_number(r.eval.mean_reward) << "\n";
  if (!r.reward_curve.empty()) {
    os << "reward_first " << format_number(r.reward_curve.front()) << "\n";
    os << "reward_last " << format_number(r.reward_curve.back()) << "\n";
  }
  if (!r.trace_path.empty()) os << "trace " << r.trace_path << "\n";
  if (!r.metrics_path.empty()) os << "metrics " << r.metrics_path << "\n";
  if (analysis) {
    os << "\n" << trace::format_report(*analysis);
  } else {
    os << "\n(trace too short for cycle analysis)\n";
  }
  return os.str();
}

}  // namespace unilite::runtime
