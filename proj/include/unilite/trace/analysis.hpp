#pragma once

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "unilite/trace/tracer.hpp"

namespace unilite::trace {

inline constexpr int kWarmupCycles = 5;
inline constexpr std::string_view kSyncEvent = "learner/weight_sync_write";

// A learner cycle spans (start, end]: end of one weight publication to the end
// of the next.
struct Cycle {
  std::int64_t start = 0;
  std::int64_t end = 0;
  std::int64_t duration() const { return end - start; }
};

inline std::vector<Cycle> segment_cycles(const std::vector<TraceEvent>& events) {
  std::vector<std::int64_t> ends;
  for (const auto& e : events) {
    if (e.name == kSyncEvent) ends.push_back(e.ts_end);
  }
  std::sort(ends.begin(), ends.end());
  if (ends.size() < kWarmupCycles + 2) {
    throw std::runtime_error(
        "too few learner/weight_sync_write events: need at least " +
        std::to_string(kWarmupCycles + 2) + ", found " +
        std::to_string(ends.size()));
  }
  std::vector<Cycle> cycles;
  cycles.reserve(ends.size() - 1);
  for (std::size_t i = 1; i < ends.size(); ++i) {
    cycles.push_back({ends[i - 1], ends[i]});
  }
  return cycles;
}

using Interval = std::pair<std::int64_t, std::int64_t>;

// Sorted, disjoint union of half-open intervals.
inline std::vector<Interval> interval_union(std::vector<Interval> xs) {
  std::sort(xs.begin(), xs.end());
  std::vector<Interval> out;
  for (const auto& iv : xs) {
    if (iv.second <= iv.first) continue;
    if (!out.empty() && iv.first <= out.back().second) {
      out.back().second = std::max(out.back().second, iv.second);
    } else {
      out.push_back(iv);
    }
  }
  return out;
}

inline std::int64_t measure(const std::vector<Interval>& disjoint) {
  std::int64_t total = 0;
  for (const auto& [a, b] : disjoint) total += b - a;
  return total;
}

// Measure of (union of a) ∩ (union of b).
inline std::int64_t intersection_measure(std::vector<Interval> a,
                                         std::vector<Interval> b) {
  const auto ua = interval_union(std::move(a));
  const auto ub = interval_union(std::move(b));
  std::int64_t total = 0;
  std::size_t i = 0, j = 0;
  while (i < ua.size() && j < ub.size()) {
    const auto lo = std::max(ua[i].first, ub[j].first);
    const auto hi = std::min(ua[i].second, ub[j].second);
    if (hi > lo) total += hi - lo;
    if (ua[i].second < ub[j].second) {
      ++i;
    } else {
      ++j;
    }
  }
  return total;
}

// Panel-B component labels and the event names each one sums.
inline const std::vector<std::pair<std::string, std::vector<std::string>>>&
component_groups() {
  static const std::vector<std::pair<std::string, std::vector<std::string>>>
      groups = {
          {"Lrn", {"learner/update"}},
          {"Env", {"collector/env_step"}},
          {"Pack", {"collector/pack"}},
          {"Inf", {"collector/actor_inference"}},
          {"H2D", {"transfer/h2d"}},
          {"Add", {"collector/replay_add"}},
          {"Sync", {"learner/weight_sync_write", "collector/weight_read"}},
      };
  return groups;
}

// Collector activity excludes the stall event: a stalled collector is idle.
inline bool is_collector_active(std::string_view name) {
  return track_of(name) == "collector" && name != "collector/stall";
}

struct CycleRecord {
  double cycle_ms = 0;
  double learner_ms = 0;
  double collector_active_ms = 0;
  double overlap_ms = 0;
  double synthetic_pad_ms = 0;
  std::int64_t env_steps = 0;  // Σ "envs" arg of collector/env_step
  std::map<std::string, double> component_ms;  // Lrn/Env/Pack/...
  std::map<std::string, double> event_ms;      // per registered name
};

struct CycleReport {
  std::vector<CycleRecord> cycles;  // all cycles, warmup included
  int warmup_dropped = kWarmupCycles;
  int retained_count = 0;

  double mean_cycle_ms = 0;
  double mean_learner_ms = 0;
  double mean_collector_active_ms = 0;
  double mean_overlap_ms = 0;
  double mean_env_steps = 0;
  double overlap_fraction = 0;  // Σoverlap / Σcollector_active, retained
  std::map<std::string, double> mean_component_ms;
  std::map<std::string, double> mean_event_ms;

  std::vector<CycleRecord> retained() const {
    return {cycles.begin() + warmup_dropped, cycles.end()};
  }
  double cycle_median_ms() const { return cycle_quantile(0.5); }
  double cycle_p95_ms() const { return cycle_quantile(0.95); }

  // Linear-interpolated quantile of retained cycle durations.
  double cycle_quantile(double q) const {
    std::vector<double> xs;
    for (const auto& c : retained()) xs.push_back(c.cycle_ms);
    if (xs.empty()) return 0;
    std::sort(xs.begin(), xs.end());
    const double pos = q * static_cast<double>(xs.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const auto hi = std::min(lo + 1, xs.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return xs[lo] + (xs[hi] - xs[lo]) * frac;
  }
};

inline constexpr double kNsPerMs = 1e6;

inline CycleReport attribute_cycles(const std::vector<TraceEvent>& events,
                                    const std::vector<Cycle>& cycles) {
  CycleReport report;
  report.cycles.resize(cycles.size());
  std::vector<std::vector<Interval>> learner_iv(cycles.size());
  std::vector<std::vector<Interval>> collector_iv(cycles.size());

  for (const auto& e : events) {
    // Cycles are (start, end]; find the one containing the event's end.
    auto it = std::lower_bound(
        cycles.begin(), cycles.end(), e.ts_end,
        [](const Cycle& c, std::int64_t t) { return c.end < t; });
    if (it == cycles.end() || e.ts_end <= it->start) continue;
    const auto idx = static_cast<std::size_t>(it - cycles.begin());
    auto& rec = report.cycles[idx];
    const double ms = static_cast<double>(e.duration()) / kNsPerMs;
    rec.event_ms[e.name] += ms;
    if (e.name == "learner/update") {
      rec.learner_ms += ms;
      learner_iv[idx].emplace_back(e.ts_start, e.ts_end);
      if (e.args.is_object() && e.args.contains("synthetic_pad_ns")) {
        rec.synthetic_pad_ms +=
            e.args["synthetic_pad_ns"].get<double>() / kNsPerMs;
      }
    }
    if (e.name == "collector/env_step" && e.args.is_object() &&
        e.args.contains("envs")) {
      rec.env_steps += e.args["envs"].get<std::int64_t>();
    }
    if (is_collector_active(e.name)) {
      collector_iv[idx].emplace_back(e.ts_start, e.ts_end);
    }
  }

  for (std::size_t i = 0; i < cycles.size(); ++i) {
    auto& rec = report.cycles[i];
    rec.cycle_ms = static_cast<double>(cycles[i].duration()) / kNsPerMs;
    rec.collector_active_ms =
        static_cast<double>(measure(interval_union(collector_iv[i]))) /
        kNsPerMs;
    rec.overlap_ms =
        static_cast<double>(intersection_measure(learner_iv[i],
                                                 collector_iv[i])) /
        kNsPerMs;
    for (const auto& [label, names] : component_groups()) {
      double sum = 0;
      for (const auto& n : names) {
        auto f = rec.event_ms.find(n);
        if (f != rec.event_ms.end()) sum += f->second;
      }
      rec.component_ms[label] = sum;
    }
  }

  const auto n_retained =
      static_cast<int>(cycles.size()) - report.warmup_dropped;
  report.retained_count = std::max(0, n_retained);
  if (report.retained_count == 0) return report;

  // Sums first, one division at the end.
  std::int64_t env_steps = 0;
  for (const auto& rec : report.retained()) {
    report.mean_cycle_ms += rec.cycle_ms;
    report.mean_learner_ms += rec.learner_ms;
    report.mean_collector_active_ms += rec.collector_active_ms;
    report.mean_overlap_ms += rec.overlap_ms;
    env_steps += rec.env_steps;
    for (const auto& [k, v] : rec.component_ms) report.mean_component_ms[k] += v;
    for (const auto& [k, v] : rec.event_ms) report.mean_event_ms[k] += v;
  }
  report.overlap_fraction = report.mean_collector_active_ms > 0
                                ? report.mean_overlap_ms / report.mean_collector_active_ms
                                : 0;
  const double n = report.retained_count;
  report.mean_cycle_ms /= n;
  report.mean_learner_ms /= n;
  report.mean_collector_active_ms /= n;
  report.mean_overlap_ms /= n;
  report.mean_env_steps = static_cast<double>(env_steps) / n;
  for (auto& [k, v] : report.mean_component_ms) v /= n;
  for (auto& [k, v] : report.mean_event_ms) v /= n;
  return report;
}

struct OverheadReport {
  double data_movement_ms = 0;
  double weight_sync_ms = 0;
  double boundary_wait_ms = 0;
  double counted_total_ms = 0;
  double counted_share_of_cycle = 0;  // fraction, not percent
  double signal_ready_ms = 0;         // context only, not counted
  double mean_cycle_ms = 0;
};

inline const std::vector<std::string>& data_movement_events() {
  static const std::vector<std::string> names = {
      "collector/pack", "transfer/h2d_submit", "transfer/h2d",
      "learner/h2d_wait", "learner/replay_sample"};
  return names;
}
inline const std::vector<std::string>& weight_sync_events() {
  static const std::vector<std::string> names = {"learner/weight_sync_write",
                                                 "collector/weight_read"};
  return names;
}
inline const std::vector<std::string>& boundary_wait_events() {
  static const std::vector<std::string> names = {"collector/stall",
                                                 "learner/gap"};
  return names;
}

inline OverheadReport overhead_report(const CycleReport& cycles) {
  auto group = [&](const std::vector<std::string>& names) {
    double sum = 0;
    for (const auto& n : names) {
      auto it = cycles.mean_event_ms.find(n);
      if (it != cycles.mean_event_ms.end()) sum += it->second;
    }
    return sum;
  };
  OverheadReport r;
  r.data_movement_ms = group(data_movement_events());
  r.weight_sync_ms = group(weight_sync_events());
  r.boundary_wait_ms = group(boundary_wait_events());
  r.counted_total_ms = r.data_movement_ms + r.weight_sync_ms + r.boundary_wait_ms;
  r.signal_ready_ms = group({"signal/ready"});
  r.mean_cycle_ms = cycles.mean_cycle_ms;
  r.counted_share_of_cycle =
      cycles.mean_cycle_ms > 0 ? r.counted_total_ms / cycles.mean_cycle_ms : 0;
  return r;
}

struct TraceAnalysis {
  CycleReport cycles;
  OverheadReport overhead;
};

inline TraceAnalysis analyze(const std::vector<TraceEvent>& events) {
  TraceAnalysis a;
  a.cycles = attribute_cycles(events, segment_cycles(events));
  a.overhead = overhead_report(a.cycles);
  return a;
}

inline std::string format_report(const TraceAnalysis& a) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  const auto& c = a.cycles;
  os << "== learner cycles ==\n";
  os << "cycles_total " << c.cycles.size() << "\n";
  os << "warmup_dropped " << c.warmup_dropped << "\n";
  os << "retained " << c.retained_count << "\n";
  os << "cycle_mean_ms " << c.mean_cycle_ms << "\n";
  os << "cycle_median_ms " << c.cycle_median_ms() << "\n";
  os << "cycle_p95_ms " << c.cycle_p95_ms() << "\n";
  os << "env_steps_per_cycle " << c.mean_env_steps << "\n";
  os << "\n== cycle terms (mean ms per retained cycle) ==\n";
  os << "Cyc " << c.mean_cycle_ms << "\n";
  os << "Lrn " << c.mean_learner_ms << "\n";
  os << "Col " << c.mean_collector_active_ms << "\n";
  os << "Ovl " << c.mean_overlap_ms << "\n";
  os << "overlap_pct_of_collector_active " << 100.0 * c.overlap_fraction
     << "\n";
  os << "\n== components (mean ms per retained cycle) ==\n";
  for (const auto& [label, names] : component_groups()) {
    auto it = c.mean_component_ms.find(label);
    os << label << " " << (it == c.mean_component_ms.end() ? 0.0 : it->second)
       << "\n";
  }
  os << "\n== events (mean ms per retained cycle) ==\n";
  for (const auto& [name, ms] : c.mean_event_ms) {
    os << name << " " << ms << "\n";
  }
  const auto& o = a.overhead;
  os << "\n== counted overhead ==\n";
  os << "data_movement_ms " << o.data_movement_ms << "\n";
  os << "weight_sync_ms " << o.weight_sync_ms << "\n";
  os << "boundary_wait_ms " << o.boundary_wait_ms << "\n";
  os << "counted_total_ms " << o.counted_total_ms << "\n";
  os << "counted_share_pct " << 100.0 * o.counted_share_of_cycle << "\n";
  os << "signal_ready_ms (context, not counted) " << o.signal_ready_ms << "\n";
  os << "\n== paper context (different hardware; not a target) ==\n";
  os << "cycle_mean_ms 136.10, counted_total_ms 15.82, counted_share_pct "
        "11.62, overlap_pct 99.50\n";
  return os.str();
}

inline std::string format_cycle_csv(const CycleReport& c) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6);
  os << "cycle,retained,cycle_ms,learner_ms,collector_active_ms,overlap_ms,env_steps";
  for (const auto& [label, names] : component_groups()) os << "," << label;
  os << "\n";
  for (std::size_t i = 0; i < c.cycles.size(); ++i) {
    const auto& r = c.cycles[i];
    os << i << "," << (static_cast<int>(i) >= c.warmup_dropped ? 1 : 0) << ","
       << r.cycle_ms << "," << r.learner_ms << "," << r.collector_active_ms
       << "," << r.overlap_ms << "," << r.env_steps;
    for (const auto& [label, names] : component_groups()) {
      auto it = r.component_ms.find(label);
      os << "," << (it == r.component_ms.end() ? 0.0 : it->second);
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace unilite::trace
