#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "unilite/config/document.hpp"
#include "unilite/env/pool.hpp"
#include "unilite/replay/device.hpp"
#include "unilite/replay/storage.hpp"
#include "unilite/runtime/off_policy.hpp"
#include "unilite/runtime/on_policy.hpp"
#include "unilite/trace/analysis.hpp"
#include "unilite/trace/chrome.hpp"

namespace unilite::cli {

namespace fs = std::filesystem;
using config::Json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRun = 3;

struct CommonArgs {
  std::optional<std::string> task;
  std::optional<std::string> algo;
  std::optional<std::string> config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> variant;
  bool deterministic = false;
};

inline fs::path output_root() {
  const char* env = std::getenv("UNILITE_OUT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

inline config::ResolveRequest make_request(const CommonArgs& a) {
  config::ResolveRequest r;
  r.task = a.task;
  r.algo = a.algo;
  if (a.config_path) r.file = config::read_file(*a.config_path);
  r.sets = a.sets;
  if (a.seed) r.flags["seed"] = *a.seed;
  if (a.variant) r.flags["variant"] = *a.variant;
  if (a.deterministic) r.flags["deterministic"] = true;
  return r;
}

inline runtime::RunResult dispatch(const runtime::RunConfig& cfg,
                                   const runtime::RunOptions& opts) {
  switch (cfg.algo) {
    case runtime::Algo::ppo: return runtime::run_ppo_sync(cfg, opts);
    case runtime::Algo::appo: return runtime::run_appo(cfg, opts);
    case runtime::Algo::sac:
    case runtime::Algo::flashsac: return runtime::run_sac(cfg, opts);
  }
  throw std::logic_error("unhandled algo");
}

inline void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path().empty() ? fs::path(".") : p.parent_path());
  std::ofstream f(p);
  f << text;
  if (!f) throw std::runtime_error("cannot write " + p.string());
}

// ---- train ----------------------------------------------------------------

inline int cmd_train(const CommonArgs& a, std::ostream& out, std::ostream& err) {
  Json doc;
  runtime::RunConfig cfg;
  try {
    doc = config::resolve(make_request(a));
    cfg = config::to_run_config(doc);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  const fs::path dir =
      a.out ? fs::path(*a.out)
            : output_root() / (doc["task"].get<std::string>() + "_" +
                               doc["algo"].get<std::string>() + "_s" +
                               std::to_string(cfg.seed));
  try {
    write_text(dir / "config.resolved", config::dump(doc));
    runtime::RunOptions opts;
    opts.out_dir = dir;
    opts.log = [&out](const std::string& s) { out << s << "\n"; };
    auto res = dispatch(cfg, opts);
    out << runtime::format_run_report(res.report, res.analysis);
    out << "run directory " << dir.string() << "\n";
  } catch (const std::exception& e) {
    err << "run failed: " << e.what() << "\n";
    return kExitRun;
  }
  return kExitOk;
}

// ---- ablate ---------------------------------------------------------------

struct AblationMatrix {
  std::vector<std::string> variants{"C", "B", "A", "baseline"};
  std::vector<std::uint64_t> seeds{1, 2, 3};

  void validate() const {
    if (variants.empty()) throw ConfigError("variants", "need at least one variant");
    if (seeds.empty()) throw ConfigError("seeds", "need at least one seed");
    for (const auto& v : variants) {
      try {
        replay::parse_variant(v);
      } catch (const std::invalid_argument& e) {
        throw ConfigError("variants", e.what());
      }
    }
  }
};

struct AblationRow {
  std::string variant;
  int runs = 0;
  double wall_mean_s = 0;
  double wall_sd_s = 0;
  double cycle_median_ms = 0;
  double cycle_p95_ms = 0;
  double replay_sample_ms = 0;   // learner/replay_sample mean per cycle
  double boundary_wait_ms = 0;   // collector/stall + learner/gap
  double learner_blocked_ms = 0; // h2d_wait + gap + replay_sample
  double eval_tracking = 0;
  std::map<std::string, std::size_t> footprint;
  std::uint64_t workload_hash = 0;
};

struct AblationReport {
  std::vector<AblationRow> rows;
};

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Everything in the document except the variant under test.
inline std::uint64_t workload_hash(Json doc) {
  doc.erase("variant");
  return fnv1a(doc.dump());
}

inline double sample_sd(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0;
  double m = 0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double ss = 0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

inline double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) return 0;
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const auto hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (xs[hi] - xs[lo]) * (pos - static_cast<double>(lo));
}

inline double event_mean(const trace::TraceAnalysis& a, const std::string& name) {
  auto it = a.cycles.mean_event_ms.find(name);
  return it == a.cycles.mean_event_ms.end() ? 0.0 : it->second;
}

// Runs every (variant, seed) pair on the workload in `base`. With an empty
// `out_root` nothing is written.
inline AblationReport run_ablation(const Json& base, const AblationMatrix& m,
                                   const fs::path& out_root,
                                   const std::function<void(const std::string&)>& log = {}) {
  m.validate();
  AblationReport rep;
  std::map<std::uint64_t, std::uint64_t> hash_by_seed;
  for (const auto& v : m.variants) {
    AblationRow row;
    row.variant = v;
    std::vector<double> walls, cycles;
    for (const auto seed : m.seeds) {
      Json doc = base;
      doc["variant"] = v;
      doc["seed"] = seed;
      const auto h = workload_hash(doc);
      auto [it, fresh] = hash_by_seed.emplace(seed, h);
      if (!fresh && it->second != h) {
        throw std::logic_error("ablation workload differs across variants for seed " +
                               std::to_string(seed));
      }
      const auto cfg = config::to_run_config(doc);
      runtime::RunOptions opts;
      if (!out_root.empty()) {
        opts.out_dir = out_root / v / ("seed_" + std::to_string(seed));
        write_text(opts.out_dir / "config.resolved", config::dump(doc));
      }
      runtime::RunResult res;
      try {
        res = runtime::run_sac(cfg, opts);
      } catch (const std::exception& e) {
        throw std::runtime_error("variant " + v + ", seed " + std::to_string(seed) + ": " +
                                 e.what());
      }
      if (!res.analysis) {
        throw std::runtime_error("variant " + v + ": too few learner cycles to analyze");
      }
      const auto& a = *res.analysis;
      const double n = static_cast<double>(m.seeds.size());
      walls.push_back(res.report.wall_time_s);
      for (const auto& c : a.cycles.retained()) cycles.push_back(c.cycle_ms);
      const double rs = event_mean(a, "learner/replay_sample");
      const double gap = event_mean(a, "learner/gap");
      row.replay_sample_ms += rs / n;
      row.boundary_wait_ms += (event_mean(a, "collector/stall") + gap) / n;
      row.learner_blocked_ms += (event_mean(a, "learner/h2d_wait") + gap + rs) / n;
      row.eval_tracking += res.report.eval.mean_tracking / n;
      if (row.runs == 0) {
        row.footprint = res.arena_footprint;
        row.workload_hash = h;
      } else if (row.footprint != res.arena_footprint) {
        throw std::logic_error("arena footprint differs across seeds for variant " + v);
      }
      ++row.runs;
      if (log) {
        log("variant " + v + " seed " + std::to_string(seed) + " wall_s " +
            runtime::format_number(res.report.wall_time_s));
      }
    }
    for (double w : walls) row.wall_mean_s += w / static_cast<double>(walls.size());
    row.wall_sd_s = sample_sd(walls);
    row.cycle_median_ms = quantile(cycles, 0.5);
    row.cycle_p95_ms = quantile(cycles, 0.95);
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

inline std::string footprint_string(const std::map<std::string, std::size_t>& f) {
  std::string s;
  for (const auto& [k, v] : f) s += (s.empty() ? "" : ";") + k + "=" + std::to_string(v);
  return s;
}

inline std::string format_ablation_csv(const AblationReport& r) {
  std::ostringstream os;
  os << "variant,runs,wall_mean_s,wall_sd_s,cycle_median_ms,cycle_p95_ms,"
        "replay_sample_ms,boundary_wait_ms,learner_blocked_ms,eval_tracking,footprint\n";
  for (const auto& x : r.rows) {
    os << x.variant << "," << x.runs << "," << runtime::format_number(x.wall_mean_s) << ","
       << runtime::format_number(x.wall_sd_s) << ","
       << runtime::format_number(x.cycle_median_ms) << ","
       << runtime::format_number(x.cycle_p95_ms) << ","
       << runtime::format_number(x.replay_sample_ms) << ","
       << runtime::format_number(x.boundary_wait_ms) << ","
       << runtime::format_number(x.learner_blocked_ms) << ","
       << runtime::format_number(x.eval_tracking) << "," << footprint_string(x.footprint)
       << "\n";
  }
  return os.str();
}

inline std::string format_ablation_table(const AblationReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  os << std::left << std::setw(9) << "variant" << std::right << std::setw(5) << "runs"
     << std::setw(20) << "wall_s (mean±sd)" << std::setw(12) << "cyc_med_ms"
     << std::setw(12) << "cyc_p95_ms" << std::setw(12) << "sample_ms" << std::setw(12)
     << "wait_ms" << std::setw(12) << "blocked_ms" << "  footprint\n";
  for (const auto& x : r.rows) {
    std::ostringstream wall;
    wall << std::fixed << std::setprecision(3) << x.wall_mean_s << "±" << x.wall_sd_s;
    os << std::left << std::setw(9) << x.variant << std::right << std::setw(5) << x.runs
       << std::setw(21) << wall.str() << std::setw(12) << x.cycle_median_ms
       << std::setw(12) << x.cycle_p95_ms << std::setw(12) << x.replay_sample_ms
       << std::setw(12) << x.boundary_wait_ms << std::setw(12) << x.learner_blocked_ms
       << "  " << footprint_string(x.footprint) << "\n";
  }
  os << "paper context (different hardware; not a target): learner replay sample "
        "10.19 ms (C) -> 0.35 ms (baseline)\n";
  return os.str();
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, ',')) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

inline int cmd_ablate(CommonArgs a, const std::string& variants, const std::string& seeds,
                      std::ostream& out, std::ostream& err) {
  AblationMatrix m;
  Json base;
  fs::path root;
  try {
    if (!a.algo) a.algo = "sac";
    if (*a.algo != "sac" && *a.algo != "flashsac") {
      throw ConfigError("algo", "ablation needs an off-policy algo (sac or flashsac)");
    }
    if (a.variant) throw ConfigError("variant", "use --variants for ablation");
    if (!variants.empty()) m.variants = split_list(variants);
    if (!seeds.empty()) {
      m.seeds.clear();
      for (const auto& s : split_list(seeds)) {
        try {
          m.seeds.push_back(std::stoull(s));
        } catch (const std::exception&) {
          throw ConfigError("seeds", "not an integer: '" + s + "'");
        }
      }
    }
    m.validate();
    base = config::resolve(make_request(a));
    config::to_run_config(base);
    root = a.out ? fs::path(*a.out) : output_root() / "ablate";
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  try {
    auto rep = run_ablation(base, m, root, [&out](const std::string& s) { out << s << "\n"; });
    const auto table = format_ablation_table(rep);
    write_text(root / "ablation.csv", format_ablation_csv(rep));
    write_text(root / "ablation.txt", table);
    out << table;
  } catch (const std::exception& e) {
    err << "run failed: " << e.what() << "\n";
    return kExitRun;
  }
  return kExitOk;
}

// ---- analyze --------------------------------------------------------------

inline int cmd_analyze(const std::string& trace_path, const std::optional<std::string>& out_dir,
                       std::ostream& out, std::ostream& err) {
  try {
    const auto events = trace::load_chrome_json(trace_path);
    const auto a = trace::analyze(events);
    const auto report = trace::format_report(a);
    out << report;
    if (out_dir) {
      write_text(fs::path(*out_dir) / "analysis.txt", report);
      write_text(fs::path(*out_dir) / "cycles.csv", trace::format_cycle_csv(a.cycles));
    }
  } catch (const std::exception& e) {
    err << "analyze failed: " << e.what() << "\n";
    return kExitRun;
  }
  return kExitOk;
}

// ---- bench ----------------------------------------------------------------

struct EnvBenchRow {
  int num_envs = 0;
  int steps = 0;
  double seconds = 0;
  double env_steps_per_s = 0;
};

inline std::vector<EnvBenchRow> bench_env(const runtime::RunConfig& cfg,
                                          const std::vector<int>& sizes, int steps) {
  std::vector<EnvBenchRow> rows;
  for (int n : sizes) {
    auto pool = env::EnvPool::materialize(cfg.task, n, cfg.backend, cfg.seed);
    CounterRng rng(cfg.seed, static_cast<std::uint64_t>(n), RngPurpose::action);
    MatD act(n, pool.action_dim());
    const auto t0 = std::chrono::steady_clock::now();
    for (int s = 0; s < steps; ++s) {
      for (Eigen::Index i = 0; i < act.size(); ++i) act.data()[i] = rng.uniform(-1, 1);
      pool.step(act);
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rows.push_back({n, steps, secs, secs > 0 ? static_cast<double>(n) * steps / secs : 0});
  }
  return rows;
}

inline std::string format_env_bench_csv(const std::vector<EnvBenchRow>& rows) {
  std::ostringstream os;
  os << "num_envs,steps,seconds,env_steps_per_s\n";
  for (const auto& r : rows) {
    os << r.num_envs << "," << r.steps << "," << runtime::format_number(r.seconds) << ","
       << runtime::format_number(r.env_steps_per_s) << "\n";
  }
  return os.str();
}

struct PlacementBench {
  int ticks = 0;
  double device_gather_ms = 0;  // incremental H2D + device-side sample/gather
  double cpu_presample_ms = 0;  // CPU sample + sampled-batch H2D
  double ratio() const { return device_gather_ms > 0 ? cpu_presample_ms / device_gather_ms : 0; }
};

// Per learner tick: num_envs new rows arrive, then each placement produces one
// batch. Insertion cost is excluded from both.
inline PlacementBench bench_replay_placement(const runtime::RunConfig& cfg, int ticks) {
  auto pool = env::EnvPool::materialize(cfg.task, 1, cfg.backend, cfg.seed);
  const replay::RowLayout layout{pool.obs_dim(), pool.action_dim()};
  const auto cap = static_cast<std::size_t>(cfg.replay_buffer_n) *
                   static_cast<std::size_t>(cfg.num_envs);
  const auto batch = static_cast<std::size_t>(cfg.sac.batch_size);
  replay::ReplayStorage storage(layout, cap);
  replay::DeviceArena arena(cfg.transfer_cost);
  replay::DeviceReplayCache cache(arena, storage);
  float* device_batch = arena.allocate("batch", batch * layout.row_bytes());
  CounterRng fill(cfg.seed, 0, RngPurpose::init_state);
  CounterRng rng_a(cfg.seed, 1, RngPurpose::replay_sample);
  CounterRng rng_b(cfg.seed, 2, RngPurpose::replay_sample);
  Mat<float> rows(cfg.num_envs, layout.width());
  using clock = std::chrono::steady_clock;
  PlacementBench b;
  b.ticks = ticks;
  for (int t = 0; t < ticks; ++t) {
    for (Eigen::Index i = 0; i < rows.size(); ++i) {
      rows.data()[i] = static_cast<float>(fill.uniform(-1, 1));
    }
    storage.insert(rows);
    auto t0 = clock::now();
    cache.lazy_sync_and_gather_into(batch, rng_a, nullptr, device_batch);
    auto t1 = clock::now();
    const auto s = storage.snapshot_sample(batch, rng_b);
    arena.copy_to_device(device_batch, s.rows.data(),
                         static_cast<std::size_t>(s.rows.size()) * sizeof(float), false);
    auto t2 = clock::now();
    b.device_gather_ms += std::chrono::duration<double, std::milli>(t1 - t0).count() / ticks;
    b.cpu_presample_ms += std::chrono::duration<double, std::milli>(t2 - t1).count() / ticks;
  }
  return b;
}

inline std::string format_placement(const PlacementBench& b) {
  std::ostringstream os;
  os << "ticks " << b.ticks << "\n";
  os << "device_gather_ms_per_tick " << runtime::format_number(b.device_gather_ms) << "\n";
  os << "cpu_presample_ms_per_tick " << runtime::format_number(b.cpu_presample_ms) << "\n";
  os << "ratio " << runtime::format_number(b.ratio()) << "\n";
  os << "paper context (different hardware; not a target): 2.05 ms vs 4.81 ms per "
        "learner tick, ratio 2.34x\n";
  return os.str();
}

inline int cmd_bench(const std::string& what, CommonArgs a, const std::string& sizes,
                     int steps, std::ostream& out, std::ostream& err) {
  runtime::RunConfig cfg;
  std::vector<int> ns{64, 256, 1024};
  try {
    if (what == "replay-placement" && !a.algo) a.algo = "sac";
    if (what != "env" && what != "replay-placement") {
      throw ConfigError("", "unknown bench '" + what + "' (expected env or replay-placement)");
    }
    if (what == "replay-placement" && *a.algo != "sac" && *a.algo != "flashsac") {
      throw ConfigError("algo", "replay-placement needs sac or flashsac");
    }
    cfg = config::to_run_config(config::resolve(make_request(a)));
    if (!sizes.empty()) {
      ns.clear();
      for (const auto& s : split_list(sizes)) {
        int v = 0;
        try {
          v = std::stoi(s);
        } catch (const std::exception&) {
        }
        if (v < 1) throw ConfigError("sizes", "not a positive integer: '" + s + "'");
        ns.push_back(v);
      }
    }
    if (steps < 1) throw ConfigError("steps", "must be >= 1");
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  try {
    std::string text, file;
    if (what == "env") {
      text = format_env_bench_csv(bench_env(cfg, ns, steps));
      file = "bench_env.csv";
    } else {
      text = format_placement(bench_replay_placement(cfg, steps));
      file = "bench_replay_placement.txt";
    }
    out << text;
    if (a.out) write_text(fs::path(*a.out) / file, text);
  } catch (const std::exception& e) {
    err << "run failed: " << e.what() << "\n";
    return kExitRun;
  }
  return kExitOk;
}

}  // namespace unilite::cli
