#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "unilite/core/error.hpp"
#include "unilite/runtime/run_config.hpp"

namespace unilite::config {

using Json = nlohmann::ordered_json;

// Alternate spellings accepted on input; resolved documents always use the
// canonical name.
inline const std::map<std::string, std::string>& key_aliases() {
  static const std::map<std::string, std::string> m{
      {"num_steps_per_env", "steps_per_env"},
      {"empirical_normalization", "obs_normalization"},
  };
  return m;
}

namespace detail {

inline Json range_json(const env::Range& r) { return Json::array({r.lo, r.hi}); }

inline Json task_json(const env::TaskConfig& t) {
  Json w = Json::object();
  for (const auto& [k, v] : t.reward_weights) w[k] = v;
  const auto& d = t.dr;
  return Json{
      {"dt_sim", t.dt_sim},
      {"decimation", t.decimation},
      {"episode_length_s", t.episode_length_s},
      {"command_low", t.command_low},
      {"command_high", t.command_high},
      {"reward_weights", w},
      {"tracking_sigma", t.tracking_sigma},
      {"termination_speed_max", t.termination_speed_max},
      {"obs_noise_scale", t.obs_noise_scale},
      {"action_scale", t.action_scale},
      {"domain_rand",
       {
           {"randomize_base_mass", d.randomize_base_mass},
           {"added_mass_range", range_json(d.added_mass_range)},
           {"random_com", d.random_com},
           {"com_offset_range", range_json(d.com_offset_range)},
           {"randomize_gravity", d.randomize_gravity},
           {"gravity_range", range_json(d.gravity_range)},
           {"push_enabled", d.push_enabled},
           {"push_interval_steps", d.push_interval_steps},
           {"push_max_delta_v", d.push_max_delta_v},
           {"obs_noise_level", d.obs_noise_level},
       }},
  };
}

inline Json policy_json(std::vector<int> actor, std::vector<int> critic, double noise) {
  return Json{{"actor_hidden_dims", actor},
              {"critic_hidden_dims", critic},
              {"init_noise_std", noise},
              {"output_gain", 0.01}};
}

inline Json runner_json(runtime::Algo algo) {
  return Json{{"task", "pointmass"},
              {"algo", runtime::to_string(algo)},
              {"seed", 1},
              {"deterministic", false},
              {"trace", true},
              {"learner_pad_us", 0.0},
              {"eval_envs", 64},
              {"eval_steps", 250}};
}

inline Json ppo_algorithm_json() {
  const algo::PpoConfig c;
  return Json{{"value_loss_coef", c.value_loss_coef},
              {"use_clipped_value_loss", c.use_clipped_value_loss},
              {"clip_param", c.clip_param},
              {"entropy_coef", c.entropy_coef},
              {"num_learning_epochs", c.epochs},
              {"num_mini_batches", c.minibatches},
              {"learning_rate", c.lr},
              {"schedule", "adaptive"},
              {"gamma", c.gamma},
              {"lam", c.lam},
              {"desired_kl", c.desired_kl},
              {"max_grad_norm", c.max_grad_norm},
              {"adaptive_kl_beta", c.adaptive_kl_beta},
              {"adaptive_lr_growth", c.adaptive_lr_growth},
              {"adaptive_lr_decay", c.adaptive_lr_decay},
              {"adaptive_lr_update_interval", c.adaptive_lr_update_interval}};
}

inline Json appo_algorithm_json() {
  const algo::AppoConfig c;
  return Json{{"num_learning_epochs", c.epochs},
              {"num_mini_batches", c.minibatches},
              {"clip_param", c.clip_param},
              {"gamma", c.gamma},
              {"lam", c.lam},
              {"value_loss_coef", c.value_loss_coef},
              {"entropy_coef", c.entropy_coef},
              {"learning_rate", c.lr},
              {"max_grad_norm", c.max_grad_norm},
              {"use_clipped_value_loss", c.use_clipped_value_loss},
              {"schedule", "adaptive"},
              {"desired_kl", c.desired_kl},
              {"adaptive_kl_factor", c.adaptive_lr_decay},
              {"adaptive_lr_factor", c.adaptive_lr_growth},
              {"adaptive_kl_beta", c.adaptive_kl_beta},
              {"adaptive_lr_update_interval", c.adaptive_lr_update_interval},
              {"vtrace_clip_rho", c.vtrace_clip_rho},
              {"vtrace_clip_c", c.vtrace_clip_c}};
}

inline Json transfer_json() {
  const replay::CostModel c;
  return Json{{"fixed_overhead_us", c.fixed_overhead_us},
              {"us_per_kb", c.us_per_kb},
              {"sync_penalty_multiplier", c.sync_penalty_multiplier}};
}

}  // namespace detail

// Global defaults for one algorithm family, before any task preset.
inline Json algorithm_defaults(runtime::Algo algo) {
  using runtime::Algo;
  Json d = detail::runner_json(algo);
  switch (algo) {
    case Algo::ppo:
      d["num_envs"] = 4096;
      d["steps_per_env"] = 24;
      d["max_iterations"] = 101;
      d["save_interval"] = 100;
      d["obs_normalization"] = false;
      d["policy"] = detail::policy_json({512, 256, 128}, {512, 256, 128}, 1.0);
      d["algorithm"] = detail::ppo_algorithm_json();
      break;
    case Algo::appo:
      d["num_envs"] = 2048;
      d["steps_per_env"] = 24;
      d["max_iterations"] = 150;
      d["save_interval"] = 50;
      d["obs_normalization"] = false;
      d["policy"] = detail::policy_json({512, 256, 128}, {512, 256, 128}, 1.0);
      d["algorithm"] = detail::appo_algorithm_json();
      d["training"] = {{"replay_queue_size", algo::AppoConfig{}.replay_queue_size}};
      break;
    case Algo::sac:
    case Algo::flashsac: {
      const bool flash = algo == Algo::flashsac;
      algo::SacConfig s;
      d["num_envs"] = flash ? 1024 : 4096;
      d["batch_size"] = flash ? 2048 : s.batch_size;
      d["replay_buffer_n"] = 512;
      d["updates_per_step"] = flash ? 2 : s.updates_per_step;
      d["learning_starts"] = flash ? 98 : s.learning_starts;
      d["policy_frequency"] = flash ? 2 : s.policy_frequency;
      d["env_steps_per_sync"] = 1;
      d["max_iterations"] = flash ? 5000 : 500;
      d["save_interval"] = flash ? 1000 : 500;
      d["obs_normalization"] = !flash;
      d["policy"] = flash ? detail::policy_json({128, 128}, {256, 256}, 1.0)
                          : detail::policy_json({512, 512}, {768, 768}, 1.0);
      d["gamma"] = s.gamma;
      d["tau"] = flash ? 0.01 : s.tau;
      d["actor_lr"] = s.actor_lr;
      d["critic_lr"] = s.critic_lr;
      d["algo_params"] = {{"alpha_lr", s.alpha_lr},
                          {"alpha_init", s.alpha_init},
                          {"target_entropy_ratio", s.target_entropy_ratio},
                          {"max_grad_norm", s.max_grad_norm},
                          {"n_step", s.n_step},
                          {"normalize_reward", flash},
                          {"normalized_g_max", s.normalized_g_max}};
      d["variant"] = "baseline";
      d["transfer"] = detail::transfer_json();
      break;
    }
  }
  d["env"] = detail::task_json(env::pointmass_task());
  return d;
}

inline const std::vector<std::string>& task_names() {
  static const std::vector<std::string> v{"pointmass", "pendulum"};
  return v;
}

// Per-task overrides: desk-scale env counts, networks and budgets.
inline Json task_preset(const std::string& task, runtime::Algo algo) {
  using runtime::Algo;
  Json p;
  if (task == "pointmass") {
    p["env"] = detail::task_json(env::pointmass_task());
  } else if (task == "pendulum") {
    p["env"] = detail::task_json(env::pendulum_task());
  } else {
    throw ConfigError("task", "unknown task '" + task + "' (expected pointmass or pendulum)");
  }
  p["task"] = task;
  p["num_envs"] = 256;
  p["policy"] = {{"actor_hidden_dims", {64, 64}}, {"critic_hidden_dims", {64, 64}}};
  switch (algo) {
    case Algo::ppo:
    case Algo::appo:
      p["steps_per_env"] = 24;
      p["max_iterations"] = 150;
      p["save_interval"] = 50;
      p["obs_normalization"] = true;
      break;
    case Algo::sac:
    case Algo::flashsac:
      p["batch_size"] = 512;
      p["max_iterations"] = 3600;
      p["save_interval"] = 1200;
      p["obs_normalization"] = true;
      p["algo_params"] = {{"normalize_reward", true}};
      break;
  }
  return p;
}

inline int edit_distance(const std::string& a, const std::string& b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// Dotted paths of every leaf in `doc` (arrays count as leaves).
inline std::vector<std::string> leaf_keys(const Json& doc, const std::string& prefix = "") {
  std::vector<std::string> out;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string k = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object() && !it->empty()) {
      auto sub = leaf_keys(*it, k);
      out.insert(out.end(), sub.begin(), sub.end());
    } else {
      out.push_back(k);
    }
  }
  return out;
}

inline std::vector<std::string> near_matches(const std::string& key,
                                             const std::vector<std::string>& valid,
                                             std::size_t limit = 3) {
  const auto dot = key.rfind('.');
  const std::string last = dot == std::string::npos ? key : key.substr(dot + 1);
  std::vector<std::tuple<int, int, std::string>> scored;
  for (const auto& v : valid) {
    const auto vd = v.rfind('.');
    const std::string vlast = vd == std::string::npos ? v : v.substr(vd + 1);
    const int d = edit_distance(key, v);
    const int dl = edit_distance(last, vlast);
    const bool contains = !last.empty() && vlast.find(last) != std::string::npos;
    if (contains || dl <= 2 || d <= 3) scored.emplace_back(contains ? 0 : 1, std::min(d, dl), v);
  }
  std::sort(scored.begin(), scored.end());
  std::vector<std::string> out;
  for (const auto& [c, d, v] : scored) {
    if (out.size() == limit) break;
    out.push_back(v);
  }
  return out;
}

inline std::string unknown_key_message(const std::string& key,
                                       const std::vector<std::string>& valid) {
  auto near = near_matches(key, valid);
  std::string msg = "unknown key";
  if (near.empty()) return msg;
  msg += "; did you mean ";
  for (std::size_t i = 0; i < near.size(); ++i) {
    if (i) msg += i + 1 == near.size() ? " or " : ", ";
    msg += near[i];
  }
  return msg + "?";
}

namespace detail {

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline std::string canonical(const std::string& key) {
  auto it = key_aliases().find(key);
  return it == key_aliases().end() ? key : it->second;
}

inline bool is_int(const Json& v) { return v.is_number_integer() || v.is_number_unsigned(); }

// Value with the type of `base`, or ConfigError.
inline Json coerce(const Json& base, const Json& v, const std::string& path) {
  auto bad = [&](const std::string& want) {
    return ConfigError(path, "expected " + want + ", got " + v.dump());
  };
  if (base.is_boolean()) {
    if (!v.is_boolean()) throw bad("a boolean");
    return v;
  }
  if (base.is_string()) {
    if (!v.is_string()) throw bad("a string");
    return v;
  }
  if (is_int(base)) {
    if (is_int(v)) return v;
    if (v.is_number_float() && v.get<double>() == std::floor(v.get<double>())) {
      return Json(static_cast<std::int64_t>(v.get<double>()));
    }
    throw bad("an integer");
  }
  if (base.is_number_float()) {
    if (!v.is_number()) throw bad("a number");
    return Json(v.get<double>());
  }
  if (base.is_array()) {
    if (!v.is_array()) throw bad("an array");
    const bool ints = !base.empty() && std::all_of(base.begin(), base.end(), is_int);
    Json out = Json::array();
    for (const auto& e : v) {
      if (ints) {
        out.push_back(coerce(Json(0), e, path));
      } else {
        out.push_back(coerce(Json(0.0), e, path));
      }
    }
    return out;
  }
  throw bad("an object");
}

// Recursive last-wins merge. Every key of `patch` must already exist in
// `base`; `path` prefixes error messages.
inline void merge_into(Json& base, const Json& patch, const std::string& path,
                       const std::vector<std::string>& all_keys) {
  if (!patch.is_object()) {
    throw ConfigError(path, "expected an object, got " + patch.dump());
  }
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = canonical(it.key());
    const std::string kp = join(path, key);
    if (key != it.key() && patch.contains(key)) {
      throw ConfigError(kp, "given both as '" + it.key() + "' and '" + key + "'");
    }
    if (!base.contains(key)) {
      throw ConfigError(join(path, it.key()), unknown_key_message(join(path, it.key()), all_keys));
    }
    Json& slot = base[key];
    if (slot.is_object()) {
      merge_into(slot, *it, kp, all_keys);
    } else {
      slot = coerce(slot, *it, kp);
    }
  }
}

}  // namespace detail

// Applies `patch` onto a copy of `base`, rejecting keys absent from `base`.
inline Json merge(const Json& base, const Json& patch) {
  Json out = base;
  detail::merge_into(out, patch, "", leaf_keys(base));
  return out;
}

// `dotted=value`; the value is parsed as JSON and falls back to a bare string.
inline Json override_patch(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError(assignment, "expected key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  Json patch = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos;) {
    parts.push_back(rest.substr(0, pos));
    rest = rest.substr(pos + 1);
  }
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    if (it->empty()) throw ConfigError(key, "empty key segment");
    patch = Json{{*it, patch}};
  }
  return patch;
}

inline Json read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file '" + path + "'");
  Json j = Json::parse(in, nullptr, false, true);
  if (j.is_discarded() || !j.is_object()) {
    throw ConfigError("", "config file '" + path + "' is not a JSON object");
  }
  return j;
}

struct ResolveRequest {
  std::optional<std::string> task;  // --task
  std::optional<std::string> algo;  // --algo
  std::optional<Json> file;         // --config
  std::vector<std::string> sets;    // --set, in order
  Json flags = Json::object();      // --seed/--variant/--deterministic, applied last
};

namespace detail {

// Looks for `key` in the later layers first so that algo/task follow the same
// last-wins rule as every other key.
inline std::optional<std::string> pick(const std::string& key, const ResolveRequest& req,
                                       const std::vector<Json>& set_patches) {
  std::optional<std::string> v;
  auto take = [&](const Json& j) {
    if (j.contains(key)) {
      if (!j[key].is_string()) throw ConfigError(key, "expected a string");
      v = j[key].get<std::string>();
    }
  };
  if (req.file) take(*req.file);
  for (const auto& p : set_patches) take(p);
  if (key == "task" && req.task) v = req.task;
  if (key == "algo" && req.algo) v = req.algo;
  return v;
}

}  // namespace detail

// defaults(algo) <- task preset <- user file <- --set ... <- flags.
inline Json resolve(const ResolveRequest& req) {
  std::vector<Json> set_patches;
  for (const auto& s : req.sets) set_patches.push_back(override_patch(s));
  runtime::Algo algo;
  try {
    algo = runtime::parse_algo(detail::pick("algo", req, set_patches).value_or("ppo"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("algo", e.what());
  }
  const std::string task = detail::pick("task", req, set_patches).value_or("pointmass");
  Json doc = merge(algorithm_defaults(algo), task_preset(task, algo));
  if (req.file) doc = merge(doc, *req.file);
  for (const auto& p : set_patches) doc = merge(doc, p);
  doc = merge(doc, req.flags);
  doc["algo"] = runtime::to_string(algo);
  doc["task"] = task;
  return doc;
}

namespace detail {

template <class T>
T get(const Json& doc, const std::string& dotted) {
  const Json* cur = &doc;
  std::string rest = dotted;
  for (;;) {
    const auto dot = rest.find('.');
    const std::string k = rest.substr(0, dot);
    if (!cur->contains(k)) throw ConfigError(dotted, "missing from resolved config");
    cur = &(*cur)[k];
    if (dot == std::string::npos) break;
    rest = rest.substr(dot + 1);
  }
  try {
    return cur->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(dotted, "wrong type: " + cur->dump());
  }
}

inline env::Range get_range(const Json& doc, const std::string& dotted) {
  auto v = get<std::vector<double>>(doc, dotted);
  if (v.size() != 2) throw ConfigError(dotted, "expected [lo, hi]");
  return {v[0], v[1]};
}

inline algo::LrSchedule get_schedule(const Json& doc, const std::string& dotted) {
  const auto s = get<std::string>(doc, dotted);
  if (s == "adaptive") return algo::LrSchedule::adaptive;
  if (s == "fixed") return algo::LrSchedule::fixed;
  throw ConfigError(dotted, "expected 'adaptive' or 'fixed', got '" + s + "'");
}

inline void read_ppo_common(const Json& d, algo::PpoConfig& c) {
  c.value_loss_coef = get<double>(d, "algorithm.value_loss_coef");
  c.use_clipped_value_loss = get<bool>(d, "algorithm.use_clipped_value_loss");
  c.clip_param = get<double>(d, "algorithm.clip_param");
  c.entropy_coef = get<double>(d, "algorithm.entropy_coef");
  c.epochs = get<int>(d, "algorithm.num_learning_epochs");
  c.minibatches = get<int>(d, "algorithm.num_mini_batches");
  c.lr = get<double>(d, "algorithm.learning_rate");
  c.schedule = get_schedule(d, "algorithm.schedule");
  c.gamma = get<double>(d, "algorithm.gamma");
  c.lam = get<double>(d, "algorithm.lam");
  c.desired_kl = get<double>(d, "algorithm.desired_kl");
  c.max_grad_norm = get<double>(d, "algorithm.max_grad_norm");
  c.adaptive_kl_beta = get<double>(d, "algorithm.adaptive_kl_beta");
  c.adaptive_lr_update_interval = get<int>(d, "algorithm.adaptive_lr_update_interval");
}

}  // namespace detail

// Typed view of a resolved document. Validation errors carry the key path when
// one can be attributed.
inline runtime::RunConfig to_run_config(const Json& d) {
  using detail::get;
  using runtime::Algo;
  runtime::RunConfig c;
  try {
    c.algo = runtime::parse_algo(get<std::string>(d, "algo"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("algo", e.what());
  }
  const auto task = get<std::string>(d, "task");
  c.task = task == "pendulum" ? env::pendulum_task() : env::pointmass_task();
  c.backend = task;
  c.seed = get<std::uint64_t>(d, "seed");
  c.deterministic = get<bool>(d, "deterministic");
  c.trace_enabled = get<bool>(d, "trace");
  c.learner_pad_us = get<double>(d, "learner_pad_us");
  c.eval_envs = get<int>(d, "eval_envs");
  c.eval_steps = get<int>(d, "eval_steps");
  c.num_envs = get<int>(d, "num_envs");
  c.max_iterations = get<int>(d, "max_iterations");
  c.save_interval = get<int>(d, "save_interval");
  c.obs_normalization = get<bool>(d, "obs_normalization");
  c.policy.actor_hidden_dims = get<std::vector<int>>(d, "policy.actor_hidden_dims");
  c.policy.critic_hidden_dims = get<std::vector<int>>(d, "policy.critic_hidden_dims");
  c.policy.init_noise_std = get<double>(d, "policy.init_noise_std");
  c.policy.output_gain = get<double>(d, "policy.output_gain");
  for (const auto& key : {"policy.actor_hidden_dims", "policy.critic_hidden_dims"}) {
    for (int h : get<std::vector<int>>(d, key)) {
      if (h < 1) throw ConfigError(key, "hidden sizes must be >= 1");
    }
  }

  auto& t = c.task;
  t.dt_sim = get<double>(d, "env.dt_sim");
  t.decimation = get<int>(d, "env.decimation");
  t.episode_length_s = get<double>(d, "env.episode_length_s");
  t.command_low = get<std::vector<double>>(d, "env.command_low");
  t.command_high = get<std::vector<double>>(d, "env.command_high");
  t.reward_weights = get<std::map<std::string, double>>(d, "env.reward_weights");
  t.tracking_sigma = get<double>(d, "env.tracking_sigma");
  t.termination_speed_max = get<double>(d, "env.termination_speed_max");
  t.obs_noise_scale = get<double>(d, "env.obs_noise_scale");
  t.action_scale = get<double>(d, "env.action_scale");
  auto& r = t.dr;
  r.randomize_base_mass = get<bool>(d, "env.domain_rand.randomize_base_mass");
  r.added_mass_range = detail::get_range(d, "env.domain_rand.added_mass_range");
  r.random_com = get<bool>(d, "env.domain_rand.random_com");
  r.com_offset_range = detail::get_range(d, "env.domain_rand.com_offset_range");
  r.randomize_gravity = get<bool>(d, "env.domain_rand.randomize_gravity");
  r.gravity_range = detail::get_range(d, "env.domain_rand.gravity_range");
  r.push_enabled = get<bool>(d, "env.domain_rand.push_enabled");
  r.push_interval_steps = get<int>(d, "env.domain_rand.push_interval_steps");
  r.push_max_delta_v = get<std::vector<double>>(d, "env.domain_rand.push_max_delta_v");
  r.obs_noise_level = get<double>(d, "env.domain_rand.obs_noise_level");

  switch (c.algo) {
    case Algo::ppo: {
      c.steps_per_env = get<int>(d, "steps_per_env");
      detail::read_ppo_common(d, c.ppo);
      c.ppo.adaptive_lr_growth = get<double>(d, "algorithm.adaptive_lr_growth");
      c.ppo.adaptive_lr_decay = get<double>(d, "algorithm.adaptive_lr_decay");
      break;
    }
    case Algo::appo: {
      c.steps_per_env = get<int>(d, "steps_per_env");
      detail::read_ppo_common(d, c.appo);
      c.appo.adaptive_lr_growth = get<double>(d, "algorithm.adaptive_lr_factor");
      c.appo.adaptive_lr_decay = get<double>(d, "algorithm.adaptive_kl_factor");
      c.appo.vtrace_clip_rho = get<double>(d, "algorithm.vtrace_clip_rho");
      c.appo.vtrace_clip_c = get<double>(d, "algorithm.vtrace_clip_c");
      c.appo.replay_queue_size = get<int>(d, "training.replay_queue_size");
      break;
    }
    case Algo::sac:
    case Algo::flashsac: {
      auto& s = c.sac;
      s.batch_size = get<int>(d, "batch_size");
      c.replay_buffer_n = get<int>(d, "replay_buffer_n");
      s.updates_per_step = get<int>(d, "updates_per_step");
      s.learning_starts = get<int>(d, "learning_starts");
      s.policy_frequency = get<int>(d, "policy_frequency");
      c.env_steps_per_sync = get<int>(d, "env_steps_per_sync");
      s.gamma = get<double>(d, "gamma");
      s.tau = get<double>(d, "tau");
      s.actor_lr = get<double>(d, "actor_lr");
      s.critic_lr = get<double>(d, "critic_lr");
      s.alpha_lr = get<double>(d, "algo_params.alpha_lr");
      s.alpha_init = get<double>(d, "algo_params.alpha_init");
      s.target_entropy_ratio = get<double>(d, "algo_params.target_entropy_ratio");
      s.max_grad_norm = get<double>(d, "algo_params.max_grad_norm");
      s.n_step = get<int>(d, "algo_params.n_step");
      s.normalize_reward = get<bool>(d, "algo_params.normalize_reward");
      s.normalized_g_max = get<double>(d, "algo_params.normalized_g_max");
      try {
        c.variant = replay::parse_variant(get<std::string>(d, "variant"));
      } catch (const std::invalid_argument& e) {
        throw ConfigError("variant", e.what());
      }
      c.transfer_cost.fixed_overhead_us = get<double>(d, "transfer.fixed_overhead_us");
      c.transfer_cost.us_per_kb = get<double>(d, "transfer.us_per_kb");
      c.transfer_cost.sync_penalty_multiplier =
          get<double>(d, "transfer.sync_penalty_multiplier");
      break;
    }
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("", e.what());
  }
  return c;
}

inline std::string dump(const Json& doc) { return doc.dump(2) + "\n"; }

}  // namespace unilite::config
