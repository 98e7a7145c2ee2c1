#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "unilite/core/rng.hpp"
#include "unilite/core/tensor.hpp"
#include "unilite/env/task_config.hpp"

namespace unilite::env {

inline constexpr const char* kMassDelta = "mass_delta";
inline constexpr const char* kComOffset = "com_offset";
inline constexpr const char* kGravity = "gravity";
inline constexpr const char* kPushDeltaV = "push_delta_v";

// What a backend can apply. Fixed once the pool is materialized.
struct BackendCapabilities {
  std::set<std::string> supported_reset_fields;
  std::set<std::string> supported_interval_fields;
  int body_dim = 2;  // width of vector-valued body fields (com, push)

  bool supports_reset(const std::string& f) const {
    return supported_reset_fields.contains(f);
  }
  bool supports_interval(const std::string& f) const {
    return supported_interval_fields.contains(f);
  }
};

// Per-env field values for a sparse reset; each array has one row per env id.
struct ResetPayload {
  std::vector<int> env_ids;
  std::map<std::string, MatD> fields;
  // Requested fields the provider left out because the backend lacks them.
  std::vector<std::string> skipped;

  bool empty() const { return fields.empty(); }
};

inline std::vector<std::string> requested_reset_fields(const DRConfig& dr) {
  std::vector<std::string> out;
  if (dr.randomize_base_mass) out.emplace_back(kMassDelta);
  if (dr.random_com) out.emplace_back(kComOffset);
  if (dr.randomize_gravity) out.emplace_back(kGravity);
  return out;
}

// Samples every enabled and supported reset field. `rng_for(env_id)` yields the
// stream owned by that env so envs never consume each other's randomness.
template <class RngFor>
ResetPayload sample_reset_payload(const DRConfig& dr,
                                  const BackendCapabilities& caps,
                                  const std::vector<int>& env_ids,
                                  RngFor&& rng_for) {
  if (env_ids.empty()) throw std::invalid_argument("env_ids is empty");
  ResetPayload p;
  p.env_ids = env_ids;
  const auto n = static_cast<Eigen::Index>(env_ids.size());
  for (const auto& field : requested_reset_fields(dr)) {
    if (!caps.supports_reset(field)) {
      p.skipped.push_back(field);
      continue;
    }
    Range r;
    Eigen::Index width = 1;
    if (field == kMassDelta) {
      r = dr.added_mass_range;
    } else if (field == kComOffset) {
      r = dr.com_offset_range;
      width = caps.body_dim;
    } else {
      r = dr.gravity_range;
    }
    MatD values(n, width);
    for (Eigen::Index i = 0; i < n; ++i) {
      CounterRng& rng = rng_for(env_ids[static_cast<std::size_t>(i)]);
      for (Eigen::Index k = 0; k < width; ++k) {
        values(i, k) = r.lo == r.hi ? r.lo : rng.uniform(r.lo, r.hi);
      }
    }
    p.fields.emplace(field, std::move(values));
  }
  return p;
}

inline ResetPayload sample_reset_payload(const DRConfig& dr,
                                         const BackendCapabilities& caps,
                                         const std::vector<int>& env_ids,
                                         CounterRng& rng) {
  return sample_reset_payload(dr, caps, env_ids,
                              [&rng](int) -> CounterRng& { return rng; });
}

struct PushPlan {
  std::vector<int> env_ids;
  MatD delta_v;  // rows match env_ids
  bool empty() const { return env_ids.empty(); }
};

inline bool push_due(const DRConfig& dr, std::int64_t global_step) {
  if (global_step < 0) throw std::invalid_argument("global_step must be >= 0");
  return dr.push_enabled && global_step % dr.push_interval_steps == 0;
}

// Velocity kicks for the masked envs when the interval gate opens.
template <class RngFor>
PushPlan build_interval_plan(const DRConfig& dr, std::int64_t global_step,
                             const std::vector<bool>& env_mask,
                             RngFor&& rng_for) {
  PushPlan plan;
  if (!push_due(dr, global_step)) return plan;
  for (std::size_t i = 0; i < env_mask.size(); ++i) {
    if (env_mask[i]) plan.env_ids.push_back(static_cast<int>(i));
  }
  const auto width = static_cast<Eigen::Index>(dr.push_max_delta_v.size());
  plan.delta_v.resize(static_cast<Eigen::Index>(plan.env_ids.size()), width);
  for (std::size_t i = 0; i < plan.env_ids.size(); ++i) {
    CounterRng& rng = rng_for(plan.env_ids[i]);
    for (Eigen::Index k = 0; k < width; ++k) {
      const double m = dr.push_max_delta_v[static_cast<std::size_t>(k)];
      plan.delta_v(static_cast<Eigen::Index>(i), k) = rng.uniform(-m, m);
    }
  }
  return plan;
}

inline PushPlan build_interval_plan(const DRConfig& dr,
                                    std::int64_t global_step,
                                    const std::vector<bool>& env_mask,
                                    CounterRng& rng) {
  return build_interval_plan(dr, global_step, env_mask,
                             [&rng](int) -> CounterRng& { return rng; });
}

// One dropped field at one reset or interval application.
struct SkipRecord {
  std::int64_t global_step = 0;
  std::string field;
  std::size_t env_count = 0;
};

}  // namespace unilite::env
