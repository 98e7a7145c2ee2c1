#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace unilite::replay {

// Replay data-path variants, from the device-resident replay (C) to the
// decoupled CPU replay with pinned one-tick-ahead transfers (baseline).
//   C        device replay cache, collector in lock-step with the learner
//   B        device replay cache, free-running collector
//   A        CPU replay, pageable synchronous transfer on the learner path
//   baseline CPU replay, pinned pack slots, async transfer into hot/cold slots
enum class Variant { C, B, A, baseline };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::C: return "C";
    case Variant::B: return "B";
    case Variant::A: return "A";
    case Variant::baseline: return "baseline";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  if (s == "C") return Variant::C;
  if (s == "B") return Variant::B;
  if (s == "A") return Variant::A;
  if (s == "baseline") return Variant::baseline;
  throw std::invalid_argument("unknown variant '" + std::string(s) +
                              "' (expected C, B, A or baseline)");
}

inline bool uses_replay_cache(Variant v) { return v == Variant::C || v == Variant::B; }

// How many learner ticks the collector may run ahead.
inline int collector_lead(Variant v) { return v == Variant::C ? 0 : 1; }

}  // namespace unilite::replay
