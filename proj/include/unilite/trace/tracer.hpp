#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

namespace unilite::trace {

// Registered event names. Anything else is a programming error.
inline constexpr std::array<std::string_view, 15> kEventNames = {
    "learner/weight_sync_write", "learner/update",
    "learner/replay_sample",     "learner/h2d_wait",
    "learner/gap",               "replay/h2d_lazy_sync",
    "collector/env_step",        "collector/actor_inference",
    "collector/replay_add",      "collector/pack",
    "collector/stall",           "collector/weight_read",
    "transfer/h2d",              "transfer/h2d_submit",
    "signal/ready",
};

// Tracks are roles; the track of an event is its name prefix.
inline constexpr std::array<std::string_view, 5> kTracks = {
    "learner", "collector", "transfer", "replay", "signal"};

inline bool is_registered(std::string_view name) {
  return std::find(kEventNames.begin(), kEventNames.end(), name) !=
         kEventNames.end();
}

inline std::string_view track_of(std::string_view name) {
  return name.substr(0, name.find('/'));
}

// Chrome-trace thread id for a track (1-based, stable).
inline int track_index(std::string_view track) {
  auto it = std::find(kTracks.begin(), kTracks.end(), track);
  if (it == kTracks.end()) {
    throw std::invalid_argument("unknown trace track: " + std::string(track));
  }
  return static_cast<int>(it - kTracks.begin()) + 1;
}

struct TraceEvent {
  std::string track;
  std::string name;
  std::int64_t ts_start = 0;  // ns on the process monotonic clock
  std::int64_t ts_end = 0;
  nlohmann::json args = nlohmann::json::object();

  std::int64_t duration() const { return ts_end - ts_start; }
  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

inline TraceEvent make_event(std::string_view name, std::int64_t start,
                             std::int64_t end,
                             nlohmann::json args = nlohmann::json::object()) {
  if (!is_registered(name)) {
    throw std::invalid_argument("unregistered trace event: " +
                                std::string(name));
  }
  if (end < start) {
    throw std::invalid_argument("trace event ends before it starts: " +
                                std::string(name));
  }
  return TraceEvent{std::string(track_of(name)), std::string(name), start, end,
                    std::move(args)};
}

// Collects events from any role. A disabled tracer still validates names but
// stores nothing.
class Tracer {
 public:
  using Clock = std::chrono::steady_clock;

  explicit Tracer(bool enabled = true)
      : enabled_(enabled), epoch_(Clock::now()) {}

  Tracer(const Tracer&) = delete;
  Tracer& operator=(const Tracer&) = delete;

  bool enabled() const { return enabled_; }

  std::int64_t now() const {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() -
                                                                epoch_)
        .count();
  }

  void record(TraceEvent event) {
    if (!is_registered(event.name)) {
      throw std::invalid_argument("unregistered trace event: " + event.name);
    }
    if (!enabled_) return;
    std::lock_guard lock(mu_);
    events_.push_back(std::move(event));
  }

  void record(std::string_view name, std::int64_t start, std::int64_t end,
              nlohmann::json args = nlohmann::json::object()) {
    record(make_event(name, start, end, std::move(args)));
  }

  std::vector<TraceEvent> snapshot() const {
    std::lock_guard lock(mu_);
    return events_;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return events_.size();
  }

 private:
  bool enabled_;
  Clock::time_point epoch_;
  mutable std::mutex mu_;
  std::vector<TraceEvent> events_;
};

// RAII span. Records on destruction (or on explicit finish()).
class Span {
 public:
  Span(Tracer* tracer, std::string_view name)
      : tracer_(tracer), name_(name), start_(tracer ? tracer->now() : 0) {
    if (!is_registered(name)) {
      throw std::invalid_argument("unregistered trace event: " +
                                  std::string(name));
    }
  }
  Span(const Span&) = delete;
  Span& operator=(const Span&) = delete;
  ~Span() {
    if (!done_) finish();
  }

  nlohmann::json& args() { return args_; }

  // Returns the recorded duration in ns (0 without a tracer).
  std::int64_t finish() {
    done_ = true;
    if (!tracer_) return 0;
    std::int64_t end = tracer_->now();
    if (end == start_) ++end;  // zero-length events are not representable
    tracer_->record(make_event(name_, start_, end, std::move(args_)));
    return end - start_;
  }

  std::int64_t start() const { return start_; }

 private:
  Tracer* tracer_;
  std::string_view name_;
  std::int64_t start_;
  nlohmann::json args_ = nlohmann::json::object();
  bool done_ = false;
};

// True when no two events on the same track overlap in time.
inline bool tracks_are_exclusive(std::vector<TraceEvent> events) {
  std::sort(events.begin(), events.end(), [](const auto& a, const auto& b) {
    return std::tie(a.track, a.ts_start, a.ts_end) <
           std::tie(b.track, b.ts_start, b.ts_end);
  });
  for (std::size_t i = 1; i < events.size(); ++i) {
    if (events[i].track == events[i - 1].track &&
        events[i].ts_start < events[i - 1].ts_end) {
      return false;
    }
  }
  return true;
}

}  // namespace unilite::trace
