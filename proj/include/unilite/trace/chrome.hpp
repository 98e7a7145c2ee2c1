#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "unilite/trace/tracer.hpp"

namespace unilite::trace {

// Chrome trace-event array of complete ("X") events. Timestamps are written in
// microseconds with nanosecond fractions, so parsing recovers the exact ns.
inline nlohmann::json to_chrome_json(const std::vector<TraceEvent>& events) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : events) {
    nlohmann::json j;
    j["name"] = e.name;
    j["ph"] = "X";
    j["ts"] = static_cast<double>(e.ts_start) / 1000.0;
    j["dur"] = static_cast<double>(e.ts_end - e.ts_start) / 1000.0;
    j["pid"] = 1;
    j["tid"] = track_index(e.track);
    j["args"] = e.args.is_null() ? nlohmann::json::object() : e.args;
    out.push_back(std::move(j));
  }
  return out;
}

inline std::string dump_chrome_json(const std::vector<TraceEvent>& events) {
  return to_chrome_json(events).dump();
}

inline void export_chrome_json(const std::vector<TraceEvent>& events,
                               const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw std::runtime_error("cannot write trace file: " + path.string());
  }
  os << dump_chrome_json(events);
  if (!os) {
    throw std::runtime_error("failed writing trace file: " + path.string());
  }
}

namespace detail {

inline std::int64_t us_to_ns(const nlohmann::json& v, const char* field) {
  if (!v.is_number()) {
    throw std::runtime_error(std::string("trace event field '") + field +
                             "' is not a number");
  }
  return std::llround(v.get<double>() * 1000.0);
}

}  // namespace detail

inline std::vector<TraceEvent> parse_chrome_json(const nlohmann::json& doc) {
  const nlohmann::json* list = &doc;
  if (doc.is_object() && doc.contains("traceEvents")) {
    list = &doc["traceEvents"];
  }
  if (!list->is_array()) {
    throw std::runtime_error("trace document is not an event array");
  }
  std::vector<TraceEvent> events;
  events.reserve(list->size());
  for (const auto& j : *list) {
    if (!j.is_object() || !j.contains("name") || !j.contains("ph") ||
        !j.contains("ts") || !j.contains("dur")) {
      throw std::runtime_error("malformed trace event");
    }
    if (j["ph"] != "X") {
      throw std::runtime_error("only complete (X) events are supported");
    }
    const auto name = j["name"].get<std::string>();
    const std::int64_t start = detail::us_to_ns(j["ts"], "ts");
    const std::int64_t dur = detail::us_to_ns(j["dur"], "dur");
    nlohmann::json args = j.contains("args") ? j["args"] : nlohmann::json::object();
    events.push_back(make_event(name, start, start + dur, std::move(args)));
  }
  return events;
}

inline std::vector<TraceEvent> load_chrome_json(
    const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read trace file: " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed trace file " + path.string() + ": " +
                             e.what());
  }
  return parse_chrome_json(doc);
}

}  // namespace unilite::trace
