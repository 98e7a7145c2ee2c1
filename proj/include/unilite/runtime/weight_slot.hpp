#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <stdexcept>

#include "unilite/trace/tracer.hpp"

namespace unilite::runtime {

template <class Payload>
struct Published {
  std::uint64_t version = 0;
  std::int64_t publish_timestamp = 0;
  Payload payload;
};

// Single-writer, multi-reader latest-value slot. Each publish installs a new
// immutable (version, payload) record; readers hold a shared pointer to a
// complete record, so a read never observes a half-written pair.
template <class Payload>
class WeightSlot {
 public:
  using Record = Published<Payload>;

  // Learner only. Emits learner/weight_sync_write around the full copy.
  std::uint64_t publish(const Payload& payload, trace::Tracer* tracer = nullptr) {
    trace::Span span(tracer, "learner/weight_sync_write");
    auto rec = std::make_shared<Record>();
    rec->payload = payload;
    rec->publish_timestamp = tracer ? tracer->now() : 0;
    std::lock_guard lk(mu_);
    rec->version = latest_ ? latest_->version + 1 : 1;
    span.args()["version"] = rec->version;
    latest_ = std::move(rec);
    return latest_->version;
  }

  // Newest record; never blocks on the learner. Emits collector/weight_read.
  std::shared_ptr<const Record> fetch(trace::Tracer* tracer = nullptr) const {
    trace::Span span(tracer, "collector/weight_read");
    std::shared_ptr<const Record> rec;
    {
      std::lock_guard lk(mu_);
      rec = latest_;
    }
    if (!rec) throw std::logic_error("fetch_weights before the first publish");
    span.args()["version"] = rec->version;
    return rec;
  }

  std::uint64_t version() const {
    std::lock_guard lk(mu_);
    return latest_ ? latest_->version : 0;
  }

 private:
  std::shared_ptr<const Record> latest_;
  mutable std::mutex mu_;
};

}  // namespace unilite::runtime
