#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <deque>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "unilite/core/error.hpp"
#include "unilite/core/rng.hpp"
#include "unilite/replay/pack_slot.hpp"
#include "unilite/replay/storage.hpp"
#include "unilite/trace/tracer.hpp"

namespace unilite::replay {

// Host-to-device cost: fixed + per-KB, multiplied for pageable synchronous copies.
struct CostModel {
  double fixed_overhead_us = 20.0;
  double us_per_kb = 0.01;
  double sync_penalty_multiplier = 3.0;

  std::int64_t modeled_ns(std::size_t bytes, bool pageable_sync) const {
    double us = fixed_overhead_us + us_per_kb * static_cast<double>(bytes) / 1024.0;
    if (pageable_sync) us *= sync_penalty_multiplier;
    return static_cast<std::int64_t>(us * 1000.0);
  }
};

struct TransferTiming {
  std::size_t bytes = 0;
  std::int64_t modeled_ns = 0;
  std::int64_t measured_ns = 0;
};

// Simulated device memory: named allocations tracked in a ledger, and copies
// that take at least the modeled time.
class DeviceArena {
 public:
  explicit DeviceArena(CostModel cost = {}) : cost_(cost) {}

  const CostModel& cost() const { return cost_; }

  float* allocate(const std::string& name, std::size_t bytes) {
    std::lock_guard lk(mu_);
    if (buffers_.count(name)) throw std::logic_error("arena entry exists: " + name);
    auto& buf = buffers_[name];
    buf.resize((bytes + sizeof(float) - 1) / sizeof(float));
    ledger_[name] = bytes;
    return buf.data();
  }

  void release(const std::string& name) {
    std::lock_guard lk(mu_);
    buffers_.erase(name);
    ledger_.erase(name);
  }

  std::map<std::string, std::size_t> footprint() const {
    std::lock_guard lk(mu_);
    return ledger_;
  }

  std::size_t total_bytes() const {
    std::lock_guard lk(mu_);
    std::size_t n = 0;
    for (const auto& [k, v] : ledger_) n += v;
    return n;
  }

  // name=bytes per line.
  std::string dump_ledger() const {
    std::ostringstream os;
    for (const auto& [k, v] : footprint()) os << k << '=' << v << '\n';
    return os.str();
  }

  TransferTiming copy_to_device(float* dst, const float* src, std::size_t bytes,
                                bool pageable_sync) const {
    const auto start = std::chrono::steady_clock::now();
    TransferTiming t{bytes, cost_.modeled_ns(bytes, pageable_sync), 0};
    if (bytes) std::memcpy(dst, src, bytes);
    std::this_thread::sleep_until(start + std::chrono::nanoseconds(t.modeled_ns));
    t.measured_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                        std::chrono::steady_clock::now() - start)
                        .count();
    return t;
  }

 private:
  CostModel cost_;
  std::map<std::string, std::vector<float>> buffers_;
  std::map<std::string, std::size_t> ledger_;
  mutable std::mutex mu_;
};

inline void annotate(trace::Span& span, const TransferTiming& t, const char* mode) {
  span.args()["bytes"] = t.bytes;
  span.args()["modeled_us"] = static_cast<double>(t.modeled_ns) / 1000.0;
  span.args()["measured_us"] = static_cast<double>(t.measured_ns) / 1000.0;
  span.args()["mode"] = mode;
}

// Learner-owned hot/cold device batch slots ("batch_slot_0", "batch_slot_1").
// Transfers write only the cold slot; the learner reads only the hot one.
class DeviceBatchSlots {
 public:
  DeviceBatchSlots(DeviceArena& arena, Eigen::Index rows, Eigen::Index width)
      : rows_(rows), width_(width) {
    const std::size_t bytes = static_cast<std::size_t>(rows * width) * sizeof(float);
    buf_[0] = arena.allocate("batch_slot_0", bytes);
    buf_[1] = arena.allocate("batch_slot_1", bytes);
  }

  Eigen::Index rows() const { return rows_; }
  Eigen::Index width() const { return width_; }
  std::size_t bytes() const { return static_cast<std::size_t>(rows_ * width_) * sizeof(float); }
  int hot_index() const {
    std::lock_guard lk(mu_);
    return hot_;
  }

  Eigen::Map<const Mat<float>> hot() const {
    std::lock_guard lk(mu_);
    return {buf_[hot_], rows_, width_};
  }
  float* hot_buffer() {
    std::lock_guard lk(mu_);
    return buf_[hot_];
  }
  float* cold_buffer() {
    std::lock_guard lk(mu_);
    return buf_[1 - hot_];
  }

  bool cold_valid() const {
    std::lock_guard lk(mu_);
    return cold_valid_;
  }

  void mark_cold_valid(std::int64_t ready_ts) {
    {
      std::lock_guard lk(mu_);
      if (cold_valid_) throw std::logic_error("cold batch slot overwritten while valid");
      cold_valid_ = true;
      ready_ts_ = ready_ts;
    }
    cv_.notify_all();
  }

  // Exchanges roles; the previous hot slot becomes the (invalid) cold one.
  // Returns the time the new hot batch became ready.
  std::int64_t swap() {
    std::lock_guard lk(mu_);
    if (!cold_valid_) throw std::logic_error("swap with invalid cold batch slot");
    hot_ = 1 - hot_;
    cold_valid_ = false;
    return ready_ts_;
  }

  // Learner batch boundary: waits for the cold slot (recorded as
  // learner/h2d_wait), swaps, and records signal/ready from the moment the
  // batch was ready to now.
  void acquire(trace::Tracer* tracer, std::chrono::milliseconds timeout,
               const std::function<void()>& on_wait = {}) {
    if (!cold_valid()) {
      trace::Span wait(tracer, "learner/h2d_wait");
      const auto deadline = std::chrono::steady_clock::now() + timeout;
      std::unique_lock lk(mu_);
      while (!cold_valid_) {
        if (on_wait) {
          lk.unlock();
          on_wait();
          lk.lock();
          continue;
        }
        if (cv_.wait_until(lk, deadline) == std::cv_status::timeout && !cold_valid_) {
          throw StallError("learner waited " + std::to_string(timeout.count()) +
                           " ms for the cold batch slot");
        }
      }
    }
    const std::int64_t ready = swap();
    if (tracer) {
      const std::int64_t now = tracer->now();
      const std::int64_t start = std::min(ready, now);
      tracer->record(trace::make_event("signal/ready", start, std::max(now, start + 1),
                                       {{"slot", hot_index()}}));
    }
  }

 private:
  Eigen::Index rows_, width_;
  float* buf_[2] = {nullptr, nullptr};
  int hot_ = 0;
  bool cold_valid_ = false;
  std::int64_t ready_ts_ = 0;
  mutable std::mutex mu_;
  std::condition_variable cv_;
};

// Moves READY pack slots into the cold device batch slot. Runs on its own
// thread, or inline through run_pending() in deterministic mode.
class TransferAgent {
 public:
  TransferAgent(DeviceArena& arena, DeviceBatchSlots& slots, trace::Tracer* tracer,
                bool threaded, std::size_t queue_capacity = 2)
      : arena_(arena), slots_(slots), tracer_(tracer), capacity_(queue_capacity) {
    if (threaded) worker_ = std::thread([this] { loop(); });
  }

  ~TransferAgent() { stop(); }

  TransferAgent(const TransferAgent&) = delete;
  TransferAgent& operator=(const TransferAgent&) = delete;

  // Async submit of a READY slot; the returned future resolves once the cold
  // slot holds the batch.
  std::shared_future<TransferTiming> submit(PackSlot& slot) {
    if (slot.state() != SlotState::READY) {
      throw std::logic_error("submit_transfer: pack slot " + std::to_string(slot.id()) +
                             " is " + to_string(slot.state()) + ", expected READY");
    }
    std::lock_guard lk(mu_);
    if (queue_.size() >= capacity_) throw std::runtime_error("transfer queue full");
    Job job{&slot, {}};
    auto fut = job.done.get_future().share();
    queue_.push_back(std::move(job));
    cv_.notify_all();
    return fut;
  }

  std::size_t pending() const {
    std::lock_guard lk(mu_);
    return queue_.size();
  }

  // Deterministic mode: performs queued transfers whose cold slot is free.
  std::size_t run_pending() {
    std::size_t n = 0;
    while (true) {
      Job job;
      {
        std::lock_guard lk(mu_);
        if (queue_.empty() || slots_.cold_valid()) return n;
        job = std::move(queue_.front());
        queue_.pop_front();
      }
      execute(job);
      ++n;
    }
  }

  void stop() {
    {
      std::lock_guard lk(mu_);
      stopping_ = true;
    }
    cv_.notify_all();
    if (worker_.joinable()) worker_.join();
  }

  // Wakes the worker after the learner freed the cold slot.
  void notify() { cv_.notify_all(); }

 private:
  struct Job {
    PackSlot* slot = nullptr;
    std::promise<TransferTiming> done;
  };

  void loop() {
    while (true) {
      Job job;
      {
        std::unique_lock lk(mu_);
        cv_.wait_for(lk, std::chrono::milliseconds(5), [&] {
          return stopping_ || (!queue_.empty() && !slots_.cold_valid());
        });
        if (stopping_) return;
        if (queue_.empty() || slots_.cold_valid()) continue;
        job = std::move(queue_.front());
        queue_.pop_front();
      }
      execute(job);
    }
  }

  void execute(Job& job) {
    PackSlot& slot = *job.slot;
    float* dst = nullptr;
    {
      trace::Span submit(tracer_, "transfer/h2d_submit");
      slot.transition(SlotState::READY, SlotState::TRANSFERRING);
      dst = slots_.cold_buffer();
      submit.args()["slot"] = slot.id();
    }
    const Mat<float>& rows = slot.buffer();
    const std::size_t bytes = static_cast<std::size_t>(rows.size()) * sizeof(float);
    if (bytes != slots_.bytes()) {
      job.done.set_exception(std::make_exception_ptr(
          std::logic_error("packed batch does not match device slot size")));
      return;
    }
    TransferTiming t;
    {
      trace::Span h2d(tracer_, "transfer/h2d");
      t = arena_.copy_to_device(dst, rows.data(), bytes,
                                slot.memory_class() == MemoryClass::pageable);
      annotate(h2d, t, "async");
    }
    slot.transition(SlotState::TRANSFERRING, SlotState::FREE);
    slots_.mark_cold_valid(tracer_ ? tracer_->now() : 0);
    job.done.set_value(t);
  }

  DeviceArena& arena_;
  DeviceBatchSlots& slots_;
  trace::Tracer* tracer_;
  std::size_t capacity_;
  std::deque<Job> queue_;
  bool stopping_ = false;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::thread worker_;
};

// Synchronous pageable copy on the caller's timeline (variant A). Emits
// transfer/h2d with mode "sync".
inline TransferTiming sync_transfer(const DeviceArena& arena, float* dst,
                                    const Mat<float>& rows, trace::Tracer* tracer) {
  trace::Span h2d(tracer, "transfer/h2d");
  const auto t = arena.copy_to_device(dst, rows.data(),
                                      static_cast<std::size_t>(rows.size()) * sizeof(float),
                                      true);
  annotate(h2d, t, "sync");
  return t;
}

// Device-resident mirror of the replay ring (variants C and B), refreshed
// lazily by the learner before each gather.
class DeviceReplayCache {
 public:
  DeviceReplayCache(DeviceArena& arena, const ReplayStorage& storage)
      : arena_(arena), storage_(storage),
        width_(storage.layout().width()),
        data_(arena.allocate("replay_cache", storage.capacity() * storage.layout().row_bytes())) {}

  std::uint64_t synced_head() const { return synced_; }

  // Copies rows appended since the last sync. Returns bytes moved.
  std::size_t lazy_sync(trace::Tracer* tracer) {
    const auto [from, to] = storage_.copy_since(synced_, staging_);
    synced_ = to;
    const std::size_t rows = static_cast<std::size_t>(to - from);
    if (rows == 0) return 0;
    const std::size_t cap = storage_.capacity();
    trace::Span span(tracer, "replay/h2d_lazy_sync");
    TransferTiming total;
    std::size_t done = 0;
    while (done < rows) {
      const std::size_t pos = static_cast<std::size_t>((from + done) % cap);
      const std::size_t run = std::min(rows - done, cap - pos);
      const auto t = arena_.copy_to_device(
          data_ + pos * static_cast<std::size_t>(width_),
          staging_.data() + done * static_cast<std::size_t>(width_),
          run * static_cast<std::size_t>(width_) * sizeof(float), false);
      total.bytes += t.bytes;
      total.modeled_ns += t.modeled_ns;
      total.measured_ns += t.measured_ns;
      done += run;
    }
    annotate(span, total, "lazy");
    span.args()["rows"] = rows;
    return total.bytes;
  }

  // Builds a batch from cached rows into `out` (row-major, indices.size()
  // rows); indices must lie in the synced window.
  void gather_into(const std::vector<std::uint64_t>& indices, float* out) const {
    const std::uint64_t cap = storage_.capacity();
    const std::uint64_t oldest = synced_ > cap ? synced_ - cap : 0;
    for (const auto idx : indices) {
      if (idx < oldest || idx >= synced_) {
        throw std::out_of_range("replay cache index " + std::to_string(idx) +
                                " outside synced window");
      }
      out = std::copy_n(data_ + (idx % cap) * static_cast<std::uint64_t>(width_), width_, out);
    }
  }

  Mat<float> gather(const std::vector<std::uint64_t>& indices) const {
    Mat<float> out(static_cast<Eigen::Index>(indices.size()), width_);
    gather_into(indices, out.data());
    return out;
  }

  // learner/replay_sample: sync new rows, draw indices uniformly over the
  // synced window, gather into `out`.
  std::vector<std::uint64_t> lazy_sync_and_gather_into(std::size_t batch, CounterRng& rng,
                                                       trace::Tracer* tracer, float* out) {
    trace::Span span(tracer, "learner/replay_sample");
    lazy_sync(tracer);
    const std::uint64_t cap = storage_.capacity();
    const std::uint64_t n = std::min<std::uint64_t>(synced_, cap);
    if (n == 0) throw std::runtime_error("replay empty");
    std::vector<std::uint64_t> indices(batch);
    for (auto& i : indices) i = synced_ - n + rng.below(n);
    gather_into(indices, out);
    span.args()["rows"] = batch;
    return indices;
  }

  Sample lazy_sync_and_gather(std::size_t batch, CounterRng& rng, trace::Tracer* tracer) {
    Sample s;
    s.rows.resize(static_cast<Eigen::Index>(batch), width_);
    s.indices = lazy_sync_and_gather_into(batch, rng, tracer, s.rows.data());
    return s;
  }

 private:
  DeviceArena& arena_;
  const ReplayStorage& storage_;
  int width_;
  float* data_;
  std::uint64_t synced_ = 0;
  std::vector<float> staging_;
};

}  // namespace unilite::replay
