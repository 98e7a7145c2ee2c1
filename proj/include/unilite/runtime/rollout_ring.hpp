#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>

#include "unilite/core/error.hpp"

namespace unilite::runtime {

// Bounded FIFO between one producer and one consumer. push blocks while full;
// pop blocks while empty. A wait longer than the watchdog raises StallError.
// close() wakes both sides; pop then drains what is left.
template <class Item>
class RolloutRing {
 public:
  explicit RolloutRing(std::size_t capacity,
                       std::chrono::milliseconds watchdog = std::chrono::seconds(10))
      : capacity_(capacity), watchdog_(watchdog) {
    if (capacity == 0) throw std::invalid_argument("ring capacity must be >= 1");
  }

  std::size_t capacity() const { return capacity_; }

  std::size_t size() const {
    std::lock_guard lk(mu_);
    return items_.size();
  }

  // Returns false if the ring was closed before the item could be queued.
  // `on_block` runs once, before waiting, when the ring is full.
  template <class OnBlock>
  bool push(Item item, OnBlock&& on_block) {
    std::unique_lock lk(mu_);
    if (items_.size() >= capacity_ && !closed_) {
      lk.unlock();
      on_block();
      lk.lock();
    }
    if (!cv_.wait_for(lk, watchdog_,
                      [&] { return closed_ || items_.size() < capacity_; })) {
      throw StallError("rollout ring: producer blocked for " +
                       std::to_string(watchdog_.count()) + " ms with " +
                       std::to_string(items_.size()) + "/" + std::to_string(capacity_) +
                       " segments queued (consumer not draining)");
    }
    if (closed_) return false;
    items_.push_back(std::move(item));
    cv_.notify_all();
    return true;
  }

  bool push(Item item) {
    return push(std::move(item), [] {});
  }

  bool try_push(Item item) {
    std::lock_guard lk(mu_);
    if (closed_ || items_.size() >= capacity_) return false;
    items_.push_back(std::move(item));
    cv_.notify_all();
    return true;
  }

  // Empty optional once closed and drained.
  std::optional<Item> pop() {
    std::unique_lock lk(mu_);
    if (!cv_.wait_for(lk, watchdog_, [&] { return closed_ || !items_.empty(); })) {
      throw StallError("rollout ring: consumer waited " + std::to_string(watchdog_.count()) +
                       " ms on an empty ring (producer stalled)");
    }
    return take_locked();
  }

  std::optional<Item> try_pop() {
    std::lock_guard lk(mu_);
    return take_locked();
  }

  void close() {
    {
      std::lock_guard lk(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

 private:
  std::optional<Item> take_locked() {
    if (items_.empty()) return std::nullopt;
    std::optional<Item> out(std::move(items_.front()));
    items_.pop_front();
    cv_.notify_all();
    return out;
  }

  std::size_t capacity_;
  std::chrono::milliseconds watchdog_;
  std::deque<Item> items_;
  bool closed_ = false;
  mutable std::mutex mu_;
  std::condition_variable cv_;
};

}  // namespace unilite::runtime
