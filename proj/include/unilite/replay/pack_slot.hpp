#pragma once

#include <array>
#include <cstdint>
#include <mutex>
#include <stdexcept>
#include <string>

#include "unilite/core/tensor.hpp"
#include "unilite/trace/tracer.hpp"

namespace unilite::replay {

enum class SlotState { FREE, PACKING, READY, TRANSFERRING };
enum class MemoryClass { pinned, pageable };

inline const char* to_string(SlotState s) {
  switch (s) {
    case SlotState::FREE: return "FREE";
    case SlotState::PACKING: return "PACKING";
    case SlotState::READY: return "READY";
    case SlotState::TRANSFERRING: return "TRANSFERRING";
  }
  return "?";
}

inline SlotState successor(SlotState s) {
  switch (s) {
    case SlotState::FREE: return SlotState::PACKING;
    case SlotState::PACKING: return SlotState::READY;
    case SlotState::READY: return SlotState::TRANSFERRING;
    case SlotState::TRANSFERRING: return SlotState::FREE;
  }
  return SlotState::FREE;
}

// Host staging buffer cycling FREE -> PACKING -> READY -> TRANSFERRING -> FREE.
class PackSlot {
 public:
  PackSlot(int id, MemoryClass memory_class) : id_(id), memory_class_(memory_class) {}

  int id() const { return id_; }
  MemoryClass memory_class() const { return memory_class_; }

  SlotState state() const {
    std::lock_guard lk(mu_);
    return state_;
  }

  // Moves from `from` to its successor; anything else is a pipeline bug.
  void transition(SlotState from, SlotState to) {
    std::lock_guard lk(mu_);
    if (state_ != from || successor(from) != to) {
      throw std::logic_error("illegal pack slot " + std::to_string(id_) + " transition " +
                             to_string(state_) + " -> " + to_string(to));
    }
    state_ = to;
  }

  Mat<float>& buffer() { return buffer_; }
  const Mat<float>& buffer() const { return buffer_; }
  std::int64_t ready_signal_time() const { return ready_time_; }
  void set_ready_signal_time(std::int64_t t) { ready_time_ = t; }
  std::uint64_t sequence() const { return sequence_; }
  void set_sequence(std::uint64_t s) { sequence_ = s; }

 private:
  int id_;
  MemoryClass memory_class_;
  Mat<float> buffer_;
  SlotState state_ = SlotState::FREE;
  std::int64_t ready_time_ = 0;
  std::uint64_t sequence_ = 0;
  mutable std::mutex mu_;
};

// Fills a FREE slot through `fill(buffer)` and leaves it READY. The whole
// fill is one collector/pack event.
template <class Fill>
void pack_with(PackSlot& slot, trace::Tracer* tracer, Fill&& fill) {
  trace::Span span(tracer, "collector/pack");
  slot.transition(SlotState::FREE, SlotState::PACKING);
  fill(slot.buffer());
  const auto bytes = static_cast<std::uint64_t>(slot.buffer().size()) * sizeof(float);
  span.args()["slot"] = slot.id();
  span.args()["bytes"] = bytes;
  slot.set_ready_signal_time(tracer ? tracer->now() : 0);
  slot.transition(SlotState::PACKING, SlotState::READY);
}

inline void pack(PackSlot& slot, const Mat<float>& rows, trace::Tracer* tracer = nullptr) {
  pack_with(slot, tracer, [&](Mat<float>& buf) { buf = rows; });
}

// The two shared pack slots. At most one is PACKING at a time.
class PackSlotPair {
 public:
  explicit PackSlotPair(MemoryClass memory_class)
      : slots_{PackSlot(0, memory_class), PackSlot(1, memory_class)} {}

  PackSlot& operator[](int i) { return slots_.at(static_cast<std::size_t>(i)); }
  const PackSlot& operator[](int i) const { return slots_.at(static_cast<std::size_t>(i)); }

  // A FREE slot, or nullptr when both are busy.
  PackSlot* free_slot() {
    for (auto& s : slots_) {
      if (s.state() == SlotState::PACKING) {
        throw std::logic_error("pack requested while another pack is in progress");
      }
    }
    for (auto& s : slots_) {
      if (s.state() == SlotState::FREE) return &s;
    }
    return nullptr;
  }

  // Packs into a free slot and tags it with a sequence number. Returns the
  // slot, or nullptr if none was free.
  PackSlot* pack_next(const Mat<float>& rows, trace::Tracer* tracer) {
    std::lock_guard lk(mu_);
    PackSlot* s = free_slot();
    if (!s) return nullptr;
    pack(*s, rows, tracer);
    s->set_sequence(next_sequence_++);
    return s;
  }

 private:
  std::array<PackSlot, 2> slots_;
  std::uint64_t next_sequence_ = 0;
  std::mutex mu_;
};

}  // namespace unilite::replay
