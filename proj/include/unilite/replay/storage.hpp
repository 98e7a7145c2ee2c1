#pragma once

#include <algorithm>
#include <cstdint>
#include <utility>
#include <mutex>
#include <stdexcept>
#include <vector>

#include "unilite/algo/nstep.hpp"
#include "unilite/algo/sac.hpp"
#include "unilite/core/rng.hpp"
#include "unilite/core/tensor.hpp"
#include "unilite/trace/tracer.hpp"

namespace unilite::replay {

// Contiguous float row: [obs | action | reward | next_obs | terminated | n_used].
struct RowLayout {
  int obs_dim = 0;
  int action_dim = 0;

  int width() const { return 2 * obs_dim + action_dim + 3; }
  std::size_t row_bytes() const { return static_cast<std::size_t>(width()) * sizeof(float); }
  int action_offset() const { return obs_dim; }
  int reward_offset() const { return obs_dim + action_dim; }
  int next_obs_offset() const { return obs_dim + action_dim + 1; }
  int terminated_offset() const { return 2 * obs_dim + action_dim + 1; }
  int n_used_offset() const { return 2 * obs_dim + action_dim + 2; }
};

inline Mat<float> pack_rows(const RowLayout& l, const algo::TransitionRows<float>& t) {
  Mat<float> rows(t.size(), l.width());
  rows.leftCols(l.obs_dim) = t.obs;
  rows.middleCols(l.action_offset(), l.action_dim) = t.action;
  rows.col(l.reward_offset()) = t.reward;
  rows.middleCols(l.next_obs_offset(), l.obs_dim) = t.next_obs;
  rows.col(l.terminated_offset()) = t.terminated;
  rows.col(l.n_used_offset()) = t.n_used;
  return rows;
}

inline algo::SacBatch<float> unpack_rows(const RowLayout& l, const Mat<float>& rows) {
  if (rows.cols() != l.width()) throw std::invalid_argument("row width mismatch");
  return {rows.leftCols(l.obs_dim),
          rows.middleCols(l.action_offset(), l.action_dim),
          rows.col(l.reward_offset()),
          rows.middleCols(l.next_obs_offset(), l.obs_dim),
          rows.col(l.terminated_offset()),
          rows.col(l.n_used_offset())};
}

// Sampled rows plus the logical indices they came from.
struct Sample {
  std::vector<std::uint64_t> indices;
  Mat<float> rows;
};

// Ring of rows addressed by a monotone logical index. Logical rows
// [write_head - size, write_head) are readable; row i lives at i % capacity.
class ReplayStorage {
 public:
  ReplayStorage(RowLayout layout, std::size_t capacity_rows)
      : layout_(layout), capacity_(capacity_rows),
        data_(capacity_rows * static_cast<std::size_t>(layout.width())) {
    if (capacity_rows == 0) throw std::invalid_argument("replay capacity must be > 0");
  }

  const RowLayout& layout() const { return layout_; }
  std::size_t capacity() const { return capacity_; }

  std::uint64_t write_head() const {
    std::lock_guard lk(mu_);
    return head_;
  }

  std::size_t size() const {
    std::lock_guard lk(mu_);
    return size_locked();
  }

  void insert(const Mat<float>& rows, trace::Tracer* tracer = nullptr) {
    if (rows.cols() != layout_.width()) {
      throw std::invalid_argument("replay insert: row width " + std::to_string(rows.cols()) +
                                  ", expected " + std::to_string(layout_.width()));
    }
    trace::Span span(tracer, "collector/replay_add");
    span.args()["rows"] = rows.rows();
    std::lock_guard lk(mu_);
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
      std::copy_n(rows.row(r).data(), layout_.width(), slot(head_));
      ++head_;
    }
  }

  // Uniform with replacement over the rows valid at the instant of the call;
  // rows are copied before returning.
  Sample snapshot_sample(std::size_t batch, CounterRng& rng) const {
    std::lock_guard lk(mu_);
    Sample s;
    s.indices = sample_locked(batch, rng);
    s.rows.resize(static_cast<Eigen::Index>(batch), layout_.width());
    for (std::size_t i = 0; i < batch; ++i) {
      std::copy_n(slot(s.indices[i]), layout_.width(), s.rows.row(static_cast<Eigen::Index>(i)).data());
    }
    return s;
  }

  // Indices only, drawn against the snapshot [head - size, head).
  std::vector<std::uint64_t> sample_indices(std::size_t batch, CounterRng& rng,
                                            std::uint64_t* snapshot_head = nullptr) const {
    std::lock_guard lk(mu_);
    if (snapshot_head) *snapshot_head = head_;
    return sample_locked(batch, rng);
  }

  // Appends to `out` every resident row at or after logical index `since` and
  // returns the copied range [from, to).
  std::pair<std::uint64_t, std::uint64_t> copy_since(std::uint64_t since,
                                                     std::vector<float>& out) const {
    std::lock_guard lk(mu_);
    const std::uint64_t oldest = head_ - size_locked();
    const std::uint64_t from = std::max(since, oldest);
    out.resize(static_cast<std::size_t>(head_ - from) * static_cast<std::size_t>(layout_.width()));
    float* dst = out.data();
    for (std::uint64_t i = from; i < head_; ++i) {
      std::copy_n(slot(i), layout_.width(), dst);
      dst += layout_.width();
    }
    return {from, head_};
  }

  // Copies logical rows [from, to) (all still resident) into `out`, row-major.
  std::uint64_t copy_range(std::uint64_t from, std::uint64_t to, float* out) const {
    std::lock_guard lk(mu_);
    if (to > head_ || from > to || head_ - from > capacity_) {
      throw std::out_of_range("replay copy_range outside resident rows");
    }
    for (std::uint64_t i = from; i < to; ++i) {
      std::copy_n(slot(i), layout_.width(), out);
      out += layout_.width();
    }
    return to - from;
  }

 private:
  std::size_t size_locked() const {
    return head_ < capacity_ ? static_cast<std::size_t>(head_) : capacity_;
  }

  std::vector<std::uint64_t> sample_locked(std::size_t batch, CounterRng& rng) const {
    const std::size_t n = size_locked();
    if (n == 0) throw std::runtime_error("replay empty");
    std::vector<std::uint64_t> idx(batch);
    const std::uint64_t base = head_ - n;
    for (auto& i : idx) i = base + rng.below(n);
    return idx;
  }

  float* slot(std::uint64_t i) {
    return data_.data() + (i % capacity_) * static_cast<std::size_t>(layout_.width());
  }
  const float* slot(std::uint64_t i) const {
    return data_.data() + (i % capacity_) * static_cast<std::size_t>(layout_.width());
  }

  RowLayout layout_;
  std::size_t capacity_;
  std::vector<float> data_;
  std::uint64_t head_ = 0;
  mutable std::mutex mu_;
};

}  // namespace unilite::replay
