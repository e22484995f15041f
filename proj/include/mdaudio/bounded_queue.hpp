#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <optional>
#include <queue>

namespace mdaudio {

// Blocking MPMC queue with a hard capacity. push() waits while the queue is
// full (backpressure) and fails only after close(); pop() waits for an item
// and returns nullopt once the queue is closed and drained. Occupancy
// high-water mark and cumulative producer wait time are tracked for run
// reports.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

  bool push(T&& item) {
    std::unique_lock<std::mutex> lock(mutex_);
    if (items_.size() >= capacity_ && !closed_) {
      const auto t0 = std::chrono::steady_clock::now();
      not_full_.wait(lock, [this] { return items_.size() < capacity_ || closed_; });
      blocked_ns_ += std::chrono::duration_cast<std::chrono::nanoseconds>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
    }
    if (closed_) return false;
    items_.push(std::move(item));
    if (items_.size() > high_water_) high_water_ = items_.size();
    not_empty_.notify_one();
    return true;
  }

  std::optional<T> pop() {
    std::unique_lock<std::mutex> lock(mutex_);
    not_empty_.wait(lock, [this] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop();
    not_full_.notify_one();
    return item;
  }

  // No further pushes succeed; consumers drain what remains.
  void close() {
    std::lock_guard<std::mutex> lock(mutex_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  // Discards whatever is still buffered, returning the count (items dropped
  // at shutdown when a consumer stops early).
  std::size_t drain() {
    std::lock_guard<std::mutex> lock(mutex_);
    const std::size_t n = items_.size();
    while (!items_.empty()) items_.pop();
    not_full_.notify_all();
    return n;
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return items_.size();
  }

  std::size_t capacity() const { return capacity_; }

  std::size_t high_water() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return high_water_;
  }

  std::int64_t blocked_push_ns() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return blocked_ns_;
  }

 private:
  const std::size_t capacity_;
  mutable std::mutex mutex_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
  std::queue<T> items_;
  bool closed_ = false;
  std::size_t high_water_ = 0;
  std::int64_t blocked_ns_ = 0;
};

}  // namespace mdaudio
