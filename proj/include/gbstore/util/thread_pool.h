#ifndef GBSTORE_UTIL_THREAD_POOL_H_
#define GBSTORE_UTIL_THREAD_POOL_H_

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace gbstore {

/// Fixed-size worker pool with a FIFO queue. The destructor drains queued
/// tasks before joining.
class ThreadPool {
 public:
  explicit ThreadPool(size_t workers);
  ~ThreadPool();

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  void submit(std::function<void()> task);
  size_t size() const { return workers_.size(); }
  size_t queued() const;

  /// Blocks until the queue is empty and no task is running.
  void wait_idle();

 private:
  void run();

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable idle_cv_;
  std::deque<std::function<void()>> queue_;
  size_t running_ = 0;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
};

}  // namespace gbstore

#endif  // GBSTORE_UTIL_THREAD_POOL_H_
