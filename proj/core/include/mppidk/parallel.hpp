#pragma once

#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace mppidk {

// Fixed-size worker pool running index-parallel loops.
//
// parallel_for hands out task indices dynamically, so which thread runs a task
// varies between runs. Callers get deterministic results by making each task
// write only to its own slot and reducing slots in index order afterwards.
class ThreadPool {
 public:
  // num_threads == 0 picks default_thread_count().
  explicit ThreadPool(std::size_t num_threads = 0);
  ~ThreadPool();

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  std::size_t size() const { return num_threads_; }

  // Runs fn(i) for i in [0, count). The calling thread participates. Not
  // reentrant: fn must not call parallel_for on the same pool.
  void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

  // MPPIDK_NUM_THREADS if set to a positive integer, else hardware concurrency.
  static std::size_t default_thread_count();

 private:
  void worker_loop();
  void drain();

  std::size_t num_threads_ = 1;
  std::vector<std::thread> workers_;

  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(std::size_t)>* job_ = nullptr;
  std::size_t job_count_ = 0;
  std::size_t next_index_ = 0;
  std::size_t finished_ = 0;
  std::size_t generation_ = 0;
  std::size_t active_workers_ = 0;
  bool stop_ = false;
  std::exception_ptr first_error_;
};

// Process-wide pool sized by default_thread_count(), created on first use.
ThreadPool& default_pool();

}  // namespace mppidk
