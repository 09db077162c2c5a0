#include "mppidk/parallel.hpp"

#include <cstdlib>
#include <exception>
#include <string>

namespace mppidk {

ThreadPool::ThreadPool(std::size_t num_threads)
    : num_threads_(num_threads == 0 ? default_thread_count() : num_threads) {
  for (std::size_t i = 1; i < num_threads_; ++i) {
    workers_.emplace_back([this] { worker_loop(); });
  }
}

ThreadPool::~ThreadPool() {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    stop_ = true;
  }
  wake_.notify_all();
  for (auto& w : workers_) w.join();
}

std::size_t ThreadPool::default_thread_count() {
  if (const char* env = std::getenv("MPPIDK_NUM_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

void ThreadPool::parallel_for(std::size_t count,
                              const std::function<void(std::size_t)>& fn) {
  if (count == 0) return;
  if (workers_.empty() || count == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }

  {
    std::lock_guard<std::mutex> lock(mutex_);
    job_ = &fn;
    job_count_ = count;
    next_index_ = 0;
    finished_ = 0;
    ++generation_;
  }
  wake_.notify_all();
  drain();

  std::unique_lock<std::mutex> lock(mutex_);
  done_.wait(lock, [&] { return finished_ == job_count_ && active_workers_ == 0; });
  job_ = nullptr;
  job_count_ = 0;
  if (first_error_) {
    std::exception_ptr e = first_error_;
    first_error_ = nullptr;
    lock.unlock();
    std::rethrow_exception(e);
  }
}

void ThreadPool::drain() {
  for (;;) {
    std::size_t index = 0;
    const std::function<void(std::size_t)>* job = nullptr;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      if (job_ == nullptr || next_index_ >= job_count_) return;
      index = next_index_++;
      job = job_;
    }
    try {
      (*job)(index);
    } catch (...) {
      std::lock_guard<std::mutex> lock(mutex_);
      if (!first_error_) first_error_ = std::current_exception();
    }
    {
      std::lock_guard<std::mutex> lock(mutex_);
      ++finished_;
      if (finished_ == job_count_) done_.notify_all();
    }
  }
}

void ThreadPool::worker_loop() {
  std::size_t seen = 0;
  for (;;) {
    {
      std::unique_lock<std::mutex> lock(mutex_);
      wake_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
      ++active_workers_;
    }
    drain();
    {
      std::lock_guard<std::mutex> lock(mutex_);
      --active_workers_;
    }
    done_.notify_all();
  }
}

ThreadPool& default_pool() {
  static ThreadPool pool;
  return pool;
}

}  // namespace mppidk
