#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "blockbpe/types.hpp"

namespace blockbpe {

// Worker count resolution: BLOCKBPE_WORKERS env var wins, then the explicit
// request, then hardware concurrency.
inline unsigned resolve_worker_count(unsigned requested = 0) {
  if (const char* env = std::getenv("BLOCKBPE_WORKERS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end && *end == '\0' && v >= 1) return static_cast<unsigned>(v);
    throw UsageError("BLOCKBPE_WORKERS must be a positive integer, got \"" + std::string(env) +
                     "\"");
  }
  if (requested >= 1) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

// Pool of persistent workers executing chunked phases. Each run_phase /
// run_items call blocks until every worker finished its part, so successive
// calls behave as barrier-separated phases. Work partitioning is a fixed
// function of (n, worker_count), never of scheduling, which keeps every
// consumer deterministic.
//
// A pool constructed with one worker runs everything inline on the caller.
class PhasePool {
 public:
  using ChunkFn = std::function<void(unsigned chunk, std::size_t begin, std::size_t end)>;

  explicit PhasePool(unsigned workers = 0) : count_(resolve_worker_count(workers)) {
    if (count_ < 2) return;
    threads_.reserve(count_ - 1);
    for (unsigned w = 1; w < count_; ++w)
      threads_.emplace_back([this, w] { worker_loop(w); });
  }

  PhasePool(const PhasePool&) = delete;
  PhasePool& operator=(const PhasePool&) = delete;

  ~PhasePool() {
    if (threads_.empty()) return;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      stop_ = true;
      ++generation_;
    }
    wake_.notify_all();
    for (std::thread& t : threads_) t.join();
  }

  unsigned worker_count() const { return count_; }

  // Splits [0, n) into worker_count() contiguous chunks; chunk c covers
  // [c*n/W, (c+1)*n/W). Empty chunks still invoke fn with begin == end.
  void run_phase(std::size_t n, const ChunkFn& fn) {
    if (count_ < 2) {
      fn(0, 0, n);
      return;
    }
    {
      std::lock_guard<std::mutex> lock(mutex_);
      task_ = &fn;
      task_n_ = n;
      pending_.store(count_ - 1, std::memory_order_relaxed);
      ++generation_;
    }
    wake_.notify_all();
    run_chunk(0, fn, n);  // caller doubles as worker 0
    std::unique_lock<std::mutex> lock(mutex_);
    done_.wait(lock, [this] { return pending_.load(std::memory_order_acquire) == 0; });
    task_ = nullptr;
    if (error_) {
      std::exception_ptr e = error_;
      error_ = nullptr;
      std::rethrow_exception(e);
    }
  }

  // Runs fn(i) for every i in [0, n) with dynamic scheduling. Used where
  // items have uneven cost (batch rows); callers must make item results
  // independent of execution order.
  void run_items(std::size_t n, const std::function<void(std::size_t)>& fn) {
    std::atomic<std::size_t> cursor{0};
    run_phase(count_, [&](unsigned, std::size_t begin, std::size_t end) {
      if (begin == end) return;
      for (std::size_t i = cursor.fetch_add(1); i < n; i = cursor.fetch_add(1)) fn(i);
    });
  }

 private:
  void run_chunk(unsigned chunk, const ChunkFn& fn, std::size_t n) {
    std::size_t begin = n * chunk / count_;
    std::size_t end = n * (chunk + 1) / count_;
    try {
      fn(chunk, begin, end);
    } catch (...) {
      std::lock_guard<std::mutex> lock(mutex_);
      if (!error_) error_ = std::current_exception();
    }
  }

  void worker_loop(unsigned chunk) {
    std::uint64_t seen = 0;
    while (true) {
      const ChunkFn* task = nullptr;
      std::size_t n = 0;
      {
        std::unique_lock<std::mutex> lock(mutex_);
        wake_.wait(lock, [&] { return generation_ != seen; });
        seen = generation_;
        if (stop_) return;
        task = task_;
        n = task_n_;
      }
      run_chunk(chunk, *task, n);
      if (pending_.fetch_sub(1, std::memory_order_acq_rel) == 1) {
        std::lock_guard<std::mutex> lock(mutex_);
        done_.notify_one();
      }
    }
  }

  unsigned count_;
  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const ChunkFn* task_ = nullptr;
  std::size_t task_n_ = 0;
  std::uint64_t generation_ = 0;
  std::atomic<std::size_t> pending_{0};
  std::exception_ptr error_ = nullptr;
  bool stop_ = false;
};

}  // namespace blockbpe
