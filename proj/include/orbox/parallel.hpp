// Copyright 2026 The orbox Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace orbox {

namespace detail {

inline unsigned threads_from_env() {
  if (const char* env = std::getenv("ORBOX_NUM_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<unsigned>(v);
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

inline std::atomic<unsigned>& default_threads_slot() {
  static std::atomic<unsigned> slot{threads_from_env()};
  return slot;
}

inline thread_local bool inside_pool_worker = false;

// Persistent pool. A dispatch hands out `num_chunks` chunk indices; the
// calling thread participates, so a pool of n-1 workers gives n-way
// parallelism. Which thread runs a chunk never affects results because
// every chunk writes to a disjoint output range.
class ThreadPool {
 public:
  ThreadPool() = default;
  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  ~ThreadPool() {
    {
      std::lock_guard<std::mutex> lk(m_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& w : workers_) w.join();
  }

  void run(std::size_t num_chunks, unsigned threads,
           const std::function<void(std::size_t)>& fn) {
    std::lock_guard<std::mutex> dispatch(dispatch_m_);
    grow(threads > 0 ? threads - 1 : 0);
    {
      std::lock_guard<std::mutex> lk(m_);
      task_ = &fn;
      num_chunks_ = num_chunks;
      next_.store(0);
      finished_ = 0;
      error_ = nullptr;
      active_workers_ = std::min<std::size_t>(threads - 1, workers_.size());
      ++generation_;
    }
    cv_.notify_all();
    {
      const bool was_inside = inside_pool_worker;
      inside_pool_worker = true;
      work(fn);
      inside_pool_worker = was_inside;
    }
    std::unique_lock<std::mutex> lk(m_);
    done_cv_.wait(lk, [&] { return finished_ == num_chunks_ && busy_ == 0; });
    task_ = nullptr;
    if (error_) std::rethrow_exception(error_);
  }

 private:
  void grow(std::size_t wanted) {
    while (workers_.size() < wanted) {
      const std::size_t id = workers_.size();
      workers_.emplace_back([this, id] { loop(id); });
    }
  }

  void work(const std::function<void(std::size_t)>& fn) {
    for (;;) {
      const std::size_t chunk = next_.fetch_add(1);
      if (chunk >= num_chunks_) return;
      try {
        fn(chunk);
      } catch (...) {
        std::lock_guard<std::mutex> lk(m_);
        if (!error_) error_ = std::current_exception();
      }
      std::lock_guard<std::mutex> lk(m_);
      if (++finished_ == num_chunks_) done_cv_.notify_all();
    }
  }

  void loop(std::size_t id) {
    inside_pool_worker = true;
    std::uint64_t seen = 0;
    for (;;) {
      const std::function<void(std::size_t)>* task = nullptr;
      {
        std::unique_lock<std::mutex> lk(m_);
        cv_.wait(lk, [&] { return stop_ || (generation_ != seen && task_); });
        if (stop_) return;
        seen = generation_;
        if (id >= active_workers_) continue;
        task = task_;
        ++busy_;
      }
      work(*task);
      std::lock_guard<std::mutex> lk(m_);
      if (--busy_ == 0) done_cv_.notify_all();
    }
  }

  std::vector<std::thread> workers_;
  std::mutex dispatch_m_;
  std::mutex m_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  const std::function<void(std::size_t)>* task_ = nullptr;
  std::size_t num_chunks_ = 0;
  std::atomic<std::size_t> next_{0};
  std::size_t finished_ = 0;
  std::size_t active_workers_ = 0;
  std::size_t busy_ = 0;
  std::uint64_t generation_ = 0;
  std::exception_ptr error_;
  bool stop_ = false;
};

inline ThreadPool& global_pool() {
  static ThreadPool pool;
  return pool;
}

}  // namespace detail

/// Thread count used when a kernel is called with `threads == 0`.
/// Initialized from ORBOX_NUM_THREADS, else the hardware concurrency.
inline unsigned default_threads() { return detail::default_threads_slot().load(); }

inline void set_default_threads(unsigned n) {
  detail::default_threads_slot().store(std::max(1u, n));
}

inline unsigned resolve_threads(unsigned threads) {
  return threads == 0 ? default_threads() : threads;
}

/// Calls fn(begin, end) over a partition of [0, n). Chunk boundaries depend
/// only on n, grain and the thread count, and fn must write disjoint
/// outputs per index, so results never depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t grain, unsigned threads, Fn&& fn) {
  if (n == 0) return;
  threads = resolve_threads(threads);
  grain = std::max<std::size_t>(grain, 1);
  const std::size_t max_chunks = (n + grain - 1) / grain;
  const std::size_t chunks = std::min<std::size_t>(threads, max_chunks);
  if (chunks <= 1 || detail::inside_pool_worker) {
    fn(std::size_t{0}, n);
    return;
  }
  const std::size_t step = (n + chunks - 1) / chunks;
  const std::function<void(std::size_t)> body = [&](std::size_t c) {
    const std::size_t b = c * step;
    const std::size_t e = std::min(n, b + step);
    if (b < e) fn(b, e);
  };
  detail::global_pool().run(chunks, threads, body);
}

}  // namespace orbox
