// Copyright 2026 The pagedattn Authors. All Rights Reserved.
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

#include "pagedattn/worker_pool.hpp"

#include <algorithm>

namespace pagedattn {

namespace {
thread_local bool in_pool_task = false;
}  // namespace

WorkerPool::WorkerPool(std::size_t num_workers) {
  if (num_workers == 0) num_workers = std::max(1u, std::thread::hardware_concurrency());
  threads_.reserve(num_workers - 1);
  for (std::size_t i = 1; i < num_workers; ++i) threads_.emplace_back([this] { worker_loop(); });
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  start_cv_.notify_all();
  for (auto& t : threads_) t.join();
}

void WorkerPool::parallel_for(Index count, const std::function<void(Index)>& fn) {
  if (count <= 0) return;
  if (threads_.empty() || in_pool_task) {
    for (Index i = 0; i < count; ++i) fn(i);
    return;
  }
  std::lock_guard run_lock(run_mutex_);
  {
    std::lock_guard lock(mutex_);
    job_ = &fn;
    job_count_ = count;
    next_.store(0);
    error_ = nullptr;
    failed_.store(false);
    active_workers_ = threads_.size();
    ++generation_;
  }
  start_cv_.notify_all();
  drain();
  std::exception_ptr error;
  {
    std::unique_lock lock(mutex_);
    done_cv_.wait(lock, [this] { return active_workers_ == 0; });
    job_ = nullptr;
    error = error_;
  }
  if (error) std::rethrow_exception(error);
}

void WorkerPool::drain() {
  in_pool_task = true;
  const auto& fn = *job_;
  const Index count = job_count_;
  for (;;) {
    const Index i = next_.fetch_add(1, std::memory_order_relaxed);
    if (i >= count) break;
    if (failed_.load(std::memory_order_relaxed)) continue;
    try {
      fn(i);
    } catch (...) {
      std::lock_guard lock(mutex_);
      if (!error_) error_ = std::current_exception();
      failed_.store(true);
    }
  }
  in_pool_task = false;
}

void WorkerPool::worker_loop() {
  std::size_t seen = 0;
  for (;;) {
    {
      std::unique_lock lock(mutex_);
      start_cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
    }
    drain();
    {
      std::lock_guard lock(mutex_);
      if (--active_workers_ == 0) done_cv_.notify_all();
    }
  }
}

}  // namespace pagedattn
