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

#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "pagedattn/core.hpp"

namespace pagedattn {

/// Persistent fork-join pool. parallel_for hands out indices one at a time
/// from a shared atomic counter; the calling thread takes part in the work.
/// Calls made from inside a running task execute inline.
class WorkerPool {
 public:
  /// `num_workers` counts the calling thread; 0 means hardware concurrency.
  explicit WorkerPool(std::size_t num_workers = 0);
  ~WorkerPool();

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  std::size_t size() const { return threads_.size() + 1; }

  /// Runs fn(i) for every i in [0, count) and returns once all have finished.
  /// The first exception thrown by any task is rethrown here.
  void parallel_for(Index count, const std::function<void(Index)>& fn);

 private:
  void worker_loop();
  void drain();

  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable start_cv_;
  std::condition_variable done_cv_;
  std::mutex run_mutex_;

  // Current job; guarded by mutex_ except for the atomics.
  const std::function<void(Index)>* job_ = nullptr;
  Index job_count_ = 0;
  std::atomic<Index> next_{0};
  std::size_t generation_ = 0;
  std::size_t active_workers_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
  std::atomic<bool> failed_{false};
};

}  // namespace pagedattn
