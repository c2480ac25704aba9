// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace edaq::nd {

/// Worker count used inside ops. Read once from EDAQ_THREADS (default: the
/// hardware concurrency), overridable for tests.
int thread_count();
void set_thread_count(int n);

/// Runs fn(begin, end) over a static partition of [0, n). Each index is
/// owned by exactly one worker, so results never depend on the thread count
/// as long as fn writes disjoint outputs.
void parallel_for(std::size_t n, std::size_t min_chunk,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace edaq::nd
