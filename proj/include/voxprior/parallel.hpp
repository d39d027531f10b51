/* Copyright 2026 The voxprior Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <cstdint>
#include <functional>

namespace voxprior {

// Worker count: VOXPRIOR_THREADS if set to a positive integer, else the
// hardware concurrency (at least 1).
int worker_threads();

// Runs fn(i) for i in [0, n) on up to worker_threads() threads. Indices are
// striped statically, so per-index results never depend on scheduling. The
// first exception thrown by any fn is rethrown after all workers join.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

}  // namespace voxprior
