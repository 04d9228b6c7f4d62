/*
 * Copyright 2026 The twonoise Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <functional>

namespace twonoise
{

/// Worker count used when a caller passes 0. Defaults to the machine's
/// hardware concurrency; the CLI overrides it with --workers.
unsigned default_workers();
void set_default_workers(unsigned workers);

/// Calls body(i) for i in [0, n) on up to `workers` threads (0 = default).
/// Work is split into contiguous blocks. The first exception thrown by any
/// body is rethrown on the calling thread after all workers joined.
/// Bodies must write only to per-index storage; callers reduce afterwards in
/// index order, which keeps results independent of the worker count.
void parallel_for(std::size_t n, std::function<void(std::size_t)> const& body,
                  unsigned workers = 0);

}  // namespace twonoise
