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

#include "twonoise/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace twonoise
{
namespace
{
std::atomic<unsigned> g_default_workers{0};
}

unsigned default_workers()
{
    unsigned const w = g_default_workers.load();
    if (w > 0)
    {
        return w;
    }
    return std::max(1U, std::thread::hardware_concurrency());
}

void set_default_workers(unsigned workers)
{
    g_default_workers.store(workers);
}

void parallel_for(std::size_t n, std::function<void(std::size_t)> const& body,
                  unsigned workers)
{
    if (n == 0)
    {
        return;
    }
    if (workers == 0)
    {
        workers = default_workers();
    }
    std::size_t const threads = std::min<std::size_t>(workers, n);
    if (threads <= 1)
    {
        for (std::size_t i = 0; i < n; ++i)
        {
            body(i);
        }
        return;
    }

    // One slot per worker; blocks are ordered, so the first non-empty slot
    // holds the error of the lowest failing index.
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    pool.reserve(threads);
    std::size_t const chunk = (n + threads - 1) / threads;
    for (std::size_t w = 0; w < threads; ++w)
    {
        std::size_t const lo = w * chunk;
        std::size_t const hi = std::min(n, lo + chunk);
        if (lo >= hi)
        {
            break;
        }
        pool.emplace_back([&, w, lo, hi] {
            try
            {
                for (std::size_t i = lo; i < hi; ++i)
                {
                    body(i);
                }
            }
            catch (...)
            {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool)
    {
        t.join();
    }
    for (auto const& e : errors)
    {
        if (e)
        {
            std::rethrow_exception(e);
        }
    }
}

}  // namespace twonoise
