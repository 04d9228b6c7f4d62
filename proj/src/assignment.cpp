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

// Hungarian method with row/column potentials, O(n^3).

#include <limits>
#include <stdexcept>
#include <vector>

#include "twonoise/measures.hpp"

namespace twonoise
{

std::vector<std::size_t> solve_assignment(std::span<double const> cost, std::size_t n)
{
    if (cost.size() != n * n)
    {
        throw std::invalid_argument("solve_assignment: cost matrix is not n x n");
    }
    if (n == 0)
    {
        return {};
    }
    double const inf = std::numeric_limits<double>::infinity();
    // 1-based: column 0 is a virtual start column.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (std::size_t i = 1; i <= n; ++i)
    {
        p[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do
        {
            used[j0] = 1;
            std::size_t const i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            double const* row = cost.data() + (i0 - 1) * n;
            for (std::size_t j = 1; j <= n; ++j)
            {
                if (used[j])
                {
                    continue;
                }
                double const cur = row[j - 1] - u[i0] - v[j];
                if (cur < minv[j])
                {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta)
                {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j)
            {
                if (used[j])
                {
                    u[p[j]] += delta;
                    v[j] -= delta;
                }
                else
                {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do
        {
            std::size_t const j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> match(n);
    for (std::size_t j = 1; j <= n; ++j)
    {
        match[p[j] - 1] = j - 1;
    }
    return match;
}

}  // namespace twonoise
