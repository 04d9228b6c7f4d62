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

#include "twonoise/rng.hpp"

#include <cmath>
#include <numbers>

namespace twonoise
{
namespace
{
constexpr std::uint32_t kPhiloxM0 = 0xD2511F53;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo, std::uint32_t& hi)
{
    std::uint64_t const p = static_cast<std::uint64_t>(a) * b;
    lo = static_cast<std::uint32_t>(p);
    hi = static_cast<std::uint32_t>(p >> 32);
}

inline PhiloxCounter philox_round(PhiloxCounter const& c, PhiloxKey const& k)
{
    std::uint32_t lo0, hi0, lo1, hi1;
    mulhilo(kPhiloxM0, c[0], lo0, hi0);
    mulhilo(kPhiloxM1, c[2], lo1, hi1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

inline PhiloxCounter block(NoiseKey const& key, std::uint64_t counter)
{
    PhiloxCounter c{static_cast<std::uint32_t>(counter),
                    static_cast<std::uint32_t>(counter >> 32), key.stream,
                    static_cast<std::uint32_t>(key.domain)};
    PhiloxKey k{static_cast<std::uint32_t>(key.seed),
                static_cast<std::uint32_t>(key.seed >> 32)};
    return philox4x32_10(c, k);
}

// 53-bit mantissa, strictly inside (0,1).
inline double to_open_unit(std::uint32_t lo, std::uint32_t hi)
{
    std::uint64_t const bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

inline std::array<double, 2> box_muller(double u1, double u2)
{
    double const r = std::sqrt(-2.0 * std::log(u1));
    double const theta = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(theta), r * std::sin(theta)};
}
}  // namespace

PhiloxCounter philox4x32_10(PhiloxCounter counter, PhiloxKey key)
{
    for (int round = 0; round < 10; ++round)
    {
        if (round > 0)
        {
            key[0] += kPhiloxW0;
            key[1] += kPhiloxW1;
        }
        counter = philox_round(counter, key);
    }
    return counter;
}

std::array<double, 2> uniform_pair(NoiseKey const& key, std::uint64_t counter)
{
    auto const b = block(key, counter);
    return {to_open_unit(b[0], b[1]), to_open_unit(b[2], b[3])};
}

std::array<double, 2> normal_pair(NoiseKey const& key, std::uint64_t counter)
{
    auto const u = uniform_pair(key, counter);
    return box_muller(u[0], u[1]);
}

double normal_at(NoiseKey const& key, std::uint64_t index)
{
    return normal_pair(key, index >> 1)[index & 1U];
}

void fill_normals(NoiseKey const& key, std::uint64_t first, std::span<double> out)
{
    std::size_t j = 0;
    std::uint64_t index = first;
    if ((index & 1U) != 0 && j < out.size())
    {
        out[j++] = normal_pair(key, index >> 1)[1];
        ++index;
    }
    for (; j + 1 < out.size(); j += 2, index += 2)
    {
        auto const z = normal_pair(key, index >> 1);
        out[j] = z[0];
        out[j + 1] = z[1];
    }
    if (j < out.size())
    {
        out[j] = normal_pair(key, index >> 1)[0];
    }
}

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t i)
{
    return splitmix64(splitmix64(base) ^ splitmix64(i + 0x632BE59BD9B4E019ULL));
}

double CounterRng::uniform()
{
    return uniform_pair(key_, block_++)[0];
}

double CounterRng::normal()
{
    if (has_cached_)
    {
        has_cached_ = false;
        return cached_normal_;
    }
    auto const z = normal_pair(key_, block_++);
    cached_normal_ = z[1];
    has_cached_ = true;
    return z[0];
}

}  // namespace twonoise
