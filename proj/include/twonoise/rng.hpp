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

#include <array>
#include <cstdint>
#include <span>

namespace twonoise
{

/// Philox4x32-10 block cipher (Salmon et al., SC'11). Stateless: the output
/// is a pure function of (counter, key).
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32_10(PhiloxCounter counter, PhiloxKey key);

/// Seed domains. The domain occupies its own word of the Philox counter, so
/// two streams with equal seeds but different domains never share a block.
enum class NoiseDomain : std::uint32_t
{
    driving = 1,     // V, the noise of the driving process
    wiener = 2,      // W, the white noise of the state equation
    coupling = 3,    // auxiliary draws of coupling constructions
    initial = 4,     // initial conditions, probe directions
    resample = 5,    // subsampling / bootstrap
};

/// Identifies one replayable stream of standard normals:
/// value(index) is fixed by (seed, domain, stream, index).
struct NoiseKey
{
    std::uint64_t seed = 0;
    NoiseDomain domain = NoiseDomain::wiener;
    std::uint32_t stream = 0;
};

/// Two uniforms in (0,1) for block `counter`.
std::array<double, 2> uniform_pair(NoiseKey const& key, std::uint64_t counter);

/// Two independent standard normals for block `counter` (Box-Muller).
std::array<double, 2> normal_pair(NoiseKey const& key, std::uint64_t counter);

/// Standard normal number `index` of the stream.
double normal_at(NoiseKey const& key, std::uint64_t index);

/// out[j] = normal_at(key, first + j).
void fill_normals(NoiseKey const& key, std::uint64_t first, std::span<double> out);

/// SplitMix64 finalizer; used to derive per-trajectory seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Seed number `i` derived from `base`. Distinct i give unrelated seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t i);

/// Sequential generator over a counter-based stream. Cheap to construct;
/// construct one per (trajectory, step) when draws must be replayable.
class CounterRng
{
  public:
    CounterRng(NoiseKey key, std::uint64_t first_block)
        : key_(key), block_(first_block)
    {
    }

    double uniform();
    double normal();
    std::uint64_t blocks_used(std::uint64_t first_block) const
    {
        return block_ - first_block;
    }

  private:
    NoiseKey key_;
    std::uint64_t block_;
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace twonoise
