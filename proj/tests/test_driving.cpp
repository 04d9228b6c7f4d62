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

#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "twonoise/driving.hpp"
#include "twonoise/integrator.hpp"
#include "twonoise/rng.hpp"
#include "twonoise/stats.hpp"

namespace twonoise
{
namespace
{

OUSpec unit_ou() { return OUSpec::uniform(1, -1.0, 1.0); }

TEST(OUSpec, RejectsNonnegativeDrift)
{
    EXPECT_THROW(OUSpec({0.0}, {1.0}), std::invalid_argument);
    EXPECT_THROW(OUSpec({1.0}, {1.0}), std::invalid_argument);
    EXPECT_THROW(OUSpec({-1.0}, {-1.0}), std::invalid_argument);
    EXPECT_THROW(OUSpec({-1.0, -2.0}, {1.0}), std::invalid_argument);
}

TEST(OUSpec, StationaryVariance)
{
    OUSpec const s({-1.0, -4.0}, {1.0, 2.0});
    EXPECT_DOUBLE_EQ(s.stationary_variance(0), 0.5);
    EXPECT_DOUBLE_EQ(s.stationary_variance(1), 0.5);
    EXPECT_DOUBLE_EQ(s.stationary_variance_sum(), 1.0);
    EXPECT_DOUBLE_EQ(s.default_history_length(), 10.0);
}

TEST(SampleStationary, UnitOuVarianceHalf)
{
    std::size_t const n = 1000000;
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        v[i] = sample_stationary(unit_ou(), i)[0];
    }
    EXPECT_NEAR(stats::variance(v), 0.5, 0.005);
}

TEST(SampleStationary, ZeroNoiseIsZero)
{
    OUSpec const s({-1.0}, {0.0});
    for (std::uint64_t seed = 0; seed < 100; ++seed)
    {
        EXPECT_EQ(sample_stationary(s, seed)[0], 0.0);
    }
}

TEST(SampleStationary, PerModeVariances)
{
    OUSpec const s({-1.0, -4.0}, {1.0, 1.0});
    std::size_t const n = 100000;
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        auto const y = sample_stationary(s, i);
        a[i] = y[0];
        b[i] = y[1];
    }
    EXPECT_NEAR(stats::variance(a), 0.5, 3.0 * stats::variance_se(a));
    EXPECT_NEAR(stats::variance(b), 0.125, 3.0 * stats::variance_se(b));
}

TEST(OuStep, FixedPointOfNoiselessFlow)
{
    std::vector<double> const y{0.0};
    std::vector<double> const xi{0.0};
    EXPECT_EQ(ou_step(unit_ou(), y, 0.3, xi)[0], 0.0);
}

TEST(OuStep, HalvesAfterLn2)
{
    std::vector<double> const y{1.0};
    std::vector<double> const xi{0.0};
    EXPECT_NEAR(ou_step(unit_ou(), y, std::log(2.0), xi)[0], 0.5, 1e-15);
}

TEST(OuStep, LongStepForgetsStart)
{
    std::size_t const n = 100000;
    std::vector<double> v(n);
    std::vector<double> const y{3.0};
    for (std::size_t i = 0; i < n; ++i)
    {
        std::vector<double> const xi{normal_at({1, NoiseDomain::resample, 0}, i)};
        v[i] = ou_step(unit_ou(), y, 50.0, xi)[0];
    }
    EXPECT_NEAR(stats::variance(v), 0.5, 3.0 * stats::variance_se(v));
    auto const ms = stats::mean_se(v);
    EXPECT_LT(std::abs(ms.mean), 3.0 * ms.se);
}

TEST(OuStep, PreservesStationaryLaw)
{
    std::size_t const n = 20000;
    OUSpec const s = unit_ou();
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        y[i] = sample_stationary(s, i)[0];
    }
    for (int step = 0; step < 50; ++step)
    {
        for (std::size_t i = 0; i < n; ++i)
        {
            double const xi = normal_at({2, NoiseDomain::resample, 0},
                                        static_cast<std::uint64_t>(step) * n + i);
            ou_step_inplace(s, std::span<double>(&y[i], 1), 0.1, std::span<double const>(&xi, 1));
        }
    }
    EXPECT_NEAR(stats::variance(y), 0.5, 3.0 * stats::variance_se(y));
}

TEST(StationaryHistory, MarginalVarianceAtSeveralLags)
{
    std::size_t const paths = 10000;
    double const dt = 0.05;
    std::vector<std::vector<double>> at(4, std::vector<double>(paths));
    for (std::size_t p = 0; p < paths; ++p)
    {
        auto const h = make_stationary_history(unit_ou(), 3.0, dt, derive_seed(99, p));
        for (std::size_t j = 0; j < 4; ++j)
        {
            at[j][p] = h.at_time(-static_cast<double>(j))[0];
        }
    }
    for (auto const& v : at)
    {
        auto const ms = stats::mean_se(v);
        EXPECT_LT(std::abs(ms.mean), 3.0 * ms.se);
        EXPECT_NEAR(stats::variance(v), 0.5, 3.0 * stats::variance_se(v));
    }
}

TEST(StationaryHistory, ZeroNoiseGivesZeros)
{
    auto const h = make_stationary_history(OUSpec({-1.0, -2.0}, {0.0, 0.0}), 2.0, 0.1, 5);
    for (double v : h.window().samples)
    {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(StationaryHistory, WindowGeometry)
{
    auto const h = make_stationary_history(unit_ou(), 1.0, 0.25, 5, 2.0);
    EXPECT_EQ(h.window().length(), 5u);
    EXPECT_DOUBLE_EQ(h.t_first(), 1.0);
    EXPECT_DOUBLE_EQ(h.t_origin(), 2.0);
    EXPECT_TRUE(h.covers(1.0, 2.0));
    EXPECT_FALSE(h.covers(0.75, 2.0));
    EXPECT_THROW((void)h.at_index(3), std::out_of_range);
    EXPECT_THROW(make_stationary_history(unit_ou(), 1.0, 0.3, 5), std::invalid_argument);
}

TEST(AdvanceHistory, ZeroIsIdentity)
{
    auto const h = make_stationary_history(unit_ou(), 1.0, 0.1, 3);
    auto const a = advance_history(h, 0.0);
    EXPECT_EQ(a.window().samples, h.window().samples);
    EXPECT_EQ(a.origin_index(), h.origin_index());
}

TEST(AdvanceHistory, FlowLawBitExact)
{
    CounterRng rng({8, NoiseDomain::initial, 0}, 0);
    for (int c = 0; c < 100; ++c)
    {
        double const dt = 0.01 * (1 + static_cast<int>(rng.uniform() * 5));
        auto const k1 = static_cast<int>(rng.uniform() * 300);
        auto const k2 = static_cast<int>(rng.uniform() * 300);
        auto const len = 1 + static_cast<int>(rng.uniform() * 200);
        auto const h = make_stationary_history(OUSpec({-1.0, -3.0}, {1.0, 0.5}), dt * (len - 1),
                                               dt, derive_seed(1234, c));
        DrivingNoise const noise{derive_seed(4321, c)};
        auto const two = advance_history(advance_history(h, dt * k1, noise), dt * k2, noise);
        auto const one = advance_history(h, dt * (k1 + k2), noise);
        ASSERT_EQ(two.origin_index(), one.origin_index());
        ASSERT_EQ(two.window().samples, one.window().samples) << "case " << c;
    }
}

TEST(AdvanceHistory, ExtendThenDropEqualsAdvance)
{
    auto const h = make_stationary_history(unit_ou(), 1.0, 0.1, 21);
    DrivingNoise const noise{77};
    auto const ext = extend_history(h, 0.5, noise);
    auto const adv = advance_history(h, 0.5, noise);
    EXPECT_EQ(ext.window().length(), h.window().length() + 5);
    auto const tail = ext.window_ending_at(ext.origin_index(), h.window().length());
    EXPECT_EQ(tail.window().samples, adv.window().samples);
}

TEST(AdvanceHistory, DeterministicDecay)
{
    double const dt = std::log(2.0) / 1000.0;
    HistoryWindow w{dt, 1, {1.0}};
    DrivingPath const h(OUSpec({-1.0}, {0.0}), w, 0, 0);
    auto const a = advance_history(h, std::log(2.0), DrivingNoise{1});
    EXPECT_NEAR(a.window().at_zero()[0], 0.5, 1e-12);
}

TEST(DrivingPath, ShiftedReindexes)
{
    auto const h = make_stationary_history(unit_ou(), 1.0, 0.1, 3);
    auto const s = h.shifted(4);
    for (std::int64_t g = s.first_index(); g <= s.origin_index(); ++g)
    {
        EXPECT_EQ(s.at_index(g)[0], h.at_index(g + 4)[0]);
    }
}

TEST(DrivingPath, JsonRoundTrip)
{
    auto const h = make_stationary_history(OUSpec({-1.0, -2.0}, {1.0, 3.0}), 0.5, 0.05, 8, 1.0);
    auto const back = driving_path_from_json(to_json(h));
    EXPECT_EQ(back.window().samples, h.window().samples);
    EXPECT_EQ(back.origin_index(), h.origin_index());
    EXPECT_EQ(back.seed(), h.seed());
    EXPECT_TRUE(back.spec() == h.spec());
}

TEST(Independence, DrivingAndWienerStreamsUncorrelated)
{
    std::uint64_t const seed = 2024;
    NoiseKey const v = DrivingNoise{seed}.key();
    NoiseKey const w = WienerKey{seed}.key();
    std::size_t const n = 100000;
    std::vector<double> prod(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        prod[i] = normal_at(v, i) * normal_at(w, i);
    }
    auto const ms = stats::mean_se(prod);
    EXPECT_LT(std::abs(ms.mean), 3.0 * ms.se);
}

}  // namespace
}  // namespace twonoise
