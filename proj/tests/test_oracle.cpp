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
#include <functional>
#include <vector>

#include "twonoise/driving.hpp"
#include "twonoise/oracle.hpp"

namespace twonoise
{
namespace
{

/// A driver that takes the value f(r) at every grid time r in [t0, t1].
DrivingPath tabulated_driver(std::function<double(double)> const& f, double t0, double t1,
                             double dt)
{
    std::int64_t const g0 = grid_index(t0, dt);
    std::int64_t const g1 = grid_index(t1, dt);
    HistoryWindow w{dt, 1, {}};
    for (std::int64_t g = g0; g <= g1; ++g)
    {
        w.samples.push_back(f(static_cast<double>(g) * dt));
    }
    return DrivingPath(example1d_driving_spec(), std::move(w), 0, g1);
}

TEST(Example1d, Constants)
{
    EXPECT_DOUBLE_EQ(example1d_joint_variance(), 0.75);
    auto const m = example1d_model();
    EXPECT_EQ(m.a_eigs, std::vector<double>{-1.0});
    EXPECT_DOUBLE_EQ(example1d_driving_spec().stationary_variance(0), 0.5);
}

TEST(ExactKernel, ZeroSpanIsPointMass)
{
    ScalarOracle const o(tabulated_driver([](double) { return 1.0; }, -1.0, 1.0, 0.01));
    auto const law = o.exact_kernel(0.8, 0.3, 0.3);
    EXPECT_DOUBLE_EQ(law.mean, 0.8);
    EXPECT_DOUBLE_EQ(law.var, 0.0);
}

TEST(ExactKernel, NoDriverHalfLife)
{
    double const ln2 = std::log(2.0);
    ScalarOracle const o(tabulated_driver([](double) { return 0.0; }, 0.0, ln2, ln2 / 1000.0));
    auto const law = o.exact_kernel(1.0, 0.0, ln2);
    EXPECT_NEAR(law.mean, 0.5, 1e-15);
    EXPECT_NEAR(law.var, 0.375, 1e-15);
}

TEST(ExactKernel, SinusoidalDriverConvolution)
{
    double const dt = 1e-3;
    ScalarOracle const o(tabulated_driver([](double r) { return std::sin(r); }, -3.0, 3.0, dt));
    auto const antiderivative = [](double t, double r) {
        return std::exp(-(t - r)) * (std::sin(r) - std::cos(r)) / 2.0;
    };
    for (auto [s, t] : {std::pair{-2.0, 1.0}, std::pair{0.5, 2.5}, std::pair{-3.0, 3.0}})
    {
        double const conv = antiderivative(t, t) - antiderivative(t, s);
        auto const law = o.exact_kernel(0.7, s, t);
        EXPECT_NEAR(law.mean, std::exp(-(t - s)) * 0.7 + conv, 1e-6);
    }
}

TEST(ExactKernel, LongSpanForgetsStart)
{
    ScalarOracle const o(tabulated_driver([](double) { return 0.0; }, -40.0, 0.0, 0.01));
    auto const law = o.exact_kernel(100.0, -40.0, 0.0);
    EXPECT_NEAR(law.mean, 0.0, 1e-14);
    EXPECT_NEAR(law.var, 0.5, 1e-15);
}

TEST(ExactKernel, RejectsReversedTimesAndUncoveredIntervals)
{
    ScalarOracle const o(tabulated_driver([](double) { return 0.0; }, -1.0, 1.0, 0.01));
    EXPECT_THROW(o.exact_kernel(0.0, 0.5, 0.2), std::invalid_argument);
    EXPECT_THROW(o.exact_kernel(0.0, -2.0, 0.0), std::out_of_range);
}

TEST(ExactEvo, ZeroDriver)
{
    ScalarOracle const o(tabulated_driver([](double) { return 0.0; }, -10.0, 2.0, 0.01));
    auto const law = o.exact_evo_measure(1.0);
    EXPECT_DOUBLE_EQ(law.mean, 0.0);
    EXPECT_DOUBLE_EQ(law.var, 0.5);
}

TEST(ExactEvo, ConstantDriver)
{
    double const c = 1.7;
    ScalarOracle const o(tabulated_driver([c](double) { return c; }, -10.0, 2.0, 0.001));
    for (double h : {0.5, 2.0, 8.0})
    {
        auto const law = o.exact_evo_measure(2.0, h);
        EXPECT_NEAR(law.mean, c * (1.0 - std::exp(-h)), 1e-6);
        EXPECT_NEAR(law.truncation_bound, std::exp(-h) * c, 1e-12);
    }
}

TEST(ExactEvo, TruncationBoundControlsDeeperPullback)
{
    auto const drv = make_stationary_history(example1d_driving_spec(), 20.0, 0.01, 42, 1.0);
    ScalarOracle const o(drv);
    auto const shallow = o.exact_evo_measure(1.0, 8.0);
    auto const deep = o.exact_evo_measure(1.0);
    EXPECT_LE(std::abs(deep.mean - shallow.mean), shallow.truncation_bound + 1e-6);
}

TEST(ExactEvo, InvariantUnderExactKernel)
{
    // Push mu_s through the Gaussian kernel to time t: the result is mu_t.
    auto const drv = make_stationary_history(example1d_driving_spec(), 20.0, 0.01, 7, 3.0);
    ScalarOracle const o(drv);
    double const start = -16.0;
    for (auto [s, t] : {std::pair{-2.0, 0.0}, std::pair{0.0, 3.0}, std::pair{1.5, 1.6}})
    {
        auto const mu_s = o.exact_evo_measure(s, s - start);
        auto const mu_t = o.exact_evo_measure(t, t - start);
        auto const k = o.exact_kernel(mu_s.mean, s, t);
        double const decay = std::exp(-(t - s));
        EXPECT_NEAR(k.mean, mu_t.mean, 1e-12);
        EXPECT_NEAR(decay * decay * mu_s.var + k.var, mu_t.var, 1e-14);
    }
}

TEST(ExactTv, Values)
{
    ScalarOracle const o(tabulated_driver([](double) { return 0.0; }, -40.0, 1.0, 0.001));
    EXPECT_DOUBLE_EQ(o.exact_tv_kernels(0.3, 0.3, 0.0, 0.693), 0.0);
    // |x - y| = 2 over ln 2: mean gap 1, variance 3/8.
    double const z = 1.0 / (2.0 * std::sqrt(0.375));
    double const expect = std::erf(z / std::sqrt(2.0));
    EXPECT_NEAR(expect, 0.5858, 1e-4);
    EXPECT_NEAR(tv_equal_variance(1.0, 0.375), expect, 1e-14);
    double const t = 0.693;
    double const gap = 2.0 * std::exp(-t);
    double const var = (1.0 - std::exp(-2.0 * t)) / 2.0;
    EXPECT_NEAR(o.exact_tv_kernels(1.0, -1.0, 0.0, t),
                std::erf(gap / (2.0 * std::sqrt(var)) / std::sqrt(2.0)), 1e-14);
    EXPECT_LT(o.exact_tv_kernels(5.0, -5.0, -40.0, 0.0), 1e-15);
    EXPECT_DOUBLE_EQ(o.exact_tv_kernels(1.0, 2.0, 0.0, 0.0), 1.0);
}

TEST(ScalarOracle, QuadratureStepMustBeGridMultiple)
{
    auto const drv = tabulated_driver([](double) { return 0.0; }, 0.0, 1.0, 0.01);
    EXPECT_THROW(ScalarOracle(drv, 0.015), std::invalid_argument);
    EXPECT_NO_THROW(ScalarOracle(drv, 0.02));
}

}  // namespace
}  // namespace twonoise
