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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "twonoise/measures.hpp"
#include "twonoise/rng.hpp"
#include "twonoise/stats.hpp"

namespace twonoise
{
namespace
{

EmpiricalMeasure normal_cloud(std::size_t n, double mean, double sd, std::uint64_t seed)
{
    std::vector<double> pts(n);
    fill_normals({seed, NoiseDomain::resample, 0}, 0, pts);
    for (auto& v : pts)
    {
        v = mean + sd * v;
    }
    return EmpiricalMeasure::uniform(1, std::move(pts));
}

EmpiricalMeasure constant_cloud(std::size_t n, double v)
{
    return EmpiricalMeasure::uniform(1, std::vector<double>(n, v));
}

double exact_normal_tv(double gap)
{
    return 2.0 * stats::normal_cdf(std::abs(gap) / 2.0) - 1.0;
}

TEST(EmpiricalMeasure, ValidateAndExpectation)
{
    auto m = EmpiricalMeasure::uniform(2, {0.0, 1.0, 2.0, 3.0});
    EXPECT_EQ(m.size(), 2u);
    EXPECT_TRUE(m.has_uniform_weights());
    auto const [mean, se] = m.expectation([](std::span<double const> x) { return x[0] + x[1]; });
    EXPECT_DOUBLE_EQ(mean, 3.0);
    EXPECT_GT(se, 0.0);
    m.weights = {0.3, 0.3};
    EXPECT_THROW(m.validate(), std::invalid_argument);
    m.weights = {1.2, -0.2};
    EXPECT_THROW(m.validate(), std::invalid_argument);
    auto const p = project(EmpiricalMeasure::uniform(2, {0.0, 1.0, 2.0, 3.0}),
                           [](std::span<double const> x) { return x[1]; });
    EXPECT_EQ(p.points, (std::vector<double>{1.0, 3.0}));
}

TEST(TvDistance, IdenticalIsZero)
{
    auto const p = normal_cloud(5000, 0.0, 1.0, 1);
    EXPECT_DOUBLE_EQ(tv_distance(p, p).value, 0.0);
}

TEST(TvDistance, DisjointIsOne)
{
    auto const p = normal_cloud(2000, 0.0, 0.1, 1);
    auto const q = normal_cloud(2000, 5.0, 0.1, 2);
    EXPECT_NEAR(tv_distance(p, q).value, 1.0, 1e-12);
}

TEST(TvDistance, UnitShiftedNormals)
{
    auto const p = normal_cloud(100000, 0.0, 1.0, 3);
    auto const q = normal_cloud(100000, 1.0, 1.0, 4);
    EXPECT_NEAR(exact_normal_tv(1.0), 0.3829, 1e-4);
    EXPECT_NEAR(tv_distance(p, q).value, exact_normal_tv(1.0), 0.02);
}

TEST(TvDistance, SymmetricAndTriangleOnSharedGrid)
{
    auto const a = normal_cloud(20000, 0.0, 1.0, 5);
    auto const b = normal_cloud(20000, 0.7, 1.2, 6);
    auto const c = normal_cloud(20000, -0.4, 0.8, 7);
    Binning bin;
    bin.bins_per_axis = 40;
    bin.range = std::vector<std::pair<double, double>>{{-6.0, 6.0}};
    double const ab = tv_distance(a, b, bin).value;
    double const ba = tv_distance(b, a, bin).value;
    double const ac = tv_distance(a, c, bin).value;
    double const cb = tv_distance(c, b, bin).value;
    EXPECT_DOUBLE_EQ(ab, ba);
    EXPECT_LE(ab, ac + cb + 1e-12);
}

TEST(TvDistance, WarnsOnMassOutsideRange)
{
    auto const p = normal_cloud(1000, 0.0, 1.0, 8);
    Binning bin;
    bin.range = std::vector<std::pair<double, double>>{{-0.5, 0.5}};
    auto const r = tv_distance(p, p, bin);
    EXPECT_GT(r.outside_mass, 0.3);
    EXPECT_TRUE(r.warned);
}

TEST(TvDistance, RejectsHighDimension)
{
    auto const m = EmpiricalMeasure::uniform(4, std::vector<double>(8, 0.0));
    EXPECT_THROW(tv_distance(m, m), std::invalid_argument);
}

TEST(PseudoMetric, Truncates)
{
    std::vector<double> const x{0.0, 0.0};
    std::vector<double> const y{0.3, 0.4};
    EXPECT_DOUBLE_EQ((PseudoMetric{1.0})(x, y), 0.5);
    EXPECT_DOUBLE_EQ((PseudoMetric{4.0})(x, y), 1.0);
}

TEST(Assignment, MatchesBruteForce)
{
    std::size_t const n = 6;
    for (std::uint64_t seed = 0; seed < 10; ++seed)
    {
        CounterRng rng({seed, NoiseDomain::resample, 1}, 0);
        std::vector<double> cost(n * n);
        for (auto& c : cost)
        {
            c = rng.uniform();
        }
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        double best = 1e300;
        do
        {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i)
            {
                s += cost[i * n + perm[i]];
            }
            best = std::min(best, s);
        } while (std::next_permutation(perm.begin(), perm.end()));
        auto const a = solve_assignment(cost, n);
        double got = 0.0;
        std::vector<bool> used(n, false);
        for (std::size_t i = 0; i < n; ++i)
        {
            ASSERT_FALSE(used[a[i]]);
            used[a[i]] = true;
            got += cost[i * n + a[i]];
        }
        EXPECT_NEAR(got, best, 1e-12);
    }
}

TEST(Wasserstein, ZeroOnEqualMeasures)
{
    auto const p = normal_cloud(200, 0.0, 1.0, 9);
    EXPECT_NEAR(wasserstein_pseudo(p, p, PseudoMetric{10.0}), 0.0, 1e-12);
}

TEST(Wasserstein, FarApartIsOne)
{
    auto const p = normal_cloud(100, 0.0, 0.1, 10);
    auto const q = normal_cloud(100, 10.0, 0.1, 11);
    EXPECT_NEAR(wasserstein_pseudo(p, q, PseudoMetric{1.0}), 1.0, 1e-12);
}

TEST(Wasserstein, PointMassesAtHalfScale)
{
    for (double n : {1.0, 4.0, 100.0})
    {
        auto const p = constant_cloud(50, 0.0);
        auto const q = constant_cloud(50, 1.0 / (2.0 * n));
        EXPECT_NEAR(wasserstein_pseudo(p, q, PseudoMetric{n}), 0.5, 1e-12);
    }
}

TEST(Wasserstein, MonotoneInScale)
{
    auto const p = normal_cloud(128, 0.0, 1.0, 12);
    auto const q = normal_cloud(128, 0.2, 1.0, 13);
    double prev = 0.0;
    for (double n : {0.1, 1.0, 10.0, 100.0})
    {
        double const w = wasserstein_pseudo(p, q, PseudoMetric{n});
        EXPECT_GE(w, prev - 1e-12);
        prev = w;
    }
}

TEST(Wasserstein, BoundedByDiscreteTv)
{
    // Half the atoms moved: the empirical TV is exactly 1/2.
    auto const p = normal_cloud(100, 0.0, 1.0, 14);
    auto q = p;
    for (std::size_t i = 0; i < 50; ++i)
    {
        q.points[i] += 3.0 + static_cast<double>(i);
    }
    for (double n : {1.0, 1000.0})
    {
        EXPECT_LE(wasserstein_pseudo(p, q, PseudoMetric{n}), 0.5 + 1e-12);
    }
}

TEST(Wasserstein, SinkhornAgreesWithExact)
{
    auto const p = normal_cloud(300, 0.0, 1.0, 15);
    auto const q = normal_cloud(300, 0.4, 1.0, 16);
    TransportOptions exact;
    exact.exact_limit = 1000;
    TransportOptions entropic;
    entropic.exact_limit = 0;
    double const a = wasserstein_pseudo(p, q, PseudoMetric{1.0}, exact);
    double const b = wasserstein_pseudo(p, q, PseudoMetric{1.0}, entropic);
    EXPECT_NEAR(a, b, 0.02);
}

TEST(GaussianTv, ClosedForm)
{
    DiagGaussian const p{{0.0, 0.0}, {1.0, 2.0}};
    DiagGaussian const q{{0.6, 1.6}, {1.0, 2.0}};
    EXPECT_NEAR(gaussian_tv_equal_cov(p, q), exact_normal_tv(1.0), 1e-14);
    EXPECT_DOUBLE_EQ(gaussian_tv_equal_cov(p, p), 0.0);
}

TEST(MaximalCoupling, EqualLawsAlwaysCouple)
{
    DiagGaussian const p{{0.3}, {1.0}};
    for (std::uint64_t s = 0; s < 500; ++s)
    {
        auto const d = maximal_coupling(p, p, s);
        ASSERT_TRUE(d.coupled);
        ASSERT_EQ(d.first, d.second);
    }
}

TEST(MaximalCoupling, FailureRateIsTvAndMarginalsExact)
{
    DiagGaussian const p{{0.0}, {1.0}};
    DiagGaussian const q{{1.0}, {1.0}};
    std::size_t const n = 100000;
    std::size_t fails = 0;
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        auto const d = maximal_coupling(p, q, derive_seed(77, i));
        fails += d.coupled ? 0 : 1;
        EXPECT_EQ(d.coupled, d.first == d.second);
        a[i] = d.first[0];
        b[i] = d.second[0];
    }
    EXPECT_NEAR(static_cast<double>(fails) / n, exact_normal_tv(1.0), 0.005);
    EXPECT_GT(stats::ks_test(a, [](double x) { return stats::normal_cdf(x); }).p_value, 1e-3);
    EXPECT_GT(stats::ks_test(b, [](double x) { return stats::normal_cdf(x - 1.0); }).p_value, 1e-3);
}

TEST(MaximalCoupling, SeparatedLawsNeverCouple)
{
    DiagGaussian const p{{0.0}, {1.0}};
    DiagGaussian const q{{40.0}, {1.0}};
    for (std::uint64_t s = 0; s < 200; ++s)
    {
        ASSERT_FALSE(maximal_coupling(p, q, s).coupled);
    }
}

TEST(MaximalCoupling, HistogramDensities)
{
    auto const mp = normal_cloud(20000, 0.0, 1.0, 20);
    auto const mq = normal_cloud(20000, 1.0, 1.0, 21);
    std::vector<std::pair<double, double>> const range{{-6.0, 7.0}};
    HistogramDensity const p(mp, range, 52);
    HistogramDensity const q(mq, range, 52);
    Binning bin;
    bin.bins_per_axis = 52;
    bin.range = range;
    double const tv = tv_distance(mp, mq, bin).value;
    std::size_t const n = 20000;
    std::size_t fails = 0;
    CounterRng rng({3, NoiseDomain::coupling, 0}, 0);
    for (std::size_t i = 0; i < n; ++i)
    {
        fails += maximal_coupling(p, q, rng).coupled ? 0 : 1;
    }
    EXPECT_NEAR(static_cast<double>(fails) / n, tv, 0.015);
}

CouplingRun synthetic_run(std::vector<double> fractions, double dt = 1.0)
{
    CouplingRun r;
    r.pairs = 1000;
    for (std::size_t i = 0; i < fractions.size(); ++i)
    {
        r.times.push_back(dt * static_cast<double>(i));
    }
    r.uncoupled = std::move(fractions);
    return r;
}

TEST(MixingFit, ExactExponential)
{
    std::vector<double> f;
    for (int i = 0; i < 8; ++i)
    {
        f.push_back(std::pow(0.5, i));
    }
    auto const fit = fit_mixing_rate(synthetic_run(f));
    EXPECT_EQ(fit.status, FitStatus::ok);
    EXPECT_NEAR(fit.rate, std::log(2.0), 1e-12);
    EXPECT_NEAR(fit.c, 1.0, 1e-12);
}

TEST(MixingFit, AllCoupledIsInfiniteRate)
{
    auto const fit = fit_mixing_rate(synthetic_run({1.0, 0.0, 0.0, 0.0}));
    EXPECT_EQ(fit.status, FitStatus::infinite_rate);
    EXPECT_TRUE(std::isinf(fit.rate));
}

TEST(MixingFit, NoisyRateRecovered)
{
    CounterRng rng({4, NoiseDomain::resample, 0}, 0);
    std::vector<double> f;
    for (int i = 0; i < 10; ++i)
    {
        f.push_back(std::exp(-0.7 * i) * (1.0 + 0.03 * rng.normal()));
    }
    auto const fit = fit_mixing_rate(synthetic_run(f));
    EXPECT_EQ(fit.status, FitStatus::ok);
    EXPECT_NEAR(fit.rate, 0.7, 0.05);
}

TEST(MixingFit, InsufficientAndNonmonotone)
{
    EXPECT_EQ(fit_mixing_rate(synthetic_run({1.0, 0.5, 0.25})).status, FitStatus::insufficient);
    auto run = synthetic_run({1.0, 0.5, 0.9, 0.2, 0.1});
    run.std_error = {0.0, 0.01, 0.01, 0.01, 0.01};
    EXPECT_EQ(fit_mixing_rate(run).status, FitStatus::nonmonotone);
    run.fit_from = 1.0;
    run.fit_to = 3.0;
    run.std_error.clear();
    run.uncoupled = {1.0, 0.5, 0.25, 0.125, 1e-9};
    auto const fit = fit_mixing_rate(run);
    EXPECT_EQ(fit.points_used, 3u);
    EXPECT_EQ(fit.status, FitStatus::insufficient);
}

TEST(MixingFit, CsvHeader)
{
    std::ostringstream os;
    write_csv(os, synthetic_run({1.0, 0.5}));
    EXPECT_EQ(os.str().substr(0, 29), "t,uncoupled_fraction,stderr\n0");
}

}  // namespace
}  // namespace twonoise
