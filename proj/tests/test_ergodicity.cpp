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
#include <memory>
#include <vector>

#include "twonoise/driving.hpp"
#include "twonoise/ergodicity.hpp"
#include "twonoise/integrator.hpp"
#include "twonoise/oracle.hpp"
#include "twonoise/stats.hpp"

namespace twonoise
{
namespace
{

SemilinearModel pure_decay()
{
    SemilinearModel m = example1d_model();
    m.coupling = {};
    m.diffusion = {};
    return m;
}

OUSpec silent_driver()
{
    return OUSpec({-1.0}, {0.0});
}

std::shared_ptr<DrivingPath const> stationary(double t_hist, double dt, std::uint64_t seed,
                                              double t_origin)
{
    return std::make_shared<DrivingPath const>(
        make_stationary_history(example1d_driving_spec(), t_hist, dt, seed, t_origin));
}

TEST(Observables, BoundedAndCounted)
{
    auto const obs = default_observables(3, 10);
    ASSERT_EQ(obs.size(), 10u);
    std::vector<double> const x{2.0, -7.0, 0.3};
    for (auto const& f : obs)
    {
        double const v = f(x);
        EXPECT_TRUE(std::isfinite(v));
        EXPECT_LE(std::abs(v), 1.0);
    }
    auto const zobs = default_z_observables(1, 1);
    EXPECT_FALSE(zobs.empty());
}

TEST(InitialSpread, OriginPlusSphere)
{
    auto const s = initial_spread(4, 2.5, 6, 1);
    ASSERT_EQ(s.size(), 7u);
    EXPECT_EQ(s[0], std::vector<double>(4, 0.0));
    for (std::size_t i = 1; i < s.size(); ++i)
    {
        double r2 = 0.0;
        for (double v : s[i])
        {
            r2 += v * v;
        }
        EXPECT_NEAR(std::sqrt(r2), 2.5, 1e-12);
    }
}

EvoOptions small_evo()
{
    EvoOptions o;
    o.s_list = {-0.5, -3.0, -8.0};
    o.t_grid = {0.0, 1.0};
    o.n_points = 1000;
    o.spread_radius = 4.0;
    o.distance_points = 256;
    o.tolerance = 0.15;
    return o;
}

TEST(EvoSystem, NoiselessCollapsesToPoint)
{
    auto const o = small_evo();
    auto const est = estimate_evo_system(pure_decay(), StepScheme{0.01},
                                         std::make_shared<DrivingPath const>(
                                             zero_driving(1, 0.01, -8.0, 1.0)),
                                         o);
    ASSERT_EQ(est.measures.size(), 2u);
    for (std::size_t i = 0; i < est.times.size(); ++i)
    {
        double const bound = 4.0 * std::exp(-(est.times[i] + 8.0));
        for (double v : est.measures[i].points)
        {
            EXPECT_LE(std::abs(v), bound + 1e-12);
        }
        // Levels s = -3 and s = -8 are within the contracted spread of each other.
        EXPECT_LE(est.level_distances.back()[i], 4.0 * std::exp(-(est.times[i] + 3.0)) + 1e-12);
    }
}

TEST(EvoSystem, LevelsApproachEachOther)
{
    auto const o = small_evo();
    auto const est =
        estimate_evo_system(example1d_model(), StepScheme{0.01}, stationary(12.0, 0.01, 3, 1.0), o);
    ASSERT_EQ(est.level_distances.size(), 2u);
    for (std::size_t i = 0; i < est.times.size(); ++i)
    {
        EXPECT_GT(est.level_distances[0][i], est.level_distances[1][i]);
    }
    EXPECT_TRUE(est.converged) << est.message;
    EXPECT_TRUE(est.distances_decreasing);
    // The deepest level matches the closed-form mean.
    ScalarOracle const oracle(*est.driving);
    for (std::size_t i = 0; i < est.times.size(); ++i)
    {
        auto const [mean, se] =
            est.measures[i].expectation([](std::span<double const> x) { return x[0]; });
        EXPECT_NEAR(mean, oracle.exact_evo_measure(est.times[i]).mean, 4.0 * se);
    }
}

TEST(EvoSystem, ShiftWithWienerOffsetReplays)
{
    auto o = small_evo();
    o.n_points = 200;
    auto const drv = stationary(12.0, 0.01, 3, 1.0);
    auto const a = estimate_evo_system(example1d_model(), StepScheme{0.01}, drv, o);
    std::int64_t const m = 150;
    auto shifted = o;
    for (auto& s : shifted.s_list)
    {
        s -= 1.5;
    }
    for (auto& t : shifted.t_grid)
    {
        t -= 1.5;
    }
    shifted.w_offset = m;
    auto const b = estimate_evo_system(example1d_model(), StepScheme{0.01},
                                       std::make_shared<DrivingPath const>(drv->shifted(m)),
                                       shifted);
    for (std::size_t i = 0; i < a.measures.size(); ++i)
    {
        EXPECT_EQ(a.measures[i].points, b.measures[i].points);
    }
}

TEST(EvoSystem, RejectsBadGrids)
{
    auto o = small_evo();
    o.s_list = {-3.0, -0.5};
    EXPECT_THROW(estimate_evo_system(example1d_model(), StepScheme{0.01},
                                     stationary(12.0, 0.01, 3, 1.0), o),
                 std::invalid_argument);
}

TEST(FlowProperty, HoldsForPullbackAndFailsUnderWrongDriver)
{
    auto o = small_evo();
    o.s_list = {-4.0, -8.0};
    o.t_grid = {0.0, 0.5, 1.0};
    o.n_points = 2000;
    auto const est =
        estimate_evo_system(example1d_model(), StepScheme{0.01}, stationary(12.0, 0.01, 5, 1.0), o);
    FlowCheckOptions f;
    f.observables = default_observables(1, 10);
    auto const rep = check_flow_property(est, example1d_model(), StepScheme{0.01}, f);
    EXPECT_TRUE(rep.passed) << rep.pass_fraction;
    for (auto const& tr : rep.triples)
    {
        if (tr.s == tr.t)
        {
            EXPECT_EQ(tr.pushed, tr.target);
            EXPECT_TRUE(tr.pass);
        }
    }
    // Pushing forward under an unrelated driver realisation breaks the flow.
    f.pushforward_driving = std::make_shared<DrivingPath const>(
        make_stationary_history(example1d_driving_spec(), 12.0, 0.01, 1234, 1.0));
    auto const neg = check_flow_property(est, example1d_model(), StepScheme{0.01}, f);
    EXPECT_FALSE(neg.passed);
    EXPECT_GT(neg.max_abs_z, 5.0);
}

TEST(KrylovBogoliubov, MarginalMoments)
{
    KbOptions o;
    o.t_max = 2000.0;
    auto const samples =
        krylov_bogoliubov(example1d_model(), StepScheme{0.01}, example1d_driving_spec(), o);
    ASSERT_EQ(samples.size(), 1991u);
    std::vector<double> x, h;
    for (auto const& s : samples)
    {
        x.push_back(s.x[0]);
        h.push_back(s.h.window().at_zero()[0]);
        EXPECT_NEAR(s.h.t_origin(), s.t, 1e-9);
        EXPECT_NEAR(s.h.window().t_hist(), o.window, 1e-9);
    }
    EXPECT_NEAR(stats::variance(x), example1d_joint_variance(), 0.15);
    EXPECT_NEAR(stats::variance(h), 0.5, 0.1);
    EXPECT_NEAR(stats::batch_means(x, 20).mean, 0.0, 4.0 * stats::batch_means(x, 20).se);

    auto const rep = kb_invariance_test(example1d_model(), StepScheme{0.01}, samples, 1.0,
                                        default_z_observables(1, 1), 17);
    EXPECT_TRUE(rep.passed);
}

TEST(KrylovBogoliubov, NoiselessSamplesSitAtOrigin)
{
    KbOptions o;
    o.t_max = 50.0;
    o.burn_in = 20.0;
    o.x0 = {3.0};
    auto const samples = krylov_bogoliubov(pure_decay(), StepScheme{0.01}, silent_driver(), o);
    ASSERT_FALSE(samples.empty());
    for (auto const& s : samples)
    {
        EXPECT_LE(std::abs(s.x[0]), 3.0 * std::exp(-20.0) + 1e-15);
        EXPECT_EQ(s.h.window().at_zero()[0], 0.0);
    }
}

AsfOptions small_asf()
{
    AsfOptions o;
    o.x = {0.5};
    o.gamma_list = {0.0, 0.1, 1.0};
    o.n_list = {1.0, 10.0};
    o.t_list = {0.5, 2.0};
    o.omega_count = 4;
    o.kernel_samples = 32;
    return o;
}

TEST(Asf, ZeroRadiusVanishesAndLinearBoundHolds)
{
    auto const o = small_asf();
    auto const tab = asf_diagnostic(example1d_model(), StepScheme{0.01}, o);
    EXPECT_EQ(tab.entries.size(), 12u);
    for (auto const& e : tab.entries)
    {
        if (e.gamma == 0.0)
        {
            EXPECT_EQ(e.value, 0.0);
        }
        // Shared W: every sample of the y-kernel is the x-sample shifted by e^{-t} gamma.
        double const bound = std::min(1.0, e.n * std::exp(-e.t) * e.gamma);
        EXPECT_LE(e.value, bound + 1e-12);
    }
    EXPECT_TRUE(tab.vanishes_with_gamma);
    EXPECT_NO_THROW(tab.at(1.0, 10.0, 2.0));
    EXPECT_THROW(tab.at(0.3, 10.0, 2.0), std::out_of_range);
}

TEST(Lyapunov, ConstantsFromFormulae)
{
    auto const c = lyapunov_constants(1.0, 2.0, 0.5, 1.0, 0.25);
    EXPECT_DOUBLE_EQ(c.kappa5, 1.0);
    EXPECT_NEAR(c.alpha, 0.1722701, 1e-6);
    EXPECT_NEAR(c.delta, 3.869891, 1e-5);
    EXPECT_NEAR(c.kappa4, 3.0 + 0.5 * c.delta, 1e-12);
    auto const d = lyapunov_constants(3.0, 2.0, 0.5, 1.0, 0.25);
    EXPECT_DOUBLE_EQ(d.kappa5, 1.0);
}

TEST(Lyapunov, OuKappas)
{
    auto const [a, b] = ou_kappas(example1d_driving_spec());
    EXPECT_DOUBLE_EQ(a, 2.0);
    EXPECT_DOUBLE_EQ(b, 0.5);
    auto const [c, d] = ou_kappas(OUSpec({-1.0, -3.0}, {1.0, 1.0}));
    EXPECT_DOUBLE_EQ(c, 2.0);
    EXPECT_NEAR(d, 0.5 + 1.0 / 6.0, 1e-15);
}

TEST(Lyapunov, NoiselessReturnTime)
{
    LyapunovOptions o;
    o.N = 10;
    auto const rep = lyapunov_audit(pure_decay(), StepScheme{0.01}, silent_driver(), o);
    ASSERT_TRUE(rep.deterministic_tau.has_value());
    // V decays like e^{-2t} from 1.05 M kappa4: one period of 0.25 suffices.
    EXPECT_EQ(*rep.deterministic_tau, 1);
    EXPECT_FALSE(rep.kappas_fitted);
}

TEST(Lyapunov, ReturnTimeTailDecaysFastEnough)
{
    LyapunovOptions o;
    o.N = 4000;
    o.fit_samples = 20000;
    auto const rep =
        lyapunov_audit(example1d_model(), StepScheme{0.01}, example1d_driving_spec(), o);
    EXPECT_TRUE(rep.kappas_fitted);
    EXPECT_NEAR(rep.kappa1_fit, 2.0, 0.1);
    EXPECT_NEAR(rep.kappa2_fit, 0.5, 0.05);
    EXPECT_TRUE(rep.tail_nonincreasing);
    EXPECT_TRUE(rep.tail_exponential);
    EXPECT_GE(rep.tail_rate, rep.constants.kappa5 / 2.0);
    EXPECT_TRUE(rep.drift_ok);
}

MixingOptions small_mixing()
{
    MixingOptions o;
    o.x = {2.0};
    o.y = {-2.0};
    o.horizon = 8.0;
    o.omega_count = 4;
    o.pairs_per_omega = 200;
    return o;
}

TEST(Mixing, EqualStartsAreCoupled)
{
    auto o = small_mixing();
    o.y = o.x;
    auto const r = mixing_certificate(example1d_model(), StepScheme{0.01}, o);
    for (double f : r.run.uncoupled)
    {
        EXPECT_EQ(f, 0.0);
    }
    for (double g : r.phi_gap)
    {
        EXPECT_EQ(g, 0.0);
    }
}

TEST(Mixing, CouplesAtPositiveRate)
{
    auto o = small_mixing();
    o.pairs_per_omega = 500;
    o.fit_min_count = 5;
    auto const r = mixing_certificate(example1d_model(), StepScheme{0.01}, o);
    EXPECT_EQ(r.run.uncoupled.front(), 1.0);
    EXPECT_LT(r.run.uncoupled.back(), 0.05);
    EXPECT_GT(r.successes, 0u);
    EXPECT_TRUE(r.nonincreasing);
    EXPECT_GT(r.fit.rate, 0.0);
}

TEST(Mixing, RequiresAdditiveNoise)
{
    EXPECT_THROW(mixing_certificate(pure_decay(), StepScheme{0.01}, small_mixing()),
                 std::invalid_argument);
}

TEST(Mixing, IndependentOfWorkerCount)
{
    auto o = small_mixing();
    o.workers = 1;
    auto const a = mixing_certificate(example1d_model(), StepScheme{0.01}, o);
    o.workers = 3;
    auto const b = mixing_certificate(example1d_model(), StepScheme{0.01}, o);
    EXPECT_EQ(a.run.uncoupled, b.run.uncoupled);
    EXPECT_EQ(a.phi_gap, b.phi_gap);
}

TEST(SmallBall, LinearFlowHittingTime)
{
    SmallBallOptions o;
    o.rho1 = 1.0;
    o.delta1 = 0.5;
    o.T = 0.5;
    o.N = 100;
    o.driving_spec = silent_driver();
    auto const r = small_ball_probe(pure_decay(), StepScheme{0.01}, o);
    EXPECT_EQ(r.K0, static_cast<std::int64_t>(std::ceil(std::log(2.0 * 1.0 / 0.5) / 0.5)));
    EXPECT_DOUBLE_EQ(r.alpha_hat, 1.0);
}

TEST(SmallBall, NoisyProbabilityPositive)
{
    SmallBallOptions o;
    o.N = 2000;
    auto const r = small_ball_probe(example1d_model(), StepScheme{0.01}, o);
    EXPECT_GT(r.ci_low, 0.0);
    EXPECT_LE(r.ci_low, r.alpha_hat);
    EXPECT_GE(r.ci_high, r.alpha_hat);
}

TEST(SmallBall, CapExceededThrows)
{
    SmallBallOptions o;
    o.rho1 = 1e3;
    o.delta1 = 1e-3;
    o.k_cap = 3;
    o.driving_spec = silent_driver();
    EXPECT_THROW(small_ball_probe(pure_decay(), StepScheme{0.01}, o), std::runtime_error);
}

}  // namespace
}  // namespace twonoise
