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

#include "twonoise/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "twonoise/stats.hpp"

namespace twonoise
{

SemilinearModel example1d_model()
{
    SemilinearModel m;
    m.name = "example1d";
    m.dim = 1;
    m.driving_dim = 1;
    m.a_eigs = {-1.0};
    m.coupling = [](std::span<double const>, std::span<double const> y, std::span<double> out) {
        out[0] = y[0];
    };
    m.diffusion = [](std::span<double const>, std::span<double const>, std::span<double> out) {
        out[0] = 1.0;
    };
    m.additive_noise = true;
    m.growth_kappa = 1.0;
    return m;
}

OUSpec example1d_driving_spec()
{
    return OUSpec::uniform(1, -1.0, 1.0);
}

double example1d_joint_variance()
{
    // Var of int e^{-u} Y(t-u) du with Cov Y = e^{-|r|}/2 is 1/4.
    return 0.5 + 0.25;
}

double tv_equal_variance(double mean_gap, double var)
{
    if (mean_gap == 0.0)
    {
        return 0.0;
    }
    if (!(var > 0.0))
    {
        return 1.0;
    }
    return 2.0 * stats::normal_cdf(std::abs(mean_gap) / (2.0 * std::sqrt(var))) - 1.0;
}

ScalarOracle::ScalarOracle(DrivingPath driving, double quadrature_dt)
    : driving_(std::move(driving)), qdt_(quadrature_dt > 0.0 ? quadrature_dt : driving_.dt())
{
    if (driving_.dim() != 1)
    {
        throw std::invalid_argument("ScalarOracle: driver must be scalar");
    }
    stride_ = grid_index(qdt_, driving_.dt(), "quadrature_dt");
    if (stride_ < 1)
    {
        throw std::invalid_argument("ScalarOracle: quadrature_dt must be positive");
    }
}

double ScalarOracle::convolution(double s, double t) const
{
    std::int64_t const k0 = grid_index(s, qdt_, "s");
    std::int64_t const k1 = grid_index(t, qdt_, "t");
    if (k1 == k0)
    {
        return 0.0;
    }
    if (!driving_.covers_index(k0 * stride_) || !driving_.covers_index(k1 * stride_))
    {
        throw std::out_of_range("ScalarOracle: driving path does not cover the interval");
    }
    std::vector<double> terms(static_cast<std::size_t>(k1 - k0 + 1));
    for (std::int64_t k = k0; k <= k1; ++k)
    {
        double const w = (k == k0 || k == k1) ? 0.5 : 1.0;
        double const r = static_cast<double>(k) * qdt_;
        terms[static_cast<std::size_t>(k - k0)] =
            w * std::exp(-(t - r)) * driving_.at_index(k * stride_)[0];
    }
    return qdt_ * stats::pairwise_sum(terms);
}

GaussianLaw ScalarOracle::exact_kernel(double x, double s, double t) const
{
    if (t < s)
    {
        throw std::invalid_argument("exact_kernel: t must be >= s");
    }
    GaussianLaw law;
    law.mean = std::exp(-(t - s)) * x + convolution(s, t);
    law.var = -0.5 * std::expm1(-2.0 * (t - s));
    return law;
}

EvoMeasureLaw ScalarOracle::exact_evo_measure(double t, std::optional<double> t_hist) const
{
    std::int64_t const a = driving_.first_index();
    std::int64_t const q = a >= 0 ? (a + stride_ - 1) / stride_ : -((-a) / stride_);
    double const first = static_cast<double>(q) * qdt_;
    double const h = t_hist.value_or(t - first);
    if (h < 0.0)
    {
        throw std::out_of_range("exact_evo_measure: t lies before the driving window");
    }
    EvoMeasureLaw law;
    law.mean = convolution(t - h, t);
    law.var = 0.5;
    double sup = 0.0;
    std::int64_t const g0 = grid_index(t - h, driving_.dt(), "t - t_hist");
    std::int64_t const g1 = grid_index(t, driving_.dt(), "t");
    for (std::int64_t g = g0; g <= g1; ++g)
    {
        sup = std::max(sup, std::abs(driving_.at_index(g)[0]));
    }
    law.truncation_bound = std::exp(-h) * sup;
    return law;
}

double ScalarOracle::exact_tv_kernels(double x, double y, double s, double t) const
{
    if (!(t > s))
    {
        return x == y ? 0.0 : 1.0;
    }
    return tv_equal_variance(std::exp(-(t - s)) * (x - y), -0.5 * std::expm1(-2.0 * (t - s)));
}

}  // namespace twonoise
