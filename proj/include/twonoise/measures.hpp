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

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "twonoise/rng.hpp"

namespace twonoise
{

/// Weighted point cloud in R^d, points stored row-major.
struct EmpiricalMeasure
{
    std::size_t dim = 1;
    std::vector<double> points;
    std::vector<double> weights;

    /// Equal weights 1/M.
    static EmpiricalMeasure uniform(std::size_t dim, std::vector<double> points);

    std::size_t size() const { return weights.size(); }
    std::span<double const> point(std::size_t i) const
    {
        return {points.data() + i * dim, dim};
    }
    bool has_uniform_weights() const;

    /// Throws std::invalid_argument unless M >= 1, the point array matches
    /// and the weights are nonnegative with sum 1 (to 1e-12).
    void validate() const;

    /// Weighted mean of phi and its standard error (i.i.d. points).
    std::pair<double, double> expectation(
        std::function<double(std::span<double const>)> const& phi) const;
};

/// The image of `m` under a scalar observable, as a 1-d measure.
EmpiricalMeasure project(EmpiricalMeasure const& m,
                         std::function<double(std::span<double const>)> const& f);

/// Shared histogram grid. With no explicit range the pooled sample range is
/// used and bin widths follow Freedman-Diaconis per axis.
struct Binning
{
    std::size_t max_bins_per_axis = 64;
    std::optional<std::size_t> bins_per_axis;
    std::optional<std::vector<std::pair<double, double>>> range;
};

struct TvEstimate
{
    double value = 0.0;
    double outside_mass = 0.0;  // max over the two measures
    bool warned = false;        // outside_mass > 1%
};

/// Half the L1 distance of the two histograms on a shared grid. Dimension
/// at most 3; project higher-dimensional clouds first. Mass outside an
/// explicit range is clamped into the edge bins.
TvEstimate tv_distance(EmpiricalMeasure const& p, EmpiricalMeasure const& q,
                       Binning const& binning = {});

/// d_n(x, y) = min(1, n |x - y|).
struct PseudoMetric
{
    double n = 1.0;
    double operator()(std::span<double const> x, std::span<double const> y) const;
};

struct TransportOptions
{
    std::size_t exact_limit = 512;
    double epsilon = 5e-3;          // entropic regularisation, in units of the cost
    std::size_t max_iterations = 5000;
    double tolerance = 1e-9;
};

/// Optimal transport cost under d_n. Exact assignment when both clouds have
/// at most `exact_limit` equally weighted points (sizes must then agree),
/// log-domain Sinkhorn otherwise.
double wasserstein_pseudo(EmpiricalMeasure const& p, EmpiricalMeasure const& q,
                          PseudoMetric const& d, TransportOptions const& opts = {});

/// Minimum-cost perfect matching of an n x n cost matrix (row-major).
/// Returns the column assigned to each row.
std::vector<std::size_t> solve_assignment(std::span<double const> cost, std::size_t n);

/// Entropic transport cost <P, C> with marginals a, b.
double sinkhorn_cost(std::span<double const> a, std::span<double const> b,
                     std::function<double(std::size_t, std::size_t)> const& cost,
                     TransportOptions const& opts);

/// A law that can be sampled and whose log-density can be evaluated.
template <class D>
concept SampleableDensity = requires(D const& d, std::span<double const> x,
                                     std::span<double> out, CounterRng& rng) {
    { d.dim() } -> std::convertible_to<std::size_t>;
    { d.log_density(x) } -> std::convertible_to<double>;
    d.sample(rng, out);
};

/// Product of independent normals.
struct DiagGaussian
{
    std::vector<double> mean;
    std::vector<double> sd;

    std::size_t dim() const { return mean.size(); }
    double log_density(std::span<double const> x) const;
    void sample(CounterRng& rng, std::span<double> out) const;
};

/// Total variation between two Gaussians with the same diagonal covariance:
/// 2 Phi(|Sigma^{-1/2}(m1 - m2)| / 2) - 1.
double gaussian_tv_equal_cov(DiagGaussian const& p, DiagGaussian const& q);

/// Piecewise-constant density of a 1- to 3-dimensional cloud on a grid.
class HistogramDensity
{
  public:
    HistogramDensity(EmpiricalMeasure const& m, std::vector<std::pair<double, double>> range,
                     std::size_t bins_per_axis);

    std::size_t dim() const { return dim_; }
    double log_density(std::span<double const> x) const;
    void sample(CounterRng& rng, std::span<double> out) const;

  private:
    std::optional<std::size_t> cell_of(std::span<double const> x) const;

    std::size_t dim_;
    std::size_t bins_;
    std::vector<std::pair<double, double>> range_;
    std::vector<double> width_;
    std::vector<double> mass_;
    std::vector<double> cumulative_;
    double cell_volume_;
};

struct CoupledDraw
{
    std::vector<double> first;
    std::vector<double> second;
    bool coupled = false;
};

/// Gamma (rejection) maximal coupling: the marginals are exactly p and q and
/// P(first != second) = TV(p, q).
template <SampleableDensity P, SampleableDensity Q>
CoupledDraw maximal_coupling(P const& p, Q const& q, CounterRng& rng)
{
    if (p.dim() != q.dim())
    {
        throw std::invalid_argument("maximal_coupling: dimension mismatch");
    }
    CoupledDraw r;
    r.first.resize(p.dim());
    r.second.resize(q.dim());
    p.sample(rng, r.first);
    double const lp = p.log_density(r.first);
    if (std::log(rng.uniform()) + lp <= q.log_density(r.first))
    {
        r.second = r.first;
        r.coupled = true;
        return r;
    }
    constexpr std::size_t kMaxRejections = 100'000'000;
    for (std::size_t it = 0; it < kMaxRejections; ++it)
    {
        q.sample(rng, r.second);
        double const lq = q.log_density(r.second);
        if (std::log(rng.uniform()) + lq > p.log_density(r.second))
        {
            return r;
        }
    }
    throw std::runtime_error("maximal_coupling: residual sampler did not terminate");
}

CoupledDraw maximal_coupling(DiagGaussian const& p, DiagGaussian const& q, std::uint64_t seed);

/// Record of a coupling experiment: fraction of still-uncoupled pairs at
/// each checkpoint time.
struct CouplingRun
{
    std::vector<double> times;
    std::vector<double> uncoupled;
    std::vector<double> std_error;
    std::vector<std::size_t> uncoupled_count;
    std::size_t pairs = 0;
    /// Fit only checkpoints with fit_from <= t <= fit_to.
    double fit_from = -std::numeric_limits<double>::infinity();
    double fit_to = std::numeric_limits<double>::infinity();
};

enum class FitStatus
{
    ok,
    infinite_rate,  // every fraction after the first is zero
    insufficient,   // fewer than four nonzero checkpoints in the window
    nonmonotone,    // an increase larger than three combined standard errors
};

char const* to_string(FitStatus s);

struct MixingFit
{
    double c = 0.0;
    double rate = 0.0;
    double rate_se = 0.0;
    double r_squared = 0.0;
    std::size_t points_used = 0;
    FitStatus status = FitStatus::insufficient;
};

/// Least squares of log(uncoupled fraction) against time.
MixingFit fit_mixing_rate(CouplingRun const& run);

/// CSV with header t,uncoupled_fraction,stderr.
void write_csv(std::ostream& os, CouplingRun const& run);

}  // namespace twonoise
