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

#include "twonoise/measures.hpp"

#include <algorithm>
#include <numbers>
#include <string>
#include <tuple>

#include "twonoise/stats.hpp"

namespace twonoise
{

EmpiricalMeasure EmpiricalMeasure::uniform(std::size_t dim, std::vector<double> points)
{
    if (dim == 0 || points.size() % dim != 0)
    {
        throw std::invalid_argument("EmpiricalMeasure: point array is not a multiple of dim");
    }
    EmpiricalMeasure m;
    m.dim = dim;
    std::size_t const n = points.size() / dim;
    m.points = std::move(points);
    m.weights.assign(n, n > 0 ? 1.0 / static_cast<double>(n) : 0.0);
    return m;
}

bool EmpiricalMeasure::has_uniform_weights() const
{
    if (weights.empty())
    {
        return true;
    }
    double const w0 = weights.front();
    return std::all_of(weights.begin(), weights.end(),
                       [w0](double w) { return std::abs(w - w0) <= 1e-15; });
}

void EmpiricalMeasure::validate() const
{
    if (dim == 0 || weights.empty())
    {
        throw std::invalid_argument("EmpiricalMeasure: needs at least one point");
    }
    if (points.size() != weights.size() * dim)
    {
        throw std::invalid_argument("EmpiricalMeasure: points and weights disagree in count");
    }
    if (std::any_of(weights.begin(), weights.end(), [](double w) { return !(w >= 0.0); }))
    {
        throw std::invalid_argument("EmpiricalMeasure: negative weight");
    }
    if (std::abs(stats::pairwise_sum(weights) - 1.0) > 1e-12)
    {
        throw std::invalid_argument("EmpiricalMeasure: weights do not sum to 1");
    }
}

std::pair<double, double> EmpiricalMeasure::expectation(
    std::function<double(std::span<double const>)> const& phi) const
{
    std::size_t const n = size();
    std::vector<double> v(n), wv(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        v[i] = phi(point(i));
        wv[i] = weights[i] * v[i];
    }
    double const m = stats::pairwise_sum(wv);
    std::vector<double> w2(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        w2[i] = weights[i] * weights[i] * (v[i] - m) * (v[i] - m);
    }
    return {m, std::sqrt(stats::pairwise_sum(w2))};
}

EmpiricalMeasure project(EmpiricalMeasure const& m,
                         std::function<double(std::span<double const>)> const& f)
{
    EmpiricalMeasure out;
    out.dim = 1;
    out.weights = m.weights;
    out.points.resize(m.size());
    for (std::size_t i = 0; i < m.size(); ++i)
    {
        out.points[i] = f(m.point(i));
    }
    return out;
}

namespace
{
struct Grid
{
    std::vector<double> lo;
    std::vector<double> width;
    std::size_t bins = 1;

    std::size_t cells() const
    {
        std::size_t c = 1;
        for (std::size_t k = 0; k < lo.size(); ++k)
        {
            c *= bins;
        }
        return c;
    }

    // Clamped cell index; `outside` set when any axis is out of range.
    std::size_t cell(std::span<double const> x, bool& outside) const
    {
        std::size_t idx = 0;
        outside = false;
        for (std::size_t k = 0; k < lo.size(); ++k)
        {
            double const u = (x[k] - lo[k]) / width[k];
            std::int64_t b = static_cast<std::int64_t>(std::floor(u));
            if (u < 0.0 || u > static_cast<double>(bins))
            {
                outside = true;
            }
            b = std::clamp<std::int64_t>(b, 0, static_cast<std::int64_t>(bins) - 1);
            idx = idx * bins + static_cast<std::size_t>(b);
        }
        return idx;
    }
};

Grid make_grid(EmpiricalMeasure const& p, EmpiricalMeasure const& q, Binning const& binning)
{
    std::size_t const d = p.dim;
    Grid g;
    g.lo.resize(d);
    g.width.resize(d);
    std::vector<double> his(d);
    std::size_t fd_bins = 1;
    for (std::size_t k = 0; k < d; ++k)
    {
        std::vector<double> pooled;
        pooled.reserve(p.size() + q.size());
        for (std::size_t i = 0; i < p.size(); ++i)
        {
            pooled.push_back(p.point(i)[k]);
        }
        for (std::size_t i = 0; i < q.size(); ++i)
        {
            pooled.push_back(q.point(i)[k]);
        }
        double lo = 0.0;
        double hi = 0.0;
        if (binning.range)
        {
            std::tie(lo, hi) = binning.range->at(k);
        }
        else
        {
            auto const [mn, mx] = std::minmax_element(pooled.begin(), pooled.end());
            lo = *mn;
            hi = *mx;
        }
        if (!(hi > lo))
        {
            double const pad = std::max(1e-12, std::abs(lo) * 1e-12);
            lo -= pad;
            hi += pad;
        }
        g.lo[k] = lo;
        his[k] = hi;
        double const iqr = stats::quantile(pooled, 0.75) - stats::quantile(pooled, 0.25);
        double const h = 2.0 * iqr * std::cbrt(1.0 / static_cast<double>(pooled.size()));
        std::size_t const b = h > 0.0 ? static_cast<std::size_t>(std::ceil((hi - lo) / h)) : 1;
        fd_bins = std::max(fd_bins, b);
    }
    std::size_t const bins = binning.bins_per_axis.value_or(fd_bins);
    g.bins = std::clamp<std::size_t>(bins, 1, std::max<std::size_t>(1, binning.max_bins_per_axis));
    for (std::size_t k = 0; k < d; ++k)
    {
        g.width[k] = (his[k] - g.lo[k]) / static_cast<double>(g.bins);
    }
    return g;
}
}  // namespace

TvEstimate tv_distance(EmpiricalMeasure const& p, EmpiricalMeasure const& q,
                       Binning const& binning)
{
    p.validate();
    q.validate();
    if (p.dim != q.dim)
    {
        throw std::invalid_argument("tv_distance: dimension mismatch");
    }
    if (p.dim > 3)
    {
        throw std::invalid_argument("tv_distance: dimension above 3, project the clouds first");
    }
    if (binning.range && binning.range->size() != p.dim)
    {
        throw std::invalid_argument("tv_distance: binning range has wrong dimension");
    }
    Grid const g = make_grid(p, q, binning);
    std::vector<double> hp(g.cells(), 0.0), hq(g.cells(), 0.0);
    double out_p = 0.0;
    double out_q = 0.0;
    bool outside = false;
    for (std::size_t i = 0; i < p.size(); ++i)
    {
        hp[g.cell(p.point(i), outside)] += p.weights[i];
        out_p += outside ? p.weights[i] : 0.0;
    }
    for (std::size_t i = 0; i < q.size(); ++i)
    {
        hq[g.cell(q.point(i), outside)] += q.weights[i];
        out_q += outside ? q.weights[i] : 0.0;
    }
    std::vector<double> diff(hp.size());
    for (std::size_t c = 0; c < hp.size(); ++c)
    {
        diff[c] = std::abs(hp[c] - hq[c]);
    }
    TvEstimate r;
    r.value = std::clamp(0.5 * stats::pairwise_sum(diff), 0.0, 1.0);
    r.outside_mass = std::max(out_p, out_q);
    r.warned = r.outside_mass > 0.01;
    return r;
}

double PseudoMetric::operator()(std::span<double const> x, std::span<double const> y) const
{
    double s = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k)
    {
        double const d = x[k] - y[k];
        s += d * d;
    }
    return std::min(1.0, n * std::sqrt(s));
}

double wasserstein_pseudo(EmpiricalMeasure const& p, EmpiricalMeasure const& q,
                          PseudoMetric const& d, TransportOptions const& opts)
{
    p.validate();
    q.validate();
    if (p.dim != q.dim)
    {
        throw std::invalid_argument("wasserstein_pseudo: dimension mismatch");
    }
    bool const small = p.size() <= opts.exact_limit && q.size() <= opts.exact_limit;
    if (small && p.has_uniform_weights() && q.has_uniform_weights())
    {
        if (p.size() != q.size())
        {
            throw std::invalid_argument(
                "wasserstein_pseudo: exact assignment needs equal sizes, resample first (" +
                std::to_string(p.size()) + " vs " + std::to_string(q.size()) + ")");
        }
        std::size_t const n = p.size();
        std::vector<double> cost(n * n);
        for (std::size_t i = 0; i < n; ++i)
        {
            for (std::size_t j = 0; j < n; ++j)
            {
                cost[i * n + j] = d(p.point(i), q.point(j));
            }
        }
        auto const match = solve_assignment(cost, n);
        std::vector<double> used(n);
        for (std::size_t i = 0; i < n; ++i)
        {
            used[i] = cost[i * n + match[i]];
        }
        return std::clamp(stats::pairwise_sum(used) / static_cast<double>(n), 0.0, 1.0);
    }
    auto const cost = [&](std::size_t i, std::size_t j) { return d(p.point(i), q.point(j)); };
    return std::clamp(sinkhorn_cost(p.weights, q.weights, cost, opts), 0.0, 1.0);
}

namespace
{
double log_sum_exp(std::span<double const> v)
{
    double const m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m))
    {
        return m;
    }
    double s = 0.0;
    for (double x : v)
    {
        s += std::exp(x - m);
    }
    return m + std::log(s);
}
}  // namespace

double sinkhorn_cost(std::span<double const> a, std::span<double const> b,
                     std::function<double(std::size_t, std::size_t)> const& cost,
                     TransportOptions const& opts)
{
    std::size_t const m = a.size();
    std::size_t const n = b.size();
    if (static_cast<double>(m) * static_cast<double>(n) > 4e7)
    {
        throw std::invalid_argument("sinkhorn_cost: problem too large, subsample first");
    }
    std::vector<double> c(m * n);
    for (std::size_t i = 0; i < m; ++i)
    {
        for (std::size_t j = 0; j < n; ++j)
        {
            c[i * n + j] = cost(i, j);
        }
    }
    std::vector<double> la(m), lb(n);
    for (std::size_t i = 0; i < m; ++i)
    {
        la[i] = a[i] > 0.0 ? std::log(a[i]) : -std::numeric_limits<double>::infinity();
    }
    for (std::size_t j = 0; j < n; ++j)
    {
        lb[j] = b[j] > 0.0 ? std::log(b[j]) : -std::numeric_limits<double>::infinity();
    }

    std::vector<double> f(m, 0.0), g(n, 0.0), row(std::max(m, n));
    // Epsilon scaling from 1 down to the target, warm-starting the potentials.
    double eps = std::max(1.0, opts.epsilon);
    for (;;)
    {
        for (std::size_t it = 0; it < opts.max_iterations; ++it)
        {
            for (std::size_t i = 0; i < m; ++i)
            {
                for (std::size_t j = 0; j < n; ++j)
                {
                    row[j] = (g[j] - c[i * n + j]) / eps + lb[j];
                }
                f[i] = -eps * log_sum_exp(std::span<double const>(row.data(), n));
            }
            double err = 0.0;
            for (std::size_t j = 0; j < n; ++j)
            {
                for (std::size_t i = 0; i < m; ++i)
                {
                    row[i] = (f[i] - c[i * n + j]) / eps + la[i];
                }
                double const gj = -eps * log_sum_exp(std::span<double const>(row.data(), m));
                // Column marginal before the update measures the violation.
                if (b[j] > 0.0)
                {
                    err += std::abs(b[j] * std::exp((g[j] - gj) / eps) - b[j]);
                }
                g[j] = gj;
            }
            if (err < opts.tolerance)
            {
                break;
            }
        }
        if (eps <= opts.epsilon)
        {
            break;
        }
        eps = std::max(opts.epsilon, eps * 0.5);
    }

    std::vector<double> terms(m * n);
    for (std::size_t i = 0; i < m; ++i)
    {
        for (std::size_t j = 0; j < n; ++j)
        {
            double const cij = c[i * n + j];
            terms[i * n + j] = std::exp((f[i] + g[j] - cij) / eps + la[i] + lb[j]) * cij;
        }
    }
    return stats::pairwise_sum(terms);
}

double DiagGaussian::log_density(std::span<double const> x) const
{
    constexpr double kHalfLog2Pi = 0.91893853320467274178;
    double s = 0.0;
    for (std::size_t k = 0; k < mean.size(); ++k)
    {
        double const z = (x[k] - mean[k]) / sd[k];
        s += -0.5 * z * z - std::log(sd[k]) - kHalfLog2Pi;
    }
    return s;
}

void DiagGaussian::sample(CounterRng& rng, std::span<double> out) const
{
    for (std::size_t k = 0; k < mean.size(); ++k)
    {
        out[k] = mean[k] + sd[k] * rng.normal();
    }
}

double gaussian_tv_equal_cov(DiagGaussian const& p, DiagGaussian const& q)
{
    if (p.dim() != q.dim())
    {
        throw std::invalid_argument("gaussian_tv_equal_cov: dimension mismatch");
    }
    double s = 0.0;
    for (std::size_t k = 0; k < p.dim(); ++k)
    {
        double const z = (p.mean[k] - q.mean[k]) / p.sd[k];
        s += z * z;
    }
    return 2.0 * stats::normal_cdf(0.5 * std::sqrt(s)) - 1.0;
}

CoupledDraw maximal_coupling(DiagGaussian const& p, DiagGaussian const& q, std::uint64_t seed)
{
    CounterRng rng({seed, NoiseDomain::coupling, 0}, 0);
    return maximal_coupling(p, q, rng);
}

HistogramDensity::HistogramDensity(EmpiricalMeasure const& m,
                                   std::vector<std::pair<double, double>> range,
                                   std::size_t bins_per_axis)
    : dim_(m.dim), bins_(bins_per_axis), range_(std::move(range))
{
    m.validate();
    if (dim_ > 3 || range_.size() != dim_ || bins_ == 0)
    {
        throw std::invalid_argument("HistogramDensity: needs dim <= 3, a range per axis, bins > 0");
    }
    cell_volume_ = 1.0;
    for (auto const& [lo, hi] : range_)
    {
        if (!(hi > lo))
        {
            throw std::invalid_argument("HistogramDensity: empty axis range");
        }
        width_.push_back((hi - lo) / static_cast<double>(bins_));
        cell_volume_ *= width_.back();
    }
    std::size_t cells = 1;
    for (std::size_t k = 0; k < dim_; ++k)
    {
        cells *= bins_;
    }
    mass_.assign(cells, 0.0);
    double inside = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i)
    {
        if (auto c = cell_of(m.point(i)))
        {
            mass_[*c] += m.weights[i];
            inside += m.weights[i];
        }
    }
    if (!(inside > 0.0))
    {
        throw std::invalid_argument("HistogramDensity: no mass inside the range");
    }
    cumulative_.resize(cells);
    double acc = 0.0;
    for (std::size_t c = 0; c < cells; ++c)
    {
        mass_[c] /= inside;
        acc += mass_[c];
        cumulative_[c] = acc;
    }
}

std::optional<std::size_t> HistogramDensity::cell_of(std::span<double const> x) const
{
    std::size_t idx = 0;
    for (std::size_t k = 0; k < dim_; ++k)
    {
        if (x[k] < range_[k].first || x[k] >= range_[k].second)
        {
            return std::nullopt;
        }
        auto b = static_cast<std::size_t>((x[k] - range_[k].first) / width_[k]);
        b = std::min(b, bins_ - 1);
        idx = idx * bins_ + b;
    }
    return idx;
}

double HistogramDensity::log_density(std::span<double const> x) const
{
    auto const c = cell_of(x);
    if (!c || mass_[*c] <= 0.0)
    {
        return -std::numeric_limits<double>::infinity();
    }
    return std::log(mass_[*c] / cell_volume_);
}

void HistogramDensity::sample(CounterRng& rng, std::span<double> out) const
{
    double const u = rng.uniform() * cumulative_.back();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    auto cell = static_cast<std::size_t>(std::distance(cumulative_.begin(), it));
    cell = std::min(cell, cumulative_.size() - 1);
    while (mass_[cell] <= 0.0 && cell > 0)
    {
        --cell;
    }
    for (std::size_t k = dim_; k-- > 0;)
    {
        std::size_t const b = cell % bins_;
        cell /= bins_;
        out[k] = range_[k].first + (static_cast<double>(b) + rng.uniform()) * width_[k];
    }
}

char const* to_string(FitStatus s)
{
    switch (s)
    {
        case FitStatus::ok:
            return "ok";
        case FitStatus::infinite_rate:
            return "infinite_rate";
        case FitStatus::insufficient:
            return "insufficient";
        case FitStatus::nonmonotone:
            return "nonmonotone";
    }
    return "unknown";
}

MixingFit fit_mixing_rate(CouplingRun const& run)
{
    std::size_t const n = run.times.size();
    if (run.uncoupled.size() != n)
    {
        throw std::invalid_argument("fit_mixing_rate: times and fractions differ in length");
    }
    MixingFit fit;
    if (n >= 2 && std::all_of(run.uncoupled.begin() + 1, run.uncoupled.end(),
                              [](double f) { return f == 0.0; }))
    {
        fit.rate = std::numeric_limits<double>::infinity();
        fit.status = FitStatus::infinite_rate;
        return fit;
    }
    std::vector<double> t, y;
    for (std::size_t i = 0; i < n; ++i)
    {
        if (run.uncoupled[i] > 0.0 && run.times[i] >= run.fit_from && run.times[i] <= run.fit_to)
        {
            t.push_back(run.times[i]);
            y.push_back(std::log(run.uncoupled[i]));
        }
    }
    fit.points_used = t.size();
    if (t.size() < 4)
    {
        fit.status = FitStatus::insufficient;
        return fit;
    }
    auto const lf = stats::linear_fit(t, y);
    fit.rate = -lf.slope;
    fit.rate_se = lf.slope_se;
    fit.c = std::exp(lf.intercept);
    fit.r_squared = lf.r_squared;
    fit.status = FitStatus::ok;
    bool const have_se = run.std_error.size() == n;
    for (std::size_t i = 0; i + 1 < n; ++i)
    {
        double const rise = run.uncoupled[i + 1] - run.uncoupled[i];
        double const se = have_se ? std::hypot(run.std_error[i], run.std_error[i + 1]) : 0.0;
        if (rise > 3.0 * se && rise > 0.0)
        {
            fit.status = FitStatus::nonmonotone;
            break;
        }
    }
    return fit;
}

void write_csv(std::ostream& os, CouplingRun const& run)
{
    os << "t,uncoupled_fraction,stderr\n";
    os.precision(17);
    for (std::size_t i = 0; i < run.times.size(); ++i)
    {
        double const se = i < run.std_error.size() ? run.std_error[i] : 0.0;
        os << run.times[i] << ',' << run.uncoupled[i] << ',' << se << '\n';
    }
}

}  // namespace twonoise
