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

#include "twonoise/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace twonoise::stats
{

double pairwise_sum(std::span<double const> values)
{
    if (values.size() <= 16)
    {
        double s = 0.0;
        for (double v : values)
        {
            s += v;
        }
        return s;
    }
    std::size_t const half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

double mean(std::span<double const> values)
{
    if (values.empty())
    {
        return 0.0;
    }
    return pairwise_sum(values) / static_cast<double>(values.size());
}

double variance(std::span<double const> values)
{
    std::size_t const n = values.size();
    if (n < 2)
    {
        return 0.0;
    }
    double const m = mean(values);
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        double const d = values[i] - m;
        sq[i] = d * d;
    }
    return pairwise_sum(sq) / static_cast<double>(n - 1);
}

MeanSe mean_se(std::span<double const> values)
{
    MeanSe r;
    r.mean = mean(values);
    if (values.size() >= 2)
    {
        r.se = std::sqrt(variance(values) / static_cast<double>(values.size()));
    }
    return r;
}

MeanSe batch_means(std::span<double const> values, std::size_t batches)
{
    std::size_t const n = values.size();
    if (batches < 2 || n < 2 * batches)
    {
        return mean_se(values);
    }
    std::size_t const size = n / batches;
    std::vector<double> bm(batches);
    for (std::size_t b = 0; b < batches; ++b)
    {
        bm[b] = mean(values.subspan(b * size, size));
    }
    MeanSe r;
    r.mean = mean(values);
    r.se = std::sqrt(variance(bm) / static_cast<double>(batches));
    return r;
}

double variance_se(std::span<double const> values)
{
    std::size_t const n = values.size();
    if (n < 4)
    {
        return 0.0;
    }
    double const m = mean(values);
    std::vector<double> d2(n), d4(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        double const d = values[i] - m;
        d2[i] = d * d;
        d4[i] = d2[i] * d2[i];
    }
    double const m2 = pairwise_sum(d2) / static_cast<double>(n);
    double const m4 = pairwise_sum(d4) / static_cast<double>(n);
    return std::sqrt(std::max(0.0, (m4 - m2 * m2) / static_cast<double>(n)));
}

double normal_cdf(double x)
{
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

double quantile(std::span<double const> values, double p)
{
    if (values.empty())
    {
        throw std::invalid_argument("quantile of an empty sample");
    }
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    double const pos = std::clamp(p, 0.0, 1.0) * static_cast<double>(sorted.size() - 1);
    auto const lo = static_cast<std::size_t>(std::floor(pos));
    auto const hi = std::min(lo + 1, sorted.size() - 1);
    double const frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

LinearFit linear_fit(std::span<double const> x, std::span<double const> y)
{
    if (x.size() != y.size() || x.size() < 2)
    {
        throw std::invalid_argument("linear_fit needs two equally sized samples of size >= 2");
    }
    std::size_t const n = x.size();
    double const mx = mean(x);
    double const my = mean(y);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i)
    {
        double const dx = x[i] - mx;
        double const dy = y[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx <= 0.0)
    {
        throw std::invalid_argument("linear_fit: abscissae are all equal");
    }
    LinearFit f;
    f.n = n;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i)
    {
        double const r = y[i] - (f.intercept + f.slope * x[i]);
        sse += r * r;
    }
    f.r_squared = syy > 0.0 ? 1.0 - sse / syy : 1.0;
    if (n > 2)
    {
        double const s2 = sse / static_cast<double>(n - 2);
        f.slope_se = std::sqrt(s2 / sxx);
        f.intercept_se = std::sqrt(s2 * (1.0 / static_cast<double>(n) + mx * mx / sxx));
    }
    return f;
}

std::pair<double, double> wilson_interval(std::size_t successes, std::size_t trials, double z)
{
    if (trials == 0)
    {
        return {0.0, 1.0};
    }
    double const n = static_cast<double>(trials);
    double const p = static_cast<double>(successes) / n;
    double const z2 = z * z;
    double const denom = 1.0 + z2 / n;
    double const centre = (p + z2 / (2.0 * n)) / denom;
    double const half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

double kolmogorov_pvalue(double statistic, std::size_t n)
{
    double const sn = std::sqrt(static_cast<double>(n));
    double const lambda = (sn + 0.12 + 0.11 / sn) * statistic;
    if (lambda < 1e-3)
    {
        return 1.0;
    }
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k)
    {
        double const term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 == 1 ? 2.0 : -2.0) * term;
        if (term < 1e-16)
        {
            break;
        }
    }
    return std::clamp(sum, 0.0, 1.0);
}

KsResult ks_test(std::span<double const> samples, std::function<double(double)> const& cdf)
{
    if (samples.empty())
    {
        throw std::invalid_argument("ks_test on an empty sample");
    }
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    double const n = static_cast<double>(sorted.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i)
    {
        double const f = cdf(sorted[i]);
        d = std::max(d, std::max(static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n));
    }
    return {d, kolmogorov_pvalue(d, sorted.size())};
}

}  // namespace twonoise::stats
