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

#include <cstddef>
#include <functional>
#include <span>
#include <utility>

namespace twonoise::stats
{

/// Pairwise (cascade) summation; the result depends only on the order of
/// `values`, never on how they were produced.
double pairwise_sum(std::span<double const> values);

double mean(std::span<double const> values);

/// Unbiased sample variance; 0 for fewer than two values.
double variance(std::span<double const> values);

struct MeanSe
{
    double mean = 0.0;
    double se = 0.0;
};

/// Mean and its standard error under i.i.d. sampling.
MeanSe mean_se(std::span<double const> values);

/// Mean and batch-means standard error for an autocorrelated series.
MeanSe batch_means(std::span<double const> values, std::size_t batches);

/// Standard error of the sample variance, estimated from the fourth moment.
double variance_se(std::span<double const> values);

double normal_cdf(double x);

/// Linear interpolation quantile of an unsorted sample, p in [0,1].
double quantile(std::span<double const> values, double p);

struct LinearFit
{
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    double intercept_se = 0.0;
    double r_squared = 0.0;
    std::size_t n = 0;
};

/// Ordinary least squares y = intercept + slope * x. Needs n >= 2.
LinearFit linear_fit(std::span<double const> x, std::span<double const> y);

/// Wilson score interval for a binomial proportion.
std::pair<double, double> wilson_interval(std::size_t successes, std::size_t trials,
                                          double z = 1.96);

struct KsResult
{
    double statistic = 0.0;
    double p_value = 1.0;
};

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
KsResult ks_test(std::span<double const> samples, std::function<double(double)> const& cdf);

/// Asymptotic Kolmogorov survival function with Stephens' small-n correction.
double kolmogorov_pvalue(double statistic, std::size_t n);

}  // namespace twonoise::stats
