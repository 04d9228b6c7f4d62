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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "twonoise/rng.hpp"

namespace twonoise
{

/// Diagonal Ornstein-Uhlenbeck process dY = B Y dt + diag(scale) dV on a
/// finite-dimensional truncation of K. Every drift eigenvalue is strictly
/// negative; construction throws std::invalid_argument otherwise.
class OUSpec
{
  public:
    OUSpec(std::vector<double> drift_eigs, std::vector<double> noise_scale);

    /// Same drift and scale for every mode.
    static OUSpec uniform(std::size_t dim, double drift, double scale);

    std::size_t dim() const { return drift_.size(); }
    std::vector<double> const& drift_eigs() const { return drift_; }
    std::vector<double> const& noise_scale() const { return scale_; }

    /// noise_scale^2 / (-2 drift), per mode.
    double stationary_variance(std::size_t mode) const;
    double stationary_variance_sum() const;

    /// Window length 10 / |slowest drift eigenvalue|.
    double default_history_length() const;

    friend bool operator==(OUSpec const&, OUSpec const&) = default;

  private:
    std::vector<double> drift_;
    std::vector<double> scale_;
};

void to_json(nlohmann::json& j, OUSpec const& spec);
OUSpec ou_spec_from_json(nlohmann::json const& j);

/// A draw from the stationary law of `spec`; deterministic in `seed`.
std::vector<double> sample_stationary(OUSpec const& spec, std::uint64_t seed);

/// Exact OU transition over dt: y' = e^{b dt} y + sqrt(s^2 (1 - e^{2 b dt}) / (-2 b)) xi.
std::vector<double> ou_step(OUSpec const& spec, std::span<double const> y, double dt,
                            std::span<double const> noise);

/// In-place variant used by the hot loops.
void ou_step_inplace(OUSpec const& spec, std::span<double> y, double dt,
                     std::span<double const> noise);

/// Samples of h on the grid theta in {-t_hist, ..., -dt, 0}, oldest first.
/// Row i is the K-vector at theta = -t_hist + i dt; the last row is h(0).
struct HistoryWindow
{
    double dt = 0.0;
    std::size_t dim = 0;
    std::vector<double> samples;

    std::size_t length() const { return dim == 0 ? 0 : samples.size() / dim; }
    double t_hist() const { return dt * static_cast<double>(length() - 1); }
    std::span<double const> row(std::size_t i) const
    {
        return {samples.data() + i * dim, dim};
    }
    std::span<double const> at_zero() const { return row(length() - 1); }
};

/// Driver noise for advancing a history: the increment for the step ending
/// at absolute grid index g is the block g of this stream.
struct DrivingNoise
{
    std::uint64_t seed = 0;
    NoiseKey key() const { return {seed, NoiseDomain::driving, 0}; }
};

/// One realisation of the driving process on a truncated window. The grid
/// is absolute: theta = 0 sits at time origin_index * dt, so two paths built
/// from the same seed agree wherever their windows overlap.
class DrivingPath
{
  public:
    DrivingPath(OUSpec spec, HistoryWindow window, std::uint64_t seed,
                std::int64_t origin_index);

    OUSpec const& spec() const { return spec_; }
    HistoryWindow const& window() const { return window_; }
    std::uint64_t seed() const { return seed_; }
    double dt() const { return window_.dt; }
    std::size_t dim() const { return window_.dim; }

    std::int64_t origin_index() const { return origin_; }
    std::int64_t first_index() const
    {
        return origin_ - static_cast<std::int64_t>(window_.length()) + 1;
    }
    double t_origin() const { return static_cast<double>(origin_) * window_.dt; }
    double t_first() const { return static_cast<double>(first_index()) * window_.dt; }

    bool covers_index(std::int64_t g) const { return g >= first_index() && g <= origin_; }
    /// Does the window contain every grid time in [t0, t1]?
    bool covers(double t0, double t1) const;

    /// Value at absolute grid index g; throws std::out_of_range if uncovered.
    std::span<double const> at_index(std::int64_t g) const;
    /// Value at the grid time nearest to t.
    std::span<double const> at_time(double t) const;

    /// The same realisation with time shifted: the result takes at time r
    /// the value this path takes at r + steps * dt.
    DrivingPath shifted(std::int64_t steps) const;

    /// The trailing part of the window that ends at grid index g and spans
    /// `length` grid points.
    DrivingPath window_ending_at(std::int64_t g, std::size_t length) const;

  private:
    OUSpec spec_;
    HistoryWindow window_;
    std::uint64_t seed_;
    std::int64_t origin_;
};

/// Grid index of time t on a grid of step dt; throws std::invalid_argument
/// when t is not a grid multiple (relative tolerance 1e-9).
std::int64_t grid_index(double t, double dt, char const* what = "time");

/// Stationary history ending at t_origin: stationary draw at theta = -t_hist,
/// exact OU steps afterwards. Requires t_hist and t_origin multiples of dt.
DrivingPath make_stationary_history(OUSpec const& spec, double t_hist, double dt,
                                    std::uint64_t seed, double t_origin = 0.0);

/// H(t, s, h): continue the driver for time t from h(0) and drop the oldest
/// t/dt samples. Flow law: advancing by t1 then t2 equals advancing by
/// t1 + t2, bit for bit, with the same noise stream.
DrivingPath advance_history(DrivingPath const& path, double t, DrivingNoise const& noise);
DrivingPath advance_history(DrivingPath const& path, double t);

/// Like advance_history but keeps the old samples (the window grows).
DrivingPath extend_history(DrivingPath const& path, double t, DrivingNoise const& noise);

/// JSON form {spec, t_origin, dt, seed, samples: [[...], ...]}.
nlohmann::json to_json(DrivingPath const& path);
DrivingPath driving_path_from_json(nlohmann::json const& j);

}  // namespace twonoise
