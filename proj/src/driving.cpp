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

#include "twonoise/driving.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace twonoise
{
namespace
{
constexpr std::uint32_t kStationaryStream = 1;

NoiseKey stationary_key(std::uint64_t seed)
{
    return {seed, NoiseDomain::driving, kStationaryStream};
}

std::uint64_t block_index(std::int64_t g, std::size_t dim)
{
    return static_cast<std::uint64_t>(g) * static_cast<std::uint64_t>(dim);
}
}  // namespace

OUSpec::OUSpec(std::vector<double> drift_eigs, std::vector<double> noise_scale)
    : drift_(std::move(drift_eigs)), scale_(std::move(noise_scale))
{
    if (drift_.empty())
    {
        throw std::invalid_argument("OUSpec: dimension must be positive");
    }
    if (drift_.size() != scale_.size())
    {
        throw std::invalid_argument("OUSpec: drift_eigs and noise_scale differ in length");
    }
    for (std::size_t k = 0; k < drift_.size(); ++k)
    {
        if (!(drift_[k] < 0.0) || !std::isfinite(drift_[k]))
        {
            throw std::invalid_argument("OUSpec: drift eigenvalue " + std::to_string(k) +
                                        " must be strictly negative");
        }
        if (!(scale_[k] >= 0.0) || !std::isfinite(scale_[k]))
        {
            throw std::invalid_argument("OUSpec: noise scale " + std::to_string(k) +
                                        " must be finite and nonnegative");
        }
    }
}

OUSpec OUSpec::uniform(std::size_t dim, double drift, double scale)
{
    return OUSpec(std::vector<double>(dim, drift), std::vector<double>(dim, scale));
}

double OUSpec::stationary_variance(std::size_t mode) const
{
    return scale_[mode] * scale_[mode] / (-2.0 * drift_[mode]);
}

double OUSpec::stationary_variance_sum() const
{
    double s = 0.0;
    for (std::size_t k = 0; k < dim(); ++k)
    {
        s += stationary_variance(k);
    }
    return s;
}

double OUSpec::default_history_length() const
{
    double slowest = 0.0;
    for (double b : drift_)
    {
        slowest = (slowest == 0.0) ? -b : std::min(slowest, -b);
    }
    return 10.0 / slowest;
}

void to_json(nlohmann::json& j, OUSpec const& spec)
{
    j = nlohmann::json{{"drift_eigs", spec.drift_eigs()}, {"noise_scale", spec.noise_scale()}};
}

OUSpec ou_spec_from_json(nlohmann::json const& j)
{
    return OUSpec(j.at("drift_eigs").get<std::vector<double>>(),
                  j.at("noise_scale").get<std::vector<double>>());
}

std::vector<double> sample_stationary(OUSpec const& spec, std::uint64_t seed)
{
    std::vector<double> y(spec.dim());
    fill_normals(stationary_key(seed), 0, y);
    for (std::size_t k = 0; k < y.size(); ++k)
    {
        y[k] *= std::sqrt(spec.stationary_variance(k));
    }
    return y;
}

void ou_step_inplace(OUSpec const& spec, std::span<double> y, double dt,
                     std::span<double const> noise)
{
    if (!(dt > 0.0))
    {
        throw std::invalid_argument("ou_step: dt must be positive");
    }
    auto const& b = spec.drift_eigs();
    auto const& s = spec.noise_scale();
    for (std::size_t k = 0; k < y.size(); ++k)
    {
        double const decay = std::exp(b[k] * dt);
        double const var = s[k] * s[k] * (-std::expm1(2.0 * b[k] * dt)) / (-2.0 * b[k]);
        y[k] = decay * y[k] + std::sqrt(var) * noise[k];
    }
}

std::vector<double> ou_step(OUSpec const& spec, std::span<double const> y, double dt,
                            std::span<double const> noise)
{
    if (y.size() != spec.dim() || noise.size() != spec.dim())
    {
        throw std::invalid_argument("ou_step: dimension mismatch");
    }
    std::vector<double> out(y.begin(), y.end());
    ou_step_inplace(spec, out, dt, noise);
    return out;
}

std::int64_t grid_index(double t, double dt, char const* what)
{
    if (!(dt > 0.0))
    {
        throw std::invalid_argument("grid step must be positive");
    }
    double const q = t / dt;
    double const r = std::round(q);
    if (std::abs(q - r) > 1e-9 * std::max(1.0, std::abs(q)))
    {
        throw std::invalid_argument(std::string(what) + " is not a multiple of the grid step");
    }
    return static_cast<std::int64_t>(r);
}

DrivingPath::DrivingPath(OUSpec spec, HistoryWindow window, std::uint64_t seed,
                         std::int64_t origin_index)
    : spec_(std::move(spec)), window_(std::move(window)), seed_(seed), origin_(origin_index)
{
    if (window_.dim != spec_.dim())
    {
        throw std::invalid_argument("DrivingPath: window dimension differs from spec");
    }
    if (window_.length() == 0 || window_.samples.size() != window_.length() * window_.dim)
    {
        throw std::invalid_argument("DrivingPath: empty or ragged window");
    }
    if (!(window_.dt > 0.0))
    {
        throw std::invalid_argument("DrivingPath: dt must be positive");
    }
}

bool DrivingPath::covers(double t0, double t1) const
{
    auto const lo = static_cast<std::int64_t>(std::ceil(t0 / dt() - 1e-9));
    auto const hi = static_cast<std::int64_t>(std::floor(t1 / dt() + 1e-9));
    return lo >= first_index() && hi <= origin_;
}

std::span<double const> DrivingPath::at_index(std::int64_t g) const
{
    if (!covers_index(g))
    {
        throw std::out_of_range("driving path does not cover grid index " + std::to_string(g) +
                                " (window [" + std::to_string(first_index()) + ", " +
                                std::to_string(origin_) + "])");
    }
    return window_.row(static_cast<std::size_t>(g - first_index()));
}

std::span<double const> DrivingPath::at_time(double t) const
{
    return at_index(static_cast<std::int64_t>(std::llround(t / dt())));
}

DrivingPath DrivingPath::shifted(std::int64_t steps) const
{
    return DrivingPath(spec_, window_, seed_, origin_ - steps);
}

DrivingPath DrivingPath::window_ending_at(std::int64_t g, std::size_t length) const
{
    if (length == 0 || !covers_index(g) || !covers_index(g - static_cast<std::int64_t>(length) + 1))
    {
        throw std::out_of_range("window_ending_at: requested window not covered");
    }
    HistoryWindow w;
    w.dt = window_.dt;
    w.dim = window_.dim;
    auto const first = static_cast<std::size_t>(g - static_cast<std::int64_t>(length) + 1 -
                                                first_index());
    w.samples.assign(window_.samples.begin() + static_cast<std::ptrdiff_t>(first * w.dim),
                     window_.samples.begin() +
                         static_cast<std::ptrdiff_t>((first + length) * w.dim));
    return DrivingPath(spec_, std::move(w), seed_, g);
}

DrivingPath make_stationary_history(OUSpec const& spec, double t_hist, double dt,
                                    std::uint64_t seed, double t_origin)
{
    if (!(t_hist >= 0.0))
    {
        throw std::invalid_argument("make_stationary_history: t_hist must be nonnegative");
    }
    std::int64_t const steps = grid_index(t_hist, dt, "t_hist");
    std::int64_t const origin = grid_index(t_origin, dt, "t_origin");
    std::int64_t const first = origin - steps;
    std::size_t const dim = spec.dim();

    HistoryWindow w;
    w.dt = dt;
    w.dim = dim;
    w.samples.resize(static_cast<std::size_t>(steps + 1) * dim);

    std::span<double> y0(w.samples.data(), dim);
    fill_normals(stationary_key(seed), block_index(first, dim), y0);
    for (std::size_t k = 0; k < dim; ++k)
    {
        y0[k] *= std::sqrt(spec.stationary_variance(k));
    }

    DrivingNoise const noise{seed};
    std::vector<double> xi(dim);
    for (std::int64_t i = 1; i <= steps; ++i)
    {
        std::span<double> y(w.samples.data() + static_cast<std::size_t>(i) * dim, dim);
        std::copy_n(w.samples.data() + static_cast<std::size_t>(i - 1) * dim, dim, y.begin());
        fill_normals(noise.key(), block_index(first + i, dim), xi);
        ou_step_inplace(spec, y, dt, xi);
    }
    return DrivingPath(spec, std::move(w), seed, origin);
}

namespace
{
// Continue `path` for `steps` grid steps; returns the new samples only.
std::vector<double> continuation(DrivingPath const& path, std::int64_t steps,
                                 DrivingNoise const& noise)
{
    std::size_t const dim = path.dim();
    std::vector<double> fresh(static_cast<std::size_t>(steps) * dim);
    std::vector<double> y(path.window().at_zero().begin(), path.window().at_zero().end());
    std::vector<double> xi(dim);
    for (std::int64_t i = 1; i <= steps; ++i)
    {
        fill_normals(noise.key(), block_index(path.origin_index() + i, dim), xi);
        ou_step_inplace(path.spec(), y, path.dt(), xi);
        std::copy(y.begin(), y.end(), fresh.begin() + static_cast<std::ptrdiff_t>((i - 1) * dim));
    }
    return fresh;
}
}  // namespace

DrivingPath advance_history(DrivingPath const& path, double t, DrivingNoise const& noise)
{
    if (!(t >= 0.0))
    {
        throw std::invalid_argument("advance_history: t must be nonnegative");
    }
    std::int64_t const steps = grid_index(t, path.dt(), "advance time");
    if (steps == 0)
    {
        return path;
    }
    std::size_t const dim = path.dim();
    std::size_t const len = path.window().length();
    auto fresh = continuation(path, steps, noise);

    HistoryWindow w;
    w.dt = path.dt();
    w.dim = dim;
    w.samples.resize(len * dim);
    auto const kept = static_cast<std::size_t>(std::max<std::int64_t>(
        0, static_cast<std::int64_t>(len) - steps));
    auto const& old = path.window().samples;
    std::copy(old.end() - static_cast<std::ptrdiff_t>(kept * dim), old.end(), w.samples.begin());
    std::size_t const from_fresh = len - kept;
    std::copy(fresh.end() - static_cast<std::ptrdiff_t>(from_fresh * dim), fresh.end(),
              w.samples.begin() + static_cast<std::ptrdiff_t>(kept * dim));
    return DrivingPath(path.spec(), std::move(w), path.seed(), path.origin_index() + steps);
}

DrivingPath advance_history(DrivingPath const& path, double t)
{
    return advance_history(path, t, DrivingNoise{path.seed()});
}

DrivingPath extend_history(DrivingPath const& path, double t, DrivingNoise const& noise)
{
    std::int64_t const steps = grid_index(t, path.dt(), "extension time");
    if (steps < 0)
    {
        throw std::invalid_argument("extend_history: t must be nonnegative");
    }
    auto fresh = continuation(path, steps, noise);
    HistoryWindow w = path.window();
    w.samples.insert(w.samples.end(), fresh.begin(), fresh.end());
    return DrivingPath(path.spec(), std::move(w), path.seed(), path.origin_index() + steps);
}

nlohmann::json to_json(DrivingPath const& path)
{
    nlohmann::json samples = nlohmann::json::array();
    for (std::size_t i = 0; i < path.window().length(); ++i)
    {
        auto const r = path.window().row(i);
        samples.push_back(std::vector<double>(r.begin(), r.end()));
    }
    nlohmann::json spec;
    to_json(spec, path.spec());
    return {{"spec", spec},
            {"t_origin", path.t_origin()},
            {"dt", path.dt()},
            {"seed", path.seed()},
            {"samples", samples}};
}

DrivingPath driving_path_from_json(nlohmann::json const& j)
{
    OUSpec spec = ou_spec_from_json(j.at("spec"));
    HistoryWindow w;
    w.dt = j.at("dt").get<double>();
    w.dim = spec.dim();
    for (auto const& row : j.at("samples"))
    {
        auto const v = row.get<std::vector<double>>();
        if (v.size() != w.dim)
        {
            throw std::invalid_argument("driving path JSON: sample row has wrong dimension");
        }
        w.samples.insert(w.samples.end(), v.begin(), v.end());
    }
    std::int64_t const origin = grid_index(j.at("t_origin").get<double>(), w.dt, "t_origin");
    std::uint64_t const seed = j.value("seed", std::uint64_t{0});
    return DrivingPath(std::move(spec), std::move(w), seed, origin);
}

}  // namespace twonoise
