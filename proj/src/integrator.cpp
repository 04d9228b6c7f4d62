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

#include "twonoise/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "twonoise/parallel.hpp"

namespace twonoise
{

double SemilinearModel::lambda1() const
{
    if (a_eigs.empty())
    {
        return 0.0;
    }
    return -*std::max_element(a_eigs.begin(), a_eigs.end());
}

void SemilinearModel::validate() const
{
    if (dim == 0 || a_eigs.size() != dim)
    {
        throw std::invalid_argument("SemilinearModel '" + name + "': a_eigs must have dim entries");
    }
    for (double a : a_eigs)
    {
        if (!(a <= 0.0))
        {
            throw std::invalid_argument("SemilinearModel '" + name + "': a_eigs must be <= 0");
        }
    }
}

char const* to_string(SchemeKind k)
{
    return k == SchemeKind::exponential_euler ? "exponential-euler" : "euler-maruyama";
}

SchemeKind scheme_kind_from_string(std::string const& s)
{
    if (s == "exponential-euler")
    {
        return SchemeKind::exponential_euler;
    }
    if (s == "euler-maruyama")
    {
        return SchemeKind::euler_maruyama;
    }
    throw std::invalid_argument("unknown scheme '" + s +
                                "' (expected exponential-euler or euler-maruyama)");
}

namespace
{
std::string divergence_message(std::int64_t step, double time, double norm, std::int64_t point)
{
    std::ostringstream os;
    os << "divergence at step " << step << " (t=" << time << ", |x|=" << norm << ")";
    if (point >= 0)
    {
        os << " in trajectory " << point;
    }
    return os.str();
}
}  // namespace

DivergenceError::DivergenceError(std::int64_t step, double time, double norm, std::int64_t point)
    : std::runtime_error(divergence_message(step, time, norm, point)),
      step_(step),
      time_(time),
      norm_(norm),
      point_(point)
{
}

DivergenceError DivergenceError::with_point(std::int64_t point) const
{
    return DivergenceError(step_, time_, norm_, point);
}

Stepper::Stepper(SemilinearModel const& model, StepScheme const& scheme)
    : model_(&model), scheme_(scheme)
{
    model.validate();
    if (!(scheme.dt > 0.0))
    {
        throw std::invalid_argument("StepScheme: dt must be positive");
    }
    std::size_t const d = model.dim;
    decay_.resize(d);
    phi_.resize(d);
    conv_sd_.resize(d);
    drift_.resize(d);
    buf_.resize(d);
    mean_.resize(d);
    sd_.resize(d);
    double const dt = scheme.dt;
    for (std::size_t j = 0; j < d; ++j)
    {
        double const a = model.a_eigs[j];
        if (scheme.kind == SchemeKind::euler_maruyama)
        {
            decay_[j] = 1.0 + a * dt;
            phi_[j] = dt;
            conv_sd_[j] = std::sqrt(dt);
        }
        else if (a == 0.0)
        {
            decay_[j] = 1.0;
            phi_[j] = dt;
            conv_sd_[j] = std::sqrt(dt);
        }
        else
        {
            decay_[j] = std::exp(a * dt);
            phi_[j] = std::expm1(a * dt) / a;
            conv_sd_[j] = std::sqrt(std::expm1(2.0 * a * dt) / (2.0 * a));
        }
    }
}

void Stepper::kernel(std::span<double const> x, std::span<double const> y,
                     std::span<double> mean, std::span<double> sd)
{
    std::size_t const d = dim();
    std::fill(drift_.begin(), drift_.end(), 0.0);
    if (model_->nonlinearity)
    {
        model_->nonlinearity(x, buf_);
        for (std::size_t j = 0; j < d; ++j)
        {
            drift_[j] += buf_[j];
        }
    }
    if (model_->coupling)
    {
        model_->coupling(x, y, buf_);
        for (std::size_t j = 0; j < d; ++j)
        {
            drift_[j] += buf_[j];
        }
    }
    for (std::size_t j = 0; j < d; ++j)
    {
        mean[j] = decay_[j] * x[j] + phi_[j] * drift_[j];
    }
    if (model_->diffusion)
    {
        model_->diffusion(x, y, buf_);
        for (std::size_t j = 0; j < d; ++j)
        {
            sd[j] = std::abs(buf_[j]) * conv_sd_[j];
        }
    }
    else
    {
        std::fill(sd.begin(), sd.end(), 0.0);
    }
}

void Stepper::step(std::span<double> x, std::span<double const> y, std::span<double const> xi)
{
    kernel(x, y, mean_, sd_);
    for (std::size_t j = 0; j < dim(); ++j)
    {
        x[j] = mean_[j] + sd_[j] * xi[j];
    }
}

void Stepper::deterministic_step(std::span<double> x)
{
    std::size_t const d = dim();
    if (model_->nonlinearity)
    {
        model_->nonlinearity(x, buf_);
    }
    else
    {
        std::fill(buf_.begin(), buf_.end(), 0.0);
    }
    for (std::size_t j = 0; j < d; ++j)
    {
        x[j] = decay_[j] * x[j] + phi_[j] * buf_[j];
    }
}

std::int64_t driving_ratio(StepScheme const& scheme, DrivingPath const& driving)
{
    std::int64_t const r = grid_index(scheme.dt, driving.dt(), "scheme dt");
    if (r < 1)
    {
        throw std::invalid_argument("scheme dt must be a positive multiple of the driving dt");
    }
    return r;
}

namespace
{
double norm2(std::span<double const> x)
{
    double s = 0.0;
    for (double v : x)
    {
        s += v * v;
    }
    return std::sqrt(s);
}
}  // namespace

void integrate_steps(Stepper& stepper, std::span<double> x, std::int64_t k0, std::int64_t k1,
                     DrivingPath const& driving, WienerKey const& w, StepObserver const& observer)
{
    SemilinearModel const& model = stepper.model();
    if (k1 < k0)
    {
        throw std::invalid_argument("integrate: t must be >= s");
    }
    if (x.size() != model.dim)
    {
        throw std::invalid_argument("integrate: state has wrong dimension");
    }
    if (driving.dim() != model.driving_dim)
    {
        throw std::invalid_argument("integrate: driving dimension differs from the model's");
    }
    std::int64_t const ratio = driving_ratio(stepper.scheme(), driving);
    if (k1 > k0 && (!driving.covers_index(k0 * ratio) || !driving.covers_index((k1 - 1) * ratio)))
    {
        std::ostringstream os;
        os << "integrate: driving path [" << driving.t_first() << ", " << driving.t_origin()
           << "] does not cover [" << static_cast<double>(k0) * stepper.scheme().dt << ", "
           << static_cast<double>(k1) * stepper.scheme().dt << ")";
        throw std::out_of_range(os.str());
    }
    std::size_t const d = model.dim;
    bool const noisy = static_cast<bool>(model.diffusion);
    std::vector<double> xi(d, 0.0);
    double const dt = stepper.scheme().dt;
    double const bound = stepper.scheme().blowup_bound;
    if (observer)
    {
        observer(k0, x);
    }
    for (std::int64_t k = k0; k < k1; ++k)
    {
        auto const y = driving.at_index(k * ratio);
        if (noisy)
        {
            fill_normals(w.key(), static_cast<std::uint64_t>(k + w.step_offset) * d, xi);
        }
        stepper.step(x, y, xi);
        double const nx = norm2(x);
        if (!(nx <= bound))
        {
            throw DivergenceError(k + 1, static_cast<double>(k + 1) * dt, nx);
        }
        if (observer)
        {
            observer(k + 1, x);
        }
    }
}

std::vector<double> integrate(SemilinearModel const& model, StepScheme const& scheme,
                              std::span<double const> x0, double s, double t,
                              DrivingPath const& driving, WienerKey const& w,
                              StepObserver const& observer)
{
    if (t < s)
    {
        throw std::invalid_argument("integrate: t must be >= s");
    }
    Stepper stepper(model, scheme);
    std::vector<double> x(x0.begin(), x0.end());
    integrate_steps(stepper, x, grid_index(s, scheme.dt, "s"), grid_index(t, scheme.dt, "t"),
                    driving, w, observer);
    return x;
}

std::vector<double> integrate_deterministic(SemilinearModel const& model,
                                            StepScheme const& scheme,
                                            std::span<double const> x0, std::int64_t steps)
{
    Stepper stepper(model, scheme);
    std::vector<double> x(x0.begin(), x0.end());
    for (std::int64_t k = 0; k < steps; ++k)
    {
        stepper.deterministic_step(x);
        double const nx = norm2(x);
        if (!(nx <= scheme.blowup_bound))
        {
            throw DivergenceError(k + 1, static_cast<double>(k + 1) * scheme.dt, nx);
        }
    }
    return x;
}

EmpiricalMeasure EnsembleState::measure() const
{
    return EmpiricalMeasure::uniform(dim, points);
}

EnsembleState evolve_ensemble(SemilinearModel const& model, StepScheme const& scheme,
                              EnsembleState const& ens, double t,
                              std::span<WienerKey const> w_keys, unsigned workers)
{
    if (!ens.driving)
    {
        throw std::invalid_argument("evolve_ensemble: ensemble has no driving path");
    }
    if (w_keys.size() != ens.size())
    {
        throw std::invalid_argument("evolve_ensemble: need one W key per point");
    }
    if (ens.dim != model.dim)
    {
        throw std::invalid_argument("evolve_ensemble: ensemble dimension differs from the model's");
    }
    std::int64_t const k0 = grid_index(ens.t, scheme.dt, "ensemble time");
    std::int64_t const k1 = grid_index(t, scheme.dt, "target time");
    EnsembleState out = ens;
    out.t = t;
    std::size_t const d = ens.dim;
    parallel_for(
        ens.size(),
        [&](std::size_t i) {
            Stepper stepper(model, scheme);
            std::span<double> x(out.points.data() + i * d, d);
            try
            {
                integrate_steps(stepper, x, k0, k1, *ens.driving, w_keys[i]);
            }
            catch (DivergenceError const& e)
            {
                throw e.with_point(static_cast<std::int64_t>(i));
            }
        },
        workers);
    return out;
}

EnsembleState evolve_ensemble(SemilinearModel const& model, StepScheme const& scheme,
                              EnsembleState const& ens, double t,
                              std::span<std::uint64_t const> w_seeds, unsigned workers)
{
    std::vector<WienerKey> keys(w_seeds.size());
    for (std::size_t i = 0; i < keys.size(); ++i)
    {
        keys[i].seed = w_seeds[i];
    }
    return evolve_ensemble(model, scheme, ens, t, std::span<WienerKey const>(keys), workers);
}

EmpiricalMeasure sample_kernel(SemilinearModel const& model, StepScheme const& scheme,
                               std::span<double const> x, double s, double t,
                               DrivingPath const& driving, std::size_t n, std::uint64_t seed,
                               unsigned workers)
{
    if (n == 0)
    {
        throw std::invalid_argument("sample_kernel: n must be at least 1");
    }
    if (x.size() != model.dim)
    {
        throw std::invalid_argument("sample_kernel: start has wrong dimension");
    }
    EnsembleState ens;
    ens.t = s;
    ens.dim = model.dim;
    ens.driving = std::make_shared<DrivingPath const>(driving);
    ens.points.resize(n * model.dim);
    for (std::size_t i = 0; i < n; ++i)
    {
        std::copy(x.begin(), x.end(), ens.points.begin() + static_cast<std::ptrdiff_t>(i * model.dim));
    }
    std::vector<std::uint64_t> seeds(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        seeds[i] = derive_seed(seed, i);
    }
    return evolve_ensemble(model, scheme, ens, t, std::span<std::uint64_t const>(seeds), workers)
        .measure();
}

void write_ensemble_csv(std::ostream& os, EnsembleState const& ens)
{
    os << "index";
    for (std::size_t j = 0; j < ens.dim; ++j)
    {
        os << ",x" << j;
    }
    os << '\n';
    os.precision(17);
    for (std::size_t i = 0; i < ens.size(); ++i)
    {
        os << i;
        for (double v : ens.point(i))
        {
            os << ',' << v;
        }
        os << '\n';
    }
}

DrivingPath zero_driving(std::size_t dim, double dt, double t0, double t1)
{
    std::int64_t const g0 = grid_index(t0, dt, "t0");
    std::int64_t const g1 = grid_index(t1, dt, "t1");
    if (g1 < g0)
    {
        throw std::invalid_argument("zero_driving: t1 < t0");
    }
    HistoryWindow w;
    w.dt = dt;
    w.dim = dim;
    w.samples.assign(static_cast<std::size_t>(g1 - g0 + 1) * dim, 0.0);
    return DrivingPath(OUSpec::uniform(dim, -1.0, 0.0), std::move(w), 0, g1);
}

}  // namespace twonoise
