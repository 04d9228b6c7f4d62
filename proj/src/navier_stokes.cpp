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

#include "twonoise/navier_stokes.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <set>
#include <stdexcept>
#include <string>

#include <fftw3.h>

#include "twonoise/parallel.hpp"
#include "twonoise/stats.hpp"

namespace twonoise
{

SpectralGrid::SpectralGrid(int n) : n_(n), kmax_((n - 1) / 3)
{
    if (n < 4 || n % 2 != 0)
    {
        throw std::invalid_argument("SpectralGrid: n must be even and at least 4");
    }
    for (int k2 = 0; k2 <= kmax_; ++k2)
    {
        for (int k1 = -kmax_; k1 <= kmax_; ++k1)
        {
            if (k2 > 0 || k1 > 0)
            {
                k_.push_back({k1, k2});
            }
        }
    }
}

std::optional<std::size_t> SpectralGrid::mode_index(int k1, int k2) const
{
    if (std::abs(k1) > kmax_ || k2 < 0 || k2 > kmax_ || (k2 == 0 && k1 <= 0))
    {
        return std::nullopt;
    }
    // Row k2 = 0 holds k1 = 1..kmax; later rows hold k1 = -kmax..kmax.
    if (k2 == 0)
    {
        return static_cast<std::size_t>(k1 - 1);
    }
    auto const row = static_cast<std::size_t>(2 * kmax_ + 1);
    return static_cast<std::size_t>(kmax_) + static_cast<std::size_t>(k2 - 1) * row +
           static_cast<std::size_t>(k1 + kmax_);
}

std::vector<std::complex<double>> vorticity_coefficients(SpectralGrid const& grid,
                                                         std::span<double const> x)
{
    std::vector<std::complex<double>> w(grid.modes());
    for (std::size_t m = 0; m < grid.modes(); ++m)
    {
        w[m] = std::sqrt(grid.k2(m)) * std::complex<double>(x[2 * m], x[2 * m + 1]) /
               std::numbers::sqrt2;
    }
    return w;
}

std::vector<double> from_vorticity_coefficients(SpectralGrid const& grid,
                                                std::span<std::complex<double> const> omega)
{
    std::vector<double> x(grid.dim());
    for (std::size_t m = 0; m < grid.modes(); ++m)
    {
        auto const a = omega[m] * std::numbers::sqrt2 / std::sqrt(grid.k2(m));
        x[2 * m] = a.real();
        x[2 * m + 1] = a.imag();
    }
    return x;
}

namespace
{
struct Plans
{
    fftw_plan c2r = nullptr;
    fftw_plan r2c = nullptr;
};

// Planning is not thread safe in FFTW; executing a plan on new arrays is.
Plans const& plans_for(int n)
{
    static std::mutex mu;
    static std::map<int, Plans> cache;
    std::lock_guard lock(mu);
    auto it = cache.find(n);
    if (it != cache.end())
    {
        return it->second;
    }
    std::size_t const nc = static_cast<std::size_t>(n) * static_cast<std::size_t>(n / 2 + 1);
    auto* spec = fftw_alloc_complex(nc);
    auto* real = fftw_alloc_real(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
    Plans p;
    p.c2r = fftw_plan_dft_c2r_2d(n, n, spec, real, FFTW_ESTIMATE);
    p.r2c = fftw_plan_dft_r2c_2d(n, n, real, spec, FFTW_ESTIMATE);
    fftw_free(spec);
    fftw_free(real);
    if (p.c2r == nullptr || p.r2c == nullptr)
    {
        throw std::runtime_error("FFTW planning failed");
    }
    return cache.emplace(n, p).first->second;
}

struct Workspace
{
    explicit Workspace(int n)
        : nc(static_cast<std::size_t>(n) * static_cast<std::size_t>(n / 2 + 1)),
          nr(static_cast<std::size_t>(n) * static_cast<std::size_t>(n))
    {
        for (auto& s : spec)
        {
            s = fftw_alloc_complex(nc);
        }
        for (auto& r : real)
        {
            r = fftw_alloc_real(nr);
        }
    }
    ~Workspace()
    {
        for (auto* s : spec)
        {
            fftw_free(s);
        }
        for (auto* r : real)
        {
            fftw_free(r);
        }
    }
    Workspace(Workspace const&) = delete;
    Workspace& operator=(Workspace const&) = delete;

    std::size_t nc;
    std::size_t nr;
    std::array<fftw_complex*, 4> spec{};  // u1, u2, d1 omega, d2 omega
    std::array<double*, 4> real{};
};

Workspace& workspace_for(int n)
{
    thread_local std::map<int, std::unique_ptr<Workspace>> pool;
    auto& w = pool[n];
    if (!w)
    {
        w = std::make_unique<Workspace>(n);
    }
    return *w;
}

std::size_t wrap(int k, int n)
{
    return static_cast<std::size_t>(((k % n) + n) % n);
}

void put(fftw_complex* a, std::size_t idx, std::complex<double> v)
{
    a[idx][0] = v.real();
    a[idx][1] = v.imag();
}
}  // namespace

void nonlinear_term(SpectralGrid const& grid, std::span<double const> x, std::span<double> out)
{
    int const n = grid.n();
    Plans const& plans = plans_for(n);
    Workspace& ws = workspace_for(n);
    std::size_t const half = static_cast<std::size_t>(n / 2 + 1);
    for (auto* s : ws.spec)
    {
        std::fill_n(&s[0][0], 2 * ws.nc, 0.0);
    }
    using C = std::complex<double>;
    C const I(0.0, 1.0);
    for (std::size_t m = 0; m < grid.modes(); ++m)
    {
        auto const [k1, k2] = grid.wavenumber(m);
        double const kk = grid.k2(m);
        C const w = std::sqrt(kk) * C(x[2 * m], x[2 * m + 1]) / std::numbers::sqrt2;
        C const psi = w / kk;
        std::array<C, 4> const v{I * double(k2) * psi, -I * double(k1) * psi, I * double(k1) * w,
                                 I * double(k2) * w};
        std::size_t const idx = wrap(k1, n) * half + static_cast<std::size_t>(k2);
        for (std::size_t f = 0; f < 4; ++f)
        {
            put(ws.spec[f], idx, v[f]);
        }
        if (k2 == 0)
        {
            std::size_t const mirror = wrap(-k1, n) * half;
            for (std::size_t f = 0; f < 4; ++f)
            {
                put(ws.spec[f], mirror, std::conj(v[f]));
            }
        }
    }
    for (std::size_t f = 0; f < 4; ++f)
    {
        fftw_execute_dft_c2r(plans.c2r, ws.spec[f], ws.real[f]);
    }
    double* prod = ws.real[0];
    for (std::size_t j = 0; j < ws.nr; ++j)
    {
        prod[j] = -(ws.real[0][j] * ws.real[2][j] + ws.real[1][j] * ws.real[3][j]);
    }
    fftw_execute_dft_r2c(plans.r2c, prod, ws.spec[0]);
    double const norm = 1.0 / static_cast<double>(ws.nr);
    for (std::size_t m = 0; m < grid.modes(); ++m)
    {
        auto const [k1, k2] = grid.wavenumber(m);
        std::size_t const idx = wrap(k1, n) * half + static_cast<std::size_t>(k2);
        C const nk(ws.spec[0][idx][0] * norm, ws.spec[0][idx][1] * norm);
        C const adot = nk / std::sqrt(grid.k2(m)) * std::numbers::sqrt2;
        out[2 * m] = adot.real();
        out[2 * m + 1] = adot.imag();
    }
}

double ns_energy(std::span<double const> x)
{
    double s = 0.0;
    for (double v : x)
    {
        s += v * v;
    }
    return s;
}

double ns_enstrophy(SpectralGrid const& grid, std::span<double const> x)
{
    double s = 0.0;
    for (std::size_t m = 0; m < grid.modes(); ++m)
    {
        s += grid.k2(m) * (x[2 * m] * x[2 * m] + x[2 * m + 1] * x[2 * m + 1]);
    }
    return s;
}

void NSModelSpec::validate() const
{
    auto fail = [](std::string const& field, std::string const& why) {
        throw std::invalid_argument("ns2d." + field + ": " + why);
    };
    if (n < 8 || n % 2 != 0)
    {
        fail("n", "must be even and at least 8");
    }
    if (!(viscosity > 0.0))
    {
        fail("viscosity", "must be positive");
    }
    if (!(alpha > 2.0))
    {
        fail("alpha", "must exceed 2 so that Tr C is finite");
    }
    if (!(trace_c > 0.0))
    {
        fail("trace_c", "must be positive");
    }
    if (driving_shells < 0)
    {
        fail("driving_shells", "must be nonnegative");
    }
    if (!(driving_drift < 0.0))
    {
        fail("driving_drift", "must be negative");
    }
    if (!(driving_scale >= 0.0))
    {
        fail("driving_scale", "must be nonnegative");
    }
}

void to_json(nlohmann::json& j, NSModelSpec const& s)
{
    j = nlohmann::json{{"n", s.n},
                       {"viscosity", s.viscosity},
                       {"alpha", s.alpha},
                       {"trace_c", s.trace_c},
                       {"coupling_gain", s.coupling_gain},
                       {"driving_shells", s.driving_shells},
                       {"driving_drift", s.driving_drift},
                       {"driving_scale", s.driving_scale},
                       {"linearized", s.linearized}};
}

NSModelSpec ns_spec_from_json(nlohmann::json const& j)
{
    NSModelSpec s;
    s.n = j.value("n", s.n);
    s.viscosity = j.value("viscosity", s.viscosity);
    s.alpha = j.value("alpha", s.alpha);
    s.trace_c = j.value("trace_c", s.trace_c);
    s.coupling_gain = j.value("coupling_gain", s.coupling_gain);
    s.driving_shells = j.value("driving_shells", s.driving_shells);
    s.driving_drift = j.value("driving_drift", s.driving_drift);
    s.driving_scale = j.value("driving_scale", s.driving_scale);
    s.linearized = j.value("linearized", s.linearized);
    s.validate();
    return s;
}

OUSpec NSInstance::driving_spec() const
{
    std::size_t const d = std::max<std::size_t>(1, driven_coords.size());
    return OUSpec::uniform(d, spec.driving_drift, spec.driving_scale);
}

double NSInstance::nondegeneracy() const
{
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid->modes(); ++i)
    {
        m = std::min(m, c_eigs[2 * i] * grid->k2(i));
    }
    return m;
}

NSInstance as_semilinear(NSModelSpec const& spec)
{
    spec.validate();
    NSInstance inst;
    inst.spec = spec;
    inst.grid = std::make_shared<SpectralGrid const>(spec.n);
    SpectralGrid const& g = *inst.grid;
    std::size_t const d = g.dim();

    double zsum = 0.0;
    for (std::size_t m = 0; m < g.modes(); ++m)
    {
        zsum += 2.0 * std::pow(g.k2(m), -0.5 * spec.alpha);
    }
    double const c0 = spec.trace_c / zsum;
    inst.c_eigs.resize(d);
    for (std::size_t m = 0; m < g.modes(); ++m)
    {
        double const c = c0 * std::pow(g.k2(m), -0.5 * spec.alpha);
        inst.c_eigs[2 * m] = c;
        inst.c_eigs[2 * m + 1] = c;
    }

    std::set<int> shells;
    for (std::size_t m = 0; m < g.modes(); ++m)
    {
        shells.insert(static_cast<int>(g.k2(m)));
    }
    std::set<int> driven;
    for (int s : shells)
    {
        if (static_cast<int>(driven.size()) >= spec.driving_shells)
        {
            break;
        }
        driven.insert(s);
    }
    if (static_cast<int>(driven.size()) < spec.driving_shells)
    {
        throw std::invalid_argument("ns2d.driving_shells: grid has fewer shells than requested");
    }
    for (std::size_t m = 0; m < g.modes(); ++m)
    {
        if (driven.count(static_cast<int>(g.k2(m))) != 0)
        {
            inst.driven_coords.push_back(2 * m);
            inst.driven_coords.push_back(2 * m + 1);
        }
    }

    SemilinearModel& model = inst.model;
    model.name = "ns2d";
    model.dim = d;
    model.driving_dim = std::max<std::size_t>(1, inst.driven_coords.size());
    model.a_eigs.resize(d);
    for (std::size_t m = 0; m < g.modes(); ++m)
    {
        model.a_eigs[2 * m] = -spec.viscosity * g.k2(m);
        model.a_eigs[2 * m + 1] = -spec.viscosity * g.k2(m);
    }
    if (!spec.linearized)
    {
        auto grid = inst.grid;
        model.nonlinearity = [grid](std::span<double const> x, std::span<double> out) {
            nonlinear_term(*grid, x, out);
        };
    }
    if (!inst.driven_coords.empty() && spec.coupling_gain != 0.0)
    {
        auto coords = inst.driven_coords;
        double const gain = spec.coupling_gain;
        model.coupling = [coords, gain](std::span<double const>, std::span<double const> y,
                                        std::span<double> out) {
            std::fill(out.begin(), out.end(), 0.0);
            for (std::size_t i = 0; i < coords.size(); ++i)
            {
                out[coords[i]] = gain * y[i];
            }
        };
    }
    std::vector<double> sigma(d);
    for (std::size_t j = 0; j < d; ++j)
    {
        sigma[j] = std::sqrt(inst.c_eigs[j]);
    }
    model.diffusion = [sigma](std::span<double const>, std::span<double const>,
                              std::span<double> out) {
        std::copy(sigma.begin(), sigma.end(), out.begin());
    };
    model.additive_noise = true;
    model.growth_kappa = std::max(std::abs(spec.coupling_gain), std::sqrt(spec.trace_c));
    return inst;
}

InviscidDrift inviscid_conservation(SpectralGrid const& grid, std::span<double const> x0,
                                    double dt, double t)
{
    std::int64_t const steps = grid_index(t, dt, "t");
    std::size_t const d = grid.dim();
    std::vector<double> x(x0.begin(), x0.end()), k1(d), k2(d), k3(d), k4(d), tmp(d);
    for (std::int64_t s = 0; s < steps; ++s)
    {
        nonlinear_term(grid, x, k1);
        for (std::size_t j = 0; j < d; ++j)
        {
            tmp[j] = x[j] + 0.5 * dt * k1[j];
        }
        nonlinear_term(grid, tmp, k2);
        for (std::size_t j = 0; j < d; ++j)
        {
            tmp[j] = x[j] + 0.5 * dt * k2[j];
        }
        nonlinear_term(grid, tmp, k3);
        for (std::size_t j = 0; j < d; ++j)
        {
            tmp[j] = x[j] + dt * k3[j];
        }
        nonlinear_term(grid, tmp, k4);
        for (std::size_t j = 0; j < d; ++j)
        {
            x[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    double const e0 = ns_energy(x0);
    double const z0 = ns_enstrophy(grid, x0);
    InviscidDrift r;
    r.energy_rel_per_time = std::abs(ns_energy(x) - e0) / e0 / t;
    r.enstrophy_rel_per_time = std::abs(ns_enstrophy(grid, x) - z0) / z0 / t;
    return r;
}

void write_spectral_csv(std::ostream& os, SpectralGrid const& grid, std::span<double const> x)
{
    auto const w = vorticity_coefficients(grid, x);
    os << "k1,k2,re,im\n";
    os.precision(17);
    for (std::size_t m = 0; m < grid.modes(); ++m)
    {
        auto const [k1, k2] = grid.wavenumber(m);
        os << k1 << ',' << k2 << ',' << w[m].real() << ',' << w[m].imag() << '\n';
    }
}

EnergySamples record_energy(SemilinearModel const& model, StepScheme const& scheme,
                            OUSpec const& driving_spec, std::span<double const> x0,
                            EnergyRecordOptions const& opts)
{
    if (opts.record_every < 1)
    {
        throw std::invalid_argument("record_energy: record_every must be positive");
    }
    std::int64_t const steps = grid_index(opts.horizon, scheme.dt, "horizon");
    std::size_t const nt = static_cast<std::size_t>(steps / opts.record_every) + 1;
    EnergySamples out;
    out.paths = opts.paths;
    out.x0_energy = ns_energy(x0);
    out.lambda1 = model.lambda1();
    for (std::size_t i = 0; i < nt; ++i)
    {
        out.times.push_back(static_cast<double>(static_cast<std::int64_t>(i) * opts.record_every) *
                            scheme.dt);
    }
    out.energy.assign(opts.paths * nt, 0.0);
    out.dissipation.assign(opts.paths * nt, 0.0);
    out.forcing.assign(opts.paths * nt, 0.0);
    double const kappa = model.growth_kappa;
    parallel_for(
        opts.paths,
        [&](std::size_t p) {
            DrivingPath const drv = make_stationary_history(
                driving_spec, opts.horizon, scheme.dt, derive_seed(opts.driving_seed, p),
                opts.horizon);
            Stepper stepper(model, scheme);
            std::vector<double> x(x0.begin(), x0.end());
            auto observe = [&](std::int64_t k, std::span<double const> xs) {
                if (k % opts.record_every != 0)
                {
                    return;
                }
                std::size_t const i = p * nt + static_cast<std::size_t>(k / opts.record_every);
                out.energy[i] = ns_energy(xs);
                double diss = 0.0;
                for (std::size_t j = 0; j < xs.size(); ++j)
                {
                    diss -= model.a_eigs[j] * xs[j] * xs[j];
                }
                out.dissipation[i] = diss;
                double const ny = std::sqrt(ns_energy(drv.at_index(k)));
                out.forcing[i] = kappa * kappa * (1.0 + ny) * (1.0 + ny);
            };
            try
            {
                integrate_steps(stepper, x, 0, steps, drv,
                                WienerKey{derive_seed(opts.wiener_seed, p)}, observe);
            }
            catch (DivergenceError const& e)
            {
                throw e.with_point(static_cast<std::int64_t>(p));
            }
        },
        opts.workers);
    return out;
}

namespace
{
// Trapezoid of series[path, 0..i].
double running_integral(EnergySamples const& s, std::vector<double> const& series,
                        std::size_t path, std::size_t i)
{
    double acc = 0.0;
    for (std::size_t k = 1; k <= i; ++k)
    {
        acc += 0.5 * (s.times[k] - s.times[k - 1]) *
               (s.at(series, path, k) + s.at(series, path, k - 1));
    }
    return acc;
}
}  // namespace

EnergyAuditReport energy_audit(EnergySamples const& s)
{
    std::size_t const nt = s.times.size();
    if (nt < 2 || s.paths < 2)
    {
        throw std::invalid_argument("energy_audit: need at least two paths and two times");
    }
    EnergyAuditReport r;
    r.coefficient = s.lambda1 > 0.0 ? std::max(2.0, 1.0 + 1.0 / s.lambda1) : 2.0;
    r.k1 = stats::mean(s.forcing);
    r.passed = true;
    r.literal_passed = true;
    r.worst_margin = -std::numeric_limits<double>::infinity();
    std::vector<double> lhs(s.paths), diff(s.paths), diff_lit(s.paths);
    for (std::size_t i = 0; i < nt; ++i)
    {
        for (std::size_t p = 0; p < s.paths; ++p)
        {
            double const l = s.at(s.energy, p, i) + running_integral(s, s.dissipation, p, i);
            double const f = running_integral(s, s.forcing, p, i);
            lhs[p] = l;
            diff[p] = l - (s.x0_energy + r.coefficient * f);
            diff_lit[p] = l - (s.x0_energy + 2.0 * f);
        }
        auto const ml = stats::mean_se(lhs);
        auto const md = stats::mean_se(diff);
        auto const mdl = stats::mean_se(diff_lit);
        EnergyAuditRow row;
        row.t = s.times[i];
        row.lhs = ml.mean;
        row.lhs_se = ml.se;
        row.rhs = ml.mean - md.mean;
        row.rhs_literal = ml.mean - mdl.mean;
        row.margin = md.se > 0.0 ? md.mean / md.se
                                 : (md.mean > 0.0 ? std::numeric_limits<double>::infinity()
                                                  : -std::numeric_limits<double>::infinity());
        if (md.mean > 3.0 * md.se)
        {
            r.passed = false;
        }
        if (mdl.mean > 3.0 * mdl.se)
        {
            r.literal_passed = false;
        }
        if (i > 0 && row.margin > r.worst_margin)
        {
            r.worst_margin = row.margin;
            r.worst_time = row.t;
        }
        r.rows.push_back(row);
    }
    std::vector<double> avg(s.paths);
    double const horizon = s.times.back() - s.times.front();
    for (std::size_t p = 0; p < s.paths; ++p)
    {
        avg[p] = running_integral(s, s.dissipation, p, nt - 1) / horizon;
    }
    auto const ma = stats::mean_se(avg);
    r.time_average = ma.mean;
    r.time_average_se = ma.se;
    r.time_average_bound = s.x0_energy + r.coefficient * r.k1;
    r.time_average_passed = ma.mean <= r.time_average_bound + 3.0 * ma.se;
    r.passed = r.passed && r.time_average_passed;
    return r;
}

}  // namespace twonoise
