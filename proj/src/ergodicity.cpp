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

#include "twonoise/ergodicity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "twonoise/parallel.hpp"
#include "twonoise/rng.hpp"

namespace twonoise
{

namespace
{

double norm2(std::span<double const> x)
{
    double s = 0.0;
    for (double v : x)
    {
        s += v * v;
    }
    return s;
}

std::vector<double> random_unit(std::size_t dim, CounterRng& rng)
{
    std::vector<double> v(dim);
    double n = 0.0;
    while (n < 1e-12)
    {
        for (double& c : v)
        {
            c = rng.normal();
        }
        n = std::sqrt(norm2(v));
    }
    for (double& c : v)
    {
        c /= n;
    }
    return v;
}

/// +-e_i for every axis, then `extra` random unit vectors.
std::vector<std::vector<double>> probe_directions(std::size_t dim, std::size_t extra,
                                                  std::uint64_t seed)
{
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < dim; ++i)
    {
        for (double sign : {1.0, -1.0})
        {
            std::vector<double> e(dim, 0.0);
            e[i] = sign;
            out.push_back(std::move(e));
        }
    }
    CounterRng rng({seed, NoiseDomain::initial, 7}, 0);
    for (std::size_t i = 0; i < extra; ++i)
    {
        out.push_back(random_unit(dim, rng));
    }
    return out;
}

void require_grid(std::vector<double> const& v, bool strictly_decreasing, char const* what)
{
    if (v.empty())
    {
        throw std::invalid_argument(std::string(what) + " must not be empty");
    }
    for (std::size_t i = 1; i < v.size(); ++i)
    {
        bool const ok = strictly_decreasing ? v[i] < v[i - 1] : v[i] > v[i - 1];
        if (!ok)
        {
            throw std::invalid_argument(std::string(what) + (strictly_decreasing
                                                                 ? " must be strictly decreasing"
                                                                 : " must be strictly increasing"));
        }
    }
}

/// Driver over [0, t1] for one realisation of omega~.
DrivingPath forward_driver(OUSpec const& spec, double t1, double dt, std::uint64_t seed)
{
    return make_stationary_history(spec, t1, dt, seed, t1);
}

void wiener_normals(SemilinearModel const& model, WienerKey const& w, std::int64_t k,
                    std::span<double> xi)
{
    if (model.diffusion)
    {
        fill_normals(w.key(), static_cast<std::uint64_t>(k + w.step_offset) * model.dim, xi);
    }
    else
    {
        std::fill(xi.begin(), xi.end(), 0.0);
    }
}

void check_finite(std::span<double const> x, double bound, std::int64_t k, double dt)
{
    double const n = std::sqrt(norm2(x));
    if (!(n <= bound))
    {
        throw DivergenceError(k, static_cast<double>(k) * dt, n);
    }
}

}  // namespace

std::vector<Observable> default_observables(std::size_t dim, std::size_t count)
{
    if (dim == 0)
    {
        throw std::invalid_argument("default_observables: dim must be positive");
    }
    std::size_t const j = 1 % dim;
    std::vector<Observable> base{
        [](std::span<double const> x) { return std::tanh(x[0]); },
        [](std::span<double const> x) { return std::tanh(x[0] - 1.0); },
        [](std::span<double const> x) { return std::tanh(2.0 * x[0] + 0.5); },
        [](std::span<double const> x) { return 1.0 / (1.0 + norm2(x)); },
        [](std::span<double const> x) { return std::cos(x[0]); },
        [](std::span<double const> x) { return std::sin(x[0]); },
        [j](std::span<double const> x) { return std::tanh(x[j]); },
        [j](std::span<double const> x) { return std::tanh(x[j] + 1.0); },
        [](std::span<double const> x) { return std::exp(-x[0] * x[0]); },
        [j](std::span<double const> x) { return std::tanh(x[0] + x[j]); },
    };
    std::vector<Observable> out;
    for (std::size_t i = 0; i < count; ++i)
    {
        out.push_back(base[i % base.size()]);
    }
    return out;
}

std::vector<std::vector<double>> initial_spread(std::size_t dim, double radius,
                                                std::size_t directions, std::uint64_t seed)
{
    std::vector<std::vector<double>> out;
    out.emplace_back(dim, 0.0);
    auto dirs = probe_directions(dim, directions > 2 * dim ? directions - 2 * dim : 0, seed);
    for (std::size_t i = 0; i < directions; ++i)
    {
        auto d = dirs[i % dirs.size()];
        for (double& c : d)
        {
            c *= radius;
        }
        out.push_back(std::move(d));
    }
    return out;
}

// ---------------------------------------------------------------------------

EvoSystemEstimate estimate_evo_system(SemilinearModel const& model, StepScheme const& scheme,
                                      std::shared_ptr<DrivingPath const> driving,
                                      EvoOptions const& opts)
{
    model.validate();
    if (!driving)
    {
        throw std::invalid_argument("estimate_evo_system: driving path is null");
    }
    require_grid(opts.s_list, true, "s_list");
    require_grid(opts.t_grid, false, "t_grid");
    if (opts.t_grid.front() < opts.s_list.front())
    {
        throw std::invalid_argument("t_grid must start at or after the first pullback start");
    }
    if (opts.n_points == 0)
    {
        throw std::invalid_argument("n_points must be positive");
    }
    if (!driving->covers(opts.s_list.back(), opts.t_grid.back()))
    {
        std::ostringstream os;
        os << "driving path covers [" << driving->t_first() << ", " << driving->t_origin()
           << "] but the estimate needs [" << opts.s_list.back() << ", " << opts.t_grid.back()
           << "]";
        throw std::out_of_range(os.str());
    }

    std::size_t const n = opts.n_points;
    std::size_t const dim = model.dim;
    auto const spread =
        initial_spread(dim, opts.spread_radius, opts.spread_directions, opts.init_seed);
    std::vector<WienerKey> keys(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        keys[i] = WienerKey{derive_seed(opts.w_seed, i), opts.w_offset};
    }
    std::size_t const sub = std::min(opts.distance_points, n);
    PseudoMetric const metric{opts.metric_n};

    EvoSystemEstimate est;
    est.times = opts.t_grid;
    est.pullback_starts = opts.s_list;
    est.driving = driving;

    std::vector<EmpiricalMeasure> previous;
    for (std::size_t l = 0; l < opts.s_list.size(); ++l)
    {
        // Only the deepest level needs every point; the others feed the
        // level distances, which use the leading `sub` points.
        bool const deepest = l + 1 == opts.s_list.size();
        std::size_t const count = deepest ? n : sub;
        std::span<WienerKey const> level_keys(keys.data(), count);
        EnsembleState ens;
        ens.t = opts.s_list[l];
        ens.dim = dim;
        ens.driving = driving;
        ens.points.resize(count * dim);
        for (std::size_t i = 0; i < count; ++i)
        {
            auto const& p = spread[i % spread.size()];
            std::copy(p.begin(), p.end(), ens.points.begin() + static_cast<long>(i * dim));
        }
        std::vector<EmpiricalMeasure> current;
        std::vector<EmpiricalMeasure> full;
        for (double t : opts.t_grid)
        {
            ens = evolve_ensemble(model, scheme, ens, t, level_keys, opts.workers);
            std::vector<double> head(ens.points.begin(),
                                     ens.points.begin() + static_cast<long>(sub * dim));
            current.push_back(EmpiricalMeasure::uniform(dim, std::move(head)));
            if (deepest)
            {
                full.push_back(ens.measure());
            }
        }
        if (l > 0)
        {
            std::vector<double> row;
            for (std::size_t i = 0; i < opts.t_grid.size(); ++i)
            {
                row.push_back(wasserstein_pseudo(previous[i], current[i], metric));
            }
            est.level_distances.push_back(std::move(row));
        }
        previous = std::move(current);
        if (!full.empty())
        {
            est.measures = std::move(full);
        }
    }

    if (est.level_distances.empty())
    {
        est.message = "a single pullback level gives no convergence evidence";
        return est;
    }
    auto const& last = est.level_distances.back();
    est.converged = std::all_of(last.begin(), last.end(),
                                [&](double d) { return d < opts.tolerance; });
    est.distances_decreasing = true;
    for (std::size_t l = 1; l < est.level_distances.size(); ++l)
    {
        for (std::size_t i = 0; i < opts.t_grid.size(); ++i)
        {
            if (est.level_distances[l][i] > est.level_distances[l - 1][i] + 1e-12)
            {
                est.distances_decreasing = false;
            }
        }
    }
    if (!est.converged)
    {
        double const worst = *std::max_element(last.begin(), last.end());
        std::ostringstream os;
        os << "not converged: deepest level distance " << worst << " exceeds tolerance "
           << opts.tolerance;
        est.message = os.str();
    }
    return est;
}

FlowReport check_flow_property(EvoSystemEstimate const& est, SemilinearModel const& model,
                               StepScheme const& scheme, FlowCheckOptions const& opts)
{
    if (est.measures.size() != est.times.size() || est.measures.empty())
    {
        throw std::invalid_argument("check_flow_property: estimate has no measures");
    }
    if (opts.observables.empty())
    {
        throw std::invalid_argument("check_flow_property: no observables");
    }
    auto const drv = opts.pushforward_driving ? opts.pushforward_driving : est.driving;
    std::size_t const n = est.measures.front().size();
    std::size_t const dim = model.dim;
    std::vector<WienerKey> keys(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        keys[i] = WienerKey{derive_seed(opts.w_seed, i)};
    }

    FlowReport rep;
    std::vector<double> diff(n);
    auto add_triple = [&](std::size_t i, std::size_t j, EnsembleState const& pushed) {
        auto const& target = est.measures[j];
        if (target.size() != n)
        {
            throw std::invalid_argument("check_flow_property: measures differ in size");
        }
        for (std::size_t o = 0; o < opts.observables.size(); ++o)
        {
            auto const& phi = opts.observables[o];
            for (std::size_t p = 0; p < n; ++p)
            {
                diff[p] = phi(pushed.point(p)) - phi(target.point(p));
            }
            std::vector<double> tv(n);
            for (std::size_t p = 0; p < n; ++p)
            {
                tv[p] = phi(target.point(p));
            }
            auto const ms = stats::mean_se(diff);
            FlowTriple tr;
            tr.s = est.times[i];
            tr.t = est.times[j];
            tr.observable = o;
            tr.target = stats::mean(tv);
            tr.pushed = tr.target + ms.mean;
            tr.diff_se = ms.se;
            tr.z = ms.se > 0.0 ? ms.mean / ms.se : (ms.mean == 0.0 ? 0.0 : HUGE_VAL);
            tr.pass = std::abs(tr.z) <= opts.z_threshold;
            rep.triples.push_back(tr);
        }
    };

    for (std::size_t i = 0; i < est.times.size(); ++i)
    {
        EnsembleState ens;
        ens.t = est.times[i];
        ens.dim = dim;
        ens.driving = drv;
        ens.points = est.measures[i].points;
        add_triple(i, i, ens);
        for (std::size_t j = i + 1; j < est.times.size(); ++j)
        {
            ens = evolve_ensemble(model, scheme, ens, est.times[j], keys, opts.workers);
            add_triple(i, j, ens);
        }
    }

    std::size_t passed = 0;
    for (auto const& tr : rep.triples)
    {
        passed += tr.pass ? 1 : 0;
        rep.max_abs_z = std::max(rep.max_abs_z, std::abs(tr.z));
    }
    rep.pass_fraction = static_cast<double>(passed) / static_cast<double>(rep.triples.size());
    rep.passed = rep.pass_fraction >= opts.pass_fraction;
    return rep;
}

// ---------------------------------------------------------------------------

std::vector<ZSample> krylov_bogoliubov(SemilinearModel const& model, StepScheme const& scheme,
                                       OUSpec const& driving_spec, KbOptions const& opts)
{
    model.validate();
    if (driving_spec.dim() != model.driving_dim)
    {
        throw std::invalid_argument("krylov_bogoliubov: driving dimension mismatch");
    }
    if (!(opts.t_max > opts.burn_in) || opts.burn_in < 0.0)
    {
        throw std::invalid_argument("krylov_bogoliubov: need 0 <= burn_in < t_max");
    }
    double const dt = scheme.dt;
    std::int64_t const k_end = grid_index(opts.t_max, dt, "t_max");
    std::int64_t const k_burn = grid_index(opts.burn_in, dt, "burn_in");
    std::int64_t const k_thin = grid_index(opts.thin, dt, "thin");
    std::int64_t const k_win = grid_index(opts.window, dt, "window");
    if (k_thin <= 0 || k_win <= 0)
    {
        throw std::invalid_argument("krylov_bogoliubov: thin and window must be positive");
    }
    DrivingPath const path = make_stationary_history(driving_spec, opts.t_max + opts.window, dt,
                                                     opts.driving_seed, opts.t_max);
    std::vector<double> x = opts.x0.empty() ? std::vector<double>(model.dim, 0.0) : opts.x0;
    if (x.size() != model.dim)
    {
        throw std::invalid_argument("krylov_bogoliubov: x0 has the wrong dimension");
    }
    std::vector<ZSample> out;
    Stepper stepper(model, scheme);
    auto observe = [&](std::int64_t k, std::span<double const> xs) {
        if (k >= k_burn && (k - k_burn) % k_thin == 0)
        {
            out.push_back({static_cast<double>(k) * dt, {xs.begin(), xs.end()},
                           path.window_ending_at(k, static_cast<std::size_t>(k_win) + 1)});
        }
    };
    integrate_steps(stepper, x, 0, k_end, path, WienerKey{opts.wiener_seed}, observe);
    return out;
}

std::vector<ZObservable> default_z_observables(std::size_t dim, std::size_t driving_dim)
{
    if (dim == 0 || driving_dim == 0)
    {
        throw std::invalid_argument("default_z_observables: dimensions must be positive");
    }
    std::size_t const j = 1 % dim;
    std::size_t const m = 1 % driving_dim;
    using S = std::span<double const>;
    return {
        [](S x, S) { return std::tanh(x[0]); },
        [](S x, S) { return x[0] * x[0] / (1.0 + x[0] * x[0]); },
        [](S x, S) { return std::cos(x[0]); },
        [](S x, S) { return std::sin(x[0] - 0.3); },
        [](S, S h) { return std::tanh(h[0]); },
        [](S, S h) { return h[0] * h[0] / (1.0 + h[0] * h[0]); },
        [](S x, S h) { return std::tanh(x[0] * h[0]); },
        [](S x, S h) { return std::cos(x[0] + h[0]); },
        [](S x, S) { return 1.0 / (1.0 + norm2(x)); },
        [j, m](S x, S h) { return std::tanh(x[j] - h[m]); },
    };
}

InvarianceReport kb_invariance_test(SemilinearModel const& model, StepScheme const& scheme,
                                    std::span<ZSample const> samples, double delta,
                                    std::vector<ZObservable> const& observables,
                                    std::uint64_t seed, std::size_t batches, unsigned workers)
{
    if (samples.size() < 2 * batches || batches < 2)
    {
        throw std::invalid_argument("kb_invariance_test: too few samples for the batch count");
    }
    std::size_t const n = samples.size();
    std::size_t const no = observables.size();
    // before[o * n + i], after[o * n + i]
    std::vector<double> before(no * n);
    std::vector<double> after(no * n);
    parallel_for(
        n,
        [&](std::size_t i) {
            ZSample const& z = samples[i];
            DrivingPath const ext =
                extend_history(z.h, delta, DrivingNoise{derive_seed(seed, 2 * i)});
            std::vector<double> x = z.x;
            Stepper stepper(model, scheme);
            std::int64_t const k0 = grid_index(z.t, scheme.dt, "sample time");
            std::int64_t const k1 = grid_index(z.t + delta, scheme.dt, "t + delta");
            integrate_steps(stepper, x, k0, k1, ext, WienerKey{derive_seed(seed, 2 * i + 1)});
            auto const h0 = z.h.window().at_zero();
            auto const h1 = ext.window().at_zero();
            for (std::size_t o = 0; o < no; ++o)
            {
                before[o * n + i] = observables[o](z.x, h0);
                after[o * n + i] = observables[o](x, h1);
            }
        },
        workers);

    InvarianceReport rep;
    rep.delta = delta;
    rep.passed = true;
    std::vector<double> d(n);
    for (std::size_t o = 0; o < no; ++o)
    {
        std::span<double const> b(before.data() + o * n, n);
        std::span<double const> a(after.data() + o * n, n);
        for (std::size_t i = 0; i < n; ++i)
        {
            d[i] = a[i] - b[i];
        }
        auto const ms = stats::batch_means(d, batches);
        InvarianceRow row;
        row.before = stats::mean(b);
        row.after = stats::mean(a);
        row.diff_se = ms.se;
        row.z = ms.se > 0.0 ? ms.mean / ms.se : (ms.mean == 0.0 ? 0.0 : HUGE_VAL);
        row.pass = std::abs(row.z) <= 3.0;
        rep.passed = rep.passed && row.pass;
        rep.rows.push_back(row);
    }
    return rep;
}

// ---------------------------------------------------------------------------

AsfEntry const& AsfTable::at(double gamma, double n, double t) const
{
    for (auto const& e : entries)
    {
        if (e.gamma == gamma && e.n == n && e.t == t)
        {
            return e;
        }
    }
    throw std::out_of_range("AsfTable: no entry for the requested (gamma, n, t)");
}

AsfTable asf_diagnostic(SemilinearModel const& model, StepScheme const& scheme,
                        AsfOptions const& opts)
{
    model.validate();
    std::size_t const dim = model.dim;
    if (opts.x.size() != dim)
    {
        throw std::invalid_argument("asf_diagnostic: x has the wrong dimension");
    }
    if (opts.gamma_list.empty() || opts.n_list.empty() || opts.t_list.empty())
    {
        throw std::invalid_argument("asf_diagnostic: gamma_list, n_list and t_list are required");
    }
    if (opts.kernel_samples == 0 || opts.omega_count == 0)
    {
        throw std::invalid_argument("asf_diagnostic: kernel_samples and omega_count must be positive");
    }
    std::vector<std::int64_t> t_steps;
    for (double t : opts.t_list)
    {
        t_steps.push_back(grid_index(t, scheme.dt, "t_list"));
        if (t_steps.back() <= 0)
        {
            throw std::invalid_argument("asf_diagnostic: t_list entries must be positive");
        }
    }
    require_grid(opts.t_list, false, "t_list");
    double const t_max = opts.t_list.back();
    auto const dirs = probe_directions(dim, opts.random_probes, opts.probe_seed);

    std::size_t const ng = opts.gamma_list.size();
    std::size_t const nn = opts.n_list.size();
    std::size_t const nt = opts.t_list.size();
    std::size_t const m = opts.kernel_samples;
    // per omega: value[(g * nn + ni) * nt + ti]
    std::vector<std::vector<double>> per_omega(opts.omega_count,
                                               std::vector<double>(ng * nn * nt, 0.0));

    auto sample_from = [&](std::span<double const> start, DrivingPath const& path,
                           std::uint64_t wseed, Stepper& stepper) {
        // out[ti] holds m points
        std::vector<std::vector<double>> out(nt, std::vector<double>(m * dim));
        std::vector<double> x(dim);
        for (std::size_t j = 0; j < m; ++j)
        {
            std::copy(start.begin(), start.end(), x.begin());
            std::int64_t k = 0;
            for (std::size_t ti = 0; ti < nt; ++ti)
            {
                integrate_steps(stepper, x, k, t_steps[ti], path,
                                WienerKey{derive_seed(wseed, j)});
                k = t_steps[ti];
                std::copy(x.begin(), x.end(), out[ti].begin() + static_cast<long>(j * dim));
            }
        }
        return out;
    };

    parallel_for(
        opts.omega_count,
        [&](std::size_t w) {
            DrivingPath const path = forward_driver(opts.driving_spec, t_max, scheme.dt,
                                                    derive_seed(opts.driving_seed, w));
            std::uint64_t const wseed = derive_seed(opts.wiener_seed, w);
            Stepper stepper(model, scheme);
            auto const base = sample_from(opts.x, path, wseed, stepper);
            std::vector<EmpiricalMeasure> base_m;
            for (auto const& pts : base)
            {
                base_m.push_back(EmpiricalMeasure::uniform(dim, pts));
            }
            for (std::size_t g = 0; g < ng; ++g)
            {
                for (auto const& dir : dirs)
                {
                    std::vector<double> y(opts.x);
                    for (std::size_t c = 0; c < dim; ++c)
                    {
                        y[c] += opts.gamma_list[g] * dir[c];
                    }
                    auto const probe = sample_from(y, path, wseed, stepper);
                    for (std::size_t ti = 0; ti < nt; ++ti)
                    {
                        auto const pm = EmpiricalMeasure::uniform(dim, probe[ti]);
                        for (std::size_t ni = 0; ni < nn; ++ni)
                        {
                            double const v = wasserstein_pseudo(base_m[ti], pm,
                                                                PseudoMetric{opts.n_list[ni]});
                            double& slot = per_omega[w][(g * nn + ni) * nt + ti];
                            slot = std::max(slot, v);
                        }
                    }
                }
            }
        },
        opts.workers);

    AsfTable table;
    table.probes = dirs.size();
    std::vector<double> col(opts.omega_count);
    for (std::size_t g = 0; g < ng; ++g)
    {
        for (std::size_t ni = 0; ni < nn; ++ni)
        {
            for (std::size_t ti = 0; ti < nt; ++ti)
            {
                for (std::size_t w = 0; w < opts.omega_count; ++w)
                {
                    col[w] = per_omega[w][(g * nn + ni) * nt + ti];
                }
                auto const ms = stats::mean_se(col);
                table.entries.push_back(
                    {opts.gamma_list[g], opts.n_list[ni], opts.t_list[ti], ms.mean, ms.se});
            }
        }
    }

    // Shrinks with gamma at the largest (n, t): ordered by gamma up to 2 SE
    // and strictly below the largest-gamma value unless that is zero.
    std::vector<std::size_t> order(ng);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return opts.gamma_list[a] < opts.gamma_list[b]; });
    double const n_hi = *std::max_element(opts.n_list.begin(), opts.n_list.end());
    bool ok = true;
    for (std::size_t i = 1; i < ng; ++i)
    {
        auto const& lo = table.at(opts.gamma_list[order[i - 1]], n_hi, t_max);
        auto const& hi = table.at(opts.gamma_list[order[i]], n_hi, t_max);
        if (lo.value > hi.value + 2.0 * std::hypot(lo.se, hi.se))
        {
            ok = false;
        }
    }
    auto const& smallest = table.at(opts.gamma_list[order.front()], n_hi, t_max);
    auto const& largest = table.at(opts.gamma_list[order.back()], n_hi, t_max);
    table.vanishes_with_gamma =
        ok && (largest.value == 0.0 || (ng > 1 && smallest.value < largest.value));
    return table;
}

// ---------------------------------------------------------------------------

LyapunovConstants lyapunov_constants(double lambda1, double kappa1, double kappa2, double kappa3,
                                     double T)
{
    if (!(lambda1 > 0.0) || !(kappa1 > 0.0) || kappa2 < 0.0 || kappa3 < 0.0 || !(T > 0.0))
    {
        throw std::invalid_argument(
            "lyapunov_constants: need lambda1 > 0, kappa1 > 0, kappa2 >= 0, kappa3 >= 0, T > 0");
    }
    LyapunovConstants c;
    c.T = T;
    c.lambda1 = lambda1;
    c.kappa1 = kappa1;
    c.kappa2 = kappa2;
    c.kappa3 = kappa3;
    c.kappa5 = std::min(lambda1, kappa1 / 2.0);
    c.alpha = std::exp(-c.kappa5 * T) - std::exp(-kappa1 * T);
    c.delta = 2.0 * kappa3 / (c.alpha * (kappa1 + lambda1));
    c.kappa4 = 2.0 * kappa3 / lambda1 + 2.0 * kappa2 * kappa3 / lambda1 + c.delta * kappa2;
    return c;
}

std::pair<double, double> ou_kappas(OUSpec const& spec)
{
    double slowest = std::numeric_limits<double>::infinity();
    for (double b : spec.drift_eigs())
    {
        slowest = std::min(slowest, -b);
    }
    return {2.0 * slowest, spec.stationary_variance_sum()};
}

LyapunovReport lyapunov_audit(SemilinearModel const& model, StepScheme const& scheme,
                              OUSpec const& driving_spec, LyapunovOptions const& opts)
{
    model.validate();
    if (driving_spec.dim() != model.driving_dim)
    {
        throw std::invalid_argument("lyapunov_audit: driving dimension mismatch");
    }
    if (opts.N == 0 || opts.k_max == 0)
    {
        throw std::invalid_argument("lyapunov_audit: N and k_max must be positive");
    }
    LyapunovReport rep;
    auto const [k1_exact, k2_exact] = ou_kappas(driving_spec);
    std::size_t const kd = driving_spec.dim();
    bool const driver_noisy = std::any_of(driving_spec.noise_scale().begin(),
                                          driving_spec.noise_scale().end(),
                                          [](double s) { return s > 0.0; });

    double kappa1 = k1_exact;
    double kappa2 = k2_exact;
    if (driver_noisy && !opts.lags.empty())
    {
        // E[|Y(lag)|^2 | Y0] = beta |Y0|^2 + c. On the slowest mode
        // beta = e^{-kappa1 lag}; c = kappa2 (1 - beta) bounds the rest.
        std::vector<double> lag_beta;
        std::vector<double> lag_c;
        for (std::size_t li = 0; li < opts.lags.size(); ++li)
        {
            double const lag = opts.lags[li];
            std::size_t const n = opts.fit_samples;
            std::vector<double> u(n);
            std::vector<double> v(n);
            std::vector<double> y(kd);
            std::vector<double> xi(kd);
            CounterRng rng({opts.seed, NoiseDomain::initial, static_cast<std::uint32_t>(li + 1)},
                           0);
            for (std::size_t i = 0; i < n; ++i)
            {
                for (std::size_t c = 0; c < kd; ++c)
                {
                    y[c] = opts.y_inflation * std::sqrt(driving_spec.stationary_variance(c)) *
                           rng.normal();
                    xi[c] = rng.normal();
                }
                u[i] = norm2(y);
                ou_step_inplace(driving_spec, y, lag, xi);
                v[i] = norm2(y);
            }
            auto const fit = stats::linear_fit(u, v);
            lag_beta.push_back(fit.slope);
            lag_c.push_back(fit.intercept);
        }
        double num1 = 0.0;
        double den1 = 0.0;
        double num2 = 0.0;
        double den2 = 0.0;
        for (std::size_t li = 0; li < opts.lags.size(); ++li)
        {
            double const lag = opts.lags[li];
            double const beta = std::clamp(lag_beta[li], 1e-300, 1.0 - 1e-12);
            num1 += lag * -std::log(beta);
            den1 += lag * lag;
            num2 += lag_c[li] * (1.0 - beta);
            den2 += (1.0 - beta) * (1.0 - beta);
        }
        kappa1 = num1 / den1;
        kappa2 = num2 / den2;
        rep.kappas_fitted = true;
    }
    rep.kappa1_fit = kappa1;
    rep.kappa2_fit = kappa2;
    rep.constants =
        lyapunov_constants(model.lambda1(), kappa1, kappa2, model.growth_kappa, opts.T);
    auto const& cst = rep.constants;
    double const bound = opts.M * cst.kappa4;

    std::size_t const dim = model.dim;
    std::vector<double> x0 = opts.x0;
    if (x0.empty())
    {
        x0.assign(dim, 0.0);
        x0[0] = std::sqrt(1.05 * bound);
    }
    if (x0.size() != dim)
    {
        throw std::invalid_argument("lyapunov_audit: x0 has the wrong dimension");
    }
    std::int64_t const kT = grid_index(opts.T, scheme.dt, "T");
    std::size_t const K = opts.k_max;
    double const horizon = static_cast<double>(K) * opts.T;
    std::int64_t const ratio = 1;

    // V[i * (K + 1) + k]
    std::vector<double> V(opts.N * (K + 1));
    parallel_for(
        opts.N,
        [&](std::size_t i) {
            DrivingPath const path = forward_driver(driving_spec, horizon, scheme.dt,
                                                    derive_seed(opts.seed, 2 * i));
            WienerKey const w{derive_seed(opts.seed, 2 * i + 1)};
            Stepper stepper(model, scheme);
            std::vector<double> x = x0;
            for (std::size_t k = 0; k <= K; ++k)
            {
                std::int64_t const g = static_cast<std::int64_t>(k) * kT;
                if (k > 0)
                {
                    integrate_steps(stepper, x, g - kT, g, path, w);
                }
                V[i * (K + 1) + k] = norm2(x) + cst.delta * norm2(path.at_index(g * ratio));
            }
        },
        opts.workers);

    std::vector<std::size_t> tau(opts.N, K + 1);
    for (std::size_t i = 0; i < opts.N; ++i)
    {
        for (std::size_t k = 0; k <= K; ++k)
        {
            if (V[i * (K + 1) + k] <= bound)
            {
                tau[i] = k;
                break;
            }
        }
    }
    bool const noiseless = !driver_noisy && !model.diffusion;
    if (noiseless)
    {
        rep.deterministic_tau = static_cast<std::int64_t>(tau[0]);
    }
    double const nN = static_cast<double>(opts.N);
    std::vector<double> fit_t;
    std::vector<double> fit_y;
    rep.tail_nonincreasing = true;
    for (std::size_t k = 0; k <= K; ++k)
    {
        std::size_t const count =
            static_cast<std::size_t>(std::count_if(tau.begin(), tau.end(),
                                                   [k](std::size_t t) { return t >= k; }));
        double const p = static_cast<double>(count) / nN;
        rep.tail_times.push_back(static_cast<double>(k) * opts.T);
        rep.tail.push_back(p);
        rep.tail_se.push_back(std::sqrt(p * (1.0 - p) / nN));
        if (k > 0 && p > rep.tail[k - 1])
        {
            rep.tail_nonincreasing = false;
        }
        if (k >= 1 && count >= 10)
        {
            fit_t.push_back(rep.tail_times.back());
            fit_y.push_back(std::log(p));
        }
    }
    if (fit_t.size() >= 3)
    {
        rep.tail_fit = stats::linear_fit(fit_t, fit_y);
        rep.tail_rate = -rep.tail_fit.slope;
        rep.tail_exponential = rep.tail_fit.slope < 0.0 && rep.tail_fit.r_squared > 0.9;
    }
    else
    {
        // Mass leaves within two checkpoints: faster than any fit can resolve.
        rep.tail_rate = std::numeric_limits<double>::infinity();
        rep.tail_exponential = true;
    }

    // Drift residual binned by V_k quantiles.
    std::vector<std::pair<double, double>> pairs;
    pairs.reserve(opts.N * K);
    double const decay = std::exp(-cst.kappa5 * opts.T);
    for (std::size_t i = 0; i < opts.N; ++i)
    {
        for (std::size_t k = 0; k < K; ++k)
        {
            double const vk = V[i * (K + 1) + k];
            pairs.emplace_back(vk, V[i * (K + 1) + k + 1] - decay * vk - cst.kappa4);
        }
    }
    std::sort(pairs.begin(), pairs.end());
    std::size_t const nbins = std::min<std::size_t>(10, pairs.size());
    rep.drift_ok = true;
    for (std::size_t b = 0; b < nbins; ++b)
    {
        std::size_t const lo = b * pairs.size() / nbins;
        std::size_t const hi = (b + 1) * pairs.size() / nbins;
        std::vector<double> vs;
        std::vector<double> rs;
        for (std::size_t i = lo; i < hi; ++i)
        {
            vs.push_back(pairs[i].first);
            rs.push_back(pairs[i].second);
        }
        DriftBin bin;
        bin.v_mean = stats::mean(vs);
        auto const ms = stats::mean_se(rs);
        bin.residual = ms.mean;
        bin.residual_se = ms.se;
        bin.pass = ms.mean <= 3.0 * ms.se;
        rep.drift_ok = rep.drift_ok && bin.pass;
        rep.drift.push_back(bin);
    }
    return rep;
}

// ---------------------------------------------------------------------------

MixingResult mixing_certificate(SemilinearModel const& model, StepScheme const& scheme,
                                MixingOptions const& opts)
{
    model.validate();
    std::size_t const dim = model.dim;
    if (opts.x.size() != dim || opts.y.size() != dim)
    {
        throw std::invalid_argument("mixing_certificate: x and y must have the model dimension");
    }
    if (!model.additive_noise || !model.diffusion)
    {
        throw std::invalid_argument(
            "mixing_certificate: needs additive, nondegenerate sigma for the one-step coupling");
    }
    if (opts.driving_spec.dim() != model.driving_dim)
    {
        throw std::invalid_argument("mixing_certificate: driving dimension mismatch");
    }
    if (opts.omega_count == 0 || opts.pairs_per_omega == 0)
    {
        throw std::invalid_argument("mixing_certificate: omega_count and pairs_per_omega must be positive");
    }
    std::int64_t const kT = grid_index(opts.T, scheme.dt, "T");
    std::int64_t const K = grid_index(opts.horizon, scheme.dt, "horizon");
    if (kT <= 0 || K < kT)
    {
        throw std::invalid_argument("mixing_certificate: need 0 < T <= horizon");
    }
    std::size_t const nc = static_cast<std::size_t>(K / kT) + 1;
    auto const [k1, k2] = ou_kappas(opts.driving_spec);
    auto const cst = lyapunov_constants(model.lambda1(), k1, k2, model.growth_kappa, opts.T);
    double const bound = opts.small_set_M * cst.kappa4;
    std::size_t const P = opts.pairs_per_omega;
    std::size_t const W = opts.omega_count;

    struct OmegaOut
    {
        std::vector<std::size_t> uncoupled;
        std::vector<double> phi_diff;  // mean of tanh(x1_0) - tanh(x2_0)
        std::vector<double> phi_se;
        std::size_t attempts = 0;
        std::size_t successes = 0;
    };
    std::vector<OmegaOut> outs(W);

    parallel_for(
        W,
        [&](std::size_t w) {
            OmegaOut& o = outs[w];
            o.uncoupled.assign(nc, 0);
            DrivingPath const path =
                forward_driver(opts.driving_spec, static_cast<double>(K) * scheme.dt, scheme.dt,
                               derive_seed(opts.driving_seed, w));
            std::int64_t const ratio = driving_ratio(scheme, path);
            Stepper stepper(model, scheme);
            std::vector<double> x1(dim);
            std::vector<double> x2(dim);
            std::vector<double> xi(dim);
            std::vector<double> m1(dim);
            std::vector<double> m2(dim);
            std::vector<double> sd1(dim);
            std::vector<double> sd2(dim);
            std::vector<std::vector<double>> diffs(nc, std::vector<double>(P));
            std::uint64_t const wseed = derive_seed(opts.wiener_seed, w);
            std::uint64_t const cseed = derive_seed(opts.coupling_seed, w);
            for (std::size_t p = 0; p < P; ++p)
            {
                x1 = opts.x;
                x2 = opts.y;
                bool coupled = x1 == x2;
                WienerKey const wk{derive_seed(wseed, p)};
                auto record = [&](std::size_t c) {
                    o.uncoupled[c] += coupled ? 0 : 1;
                    diffs[c][p] = std::tanh(x1[0]) - std::tanh(x2[0]);
                };
                record(0);
                for (std::int64_t k = 0; k < K; ++k)
                {
                    auto const y = path.at_index(k * ratio);
                    bool const at_attempt = (k + 1) % kT == 0;
                    bool stepped = false;
                    if (!coupled && at_attempt)
                    {
                        double const y2 = norm2(y);
                        if (norm2(x1) + cst.delta * y2 <= bound &&
                            norm2(x2) + cst.delta * y2 <= bound)
                        {
                            stepper.kernel(x1, y, m1, sd1);
                            stepper.kernel(x2, y, m2, sd2);
                            bool const degenerate =
                                std::any_of(sd1.begin(), sd1.end(), [](double s) { return s <= 0.0; });
                            DiagGaussian const g1{m1, sd1};
                            DiagGaussian const g2{m2, sd2};
                            if (!degenerate && sd1 == sd2 &&
                                gaussian_tv_equal_cov(g1, g2) <= opts.tv_gate)
                            {
                                ++o.attempts;
                                auto const draw = maximal_coupling(
                                    g1, g2, derive_seed(derive_seed(cseed, p),
                                                        static_cast<std::uint64_t>(k)));
                                x1 = draw.first;
                                x2 = draw.second;
                                if (draw.coupled)
                                {
                                    ++o.successes;
                                    coupled = true;
                                }
                                stepped = true;
                            }
                        }
                    }
                    if (!stepped)
                    {
                        wiener_normals(model, wk, k, xi);
                        stepper.step(x1, y, xi);
                        if (coupled)
                        {
                            x2 = x1;
                        }
                        else
                        {
                            stepper.step(x2, y, xi);
                        }
                    }
                    check_finite(x1, scheme.blowup_bound, k + 1, scheme.dt);
                    check_finite(x2, scheme.blowup_bound, k + 1, scheme.dt);
                    if (at_attempt)
                    {
                        record(static_cast<std::size_t>((k + 1) / kT));
                    }
                }
            }
            for (std::size_t c = 0; c < nc; ++c)
            {
                auto const ms = stats::mean_se(diffs[c]);
                o.phi_diff.push_back(ms.mean);
                o.phi_se.push_back(ms.se);
            }
        },
        opts.workers);

    MixingResult res;
    res.run.pairs = P * W;
    std::vector<double> frac(W);
    std::vector<double> gap(W);
    for (std::size_t c = 0; c < nc; ++c)
    {
        std::size_t total = 0;
        for (std::size_t w = 0; w < W; ++w)
        {
            total += outs[w].uncoupled[c];
            frac[w] = static_cast<double>(outs[w].uncoupled[c]) / static_cast<double>(P);
            gap[w] = std::abs(outs[w].phi_diff[c]);
        }
        double const f = static_cast<double>(total) / static_cast<double>(P * W);
        double const binom = std::sqrt(f * (1.0 - f) / static_cast<double>(P * W));
        double const across = W > 1 ? stats::mean_se(frac).se : 0.0;
        res.run.times.push_back(static_cast<double>(c) * opts.T);
        res.run.uncoupled.push_back(f);
        res.run.std_error.push_back(std::max(across, binom));
        res.run.uncoupled_count.push_back(total);
        auto const gs = stats::mean_se(gap);
        res.phi_gap.push_back(gs.mean);
        res.phi_gap_se.push_back(W > 1 ? gs.se : 0.0);
    }
    res.per_omega_uncoupled.resize(W);
    for (std::size_t w = 0; w < W; ++w)
    {
        for (std::size_t c = 0; c < nc; ++c)
        {
            res.per_omega_uncoupled[w].push_back(static_cast<double>(outs[w].uncoupled[c]) /
                                                 static_cast<double>(P));
        }
        res.attempts += outs[w].attempts;
        res.successes += outs[w].successes;
    }
    res.attempted = res.attempts > 0;

    auto const& u = res.run.uncoupled;
    auto const first_low = std::find_if(u.begin(), u.end(),
                                        [&](double f) { return f <= opts.fit_max_fraction; });
    if (first_low != u.end())
    {
        res.run.fit_from = res.run.times[static_cast<std::size_t>(first_low - u.begin())];
    }
    else
    {
        res.run.fit_from = std::numeric_limits<double>::infinity();
    }
    res.run.fit_to = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < nc; ++c)
    {
        if (res.run.uncoupled_count[c] >= opts.fit_min_count)
        {
            res.run.fit_to = res.run.times[c];
        }
    }
    res.fit = fit_mixing_rate(res.run);
    res.rate_ci_low = res.fit.rate - 1.96 * res.fit.rate_se;
    res.rate_ci_high = res.fit.rate + 1.96 * res.fit.rate_se;

    res.nonincreasing = true;
    for (std::size_t c = 1; c < nc; ++c)
    {
        double const eu = std::hypot(res.run.std_error[c], res.run.std_error[c - 1]);
        double const eg = std::hypot(res.phi_gap_se[c], res.phi_gap_se[c - 1]);
        if (u[c] > u[c - 1] + 2.0 * eu || res.phi_gap[c] > res.phi_gap[c - 1] + 2.0 * eg)
        {
            res.nonincreasing = false;
        }
    }
    return res;
}

// ---------------------------------------------------------------------------

SmallBallResult small_ball_probe(SemilinearModel const& model, StepScheme const& scheme,
                                 SmallBallOptions const& opts)
{
    model.validate();
    if (!(opts.rho1 > 0.0) || !(opts.delta1 > 0.0) || opts.N == 0)
    {
        throw std::invalid_argument("small_ball_probe: need rho1 > 0, delta1 > 0 and N > 0");
    }
    std::size_t const dim = model.dim;
    std::int64_t const kT = grid_index(opts.T, scheme.dt, "T");
    if (kT <= 0)
    {
        throw std::invalid_argument("small_ball_probe: T must be positive");
    }
    auto const dirs = probe_directions(dim, opts.random_probes, opts.seed);
    double const target = 0.25 * opts.delta1 * opts.delta1;

    SmallBallResult res;
    res.K0 = -1;
    Stepper stepper(model, scheme);
    for (auto const& d : dirs)
    {
        std::vector<double> x(dim);
        for (std::size_t c = 0; c < dim; ++c)
        {
            x[c] = opts.rho1 * d[c];
        }
        std::vector<double> const start = x;
        std::int64_t k = 0;
        while (norm2(x) > target)
        {
            if (++k > opts.k_cap)
            {
                std::ostringstream os;
                os << "small_ball_probe: noiseless flow did not reach the delta1/2 ball within "
                   << opts.k_cap << " periods";
                throw std::runtime_error(os.str());
            }
            for (std::int64_t s = 0; s < kT; ++s)
            {
                stepper.deterministic_step(x);
            }
            check_finite(x, scheme.blowup_bound, k * kT, scheme.dt);
        }
        if (k > res.K0)
        {
            res.K0 = k;
            res.worst_start = start;
        }
    }

    double const horizon = static_cast<double>(res.K0) * opts.T;
    std::vector<char> hit(opts.N, 0);
    if (res.K0 == 0)
    {
        std::fill(hit.begin(), hit.end(), 1);
    }
    else
    {
        parallel_for(
            opts.N,
            [&](std::size_t i) {
                DrivingPath const path = forward_driver(opts.driving_spec, horizon, scheme.dt,
                                                        derive_seed(opts.seed, 2 * i + 100));
                Stepper st(model, scheme);
                std::vector<double> x = res.worst_start;
                integrate_steps(st, x, 0, res.K0 * kT, path,
                                WienerKey{derive_seed(opts.seed, 2 * i + 101)});
                hit[i] = norm2(x) <= opts.delta1 * opts.delta1 ? 1 : 0;
            },
            opts.workers);
    }
    res.trials = opts.N;
    res.successes = static_cast<std::size_t>(std::count(hit.begin(), hit.end(), 1));
    res.alpha_hat = static_cast<double>(res.successes) / static_cast<double>(res.trials);
    auto const ci = stats::wilson_interval(res.successes, res.trials);
    res.ci_low = ci.first;
    res.ci_high = ci.second;
    return res;
}

}  // namespace twonoise
