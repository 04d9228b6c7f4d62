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

#include "twonoise/experiments.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <locale>
#include <memory>
#include <set>
#include <sstream>

#include "twonoise/driving.hpp"
#include "twonoise/ergodicity.hpp"
#include "twonoise/integrator.hpp"
#include "twonoise/navier_stokes.hpp"
#include "twonoise/oracle.hpp"
#include "twonoise/parallel.hpp"
#include "twonoise/rng.hpp"
#include "twonoise/stats.hpp"

#ifndef TWONOISE_SOURCE_DIR
#define TWONOISE_SOURCE_DIR "."
#endif

namespace twonoise
{

using nlohmann::json;

ConfigError::ConfigError(std::string field, std::string const& what)
    : std::invalid_argument(field + ": " + what), field_(std::move(field))
{
}

namespace
{

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t seed_field(json const& seeds, char const* name)
{
    auto const& v = seeds.at(name);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    {
        throw ConfigError(std::string("seeds.") + name, "must be a non-negative integer");
    }
    return v.get<std::uint64_t>();
}

/// Typed access to the numerics object; remembers which keys were read so
/// leftovers can be reported.
class Numerics
{
  public:
    Numerics(json const& j, std::string experiment) : j_(j), experiment_(std::move(experiment))
    {
    }

    double real(char const* key, double def)
    {
        used_.insert(key);
        if (!j_.contains(key))
        {
            return def;
        }
        auto const& v = j_.at(key);
        if (!v.is_number())
        {
            throw ConfigError(field(key), "expected a number");
        }
        return v.get<double>();
    }

    double positive(char const* key, double def)
    {
        double const v = real(key, def);
        if (!(v > 0.0) || !std::isfinite(v))
        {
            throw ConfigError(field(key), "must be positive and finite");
        }
        return v;
    }

    std::size_t count(char const* key, std::size_t def)
    {
        used_.insert(key);
        if (!j_.contains(key))
        {
            return def;
        }
        auto const& v = j_.at(key);
        if (!v.is_number_integer() || v.get<std::int64_t>() <= 0)
        {
            throw ConfigError(field(key), "expected a positive integer");
        }
        return v.get<std::size_t>();
    }

    std::vector<double> list(char const* key, std::vector<double> def)
    {
        used_.insert(key);
        if (!j_.contains(key))
        {
            return def;
        }
        auto const& v = j_.at(key);
        if (!v.is_array() || v.empty())
        {
            throw ConfigError(field(key), "expected a non-empty array of numbers");
        }
        std::vector<double> out;
        for (auto const& e : v)
        {
            if (!e.is_number())
            {
                throw ConfigError(field(key), "expected a non-empty array of numbers");
            }
            out.push_back(e.get<double>());
        }
        return out;
    }

    std::vector<double> vector(char const* key, std::vector<double> def, std::size_t dim)
    {
        auto v = list(key, std::move(def));
        if (v.size() != dim)
        {
            throw ConfigError(field(key), "must have " + std::to_string(dim) + " entries");
        }
        return v;
    }

    bool flag(char const* key, bool def)
    {
        used_.insert(key);
        if (!j_.contains(key))
        {
            return def;
        }
        if (!j_.at(key).is_boolean())
        {
            throw ConfigError(field(key), "expected true or false");
        }
        return j_.at(key).get<bool>();
    }

    StepScheme scheme(double default_dt)
    {
        StepScheme s;
        s.dt = positive("dt", default_dt);
        dt_ = s.dt;
        used_.insert("scheme");
        if (j_.contains("scheme"))
        {
            if (!j_.at("scheme").is_string())
            {
                throw ConfigError("numerics.scheme", "expected a string");
            }
            try
            {
                s.kind = scheme_kind_from_string(j_.at("scheme").get<std::string>());
            }
            catch (std::invalid_argument const& e)
            {
                throw ConfigError("numerics.scheme", e.what());
            }
        }
        s.blowup_bound = positive("blowup_bound", s.blowup_bound);
        return s;
    }

    /// A time that must sit on the scheme grid (and may be zero or negative
    /// when `allow_nonpositive`).
    double horizon(char const* key, double def, bool allow_nonpositive = false)
    {
        double const v = allow_nonpositive ? real(key, def) : positive(key, def);
        on_grid(key, v);
        return v;
    }

    std::vector<double> horizons(char const* key, std::vector<double> def)
    {
        auto v = list(key, std::move(def));
        for (double t : v)
        {
            on_grid(key, t);
        }
        return v;
    }

    /// Rejects keys no reader asked for. Call once all parameters are read.
    void finish() const
    {
        for (auto const& [k, v] : j_.items())
        {
            if (used_.count(k) == 0)
            {
                throw ConfigError(field(k.c_str()),
                                  "not a parameter of experiment " + experiment_);
            }
        }
    }

  private:
    static std::string field(char const* key) { return std::string("numerics.") + key; }

    void on_grid(char const* key, double v) const
    {
        try
        {
            (void)grid_index(v, dt_, key);
        }
        catch (std::invalid_argument const&)
        {
            std::ostringstream os;
            os << std::setprecision(17) << "step " << dt_ << " does not divide numerics." << key
               << " = " << v;
            throw ConfigError("numerics.dt", os.str());
        }
    }

    json const& j_;
    std::string experiment_;
    std::set<std::string> used_;
    double dt_ = 1.0;
};

struct ModelBundle
{
    bool scalar = true;
    SemilinearModel model;
    OUSpec driving = OUSpec::uniform(1, -1.0, 1.0);
    std::shared_ptr<NSInstance> ns;
};

ModelBundle build_model(ExperimentConfig const& cfg)
{
    ModelBundle b;
    if (cfg.model == "example1d")
    {
        if (!cfg.model_params.empty())
        {
            throw ConfigError("model.params." + cfg.model_params.begin().key(),
                              "example1d takes no parameters");
        }
        b.model = example1d_model();
        b.driving = example1d_driving_spec();
        return b;
    }
    static std::set<std::string> const known{"n",           "viscosity",      "alpha",
                                             "trace_c",     "coupling_gain",  "driving_shells",
                                             "driving_drift", "driving_scale", "linearized"};
    for (auto const& [k, v] : cfg.model_params.items())
    {
        if (known.count(k) == 0)
        {
            throw ConfigError("model.params." + k, "unknown ns2d parameter");
        }
    }
    NSModelSpec spec;
    try
    {
        spec = ns_spec_from_json(cfg.model_params);
    }
    catch (json::exception const& e)
    {
        throw ConfigError("model.params", e.what());
    }
    catch (std::invalid_argument const& e)
    {
        throw ConfigError("model.params", e.what());
    }
    b.scalar = false;
    b.ns = std::make_shared<NSInstance>(as_semilinear(spec));
    b.model = b.ns->model;
    b.driving = b.ns->driving_spec();
    return b;
}

/// CSV rows with round-trip precision and the classic locale.
class Csv
{
  public:
    explicit Csv(std::string const& header)
    {
        os_.imbue(std::locale::classic());
        os_ << std::setprecision(17) << header << '\n';
    }

    template <typename... Ts>
    void row(Ts const&... vals)
    {
        bool first = true;
        ((os_ << (first ? "" : ","), write(vals), first = false), ...);
        os_ << '\n';
    }

    std::string str() const { return os_.str(); }

  private:
    void write(double v)
    {
        if (std::isnan(v))
        {
            os_ << "nan";
        }
        else
        {
            os_ << v;
        }
    }
    void write(std::size_t v) { os_ << v; }
    void write(std::int64_t v) { os_ << v; }
    void write(bool v) { os_ << (v ? 1 : 0); }
    void write(std::string const& v) { os_ << v; }
    void write(char const* v) { os_ << v; }

    std::ostringstream os_;
};

std::vector<double> axis_point(std::size_t dim, double a)
{
    std::vector<double> x(dim, 0.0);
    x[0] = a;
    return x;
}

std::vector<double> random_field(std::size_t dim, double energy, std::uint64_t seed)
{
    CounterRng rng({seed, NoiseDomain::initial, 21}, 0);
    std::vector<double> x(dim);
    double e = 0.0;
    for (double& v : x)
    {
        v = rng.normal();
        e += v * v;
    }
    double const s = std::sqrt(energy / e);
    for (double& v : x)
    {
        v *= s;
    }
    return x;
}

// ---------------------------------------------------------------------------

ExperimentOutcome oracle_validate(ModelBundle const& b, Numerics& num, Seeds const& seeds,
                                  unsigned workers)
{
    if (!b.scalar)
    {
        throw ConfigError("model.name", "oracle-validate needs example1d");
    }
    StepScheme const scheme = num.scheme(1e-3);
    std::size_t const N = num.count("N", 10000);
    std::size_t const tuples = num.count("tuples", 20);
    double const window = num.horizon("window", 2.0);
    double const max_span = num.horizon("max_span", 2.0);
    double const x_range = num.positive("x_range", 2.0);

    num.finish();
    DrivingPath const drv =
        make_stationary_history(b.driving, 2.0 * window, scheme.dt, seeds.driving, window);
    ScalarOracle const oracle(drv);
    std::int64_t const kw = grid_index(window, scheme.dt);
    std::int64_t const kspan = grid_index(max_span, scheme.dt);
    CounterRng rng({seeds.master, NoiseDomain::initial, 11}, 0);

    Csv csv("tuple,x,s,t,mean,mean_se,exact_mean,variance,variance_se,exact_variance,pass");
    json rows = json::array();
    std::size_t passed = 0;
    for (std::size_t i = 0; i < tuples; ++i)
    {
        double const x = x_range * (2.0 * rng.uniform() - 1.0);
        std::int64_t const ks = -kw + static_cast<std::int64_t>(
                                          std::floor(rng.uniform() * static_cast<double>(2 * kw)));
        std::int64_t const room = std::min(kspan, kw - ks);
        std::int64_t const kt =
            ks + 1 +
            static_cast<std::int64_t>(std::floor(rng.uniform() * static_cast<double>(room)));
        double const s = static_cast<double>(ks) * scheme.dt;
        double const t = static_cast<double>(std::min(kt, kw)) * scheme.dt;
        std::vector<double> const x0{x};
        auto const m = sample_kernel(b.model, scheme, x0, s, t, drv, N,
                                     derive_seed(seeds.wiener, i), workers);
        std::vector<double> v(m.points.begin(), m.points.end());
        auto const ms = stats::mean_se(v);
        double const var = stats::variance(v);
        double const var_se = stats::variance_se(v);
        auto const law = oracle.exact_kernel(x, s, t);
        bool const ok = std::abs(ms.mean - law.mean) <= 3.0 * ms.se &&
                        std::abs(var - law.var) <= 3.0 * var_se;
        passed += ok ? 1 : 0;
        csv.row(i, x, s, t, ms.mean, ms.se, law.mean, var, var_se, law.var, ok);
        rows.push_back({{"x", x}, {"s", s}, {"t", t}, {"pass", ok}});
    }
    ExperimentOutcome out;
    out.passed = passed == tuples;
    out.report = {{"tuples", tuples}, {"tuples_passed", passed}, {"N", N}, {"cases", rows}};
    out.csv = csv.str();
    return out;
}

struct EvoRun
{
    StepScheme scheme;
    EvoSystemEstimate est;
    EvoOptions opts;
    double var_tolerance = 0.02;
};

EvoRun read_evo(ModelBundle const& b, Numerics& num, Seeds const& seeds, unsigned workers)
{
    EvoRun r;
    r.scheme = num.scheme(b.scalar ? 1e-3 : 0.02);
    r.opts.s_list = num.horizons("s_list", b.scalar ? std::vector<double>{-2, -4, -6, -8, -10}
                                                    : std::vector<double>{-5, -10, -15, -20});
    r.opts.t_grid = num.horizons("t_grid", {0.0, 0.5, 1.0, 1.5, 2.0});
    r.opts.n_points = num.count("N", b.scalar ? 20000 : 1000);
    r.opts.tolerance = num.positive("tolerance", 0.05);
    r.opts.metric_n = num.positive("metric_n", 1.0);
    r.opts.distance_points = num.count("distance_points", b.scalar ? 512 : 256);
    r.opts.spread_radius = num.positive("spread_radius", 1.0);
    r.opts.spread_directions = num.count("spread_directions", 8);
    r.var_tolerance = num.positive("var_tolerance", 0.02);
    r.opts.w_seed = seeds.wiener;
    r.opts.init_seed = seeds.master;
    r.opts.workers = workers;
    if (r.opts.s_list.size() < 2)
    {
        throw ConfigError("numerics.s_list", "needs at least two pullback starts");
    }
    for (std::size_t i = 1; i < r.opts.s_list.size(); ++i)
    {
        if (!(r.opts.s_list[i] < r.opts.s_list[i - 1]))
        {
            throw ConfigError("numerics.s_list", "must be strictly decreasing");
        }
    }
    for (std::size_t i = 1; i < r.opts.t_grid.size(); ++i)
    {
        if (!(r.opts.t_grid[i] > r.opts.t_grid[i - 1]))
        {
            throw ConfigError("numerics.t_grid", "must be strictly increasing");
        }
    }
    if (r.opts.t_grid.front() < r.opts.s_list.front())
    {
        throw ConfigError("numerics.t_grid", "must not start before the first pullback start");
    }
    return r;
}

void run_evo(ModelBundle const& b, Seeds const& seeds, EvoRun& r)
{
    double const t1 = r.opts.t_grid.back();
    auto drv = std::make_shared<DrivingPath const>(make_stationary_history(
        b.driving, t1 - r.opts.s_list.back(), r.scheme.dt, seeds.driving, t1));
    r.est = estimate_evo_system(b.model, r.scheme, drv, r.opts);
}

ExperimentOutcome evo_pullback(ModelBundle const& b, Numerics& num, Seeds const& seeds,
                               unsigned workers)
{
    EvoRun r = read_evo(b, num, seeds, workers);
    num.finish();
    run_evo(b, seeds, r);
    auto const& est = r.est;
    std::optional<ScalarOracle> oracle;
    if (b.scalar)
    {
        oracle.emplace(*est.driving);
    }
    Csv csv("t,mean,mean_se,variance,oracle_mean,oracle_variance,deepest_level_distance");
    bool oracle_ok = true;
    json times = json::array();
    for (std::size_t i = 0; i < est.times.size(); ++i)
    {
        auto const& m = est.measures[i];
        std::vector<double> x0(m.size());
        for (std::size_t p = 0; p < m.size(); ++p)
        {
            x0[p] = m.point(p)[0];
        }
        auto const ms = stats::mean_se(x0);
        double const var = stats::variance(x0);
        double om = kNaN;
        double ov = kNaN;
        if (oracle)
        {
            auto const law = oracle->exact_evo_measure(est.times[i]);
            om = law.mean;
            ov = law.var;
            oracle_ok = oracle_ok && std::abs(ms.mean - om) <= 3.0 * ms.se &&
                        std::abs(var - ov) <= r.var_tolerance;
        }
        double const dist = est.level_distances.back()[i];
        csv.row(est.times[i], ms.mean, ms.se, var, om, ov, dist);
        times.push_back({{"t", est.times[i]}, {"mean", ms.mean}, {"mean_se", ms.se},
                         {"variance", var}, {"oracle_mean", om}, {"oracle_variance", ov}});
    }
    ExperimentOutcome out;
    out.passed = est.converged && est.distances_decreasing && oracle_ok;
    out.report = {{"converged", est.converged},
                  {"distances_decreasing", est.distances_decreasing},
                  {"level_distances", est.level_distances},
                  {"pullback_starts", est.pullback_starts},
                  {"oracle_agreement", b.scalar ? json(oracle_ok) : json(nullptr)},
                  {"times", times},
                  {"message", est.message}};
    out.csv = csv.str();
    return out;
}

ExperimentOutcome flow_check(ModelBundle const& b, Numerics& num, Seeds const& seeds,
                             unsigned workers)
{
    std::size_t const n_obs = num.count("observables", 10);
    FlowCheckOptions fo;
    fo.z_threshold = num.positive("z_threshold", 3.0);
    fo.pass_fraction = num.positive("pass_fraction", 0.95);
    bool const negative = num.flag("negative_control", b.scalar);
    double const neg_margin = num.positive("negative_margin", 10.0);
    EvoRun r = read_evo(b, num, seeds, workers);
    num.finish();
    run_evo(b, seeds, r);
    fo.observables = default_observables(b.model.dim, n_obs);
    fo.w_seed = derive_seed(seeds.wiener, 1);
    fo.workers = workers;
    auto const rep = check_flow_property(r.est, b.model, r.scheme, fo);

    Csv csv("s,t,observable,pushed,target,diff_se,z,pass");
    for (auto const& tr : rep.triples)
    {
        csv.row(tr.s, tr.t, tr.observable, tr.pushed, tr.target, tr.diff_se, tr.z, tr.pass);
    }
    ExperimentOutcome out;
    out.passed = rep.passed;
    out.report = {{"triples", rep.triples.size()},
                  {"pass_fraction", rep.pass_fraction},
                  {"max_abs_z", rep.max_abs_z},
                  {"flow_passed", rep.passed},
                  {"converged", r.est.converged}};
    if (negative)
    {
        // Same estimate, pushed forward under another driver realisation.
        double const t1 = r.est.times.back();
        fo.pushforward_driving = std::make_shared<DrivingPath const>(
            make_stationary_history(b.driving, t1 - r.est.times.front(), r.scheme.dt,
                                    derive_seed(seeds.driving, 1), t1));
        auto const neg = check_flow_property(r.est, b.model, r.scheme, fo);
        bool const detected = neg.max_abs_z > neg_margin;
        out.passed = out.passed && detected;
        out.report["negative_control"] = {{"pass_fraction", neg.pass_fraction},
                                          {"max_abs_z", neg.max_abs_z},
                                          {"margin", neg_margin},
                                          {"detected", detected}};
    }
    out.csv = csv.str();
    return out;
}

ExperimentOutcome kb_experiment(ModelBundle const& b, Numerics& num, Seeds const& seeds,
                                unsigned workers)
{
    StepScheme const scheme = num.scheme(b.scalar ? 0.01 : 0.02);
    KbOptions ko;
    ko.t_max = num.horizon("t_max", b.scalar ? 2000.0 : 1000.0);
    ko.burn_in = num.horizon("burn_in", 10.0);
    ko.thin = num.horizon("thin", 1.0);
    ko.window = num.horizon("window", 2.0);
    ko.x0 = num.vector("x0", std::vector<double>(b.model.dim, 0.0), b.model.dim);
    ko.driving_seed = seeds.driving;
    ko.wiener_seed = seeds.wiener;
    double const delta = num.horizon("delta", 1.0);
    std::size_t const batches = num.count("batches", 20);
    if (!(ko.burn_in < ko.t_max))
    {
        throw ConfigError("numerics.burn_in", "must be smaller than numerics.t_max");
    }
    num.finish();
    auto const samples = krylov_bogoliubov(b.model, scheme, b.driving, ko);
    if (samples.size() < 2 * batches)
    {
        throw ConfigError("numerics.t_max", "too short for the requested batch count");
    }
    auto const rep =
        kb_invariance_test(b.model, scheme, samples, delta,
                           default_z_observables(b.model.dim, b.model.driving_dim),
                           seeds.master, batches, workers);
    Csv csv("observable,before,after,diff_se,z,pass");
    for (std::size_t i = 0; i < rep.rows.size(); ++i)
    {
        auto const& r = rep.rows[i];
        csv.row(i, r.before, r.after, r.diff_se, r.z, r.pass);
    }
    ExperimentOutcome out;
    out.passed = rep.passed;
    double max_z = 0.0;
    for (auto const& r : rep.rows)
    {
        max_z = std::max(max_z, std::abs(r.z));
    }
    out.report = {{"samples", samples.size()}, {"delta", delta},
                  {"observables", rep.rows.size()}, {"max_abs_z", max_z}};
    out.csv = csv.str();
    return out;
}

ExperimentOutcome asf_experiment(ModelBundle const& b, Numerics& num, Seeds const& seeds,
                                 unsigned workers)
{
    StepScheme const scheme = num.scheme(b.scalar ? 0.01 : 0.02);
    std::size_t const dim = b.model.dim;
    AsfOptions ao;
    ao.x = num.vector("x", axis_point(dim, 0.5), dim);
    ao.gamma_list = num.list("gamma_list", b.scalar ? std::vector<double>{0, 0.01, 0.1, 0.5, 1}
                                                    : std::vector<double>{0, 0.1, 1});
    ao.n_list = num.list("n_list", b.scalar ? std::vector<double>{1, 10, 100}
                                            : std::vector<double>{1, 10});
    ao.t_list = num.horizons("t_list", b.scalar ? std::vector<double>{0.5, 1, 2, 4}
                                                : std::vector<double>{1, 2});
    ao.omega_count = num.count("omega_count", b.scalar ? 16 : 2);
    ao.kernel_samples = num.count("M", b.scalar ? 64 : 16);
    ao.random_probes = num.count("random_probes", 2);
    ao.driving_spec = b.driving;
    ao.driving_seed = seeds.driving;
    ao.wiener_seed = seeds.wiener;
    ao.probe_seed = seeds.master;
    ao.workers = workers;
    for (double g : ao.gamma_list)
    {
        if (g < 0.0)
        {
            throw ConfigError("numerics.gamma_list", "entries must be non-negative");
        }
    }
    num.finish();
    auto const table = asf_diagnostic(b.model, scheme, ao);

    // Synchronous coupling bound for the scalar model: the paired
    // trajectories stay exactly e^{-t} gamma apart.
    bool bound_ok = true;
    Csv csv("gamma,n,t,value,se,bound");
    for (auto const& e : table.entries)
    {
        double bound = kNaN;
        if (b.scalar)
        {
            bound = std::min(1.0, e.n * std::exp(-e.t) * e.gamma);
            bound_ok = bound_ok && e.value <= bound + 3.0 * e.se + 1e-12;
        }
        csv.row(e.gamma, e.n, e.t, e.value, e.se, bound);
    }
    ExperimentOutcome out;
    out.passed = table.vanishes_with_gamma && bound_ok;
    out.report = {{"probes", table.probes},
                  {"vanishes_with_gamma", table.vanishes_with_gamma},
                  {"bound_respected", b.scalar ? json(bound_ok) : json(nullptr)},
                  {"entries", table.entries.size()}};
    out.csv = csv.str();
    return out;
}

ExperimentOutcome lyapunov_experiment(ModelBundle const& b, Numerics& num, Seeds const& seeds,
                                      unsigned workers)
{
    StepScheme const scheme = num.scheme(b.scalar ? 0.01 : 0.02);
    LyapunovOptions lo;
    lo.T = num.horizon("T", b.scalar ? 0.25 : 0.5);
    lo.M = num.positive("M", 1.0);
    lo.N = num.count("N", b.scalar ? 20000 : 2000);
    lo.fit_samples = num.count("fit_samples", 100000);
    lo.k_max = num.count("k_max", 40);
    lo.lags = num.list("lags", lo.lags);
    lo.y_inflation = num.positive("y_inflation", lo.y_inflation);
    double const tol = num.positive("kappa_tolerance", 0.05);
    lo.seed = seeds.master;
    lo.workers = workers;
    num.finish();
    auto const rep = lyapunov_audit(b.model, scheme, b.driving, lo);
    auto const [k1, k2] = ou_kappas(b.driving);
    double const e1 = std::abs(rep.kappa1_fit / k1 - 1.0);
    double const e2 = k2 > 0.0 ? std::abs(rep.kappa2_fit / k2 - 1.0) : 0.0;
    bool const kappas_ok = e1 <= tol && e2 <= tol;

    Csv csv("t,tail,tail_se");
    for (std::size_t k = 0; k < rep.tail.size(); ++k)
    {
        csv.row(rep.tail_times[k], rep.tail[k], rep.tail_se[k]);
    }
    json drift = json::array();
    for (auto const& d : rep.drift)
    {
        drift.push_back({{"v_mean", d.v_mean}, {"residual", d.residual},
                         {"residual_se", d.residual_se}, {"pass", d.pass}});
    }
    auto const& c = rep.constants;
    ExperimentOutcome out;
    out.passed = kappas_ok && rep.tail_nonincreasing && rep.tail_exponential && rep.drift_ok;
    out.report = {
        {"kappa1_fit", rep.kappa1_fit},
        {"kappa2_fit", rep.kappa2_fit},
        {"kappa1_exact", k1},
        {"kappa2_exact", k2},
        {"kappas_within_tolerance", kappas_ok},
        {"constants",
         {{"T", c.T}, {"lambda1", c.lambda1}, {"kappa1", c.kappa1}, {"kappa2", c.kappa2},
          {"kappa3", c.kappa3}, {"kappa4", c.kappa4}, {"kappa5", c.kappa5}, {"alpha", c.alpha},
          {"delta", c.delta}}},
        {"tail_rate", rep.tail_rate},
        {"tail_r_squared", rep.tail_fit.r_squared},
        {"tail_exponential", rep.tail_exponential},
        {"tail_nonincreasing", rep.tail_nonincreasing},
        {"drift_ok", rep.drift_ok},
        {"drift", drift},
        {"deterministic_tau",
         rep.deterministic_tau ? json(*rep.deterministic_tau) : json(nullptr)}};
    out.csv = csv.str();
    return out;
}

ExperimentOutcome mixing_experiment(ModelBundle const& b, Numerics& num, Seeds const& seeds,
                                    unsigned workers)
{
    StepScheme const scheme = num.scheme(b.scalar ? 0.01 : 0.02);
    std::size_t const dim = b.model.dim;
    MixingOptions mo;
    mo.x = num.vector("x", axis_point(dim, b.scalar ? 2.0 : 1.0), dim);
    mo.y = num.vector("y", axis_point(dim, b.scalar ? -2.0 : -1.0), dim);
    mo.T = num.horizon("T", 1.0);
    mo.horizon = num.horizon("horizon", b.scalar ? 10.0 : 30.0);
    mo.omega_count = num.count("omega_count", 16);
    mo.pairs_per_omega = num.count("pairs_per_omega", b.scalar ? 500 : 100);
    mo.small_set_M = num.positive("M", 4.0);
    mo.tv_gate = num.positive("tv_gate", 0.5);
    mo.fit_max_fraction = num.positive("fit_max_fraction", 0.5);
    mo.fit_min_count = num.count("fit_min_count", 20);
    mo.driving_spec = b.driving;
    mo.driving_seed = seeds.driving;
    mo.wiener_seed = seeds.wiener;
    mo.coupling_seed = derive_seed(seeds.master, 3);
    mo.workers = workers;
    if (mo.horizon < mo.T)
    {
        throw ConfigError("numerics.horizon", "must be at least numerics.T");
    }
    num.finish();
    auto const r = mixing_certificate(b.model, scheme, mo);

    Csv csv("t,uncoupled_fraction,stderr,phi_gap,phi_gap_se");
    for (std::size_t i = 0; i < r.run.times.size(); ++i)
    {
        csv.row(r.run.times[i], r.run.uncoupled[i], r.run.std_error[i], r.phi_gap[i],
                r.phi_gap_se[i]);
    }
    ExperimentOutcome out;
    out.passed = r.fit.status == FitStatus::ok && r.rate_ci_low > 0.0 && r.nonincreasing;
    out.report = {{"rate", r.fit.rate},
                  {"rate_se", r.fit.rate_se},
                  {"rate_ci", {r.rate_ci_low, r.rate_ci_high}},
                  {"prefactor", r.fit.c},
                  {"r_squared", r.fit.r_squared},
                  {"points_used", r.fit.points_used},
                  {"fit_status", to_string(r.fit.status)},
                  {"fit_window", {r.run.fit_from, r.run.fit_to}},
                  {"attempts", r.attempts},
                  {"successes", r.successes},
                  {"nonincreasing", r.nonincreasing},
                  {"pairs", r.run.pairs}};
    out.csv = csv.str();
    return out;
}

ExperimentOutcome ns_energy(ModelBundle const& b, Numerics& num, Seeds const& seeds,
                            unsigned workers)
{
    if (b.scalar)
    {
        throw ConfigError("model.name", "ns-energy needs ns2d");
    }
    StepScheme const scheme = num.scheme(0.002);
    EnergyRecordOptions eo;
    eo.horizon = num.horizon("horizon", 2.0);
    eo.paths = num.count("paths", 1000);
    eo.record_every = static_cast<std::int64_t>(num.count("record_every", 10));
    eo.driving_seed = seeds.driving;
    eo.wiener_seed = seeds.wiener;
    eo.workers = workers;
    double const x0_energy = num.real("x0_energy", 1.0);
    double const inv_dt = num.positive("inviscid_dt", 1e-3);
    double const inv_t = num.positive("inviscid_t", 1.0);
    double const inv_tol = num.positive("inviscid_tolerance", 1e-8);
    if (x0_energy < 0.0)
    {
        throw ConfigError("numerics.x0_energy", "must be non-negative");
    }
    try
    {
        (void)grid_index(inv_t, inv_dt);
    }
    catch (std::invalid_argument const&)
    {
        throw ConfigError("numerics.inviscid_dt", "does not divide numerics.inviscid_t");
    }

    num.finish();
    std::size_t const dim = b.model.dim;
    auto const x0 = x0_energy > 0.0 ? random_field(dim, x0_energy, seeds.master)
                                    : std::vector<double>(dim, 0.0);
    auto const inv = inviscid_conservation(*b.ns->grid, random_field(dim, 1.0, seeds.master + 1),
                                           inv_dt, inv_t);
    bool const inv_ok = std::abs(inv.energy_rel_per_time) <= inv_tol &&
                        std::abs(inv.enstrophy_rel_per_time) <= inv_tol;
    auto const samples = record_energy(b.model, scheme, b.driving, x0, eo);
    auto const audit = energy_audit(samples);

    Csv csv("t,lhs,lhs_se,rhs,rhs_literal,margin");
    for (auto const& r : audit.rows)
    {
        csv.row(r.t, r.lhs, r.lhs_se, r.rhs, r.rhs_literal, r.margin);
    }
    ExperimentOutcome out;
    out.passed = inv_ok && audit.passed && audit.time_average_passed;
    out.report = {{"inviscid",
                   {{"energy_rel_per_time", inv.energy_rel_per_time},
                    {"enstrophy_rel_per_time", inv.enstrophy_rel_per_time},
                    {"tolerance", inv_tol},
                    {"passed", inv_ok}}},
                  {"audit",
                   {{"passed", audit.passed},
                    {"literal_passed", audit.literal_passed},
                    {"coefficient", audit.coefficient},
                    {"k1", audit.k1},
                    {"worst_margin", audit.worst_margin},
                    {"worst_time", audit.worst_time},
                    {"time_average", audit.time_average},
                    {"time_average_se", audit.time_average_se},
                    {"time_average_bound", audit.time_average_bound},
                    {"time_average_passed", audit.time_average_passed}}},
                  {"paths", eo.paths},
                  {"nondegeneracy", b.ns->nondegeneracy()}};
    out.csv = csv.str();
    return out;
}

ExperimentOutcome small_ball(ModelBundle const& b, Numerics& num, Seeds const& seeds,
                             unsigned workers)
{
    StepScheme const scheme = num.scheme(b.scalar ? 0.01 : 0.02);
    SmallBallOptions so;
    so.rho1 = num.positive("rho1", b.scalar ? 1.0 : 4.0);
    so.delta1 = num.positive("delta1", b.scalar ? 0.5 : 3.0);
    so.T = num.horizon("T", 0.5);
    so.N = num.count("N", b.scalar ? 10000 : 2000);
    so.random_probes = num.count("random_probes", 8);
    so.k_cap = static_cast<std::int64_t>(num.count("k_cap", 10000));
    so.driving_spec = b.driving;
    so.seed = seeds.master;
    so.workers = workers;
    num.finish();
    auto const r = small_ball_probe(b.model, scheme, so);
    Csv csv("K0,alpha_hat,ci_low,ci_high,successes,trials");
    csv.row(r.K0, r.alpha_hat, r.ci_low, r.ci_high, r.successes, r.trials);
    ExperimentOutcome out;
    out.passed = r.ci_low > 0.0;
    out.report = {{"K0", r.K0},           {"alpha_hat", r.alpha_hat}, {"ci", {r.ci_low, r.ci_high}},
                  {"successes", r.successes}, {"trials", r.trials},  {"rho1", so.rho1},
                  {"delta1", so.delta1}};
    out.csv = csv.str();
    return out;
}

std::string git_describe()
{
    std::string cmd = std::string("git -C \"") + TWONOISE_SOURCE_DIR +
                      "\" describe --always --dirty 2>/dev/null";
    std::FILE* p = popen(cmd.c_str(), "r");
    if (p == nullptr)
    {
        return "unknown";
    }
    std::array<char, 256> buf{};
    std::string out;
    while (std::fgets(buf.data(), static_cast<int>(buf.size()), p) != nullptr)
    {
        out += buf.data();
    }
    pclose(p);
    while (!out.empty() && (out.back() == '\n' || out.back() == '\r'))
    {
        out.pop_back();
    }
    return out.empty() ? "unknown" : out;
}

void write_file(std::filesystem::path const& p, std::string const& content)
{
    std::ofstream os(p, std::ios::binary);
    if (!os)
    {
        throw std::runtime_error("cannot write " + p.string());
    }
    os << content;
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<std::string> const& experiment_names()
{
    static std::vector<std::string> const names{
        "oracle-validate", "evo-pullback", "flow-check", "krylov-bogoliubov", "asf",
        "lyapunov",        "mixing",       "ns-energy",  "small-ball"};
    return names;
}

json ExperimentConfig::to_json() const
{
    return {{"experiment", experiment},
            {"model", {{"name", model}, {"params", model_params}}},
            {"numerics", numerics},
            {"seeds", {{"master", seeds.master}, {"driving", seeds.driving}, {"wiener", seeds.wiener}}},
            {"output_dir", output_dir}};
}

ExperimentConfig parse_config(json const& j_in)
{
    json const& j = j_in.contains("config") ? j_in.at("config") : j_in;
    if (!j.is_object())
    {
        throw ConfigError("config", "must be a JSON object");
    }
    static std::set<std::string> const top{"experiment", "model", "numerics", "seeds",
                                           "output_dir"};
    for (auto const& [k, v] : j.items())
    {
        if (top.count(k) == 0)
        {
            throw ConfigError(k, "unknown top-level key");
        }
    }
    ExperimentConfig c;
    if (!j.contains("experiment") || !j.at("experiment").is_string())
    {
        throw ConfigError("experiment", "required string");
    }
    c.experiment = j.at("experiment").get<std::string>();
    auto const& names = experiment_names();
    if (std::find(names.begin(), names.end(), c.experiment) == names.end())
    {
        throw ConfigError("experiment", "unknown experiment '" + c.experiment + "'");
    }

    if (!j.contains("model"))
    {
        throw ConfigError("model", "required");
    }
    auto const& m = j.at("model");
    if (m.is_string())
    {
        c.model = m.get<std::string>();
    }
    else if (m.is_object() && m.contains("name") && m.at("name").is_string())
    {
        c.model = m.at("name").get<std::string>();
        for (auto const& [k, v] : m.items())
        {
            if (k != "name" && k != "params")
            {
                throw ConfigError("model." + k, "unknown key");
            }
        }
        if (m.contains("params"))
        {
            if (!m.at("params").is_object())
            {
                throw ConfigError("model.params", "must be an object");
            }
            c.model_params = m.at("params");
        }
    }
    else
    {
        throw ConfigError("model.name", "required string");
    }
    if (c.model != "example1d" && c.model != "ns2d")
    {
        throw ConfigError("model.name", "must be example1d or ns2d");
    }

    if (j.contains("numerics"))
    {
        if (!j.at("numerics").is_object())
        {
            throw ConfigError("numerics", "must be an object");
        }
        c.numerics = j.at("numerics");
    }

    json seeds = j.value("seeds", json::object());
    if (!seeds.is_object())
    {
        throw ConfigError("seeds", "must be an object");
    }
    for (auto const& [k, v] : seeds.items())
    {
        if (k != "master" && k != "driving" && k != "wiener")
        {
            throw ConfigError("seeds." + k, "unknown seed");
        }
    }
    c.seeds.master = seeds.contains("master") ? seed_field(seeds, "master") : 0;
    c.seeds.driving =
        seeds.contains("driving") ? seed_field(seeds, "driving") : derive_seed(c.seeds.master, 1);
    c.seeds.wiener =
        seeds.contains("wiener") ? seed_field(seeds, "wiener") : derive_seed(c.seeds.master, 2);
    if (c.seeds.driving == c.seeds.wiener)
    {
        throw ConfigError("seeds.wiener", "must differ from seeds.driving");
    }

    if (j.contains("output_dir"))
    {
        if (!j.at("output_dir").is_string())
        {
            throw ConfigError("output_dir", "must be a string");
        }
        c.output_dir = j.at("output_dir").get<std::string>();
    }
    return c;
}

ExperimentConfig load_config(std::filesystem::path const& path)
{
    std::ifstream is(path);
    if (!is)
    {
        throw std::runtime_error("cannot open config " + path.string());
    }
    json j;
    try
    {
        j = json::parse(is);
    }
    catch (json::parse_error const& e)
    {
        throw ConfigError("config", std::string("invalid JSON: ") + e.what());
    }
    return parse_config(j);
}

void override_seeds(ExperimentConfig& cfg, std::uint64_t k)
{
    cfg.seeds.master = k;
    cfg.seeds.driving = derive_seed(k, 1);
    cfg.seeds.wiener = derive_seed(k, 2);
}

ExperimentOutcome run_experiment(ExperimentConfig const& cfg, unsigned workers)
{
    ModelBundle const b = build_model(cfg);
    Numerics num(cfg.numerics, cfg.experiment);
    using Fn = ExperimentOutcome (*)(ModelBundle const&, Numerics&, Seeds const&, unsigned);
    static std::vector<std::pair<std::string, Fn>> const table{
        {"oracle-validate", oracle_validate}, {"evo-pullback", evo_pullback},
        {"flow-check", flow_check},           {"krylov-bogoliubov", kb_experiment},
        {"asf", asf_experiment},              {"lyapunov", lyapunov_experiment},
        {"mixing", mixing_experiment},        {"ns-energy", ns_energy},
        {"small-ball", small_ball}};
    auto const it = std::find_if(table.begin(), table.end(),
                                 [&](auto const& e) { return e.first == cfg.experiment; });
    if (it == table.end())
    {
        throw ConfigError("experiment", "unknown experiment '" + cfg.experiment + "'");
    }
    ExperimentOutcome out = it->second(b, num, cfg.seeds, workers);
    out.report["experiment"] = cfg.experiment;
    out.report["model"] = cfg.model;
    out.report["passed"] = out.passed;
    return out;
}

int run_command(std::filesystem::path const& config_path, RunOptions const& opts)
{
    try
    {
        auto const start = std::chrono::steady_clock::now();
        ExperimentConfig cfg = load_config(config_path);
        if (opts.seed_override)
        {
            override_seeds(cfg, *opts.seed_override);
        }
        std::filesystem::path out_dir =
            opts.out ? *opts.out
                     : (cfg.output_dir.empty() ? std::filesystem::path("out") / cfg.experiment
                                               : std::filesystem::path(cfg.output_dir));
        cfg.output_dir = out_dir.string();
        if (opts.workers > 0)
        {
            set_default_workers(opts.workers);
        }
        unsigned const workers = default_workers();
        ExperimentOutcome const res = run_experiment(cfg, workers);
        double const wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

        std::filesystem::create_directories(out_dir);
        write_file(out_dir / "results.csv", res.csv);
        write_file(out_dir / "report.json", res.report.dump(2) + "\n");
        json manifest = {{"config", cfg.to_json()},
                         {"git_describe", git_describe()},
                         {"wall_time_s", wall},
                         {"workers", workers},
                         {"seeds",
                          {{"master", cfg.seeds.master},
                           {"driving", cfg.seeds.driving},
                           {"wiener", cfg.seeds.wiener}}},
                         {"passed", res.passed}};
        write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
        std::cout << cfg.experiment << " (" << cfg.model << "): "
                  << (res.passed ? "PASS" : "FAIL") << ", outputs in " << out_dir.string()
                  << '\n';
        return res.passed ? 0 : 2;
    }
    catch (ConfigError const& e)
    {
        std::cerr << "config error: " << e.what() << '\n';
    }
    catch (DivergenceError const& e)
    {
        std::cerr << "divergence: " << e.what() << '\n';
    }
    catch (std::exception const& e)
    {
        std::cerr << "error: " << e.what() << '\n';
    }
    return 1;
}

}  // namespace twonoise
