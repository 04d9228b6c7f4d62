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
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "twonoise/driving.hpp"
#include "twonoise/integrator.hpp"
#include "twonoise/measures.hpp"
#include "twonoise/stats.hpp"

namespace twonoise
{

using Observable = std::function<double(std::span<double const>)>;

/// Bounded test functions of the state: shifted and scaled sigmoids of the
/// leading coordinates plus 1 / (1 + |x|^2).
std::vector<Observable> default_observables(std::size_t dim, std::size_t count);

// ---------------------------------------------------------------------------
// Evolutionary system of measures by pullback

struct EvoOptions
{
    std::vector<double> s_list;  // pullback starts, strictly decreasing
    std::vector<double> t_grid;  // evaluation times, increasing, >= s_list.front()
    std::size_t n_points = 1000;
    std::uint64_t w_seed = 2;
    double spread_radius = 1.0;
    std::size_t spread_directions = 8;
    std::uint64_t init_seed = 4;
    double tolerance = 0.05;  // on W_{d_n} between consecutive levels
    double metric_n = 1.0;
    std::size_t distance_points = 512;
    /// Added to every W step index; shifting the driver by m scheme steps and
    /// this offset by m reproduces the unshifted run bit for bit.
    std::int64_t w_offset = 0;
    unsigned workers = 0;
};

struct EvoSystemEstimate
{
    std::vector<double> times;
    std::vector<double> pullback_starts;
    std::shared_ptr<DrivingPath const> driving;
    /// Deepest pullback level, one measure per time.
    std::vector<EmpiricalMeasure> measures;
    /// level_distances[l][i]: W_{d_n} between levels l and l + 1 at times[i].
    std::vector<std::vector<double>> level_distances;
    bool converged = false;
    bool distances_decreasing = false;
    std::string message;
};

/// Initial spread: the origin plus `directions` points on the sphere of
/// radius `radius`; point i of an ensemble starts at spread[i % size].
std::vector<std::vector<double>> initial_spread(std::size_t dim, double radius,
                                                std::size_t directions, std::uint64_t seed);

EvoSystemEstimate estimate_evo_system(SemilinearModel const& model, StepScheme const& scheme,
                                      std::shared_ptr<DrivingPath const> driving,
                                      EvoOptions const& opts);

struct FlowCheckOptions
{
    std::vector<Observable> observables;
    std::uint64_t w_seed = 7;
    /// Push forward under this driver instead of the estimate's (negative control).
    std::shared_ptr<DrivingPath const> pushforward_driving;
    double z_threshold = 3.0;
    double pass_fraction = 0.95;
    unsigned workers = 0;
};

struct FlowTriple
{
    double s = 0.0;
    double t = 0.0;
    std::size_t observable = 0;
    double pushed = 0.0;  // int phi d(P*_{s,t} mu_s)
    double target = 0.0;  // int phi d mu_t
    double diff_se = 0.0;
    double z = 0.0;
    bool pass = false;
};

struct FlowReport
{
    std::vector<FlowTriple> triples;
    double pass_fraction = 0.0;
    double max_abs_z = 0.0;
    bool passed = false;
};

/// Compares int phi d(P*_{s,t} mu_s), pushed with fresh W, to int phi d mu_t
/// for every s <= t of the estimate. The difference is paired point by
/// point, so the standard error excludes the sampling noise of mu_s.
FlowReport check_flow_property(EvoSystemEstimate const& est, SemilinearModel const& model,
                               StepScheme const& scheme, FlowCheckOptions const& opts);

// ---------------------------------------------------------------------------
// Krylov-Bogoliubov sampling of the enlarged process Z = (X, H)

struct ZSample
{
    double t = 0.0;
    std::vector<double> x;
    DrivingPath h;
};

struct KbOptions
{
    double t_max = 100.0;
    double burn_in = 10.0;
    double thin = 1.0;
    double window = 2.0;  // stored history length
    std::vector<double> x0;  // empty means the origin
    std::uint64_t driving_seed = 1;
    std::uint64_t wiener_seed = 2;
};

/// Samples of Z along one long trajectory with a stationary driver, taken
/// every `thin` after `burn_in`.
std::vector<ZSample> krylov_bogoliubov(SemilinearModel const& model, StepScheme const& scheme,
                                       OUSpec const& driving_spec, KbOptions const& opts);

/// Test function of Z through x and the current driver value h(0).
using ZObservable = std::function<double(std::span<double const> x, std::span<double const> h0)>;

std::vector<ZObservable> default_z_observables(std::size_t dim, std::size_t driving_dim);

struct InvarianceRow
{
    double before = 0.0;
    double after = 0.0;
    double diff_se = 0.0;
    double z = 0.0;
    bool pass = false;
};

struct InvarianceReport
{
    double delta = 0.0;
    std::vector<InvarianceRow> rows;
    bool passed = false;
};

/// Evolves every sample by delta (fresh driver noise continuing h, fresh W)
/// and compares observable means before and after; batch-means standard
/// errors on the paired differences.
InvarianceReport kb_invariance_test(SemilinearModel const& model, StepScheme const& scheme,
                                    std::span<ZSample const> samples, double delta,
                                    std::vector<ZObservable> const& observables,
                                    std::uint64_t seed, std::size_t batches = 20,
                                    unsigned workers = 0);

// ---------------------------------------------------------------------------
// Asymptotic strong Feller diagnostic

struct AsfOptions
{
    std::vector<double> x;
    std::vector<double> gamma_list;
    std::vector<double> n_list;
    std::vector<double> t_list;
    std::size_t omega_count = 16;
    std::size_t kernel_samples = 64;
    std::size_t random_probes = 2;
    OUSpec driving_spec = OUSpec::uniform(1, -1.0, 1.0);
    std::uint64_t driving_seed = 1;
    std::uint64_t wiener_seed = 2;
    std::uint64_t probe_seed = 3;
    unsigned workers = 0;
};

struct AsfEntry
{
    double gamma = 0.0;
    double n = 0.0;
    double t = 0.0;
    double value = 0.0;  // mean over omega of the sup over probes
    double se = 0.0;
};

struct AsfTable
{
    std::vector<AsfEntry> entries;
    std::size_t probes = 0;
    /// At the largest (n, t) the entries shrink as gamma decreases.
    bool vanishes_with_gamma = false;

    AsfEntry const& at(double gamma, double n, double t) const;
};

/// E over omega of max over probes y on the gamma-sphere around x of
/// W_{d_n}(P*_{0,t} delta_x, P*_{0,t} delta_y), kernels sampled with
/// replayed W increments.
AsfTable asf_diagnostic(SemilinearModel const& model, StepScheme const& scheme,
                        AsfOptions const& opts);

// ---------------------------------------------------------------------------
// Lyapunov structure and return times

struct LyapunovConstants
{
    double T = 0.0;
    double lambda1 = 0.0;
    double kappa1 = 0.0;
    double kappa2 = 0.0;
    double kappa3 = 0.0;
    double kappa4 = 0.0;
    double kappa5 = 0.0;
    double alpha = 0.0;
    double delta = 0.0;
};

/// kappa5 = min(lambda1, kappa1/2), alpha = e^{-kappa5 T} - e^{-kappa1 T},
/// delta = 2 kappa3 / (alpha (kappa1 + lambda1)),
/// kappa4 = 2 kappa3 / lambda1 + 2 kappa2 kappa3 / lambda1 + delta kappa2.
LyapunovConstants lyapunov_constants(double lambda1, double kappa1, double kappa2, double kappa3,
                                     double T);

/// Exact driver constants: kappa1 = 2 min |b|, kappa2 = sum of stationary variances.
std::pair<double, double> ou_kappas(OUSpec const& spec);

struct LyapunovOptions
{
    double T = 0.25;
    double M = 1.0;
    std::size_t N = 20000;
    std::size_t fit_samples = 100000;  // driver pairs per lag in the kappa fit
    std::uint64_t seed = 11;
    std::vector<double> lags{0.25, 0.5, 1.0, 1.5, 2.0};
    double y_inflation = 3.0;  // sd multiplier of the initial driver law in the fit
    std::size_t k_max = 40;
    /// Start; empty means just outside the small set along the first axis.
    std::vector<double> x0;
    unsigned workers = 0;
};

struct DriftBin
{
    double v_mean = 0.0;
    double residual = 0.0;  // E[V_{k+1} - e^{-kappa5 T} V_k - kappa4]
    double residual_se = 0.0;
    bool pass = false;
};

struct LyapunovReport
{
    LyapunovConstants constants;
    double kappa1_fit = 0.0;
    double kappa2_fit = 0.0;
    bool kappas_fitted = false;
    std::vector<double> tail_times;  // kT
    std::vector<double> tail;        // P(tau >= kT)
    std::vector<double> tail_se;
    stats::LinearFit tail_fit;       // log tail against kT
    double tail_rate = 0.0;          // -slope
    bool tail_nonincreasing = false;
    bool tail_exponential = false;   // negative slope and R^2 > 0.9
    std::vector<DriftBin> drift;
    bool drift_ok = false;
    std::optional<std::int64_t> deterministic_tau;  // set when the run is noiseless
};

/// Fits (kappa1, kappa2) for the driver from conditional second moments,
/// checks the one-step drift inequality for V = |X|^2 + delta |Y|^2 at
/// multiples of T and fits the tail of tau = inf{kT : V <= M kappa4}.
LyapunovReport lyapunov_audit(SemilinearModel const& model, StepScheme const& scheme,
                              OUSpec const& driving_spec, LyapunovOptions const& opts);

// ---------------------------------------------------------------------------
// Coupling-based mixing certificate

struct MixingOptions
{
    std::vector<double> x;
    std::vector<double> y;
    double T = 1.0;  // attempt spacing and checkpoint spacing
    double horizon = 10.0;
    std::size_t omega_count = 16;
    std::size_t pairs_per_omega = 500;
    double small_set_M = 4.0;
    double tv_gate = 0.5;
    OUSpec driving_spec = OUSpec::uniform(1, -1.0, 1.0);
    std::uint64_t driving_seed = 1;
    std::uint64_t wiener_seed = 2;
    std::uint64_t coupling_seed = 3;
    double fit_max_fraction = 0.5;
    std::size_t fit_min_count = 20;
    unsigned workers = 0;
};

struct MixingResult
{
    CouplingRun run;
    MixingFit fit;
    double rate_ci_low = 0.0;
    double rate_ci_high = 0.0;
    /// uncoupled[w][i] per driver realisation.
    std::vector<std::vector<double>> per_omega_uncoupled;
    /// E over omega of |P phi(x) - P phi(y)| with phi = tanh of the first coordinate.
    std::vector<double> phi_gap;
    std::vector<double> phi_gap_se;
    std::size_t attempts = 0;
    std::size_t successes = 0;
    bool attempted = false;
    bool nonincreasing = false;  // both curves, up to 2 standard errors
};

/// Pairs started at (x, y) move synchronously (shared W); at every multiple
/// of T both are tested against the small set and, if the predicted one-step
/// TV is at most tv_gate, a one-step maximal coupling is attempted. Coupled
/// pairs share all later increments.
MixingResult mixing_certificate(SemilinearModel const& model, StepScheme const& scheme,
                                MixingOptions const& opts);

// ---------------------------------------------------------------------------
// Irreducibility toward the origin

struct SmallBallOptions
{
    double rho1 = 1.0;
    double delta1 = 0.5;
    double T = 0.5;
    std::size_t N = 10000;
    std::size_t random_probes = 8;
    std::int64_t k_cap = 10000;
    OUSpec driving_spec = OUSpec::uniform(1, -1.0, 1.0);
    std::uint64_t seed = 5;
    unsigned workers = 0;
};

struct SmallBallResult
{
    std::int64_t K0 = 0;
    std::vector<double> worst_start;
    double alpha_hat = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::size_t successes = 0;
    std::size_t trials = 0;
};

/// K0: first k with |X~(kT)| <= delta1 / 2 for the noiseless flow from the
/// worst probe on the rho1-sphere; alpha_hat = P(|X(K0 T)| <= delta1) from
/// that start. Throws std::runtime_error when k_cap is exceeded.
SmallBallResult small_ball_probe(SemilinearModel const& model, StepScheme const& scheme,
                                 SmallBallOptions const& opts);

}  // namespace twonoise
