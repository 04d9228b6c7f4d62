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

#include <array>
#include <complex>
#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include <json.hpp>

#include "twonoise/driving.hpp"
#include "twonoise/integrator.hpp"

namespace twonoise
{

/// Fourier modes of the periodic square [0, 2pi)^2 kept after the
/// two-thirds rule: |k1|, |k2| <= (n - 1) / 3, k != 0. Only the half plane
/// k2 > 0 or (k2 == 0, k1 > 0) is stored; the rest follows from
/// omega(-k) = conj omega(k).
///
/// State coordinates: mode m owns x[2m] and x[2m+1] with
///   a_k = (x[2m] + i x[2m+1]) / sqrt(2),  omega_k = |k| a_k,
/// so |x|^2 equals the kinetic energy sum_k |u_k|^2.
class SpectralGrid
{
  public:
    explicit SpectralGrid(int n);

    int n() const { return n_; }
    int kmax() const { return kmax_; }
    std::size_t modes() const { return k_.size(); }
    std::size_t dim() const { return 2 * k_.size(); }
    std::array<int, 2> wavenumber(std::size_t m) const { return k_[m]; }
    double k2(std::size_t m) const
    {
        return static_cast<double>(k_[m][0] * k_[m][0] + k_[m][1] * k_[m][1]);
    }
    /// Index of (k1, k2) in the stored half plane, if retained.
    std::optional<std::size_t> mode_index(int k1, int k2) const;

  private:
    int n_;
    int kmax_;
    std::vector<std::array<int, 2>> k_;
};

/// Vorticity coefficients omega_k for the stored half plane.
std::vector<std::complex<double>> vorticity_coefficients(SpectralGrid const& grid,
                                                         std::span<double const> x);
std::vector<double> from_vorticity_coefficients(SpectralGrid const& grid,
                                                std::span<std::complex<double> const> omega);

/// -(u . grad) omega with u the Biot-Savart velocity of omega, evaluated on
/// the n x n collocation grid and truncated to the retained modes; returned
/// in state coordinates.
void nonlinear_term(SpectralGrid const& grid, std::span<double const> x, std::span<double> out);

/// Kinetic energy |x|^2 and enstrophy sum |k|^2 |x_k|^2.
double ns_energy(std::span<double const> x);
double ns_enstrophy(SpectralGrid const& grid, std::span<double const> x);

struct NSModelSpec
{
    int n = 32;
    double viscosity = 0.1;
    double alpha = 3.0;          // c_k = c0 |k|^{-alpha}
    double trace_c = 1.0;        // c0 chosen so that sum over coordinates of c_k is this
    double coupling_gain = 1.0;  // G in g(x, y) = G y on the driven coordinates
    int driving_shells = 4;      // lowest distinct |k|^2 values fed by the driver
    double driving_drift = -1.0;
    double driving_scale = 1.0;
    bool linearized = false;     // drop the nonlinear term

    /// Throws std::invalid_argument naming the bad field.
    void validate() const;
};

void to_json(nlohmann::json& j, NSModelSpec const& s);
NSModelSpec ns_spec_from_json(nlohmann::json const& j);

struct NSInstance
{
    std::shared_ptr<SpectralGrid const> grid;
    NSModelSpec spec;
    std::vector<double> c_eigs;              // per coordinate
    std::vector<std::size_t> driven_coords;  // coordinate fed by driver component i
    SemilinearModel model;

    OUSpec driving_spec() const;
    /// min over retained modes of c_k |k|^2.
    double nondegeneracy() const;
};

/// A = -nu |k|^2, b = nonlinear_term, g(x, y) = G y on the driven
/// coordinates, sigma = sqrt(c_k) per coordinate.
NSInstance as_semilinear(NSModelSpec const& spec);

struct InviscidDrift
{
    double energy_rel_per_time = 0.0;
    double enstrophy_rel_per_time = 0.0;
};

/// RK4 integration of dx/dt = b(x) over [0, t]; relative change of energy
/// and enstrophy divided by t.
InviscidDrift inviscid_conservation(SpectralGrid const& grid, std::span<double const> x0,
                                    double dt, double t);

/// CSV snapshot of omega_k: k1,k2,re,im per stored mode.
void write_spectral_csv(std::ostream& os, SpectralGrid const& grid, std::span<double const> x);

/// Per-path time series for the energy audit, stored path-major.
struct EnergySamples
{
    std::vector<double> times;
    std::size_t paths = 0;
    std::vector<double> energy;       // |X(t)|^2
    std::vector<double> dissipation;  // ||X(t)||^2 = (-A X, X)
    std::vector<double> forcing;      // h(|Y(t)|)^2
    double x0_energy = 0.0;
    double lambda1 = 0.0;

    double at(std::vector<double> const& series, std::size_t path, std::size_t i) const
    {
        return series[path * times.size() + i];
    }
};

struct EnergyRecordOptions
{
    double horizon = 1.0;
    std::int64_t record_every = 10;  // scheme steps between samples
    std::size_t paths = 100;
    std::uint64_t driving_seed = 1;
    std::uint64_t wiener_seed = 2;
    unsigned workers = 0;
};

/// Runs `paths` trajectories from x0, each with its own stationary driver,
/// and records the audit series. h(r) = growth_kappa (1 + r).
EnergySamples record_energy(SemilinearModel const& model, StepScheme const& scheme,
                            OUSpec const& driving_spec, std::span<double const> x0,
                            EnergyRecordOptions const& opts);

struct EnergyAuditRow
{
    double t = 0.0;
    double lhs = 0.0;  // E|X(t)|^2 + E int_0^t ||X||^2
    double lhs_se = 0.0;
    double rhs = 0.0;  // |x|^2 + c int_0^t E h^2
    double rhs_literal = 0.0;  // same with c = 2
    double margin = 0.0;       // (mean of lhs - rhs) / se of the difference
};

struct EnergyAuditReport
{
    bool passed = false;
    bool literal_passed = false;
    double coefficient = 2.0;
    double k1 = 0.0;  // E h(|Y|)^2 estimated from the samples
    double worst_margin = 0.0;
    double worst_time = 0.0;
    double time_average = 0.0;  // (1/t) E int ||X||^2 at the horizon
    double time_average_se = 0.0;
    double time_average_bound = 0.0;  // |x|^2 + c K1
    bool time_average_passed = false;
    std::vector<EnergyAuditRow> rows;
};

/// Checks E|X(t)|^2 + E int ||X||^2 <= |x|^2 + c int E h^2 at every sample
/// time and the time-average bound, each up to 3 standard errors. The
/// coefficient c = max(2, 1 + 1/lambda1) is what Ito's formula yields with
/// (b(x), x) = 0 and |g|, |sigma| <= h.
EnergyAuditReport energy_audit(EnergySamples const& samples);

}  // namespace twonoise
