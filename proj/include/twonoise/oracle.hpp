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

#include <optional>

#include "twonoise/driving.hpp"
#include "twonoise/integrator.hpp"

namespace twonoise
{

/// The scalar test model dX = (-X + Y) dt + dW with Y a unit OU process.
SemilinearModel example1d_model();

/// Driver of example1d: drift -1, scale 1.
OUSpec example1d_driving_spec();

/// Variance of X under the joint stationary law of (X, Y): 1/2 + 1/4.
double example1d_joint_variance();

struct GaussianLaw
{
    double mean = 0.0;
    double var = 0.0;
};

struct EvoMeasureLaw
{
    double mean = 0.0;
    double var = 0.5;
    double truncation_bound = 0.0;  // e^{-t_hist} sup |Y| over the window
};

/// 2 Phi(|dm| / (2 sigma)) - 1 for two normals with common variance sigma^2.
double tv_equal_variance(double mean_gap, double var);

/// Closed-form laws of example1d given one frozen driver realisation.
/// Integrals of the driver use the trapezoid rule at quadrature_dt, which
/// must be a multiple of the driving grid step.
class ScalarOracle
{
  public:
    explicit ScalarOracle(DrivingPath driving, double quadrature_dt = 0.0);

    DrivingPath const& driving() const { return driving_; }
    double quadrature_dt() const { return qdt_; }

    /// Law of X(t, s, x): mean e^{-(t-s)} x + int_s^t e^{-(t-r)} Y(r) dr,
    /// variance (1 - e^{-2(t-s)}) / 2.
    GaussianLaw exact_kernel(double x, double s, double t) const;

    /// mu_t = N(int_{-t_hist}^0 e^{theta} Y(t + theta) d theta, 1/2). Uses the
    /// whole window behind t when t_hist is not given.
    EvoMeasureLaw exact_evo_measure(double t, std::optional<double> t_hist = std::nullopt) const;

    /// TV between the laws of X(t, s, x) and X(t, s, y).
    double exact_tv_kernels(double x, double y, double s, double t) const;

  private:
    /// int_s^t e^{-(t-r)} Y(r) dr.
    double convolution(double s, double t) const;

    DrivingPath driving_;
    double qdt_;
    std::int64_t stride_;
};

}  // namespace twonoise
