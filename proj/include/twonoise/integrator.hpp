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
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "twonoise/driving.hpp"
#include "twonoise/measures.hpp"

namespace twonoise
{

using VectorField = std::function<void(std::span<double const> x, std::span<double> out)>;
using DrivenField = std::function<void(std::span<double const> x, std::span<double const> y,
                                       std::span<double> out)>;

/// dX = (A X + b(X) + g(X, Y)) dt + sigma(X, Y) dW in Galerkin coordinates,
/// A diagonal. An empty callable means the term is zero. `diffusion` writes
/// the diagonal of sigma.
struct SemilinearModel
{
    std::string name;
    std::size_t dim = 0;
    std::size_t driving_dim = 0;
    std::vector<double> a_eigs;
    VectorField nonlinearity;
    DrivenField coupling;
    DrivenField diffusion;
    /// sigma does not depend on x (the maximal coupling needs this).
    bool additive_noise = true;
    /// Growth constant kappa_3 of h(r) = kappa_3 (1 + r): |g(x,y)|, |sigma(x,y)| <= h(|y|).
    double growth_kappa = 0.0;

    /// -max a_eig; zero when A has a null direction.
    double lambda1() const;
    /// Throws std::invalid_argument on inconsistent sizes or positive a_eigs.
    void validate() const;
};

enum class SchemeKind
{
    exponential_euler,
    euler_maruyama,
};

char const* to_string(SchemeKind k);
SchemeKind scheme_kind_from_string(std::string const& s);

struct StepScheme
{
    double dt = 1e-3;
    SchemeKind kind = SchemeKind::exponential_euler;
    double blowup_bound = 1e6;
};

/// Identifies the W increments of one trajectory. The increment of the step
/// that starts at absolute grid index k uses normals (k + step_offset) * dim
/// + j of the stream, so replaying a time interval replays its noise.
struct WienerKey
{
    std::uint64_t seed = 0;
    std::int64_t step_offset = 0;
    std::uint32_t stream = 0;

    NoiseKey key() const { return {seed, NoiseDomain::wiener, stream}; }
};

class DivergenceError : public std::runtime_error
{
  public:
    DivergenceError(std::int64_t step, double time, double norm, std::int64_t point = -1);

    std::int64_t step() const { return step_; }
    double time() const { return time_; }
    double norm() const { return norm_; }
    std::int64_t point() const { return point_; }
    DivergenceError with_point(std::int64_t point) const;

  private:
    std::int64_t step_;
    double time_;
    double norm_;
    std::int64_t point_;
};

/// One step of the scheme with preallocated work buffers. Not thread safe;
/// use one per worker.
class Stepper
{
  public:
    Stepper(SemilinearModel const& model, StepScheme const& scheme);

    std::size_t dim() const { return model_->dim; }
    SemilinearModel const& model() const { return *model_; }
    StepScheme const& scheme() const { return scheme_; }

    /// Mean and per-coordinate standard deviation of the Gaussian one-step
    /// law from x under driver value y.
    void kernel(std::span<double const> x, std::span<double const> y, std::span<double> mean,
                std::span<double> sd);

    /// x <- mean + sd * xi.
    void step(std::span<double> x, std::span<double const> y, std::span<double const> xi);

    /// Noiseless step of dx/dt = A x + b(x) (no driver, no W).
    void deterministic_step(std::span<double> x);

  private:
    SemilinearModel const* model_;
    StepScheme scheme_;
    std::vector<double> decay_;
    std::vector<double> phi_;
    std::vector<double> conv_sd_;
    std::vector<double> drift_;
    std::vector<double> buf_;
    std::vector<double> mean_;
    std::vector<double> sd_;
};

/// Called after every completed step with the absolute index of the step's
/// end point, and once before the first step.
using StepObserver = std::function<void(std::int64_t index, std::span<double const> x)>;

/// Number of driving grid points per scheme step; throws unless integral.
std::int64_t driving_ratio(StepScheme const& scheme, DrivingPath const& driving);

/// Advance x in place from absolute scheme index k0 to k1 (k1 >= k0). The
/// driver is frozen at the left point of each step.
void integrate_steps(Stepper& stepper, std::span<double> x, std::int64_t k0, std::int64_t k1,
                     DrivingPath const& driving, WienerKey const& w,
                     StepObserver const& observer = {});

/// X(t, s, x0) under the given driver and W stream.
std::vector<double> integrate(SemilinearModel const& model, StepScheme const& scheme,
                              std::span<double const> x0, double s, double t,
                              DrivingPath const& driving, WienerKey const& w,
                              StepObserver const& observer = {});

/// Solution of dx/dt = A x + b(x) after `steps` scheme steps.
std::vector<double> integrate_deterministic(SemilinearModel const& model,
                                            StepScheme const& scheme,
                                            std::span<double const> x0, std::int64_t steps);

/// N endpoints at a common time t under one driver realisation.
struct EnsembleState
{
    double t = 0.0;
    std::size_t dim = 0;
    std::vector<double> points;
    std::shared_ptr<DrivingPath const> driving;

    std::size_t size() const { return dim == 0 ? 0 : points.size() / dim; }
    std::span<double const> point(std::size_t i) const
    {
        return {points.data() + i * dim, dim};
    }
    EmpiricalMeasure measure() const;
};

/// Every point advanced to t with its own W stream (w_keys[i]). The result
/// does not depend on the worker count.
EnsembleState evolve_ensemble(SemilinearModel const& model, StepScheme const& scheme,
                              EnsembleState const& ens, double t,
                              std::span<WienerKey const> w_keys, unsigned workers = 0);

/// Convenience overload: WienerKey{w_seeds[i]}.
EnsembleState evolve_ensemble(SemilinearModel const& model, StepScheme const& scheme,
                              EnsembleState const& ens, double t,
                              std::span<std::uint64_t const> w_seeds, unsigned workers = 0);

/// n independent draws of X(t, s, x) under one frozen driver; draw i uses
/// W seed derive_seed(seed, i).
EmpiricalMeasure sample_kernel(SemilinearModel const& model, StepScheme const& scheme,
                               std::span<double const> x, double s, double t,
                               DrivingPath const& driving, std::size_t n, std::uint64_t seed,
                               unsigned workers = 0);

/// CSV, one row per point: index,x0,x1,...
void write_ensemble_csv(std::ostream& os, EnsembleState const& ens);

/// A driver realisation that is identically zero on [t0, t1], for models
/// whose coupling is switched off or for noiseless checks.
DrivingPath zero_driving(std::size_t dim, double dt, double t0, double t1);

}  // namespace twonoise
