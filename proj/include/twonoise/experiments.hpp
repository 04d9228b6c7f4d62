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
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace twonoise
{

/// A config problem; `field` is the dotted path of the offending entry.
class ConfigError : public std::invalid_argument
{
  public:
    ConfigError(std::string field, std::string const& what);
    std::string const& field() const { return field_; }

  private:
    std::string field_;
};

struct Seeds
{
    std::uint64_t master = 0;
    std::uint64_t driving = 0;
    std::uint64_t wiener = 0;
};

struct ExperimentConfig
{
    std::string experiment;
    std::string model;           // example1d | ns2d
    nlohmann::json model_params = nlohmann::json::object();
    nlohmann::json numerics = nlohmann::json::object();
    Seeds seeds;
    std::string output_dir;

    /// Effective config (seeds resolved) as written to the manifest.
    nlohmann::json to_json() const;
};

std::vector<std::string> const& experiment_names();

/// Parses and validates. Accepts a manifest too (its "config" member).
/// Missing driving/wiener seeds derive from master. Numerics are checked
/// later against the experiment; see run_experiment.
ExperimentConfig parse_config(nlohmann::json const& j);
ExperimentConfig load_config(std::filesystem::path const& path);

/// master = k, driving = derive_seed(k, 1), wiener = derive_seed(k, 2).
void override_seeds(ExperimentConfig& cfg, std::uint64_t k);

struct ExperimentOutcome
{
    bool passed = false;
    nlohmann::json report;
    std::string csv;  // results.csv contents
};

/// Runs the experiment in process. Throws ConfigError for bad numerics
/// (unknown keys, horizons that are not grid multiples of numerics.dt).
ExperimentOutcome run_experiment(ExperimentConfig const& cfg, unsigned workers = 0);

struct RunOptions
{
    unsigned workers = 0;
    std::optional<std::filesystem::path> out;
    std::optional<std::uint64_t> seed_override;
};

/// Loads, runs and writes results.csv, report.json and manifest.json.
/// Returns 0 on pass, 2 on a property failure, 1 on any error (reported to
/// stderr).
int run_command(std::filesystem::path const& config_path, RunOptions const& opts);

}  // namespace twonoise
