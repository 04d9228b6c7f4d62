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

// twonoise run <config.json> [--workers N] [--out DIR] [--seed-override K]

#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "twonoise/experiments.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"Batch runner for two-noise SDE experiments"};
    app.require_subcommand(1);

    std::string config;
    unsigned workers = 0;
    std::string out;
    std::uint64_t seed = 0;
    auto* run = app.add_subcommand("run", "Run the experiment described by a config or manifest");
    run->add_option("config", config, "Config JSON, or a manifest.json from an earlier run")
        ->required()
        ->check(CLI::ExistingFile);
    run->add_option("--workers", workers, "Worker threads (default: hardware concurrency)")
        ->check(CLI::PositiveNumber);
    auto* out_opt = run->add_option("--out", out, "Output directory (overrides output_dir)");
    auto* seed_opt = run->add_option("--seed-override", seed,
                                     "Replace all seeds by ones derived from K");

    try
    {
        app.parse(argc, argv);
    }
    catch (CLI::ParseError const& e)
    {
        // --help exits 0; every usage error maps to the generic error status.
        return app.exit(e) == 0 ? 0 : 1;
    }

    twonoise::RunOptions opts;
    opts.workers = workers;
    if (out_opt->count() > 0)
    {
        opts.out = out;
    }
    if (seed_opt->count() > 0)
    {
        opts.seed_override = seed;
    }
    return twonoise::run_command(config, opts);
}
