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

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "twonoise/experiments.hpp"
#include "twonoise/rng.hpp"

namespace twonoise
{
namespace
{

namespace fs = std::filesystem;
using nlohmann::json;

fs::path scratch(std::string const& name)
{
    fs::path const p = fs::temp_directory_path() / "twonoise_test_experiments" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(fs::path const& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

fs::path write_config(fs::path const& dir, json const& cfg)
{
    fs::path const p = dir / "config.json";
    std::ofstream(p) << cfg.dump(2);
    return p;
}

struct CliResult
{
    int code = -1;
    std::string err;
};

CliResult run_cli(std::string const& args, fs::path const& dir)
{
    fs::path const err = dir / "stderr.txt";
    std::string const cmd = std::string("\"") + TWONOISE_CLI + "\" " + args + " >\"" +
                            (dir / "stdout.txt").string() + "\" 2>\"" + err.string() + "\"";
    int const status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = slurp(err);
    return r;
}

json base(std::string const& experiment, json model = "example1d")
{
    return {{"experiment", experiment}, {"model", std::move(model)}, {"seeds", {{"master", 5}}}};
}

std::string field_of(json const& j)
{
    try
    {
        run_experiment(parse_config(j), 1);
    }
    catch (ConfigError const& e)
    {
        return e.field();
    }
    return "";
}

TEST(Config, ParsesAndResolvesSeeds)
{
    auto const c = parse_config(base("mixing"));
    EXPECT_EQ(c.experiment, "mixing");
    EXPECT_EQ(c.model, "example1d");
    EXPECT_EQ(c.seeds.master, 5u);
    EXPECT_EQ(c.seeds.driving, derive_seed(5, 1));
    EXPECT_EQ(c.seeds.wiener, derive_seed(5, 2));
    auto const again = parse_config(c.to_json());
    EXPECT_EQ(again.to_json(), c.to_json());
    // A manifest is accepted in place of a config.
    EXPECT_EQ(parse_config(json{{"config", c.to_json()}, {"passed", true}}).to_json(),
              c.to_json());
}

TEST(Config, SeedOverride)
{
    auto c = parse_config(base("mixing"));
    override_seeds(c, 9);
    EXPECT_EQ(c.seeds.master, 9u);
    EXPECT_EQ(c.seeds.driving, derive_seed(9, 1));
    EXPECT_EQ(c.seeds.wiener, derive_seed(9, 2));
}

TEST(Config, ErrorsNameTheField)
{
    auto field = [](json const& j) {
        try
        {
            parse_config(j);
        }
        catch (ConfigError const& e)
        {
            return e.field();
        }
        return std::string();
    };
    auto j = base("mixing");
    j["colour"] = 1;
    EXPECT_EQ(field(j), "colour");
    EXPECT_EQ(field(base("nope")), "experiment");
    EXPECT_EQ(field(base("mixing", "ns3d")), "model.name");
    j = base("mixing");
    j["seeds"] = {{"driving", 4}, {"wiener", 4}};
    EXPECT_EQ(field(j), "seeds.wiener");
    j = base("mixing");
    j.erase("model");
    EXPECT_EQ(field(j), "model");
}

TEST(Config, NumericsErrorsNameTheField)
{
    auto j = base("mixing");
    j["numerics"] = {{"dt", 0.03}};
    EXPECT_EQ(field_of(j), "numerics.dt");
    j["numerics"] = {{"bogus", 1}};
    EXPECT_EQ(field_of(j), "numerics.bogus");
    j["numerics"] = {{"pairs_per_omega", -3}};
    EXPECT_EQ(field_of(j), "numerics.pairs_per_omega");
    j = base("mixing", {{"name", "ns2d"}, {"params", {{"n", 7}}}});
    EXPECT_EQ(field_of(j).rfind("model.params", 0), 0u);
    EXPECT_EQ(field_of(base("ns-energy")), "model.name");
}

TEST(Cli, OracleValidatePassesAllTuples)
{
    auto const dir = scratch("oracle");
    auto const r = run_cli(std::string("run \"") + TWONOISE_CONFIG_DIR +
                               "/oracle-validate_example1d.json\" --out \"" +
                               (dir / "out").string() + "\"",
                           dir);
    EXPECT_EQ(r.code, 0) << r.err;
    auto const rep = json::parse(slurp(dir / "out" / "report.json"));
    EXPECT_EQ(rep.at("tuples").get<int>(), 20);
    EXPECT_EQ(rep.at("tuples_passed").get<int>(), 20);
    auto const man = json::parse(slurp(dir / "out" / "manifest.json"));
    for (auto const* k : {"config", "git_describe", "wall_time_s", "workers", "seeds"})
    {
        EXPECT_TRUE(man.contains(k)) << k;
    }
    EXPECT_EQ(slurp(dir / "out" / "results.csv").substr(0, 6), "tuple,");
}

TEST(Cli, MixingOnNavierStokesHasPositiveRate)
{
    auto const dir = scratch("mixing_ns");
    auto const r = run_cli(std::string("run \"") + TWONOISE_CONFIG_DIR +
                               "/mixing_ns2d.json\" --out \"" + (dir / "out").string() + "\"",
                           dir);
    EXPECT_EQ(r.code, 0) << r.err;
    auto const rep = json::parse(slurp(dir / "out" / "report.json"));
    EXPECT_GT(rep.at("rate").get<double>(), 0.0);
    EXPECT_GT(rep.at("rate_ci")[0].get<double>(), 0.0);
}

TEST(Cli, ExitCodes)
{
    auto const dir = scratch("codes");
    EXPECT_EQ(run_cli("run \"" + (dir / "missing.json").string() + "\"", dir).code, 1);
    EXPECT_EQ(run_cli("frobnicate", dir).code, 1);
    EXPECT_EQ(run_cli("--help", dir).code, 0);

    auto j = base("mixing");
    j["numerics"] = {{"dt", 0.03}};
    auto r = run_cli("run \"" + write_config(dir, j).string() + "\" --out \"" +
                         (dir / "a").string() + "\"",
                     dir);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("numerics.dt"), std::string::npos) << r.err;

    // A tolerance nobody can meet is a property failure, not an error.
    j = base("lyapunov");
    j["numerics"] = {{"N", 200}, {"fit_samples", 2000}, {"kappa_tolerance", 1e-9}};
    r = run_cli("run \"" + write_config(dir, j).string() + "\" --out \"" +
                    (dir / "b").string() + "\" --workers 1",
                dir);
    EXPECT_EQ(r.code, 2) << r.err;
    EXPECT_TRUE(fs::exists(dir / "b" / "manifest.json"));
}

TEST(Cli, ManifestRerunIsBitExact)
{
    auto const dir = scratch("rerun");
    auto j = base("small-ball");
    j["numerics"] = {{"N", 500}};
    auto const cfg = write_config(dir, j);
    ASSERT_EQ(run_cli("run \"" + cfg.string() + "\" --workers 2 --out \"" + (dir / "a").string() +
                          "\"",
                      dir)
                  .code,
              0);
    ASSERT_EQ(run_cli("run \"" + (dir / "a" / "manifest.json").string() +
                          "\" --workers 2 --out \"" + (dir / "b").string() + "\"",
                      dir)
                  .code,
              0);
    EXPECT_EQ(slurp(dir / "a" / "results.csv"), slurp(dir / "b" / "results.csv"));
    EXPECT_EQ(slurp(dir / "a" / "report.json"), slurp(dir / "b" / "report.json"));

    auto const m1 = json::parse(slurp(dir / "a" / "manifest.json"));
    auto const m2 = json::parse(slurp(dir / "b" / "manifest.json"));
    auto c1 = m1.at("config");
    auto c2 = m2.at("config");
    c1.erase("output_dir");
    c2.erase("output_dir");
    EXPECT_EQ(c1, c2);
}

TEST(Cli, SeedOverrideChangesOutput)
{
    auto const dir = scratch("override");
    auto j = base("small-ball");
    j["numerics"] = {{"N", 300}};
    auto const cfg = write_config(dir, j);
    ASSERT_EQ(run_cli("run \"" + cfg.string() + "\" --out \"" + (dir / "a").string() + "\"", dir)
                  .code,
              0);
    ASSERT_EQ(run_cli("run \"" + cfg.string() + "\" --seed-override 77 --out \"" +
                          (dir / "b").string() + "\"",
                      dir)
                  .code,
              0);
    auto const m = json::parse(slurp(dir / "b" / "manifest.json"));
    EXPECT_EQ(m.at("seeds").at("master").get<std::uint64_t>(), 77u);
    EXPECT_NE(slurp(dir / "a" / "results.csv"), slurp(dir / "b" / "results.csv"));
}

TEST(Experiments, WorkerCountDoesNotChangeResults)
{
    auto j = base("mixing");
    j["numerics"] = {{"omega_count", 4}, {"pairs_per_omega", 100}, {"horizon", 6}};
    auto const c = parse_config(j);
    auto const a = run_experiment(c, 1);
    auto const b = run_experiment(c, 3);
    EXPECT_EQ(a.csv, b.csv);
    EXPECT_EQ(a.report.dump(), b.report.dump());
}

}  // namespace
}  // namespace twonoise
