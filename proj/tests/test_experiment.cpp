// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "homog/experiment.hpp"

namespace ex = homog::experiment;
namespace fs = std::filesystem;

namespace {

ex::json small_config(std::string const& name)
{
    ex::json cfg = {{"experiment", name}};
    if (name == "green_kubo") {
        cfg["params"] = {{"max_lag", 10}, {"samples", 20000}};
    } else if (name == "triangular_array") {
        cfg["params"] = {{"k_n", 100}, {"trials", 500}};
    } else if (name == "homogenise") {
        cfg["params"] = {{"n", 200},           {"trials", 100},        {"sde_steps", 100},
                         {"sde_trials", 100},  {"t_grid", {0.5, 1.0}}, {"gk_samples", 20000},
                         {"max_lag", 10}};
        cfg["centering_samples"] = 20000;
    }
    return cfg;
}

std::string slurp(fs::path const& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(std::string const& name)
{
    fs::path const dir = fs::temp_directory_path() / ("homog-test-" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

struct Command
{
    int status = -1;
    std::string out;
};

Command run_cli(std::string const& args)
{
    Command c;
    std::string const cmd = std::string(HOMOG_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) return c;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) c.out.append(buf, n);
    int const st = ::pclose(pipe);
    c.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return c;
}

}  // namespace

TEST(Config, DefaultsFilledIn)
{
    auto const cfg = ex::resolve_config({{"experiment", "green_kubo"}});
    EXPECT_EQ(cfg["params"]["max_lag"], 100);
    EXPECT_EQ(cfg["burn_in"], 10000);
    EXPECT_EQ(cfg["map"]["kind"], "doubling");
}

TEST(Config, UnknownKeysNamed)
{
    try {
        ex::resolve_config({{"experiment", "green_kubo"}, {"alpha_typo", 0.3}});
        FAIL() << "expected ConfigError";
    } catch (ex::ConfigError const& e) {
        EXPECT_NE(std::string(e.what()).find("alpha_typo"), std::string::npos);
    }
    EXPECT_THROW(ex::resolve_config({{"experiment", "tails"}, {"params", {{"kmax", 5}}}}),
                 ex::ConfigError);
    EXPECT_THROW(ex::resolve_config({{"experiment", "tails"}, {"map", {{"beta", 5}}}}),
                 ex::ConfigError);
    EXPECT_THROW(ex::resolve_config({{"experiment", "nope"}}), ex::ConfigError);
}

TEST(Config, TypeAndRangeErrors)
{
    EXPECT_THROW(ex::resolve_config({{"experiment", "green_kubo"}, {"burn_in", "lots"}}),
                 ex::ConfigError);
    EXPECT_THROW(ex::resolve_config({{"experiment", "green_kubo"}, {"burn_in", 10}}),
                 ex::ConfigError);
    EXPECT_THROW(ex::resolve_config({{"experiment", "green_kubo"},
                                     {"map", {{"kind", "lsv"}, {"alpha", 0.7}}}}),
                 ex::ConfigError);
    EXPECT_THROW(ex::resolve_config({{"experiment", "green_kubo"},
                                     {"observables", {"no_such_observable"}}}),
                 ex::ConfigError);
    EXPECT_THROW(ex::resolve_config({{"experiment", "iwip_blocks"},
                                     {"params", {{"a_exp", 0.85}, {"b_exp", 0.55}}}}),
                 ex::ConfigError);
    EXPECT_NO_THROW(ex::resolve_config({{"experiment", "transfer_decay"},
                                        {"map", {{"kind", "lsv"}, {"alpha", 0.5}}}}));
}

TEST(Config, IwipExponentsResolved)
{
    auto const cfg = ex::resolve_config({{"experiment", "iwip_blocks"}});
    EXPECT_NEAR(cfg["params"]["a_exp"].get<double>(), 0.9, 1e-4);
    EXPECT_NEAR(cfg["params"]["b_exp"].get<double>(), 0.6, 1e-4);
}

TEST(Registry, EightEntriesWithAnchors)
{
    auto const& r = ex::registry();
    ASSERT_EQ(r.size(), 8u);
    for (auto const& e : r) {
        EXPECT_FALSE(e.anchor.empty()) << e.name;
        EXPECT_FALSE(e.description.empty()) << e.name;
    }
}

TEST(Registry, JsonRoundTrip)
{
    auto const reg = ex::json::parse(ex::registry_json().dump());
    ASSERT_EQ(reg.size(), 8u);
    for (auto const& e : reg) EXPECT_NO_THROW(ex::resolve_config(e["config"])) << e["name"];
}

TEST(Outputs, FormatNumber)
{
    EXPECT_EQ(ex::format_number(0.5), "0.5");
    EXPECT_EQ(ex::format_number(std::nan("")), "");
    EXPECT_EQ(ex::json::parse(ex::format_number(0.1 + 0.2)).get<double>(), 0.1 + 0.2);
}

TEST(Outputs, CsvHeaderAndRows)
{
    auto cfg = ex::resolve_config(small_config("triangular_array"));
    auto const r = ex::run_experiment(cfg);
    auto const csv = ex::results_csv(r);
    EXPECT_EQ(csv.rfind("experiment,params,time,coordinate_i,coordinate_j,statistic,value,stderr\n",
                        0),
              0u);
    EXPECT_FALSE(r.checks.empty());
    auto const summary = ex::summary_txt(r);
    for (auto const& c : r.checks) EXPECT_NE(summary.find(c.name), std::string::npos);
}

TEST(Outputs, WorkerCountDoesNotChangeResults)
{
    for (std::string name : {"green_kubo", "triangular_array", "homogenise"}) {
        auto cfg = ex::resolve_config(small_config(name));
        cfg["workers"] = 1;
        auto const a = ex::results_csv(ex::run_experiment(cfg));
        cfg["workers"] = 8;
        auto const b = ex::results_csv(ex::run_experiment(cfg));
        EXPECT_EQ(a, b) << name;
    }
}

TEST(Outputs, WritesThreeFiles)
{
    auto const dir = scratch("outputs");
    auto cfg = ex::resolve_config(small_config("green_kubo"));
    ex::write_outputs(dir, cfg, ex::run_experiment(cfg));
    EXPECT_TRUE(fs::exists(dir / "results.csv"));
    EXPECT_TRUE(fs::exists(dir / "summary.txt"));
    auto const m = ex::json::parse(slurp(dir / "manifest.json"));
    EXPECT_EQ(m["manifest"]["root_seed"], cfg["root_seed"]);
    EXPECT_NO_THROW(ex::resolve_config(m));
}

#ifdef HOMOG_CLI_PATH

TEST(Cli, ListHasEightEntries)
{
    auto const c = run_cli("list");
    EXPECT_EQ(c.status, 0);
    EXPECT_EQ(std::count(c.out.begin(), c.out.end(), '\n'), 8);
}

TEST(Cli, ListJsonParsesBack)
{
    auto const c = run_cli("list --json");
    ASSERT_EQ(c.status, 0);
    auto const reg = ex::json::parse(c.out);
    ASSERT_EQ(reg.size(), 8u);
    for (auto const& e : reg) EXPECT_NO_THROW(ex::resolve_config(e["config"]));
}

TEST(Cli, UnknownKeyExitsOne)
{
    auto const dir = scratch("badkey");
    std::ofstream(dir / "cfg.json") << R"({"experiment": "green_kubo", "alpha_typo": 1})";
    auto const c = run_cli("run " + (dir / "cfg.json").string());
    EXPECT_EQ(c.status, 1);
    EXPECT_NE(c.out.find("alpha_typo"), std::string::npos);
}

TEST(Cli, MalformedJsonExitsOne)
{
    auto const dir = scratch("malformed");
    std::ofstream(dir / "cfg.json") << "{ not json";
    EXPECT_EQ(run_cli("run " + (dir / "cfg.json").string()).status, 1);
    EXPECT_EQ(run_cli("run " + (dir / "missing.json").string()).status, 1);
}

TEST(Cli, WorkersAndManifestReproduce)
{
    auto const dir = scratch("determinism");
    std::ofstream(dir / "cfg.json") << small_config("homogenise").dump();
    auto const cfg = (dir / "cfg.json").string();
    auto const one = run_cli("run " + cfg + " --workers 1 --seed 9 --output-dir "
                             + (dir / "w1").string());
    auto const eight = run_cli("run " + cfg + " --workers 8 --seed 9 --output-dir "
                               + (dir / "w8").string());
    ASSERT_EQ(one.status, 0) << one.out;
    ASSERT_EQ(eight.status, 0) << eight.out;
    auto const a = slurp(dir / "w1" / "results.csv");
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, slurp(dir / "w8" / "results.csv"));

    auto const again = run_cli("run " + (dir / "w1" / "manifest.json").string()
                               + " --output-dir " + (dir / "rerun").string());
    ASSERT_EQ(again.status, 0) << again.out;
    EXPECT_EQ(a, slurp(dir / "rerun" / "results.csv"));
}

#endif
