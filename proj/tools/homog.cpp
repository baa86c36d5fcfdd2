// SPDX-License-Identifier: Apache-2.0
//
// homog: run a configured experiment or list the registry.
//
//   homog run CONFIG.json [--seed N] [--workers N] [--output-dir DIR]
//   homog list [--json]
//
// Exit codes: 0 success, 1 invalid configuration, 2 runtime abort.
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#if __has_include(<CLI11.hpp>)
#include <CLI11.hpp>
#else
#include <CLI/CLI.hpp>
#endif

#include "homog/experiment.hpp"
#include "homog/parallel.hpp"

namespace {

namespace ex = homog::experiment;

int run(std::string const& path, std::optional<std::uint64_t> seed,
        std::optional<unsigned> workers, std::optional<std::string> output_dir)
{
    ex::json cfg;
    try {
        std::ifstream in(path);
        if (!in) throw ex::ConfigError("cannot read config '" + path + "'");
        try {
            cfg = ex::json::parse(in);
        } catch (ex::json::parse_error const& e) {
            throw ex::ConfigError(std::string("config is not valid JSON: ") + e.what());
        }
        if (cfg.is_object()) {
            if (seed) cfg["root_seed"] = *seed;
            if (output_dir) cfg["output_dir"] = *output_dir;
        }
        cfg = ex::resolve_config(cfg);
        // Worker count: --workers, else HOMOG_WORKERS, else the config.
        unsigned w = homog::workers_from_env(cfg["workers"].get<unsigned>());
        if (workers) w = *workers;
        if (w < 1) throw ex::ConfigError("workers must be >= 1");
        cfg["workers"] = w;
    } catch (ex::ConfigError const& e) {
        std::cerr << "homog: invalid config: " << e.what() << '\n';
        return 1;
    }
    try {
        auto const result = ex::run_experiment(cfg);
        ex::write_outputs(cfg["output_dir"].get<std::string>(), cfg, result);
        std::cout << ex::summary_txt(result);
    } catch (ex::ConfigError const& e) {
        std::cerr << "homog: invalid config: " << e.what() << '\n';
        return 1;
    } catch (std::exception const& e) {
        std::cerr << "homog: run aborted: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

void list(bool as_json)
{
    if (as_json) {
        std::cout << ex::registry_json().dump(2) << '\n';
        return;
    }
    for (auto const& e : ex::registry()) {
        std::cout << e.name << "\t" << e.description << "\t[" << e.anchor << "]\n";
    }
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Homogenisation experiments for intermittent fast-slow systems", "homog"};
    app.set_version_flag("--version", std::string(HOMOG_VERSION));
    app.require_subcommand(1);

    auto* run_cmd = app.add_subcommand("run", "run the experiment described by a JSON config");
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
    std::optional<std::string> output_dir;
    run_cmd->add_option("config", config, "experiment config (JSON)")->required();
    run_cmd->add_option("--seed", seed, "override root_seed");
    run_cmd->add_option("--workers", workers, "override the worker count")->check(CLI::PositiveNumber);
    run_cmd->add_option("--output-dir", output_dir, "override output_dir");

    auto* list_cmd = app.add_subcommand("list", "list experiments");
    bool as_json = false;
    list_cmd->add_flag("--json", as_json, "print the registry with default configs as JSON");

    try {
        app.parse(argc, argv);
    } catch (CLI::ParseError const& e) {
        int const code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    if (*list_cmd) {
        list(as_json);
        return 0;
    }
    return run(config, seed, workers, output_dir);
}
