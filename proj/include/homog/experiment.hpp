// SPDX-License-Identifier: Apache-2.0
//
// Experiment runner: JSON configuration with defaults and strict key
// checking, the experiment registry, and the three output files
// (results.csv, manifest.json, summary.txt).
#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "homog/fastslow.hpp"
#include "homog/iwip.hpp"
#include "homog/maps.hpp"
#include "homog/observable.hpp"
#include "homog/sampling.hpp"
#include "homog/sdelimit.hpp"
#include "homog/statistics.hpp"
#include "homog/transfer.hpp"

#ifndef HOMOG_VERSION
#define HOMOG_VERSION "0.0.0"
#endif

namespace homog::experiment {

using json = nlohmann::ordered_json;

/// Invalid configuration; the CLI maps it to exit code 1.
class ConfigError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

struct RegistryEntry
{
    std::string name;
    std::string description;
    std::string anchor;  ///< the result of the source analysis it reproduces
};

inline std::vector<RegistryEntry> const& registry()
{
    static std::vector<RegistryEntry> const entries{
        {"homogenise", "fast-slow ensemble vs the limiting OU diffusion (moments and KS)",
         "homogenisation theorem: weak convergence of X_n to an Ito diffusion"},
        {"green_kubo", "Green-Kubo covariance and drift matrices from lagged correlations",
         "Green-Kubo formulas for the limiting covariance Sigma and drift E"},
        {"iwip_blocks", "Bernstein block scheme: small-block norms and the diagonal sum",
         "big block/small block lemmas in the proof of the iterated WIP"},
        {"fcb_probe", "product-form functional correlation bound vs gap",
         "definition of the functional correlation bound with rate"},
        {"tails", "first-return-time tails of the LSV map to [1/2, 1]",
         "return-time tail bound for the intermittent first-return map"},
        {"transfer_decay", "Ulam transfer operator: decay of L^k v on the base [1/2, 1]",
         "polynomial decay lemma for the transfer operator on the tower base"},
        {"stability", "statistical stability and the convergence-in-probability probe",
         "statistical stability of intermittent Baker families"},
        {"triangular_array", "independent Gaussian array: W, WW and Levy-area variance",
         "appendix lemma on iterated sums of triangular arrays"},
    };
    return entries;
}

namespace detail {

inline json uniform_grid_json(std::size_t count)
{
    json a = json::array();
    for (double t : uniform_grid(count)) a.push_back(t);
    return a;
}

inline json defaults_for(std::string const& name)
{
    json d;
    d["experiment"] = name;
    d["root_seed"] = 1;
    d["workers"] = 1;
    d["output_dir"] = "homog-out";
    d["burn_in"] = 10000;
    d["centering_samples"] = 1000000;
    json map = {{"kind", "doubling"}, {"alpha", nullptr}};
    json obs = json::array({"cos2pix"});
    json p;
    if (name == "homogenise") {
        p["n"] = 10000;
        p["trials"] = 10000;
        p["xi"] = json::array({1.0});
        p["drift_lambda"] = 1.0;
        p["t_grid"] = uniform_grid_json(101);
        p["sde_steps"] = 1000;
        p["sde_trials"] = 10000;
        p["max_lag"] = 100;
        p["gk_samples"] = 1000000;
    } else if (name == "green_kubo") {
        p["max_lag"] = 100;
        p["samples"] = 1000000;
        p["segments"] = 64;
    } else if (name == "iwip_blocks") {
        p["gamma"] = 2.0;
        p["a_exp"] = nullptr;
        p["b_exp"] = nullptr;
        p["n_list"] = json::array({1000, 10000, 100000});
        p["trials"] = 1000;
        p["t"] = 1.0;
        p["diagonal_n"] = 100000;
        p["diagonal_trials"] = 1000;
        p["max_lag"] = 100;
        p["gk_samples"] = 1000000;
    } else if (name == "fcb_probe") {
        map = {{"kind", "lsv"}, {"alpha", 0.3}};
        obs = json::array({"centered_coordinate", "centered_coordinate"});
        p["p"] = 1;
        p["gaps"] = json::array({1, 2, 4, 8});
        p["samples"] = 1000000;
    } else if (name == "tails") {
        map = {{"kind", "lsv"}, {"alpha", 0.4}};
        obs = json::array();
        p["k_min"] = 10;
        p["k_max"] = 1000;
        p["k_points"] = 20;
        p["events"] = 1000000;
    } else if (name == "transfer_decay") {
        map = {{"kind", "lsv"}, {"alpha", 0.5}};
        obs = json::array({"coordinate"});
        p["bins"] = 4096;
        p["samples_per_bin"] = 64;
        p["k_max"] = 50;
        p["tol"] = 1e-12;
    } else if (name == "stability") {
        map = {{"kind", "intermittent_baker"}, {"alpha", 0.3}};
        obs = json::array({"coordinate"});
        p["n_list"] = json::array({1, 2, 4, 8});
        p["delta"] = 0.1;
        p["samples"] = 4000000;
        p["a2_j"] = 3;
        p["a2_threshold"] = 0.05;
        p["a2_samples"] = 100000;
        p["z_grid"] = 64;
    } else if (name == "triangular_array") {
        obs = json::array();
        p["sigma"] = json::array({json::array({1.0})});
        p["p_exp"] = 2.0;
        p["k_n"] = 10000;
        p["trials"] = 10000;
    } else {
        throw ConfigError("unknown experiment '" + name + "'");
    }
    d["map"] = map;
    d["observables"] = obs;
    d["params"] = p;
    return d;
}

inline bool compatible(json const& def, json const& val)
{
    if (def.is_null()) return val.is_null() || val.is_number();
    if (def.is_number_float()) return val.is_number();
    if (def.is_number_integer()) {
        return val.is_number_unsigned()
               || (val.is_number_integer() && val.get<std::int64_t>() >= 0)
               || (val.is_number_float() && val.get<double>() >= 0
                   && std::floor(val.get<double>()) == val.get<double>());
    }
    if (def.is_string()) return val.is_string();
    if (def.is_array()) return val.is_array();
    if (def.is_object()) return val.is_object();
    return def.type() == val.type();
}

inline json normalized(json const& def, json const& val)
{
    if (def.is_number_integer() && val.is_number_float()) {
        return json(static_cast<std::uint64_t>(val.get<double>()));
    }
    return val;
}

inline Observable named_observable(std::string const& name, MapDescriptor const& map,
                                   std::size_t centering_samples, SamplerConfig const& cfg)
{
    if (name == "cos2pix") return observables::cos2pix();
    if (name == "sin2pix") return observables::sin2pix();
    if (name == "coordinate") return observables::coordinate(0);
    if (name == "centered_coordinate") {
        return center_observable(observables::coordinate(0), map, centering_samples, cfg);
    }
    throw ConfigError("unknown observable '" + name
                      + "' (expected cos2pix, sin2pix, coordinate or centered_coordinate)");
}

inline void check_observable_name(std::string const& name)
{
    static std::vector<std::string> const known{"cos2pix", "sin2pix", "coordinate",
                                                "centered_coordinate"};
    if (std::find(known.begin(), known.end(), name) == known.end()) {
        throw ConfigError("unknown observable '" + name
                          + "' (expected cos2pix, sin2pix, coordinate or centered_coordinate)");
    }
}

inline IntervalMap interval_map_from(json const& m)
{
    try {
        auto const kind = parse_map_kind(m.at("kind").get<std::string>());
        if (kind == MapKind::Doubling) return IntervalMap::doubling();
        if (kind != MapKind::LSV) throw ConfigError("transfer_decay needs an lsv or doubling map");
        if (m.at("alpha").is_null()) throw ConfigError("map.alpha is required for lsv");
        return IntervalMap::lsv(m.at("alpha").get<double>());
    } catch (ConfigError const&) {
        throw;
    } catch (std::exception const& e) {
        throw ConfigError(std::string("map: ") + e.what());
    }
}

inline MapDescriptor map_from(json const& m)
{
    try {
        auto const kind = parse_map_kind(m.at("kind").get<std::string>());
        double const alpha = m.at("alpha").is_null() ? 0.0 : m.at("alpha").get<double>();
        if (kind == MapKind::LSV || kind == MapKind::IntermittentBaker) {
            if (m.at("alpha").is_null()) throw ConfigError("map.alpha is required for " + m.at("kind").get<std::string>());
        }
        return MapDescriptor::make(kind, alpha);
    } catch (ConfigError const&) {
        throw;
    } catch (std::exception const& e) {
        throw ConfigError(std::string("map: ") + e.what());
    }
}

}  // namespace detail

/// Merges `user` over the experiment defaults. Every unknown key, at any
/// level, is an error naming the key. The result is fully resolved: it
/// contains every knob with its effective value.
inline json resolve_config(json const& user)
{
    if (!user.is_object()) throw ConfigError("config must be a JSON object");
    if (!user.contains("experiment") || !user["experiment"].is_string()) {
        throw ConfigError("config needs a string 'experiment'");
    }
    std::string const name = user["experiment"].get<std::string>();
    json out = detail::defaults_for(name);
    for (auto const& [key, val] : user.items()) {
        if (key == "manifest") {
            if (!val.is_object()) throw ConfigError("'manifest' must be an object");
            continue;
        }
        if (!out.contains(key)) throw ConfigError("unknown key '" + key + "'");
        json& def = out[key];
        if (key == "map") {
            if (!val.is_object()) throw ConfigError("'map' must be an object");
            for (auto const& [mk, mv] : val.items()) {
                if (!def.contains(mk)) throw ConfigError("unknown key 'map." + mk + "'");
                def[mk] = mv;
            }
            if (!def["kind"].is_string()) throw ConfigError("map.kind must be a string");
            if (!def["alpha"].is_null() && !def["alpha"].is_number()) {
                throw ConfigError("map.alpha must be a number or null");
            }
            continue;
        }
        if (key == "observables") {
            if (!val.is_array()) throw ConfigError("'observables' must be an array of names");
            for (auto const& o : val) {
                if (!o.is_string()) throw ConfigError("observable names must be strings");
                detail::check_observable_name(o.get<std::string>());
            }
            def = val;
            continue;
        }
        if (key == "params") {
            if (!val.is_object()) throw ConfigError("'params' must be an object");
            for (auto const& [pk, pv] : val.items()) {
                if (!def.contains(pk)) throw ConfigError("unknown key 'params." + pk + "'");
                if (!detail::compatible(def[pk], pv)) {
                    throw ConfigError("params." + pk + " has the wrong type");
                }
                def[pk] = detail::normalized(def[pk], pv);
            }
            continue;
        }
        if (!detail::compatible(def, val)) throw ConfigError("'" + key + "' has the wrong type");
        def = detail::normalized(def, val);
    }
    if (out["burn_in"].get<std::uint64_t>() < 1000) throw ConfigError("burn_in must be >= 1000");
    if (out["workers"].get<std::uint64_t>() < 1) throw ConfigError("workers must be >= 1");
    bool const interval_only = name == "transfer_decay";
    auto const map = interval_only ? MapDescriptor::doubling() : detail::map_from(out["map"]);
    if (interval_only) {
        auto const im = detail::interval_map_from(out["map"]);
        if (im.kind() == MapKind::Doubling) out["map"]["alpha"] = nullptr;
        for (auto const& o : out["observables"]) {
            if (o == "centered_coordinate") {
                throw ConfigError("transfer_decay takes uncentered observables; the deviation "
                                  "is invariant under constant shifts");
            }
        }
    } else if (out["map"]["alpha"].is_number() && !map.is_intermittent()) {
        out["map"]["alpha"] = nullptr;
    }

    json& p = out["params"];
    auto need = [&](bool ok, std::string const& msg) {
        if (!ok) throw ConfigError(msg);
    };
    if (name == "homogenise") {
        need(p["n"].get<std::size_t>() >= 10, "params.n must be >= 10");
        need(p["trials"].get<std::size_t>() >= 2, "params.trials must be >= 2");
        need(!out["observables"].empty(), "homogenise needs a noise observable");
        need(p["xi"].size() == out["observables"].size(),
             "params.xi must have one entry per noise observable");
    } else if (name == "green_kubo") {
        need(!out["observables"].empty(), "green_kubo needs at least one observable");
        need(out["observables"].size() <= std::size_t(max_arity), "too many observables");
        need(p["max_lag"].get<std::size_t>() >= 1, "params.max_lag must be >= 1");
    } else if (name == "iwip_blocks") {
        need(!out["observables"].empty(), "iwip_blocks needs an observable");
        double const gamma = p["gamma"].get<double>();
        if (p["a_exp"].is_null() != p["b_exp"].is_null()) {
            throw ConfigError("params.a_exp and params.b_exp must be given together");
        }
        if (p["a_exp"].is_null()) {
            auto const choice = find_block_exponents(gamma);
            if (!choice.feasible) {
                throw ConfigError("no feasible block exponents for gamma = " + std::to_string(gamma));
            }
            p["a_exp"] = choice.a;
            p["b_exp"] = choice.b;
        }
        for (auto const& n : p["n_list"]) {
            auto const check = make_block_scheme(gamma, n.get<std::size_t>(),
                                                 p["a_exp"].get<double>(), p["b_exp"].get<double>());
            if (!check.feasible) throw ConfigError("infeasible block scheme: " + check.report());
        }
    } else if (name == "fcb_probe") {
        need(!out["observables"].empty(), "fcb_probe needs factors");
        need(p["p"].get<std::size_t>() < out["observables"].size(), "params.p must be < #factors");
        need(p["gaps"].size() >= 1, "params.gaps must not be empty");
    } else if (name == "tails") {
        need(map.kind() == MapKind::LSV, "tails needs an lsv map");
        need(p["k_min"].get<std::size_t>() >= 1 && p["k_min"] < p["k_max"], "need 1 <= k_min < k_max");
        need(p["k_points"].get<std::size_t>() >= 3, "params.k_points must be >= 3");
    } else if (name == "transfer_decay") {
        need(out["observables"].size() == 1, "transfer_decay needs one observable");
        need(p["k_max"].get<std::size_t>() >= 10, "params.k_max must be >= 10");
    } else if (name == "stability") {
        need(map.kind() == MapKind::IntermittentBaker, "stability needs an intermittent_baker map");
        need(out["observables"].size() == 1, "stability needs one observable");
        need(p["n_list"].size() >= 2, "params.n_list needs at least two entries");
        for (auto const& n : p["n_list"]) {
            need(n.get<std::size_t>() >= 1, "params.n_list entries must be >= 1");
            double const a = map.alpha() + p["delta"].get<double>() / n.get<double>();
            need(a > 0.0 && a < 0.5, "alpha_n = alpha + delta/n must lie in (0, 1/2)");
        }
    } else if (name == "triangular_array") {
        need(p["k_n"].get<std::size_t>() >= 1, "params.k_n must be >= 1");
        need(p["trials"].get<std::size_t>() >= 2, "params.trials must be >= 2");
        need(p["p_exp"].get<double>() > 1.0, "params.p_exp must be > 1");
    }
    return out;
}

/// One row of results.csv.
struct Row
{
    std::string params;
    double time = std::nan("");
    int i = -1;
    int j = -1;
    std::string statistic;
    double value = 0.0;
    double std_error = std::nan("");
};

/// One line of summary.txt.
struct Check
{
    std::string name;
    double value = 0.0;
    double target = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct RunResult
{
    std::string experiment;
    std::vector<Row> rows;
    std::vector<Check> checks;
    std::vector<std::string> warnings;
};

/// Shortest representation that parses back to the same double.
inline std::string format_number(double x)
{
    if (std::isnan(x)) return "";
    char buf[64];
    auto const r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

namespace detail {

struct Context
{
    json const& cfg;
    json const& p;
    MapDescriptor map;
    SamplerConfig sampler;
    RunResult& out;

    SamplerConfig stream(std::uint64_t id) const { return sampler.with_stream(id); }

    std::size_t size(char const* key) const { return p.at(key).get<std::size_t>(); }
    double real(char const* key) const { return p.at(key).get<double>(); }

    Observable observable() const
    {
        std::vector<Observable> parts;
        for (auto const& o : cfg["observables"]) parts.push_back(named(o.get<std::string>()));
        return parts.size() == 1 ? parts.front() : Observable::stack(parts);
    }

    Observable named(std::string const& n) const
    {
        return named_observable(n, map, cfg["centering_samples"].get<std::size_t>(), stream(90));
    }

    void row(std::string params, double t, int i, int j, std::string stat, double value,
             double se = std::nan("")) const
    {
        out.rows.push_back({std::move(params), t, i, j, std::move(stat), value, se});
    }

    void check(std::string name, double value, double target, double tol) const
    {
        bool const pass = std::abs(value - target) <= tol;
        out.checks.push_back({std::move(name), value, target, tol, pass});
    }

    void check_flag(std::string name, double violations) const
    {
        out.checks.push_back({std::move(name), violations, 0.0, 0.0, violations == 0.0});
    }
};

inline std::string kv(std::string const& k, double v) { return k + "=" + format_number(v); }

inline void emit_ensemble(Context const& c, std::string const& params, EnsembleStats const& st)
{
    for (std::size_t s = 0; s < st.times.size(); ++s) {
        for (std::size_t i = 0; i < st.dimension(); ++i) {
            auto const m = st.mean_at(s, i);
            auto const v = st.variance_at(s, i);
            c.row(params, st.times[s], int(i), -1, "mean", m.value, m.std_error);
            c.row(params, st.times[s], int(i), -1, "var", v.value, v.std_error);
            for (std::size_t j = i + 1; j < st.dimension(); ++j) {
                c.row(params, st.times[s], int(i), int(j), "cov",
                      st.covariance[s](Eigen::Index(i), Eigen::Index(j)));
            }
        }
    }
}

inline bool fourier_oracle(json const& cfg, MapDescriptor const& map)
{
    if (map.kind() != MapKind::Doubling) return false;
    std::vector<std::string> names;
    for (auto const& o : cfg["observables"]) names.push_back(o.get<std::string>());
    std::sort(names.begin(), names.end());
    if (std::adjacent_find(names.begin(), names.end()) != names.end()) return false;
    return std::all_of(names.begin(), names.end(),
                       [](auto const& n) { return n == "cos2pix" || n == "sin2pix"; });
}

inline void run_homogenise(Context const& c)
{
    Observable const noise = c.observable();
    std::size_t const d = std::size_t(noise.arity());
    double const lambda = c.real("drift_lambda");
    SlowSystemSpec spec;
    spec.d = d;
    spec.xi = c.p["xi"].get<std::vector<double>>();
    spec.n = c.size("n");
    spec.map = c.map;
    spec.t_grid = c.p["t_grid"].get<std::vector<double>>();
    spec.drift_a = [lambda](std::span<double const> x, Point const&, std::span<double> out) {
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = -lambda * x[i];
    };
    spec.noise_b = [noise](std::span<double const>, Point const& y, std::span<double> out) {
        noise.evaluate(y, out);
    };
    auto const centering = check_noise_centering(spec, 1'000'000, c.stream(4));
    if (!centering.centered) c.out.warnings.push_back("noise observable is not centered");
    auto const slow = run_ensemble(spec, c.size("trials"), c.stream(1));

    auto const gk = green_kubo(noise, c.map, c.size("max_lag"), c.size("gk_samples"), c.stream(2));
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            c.row("source=green_kubo", std::nan(""), int(i), int(j), "sigma",
                  gk.sigma(Eigen::Index(i), Eigen::Index(j)),
                  gk.stderr_sigma(Eigen::Index(i), Eigen::Index(j)));
        }
    }
    c.out.warnings.insert(c.out.warnings.end(), gk.warnings.begin(), gk.warnings.end());

    SdeSpec sde;
    sde.d = d;
    sde.drift = [lambda](std::span<double const> x, std::span<double> out) {
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = -lambda * x[i];
    };
    // Fourier oracle where available (cos/sin under doubling: Sigma = I/2),
    // the Green-Kubo estimate otherwise.
    Eigen::MatrixXd const sigma_ref =
        fourier_oracle(c.cfg, c.map) ? Eigen::MatrixXd(0.5 * Eigen::MatrixXd::Identity(Eigen::Index(d), Eigen::Index(d)))
                                     : Eigen::MatrixXd(0.5 * (gk.sigma + gk.sigma.transpose()));
    sde.covariance = sigma_ref;
    sde.xi = spec.xi;
    sde.steps = c.size("sde_steps");
    sde.trials = c.size("sde_trials");
    sde.t_grid = spec.t_grid;
    auto const ref = euler_maruyama(sde, c.stream(3));

    emit_ensemble(c, "source=fastslow;n=" + std::to_string(spec.n), slow);
    emit_ensemble(c, "source=sde;steps=" + std::to_string(sde.steps), ref);
    auto const wd = weak_distance(slow, ref);
    for (auto const& sl : wd.slices) {
        for (std::size_t i = 0; i < d; ++i) {
            c.row("source=fastslow_vs_sde", sl.time, int(i), -1, "ks", sl.ks[i]);
        }
        c.row("source=fastslow_vs_sde", sl.time, -1, -1, "ks_threshold", sl.ks_threshold);
    }

    std::size_t const last = slow.times.size() - 1;
    for (std::size_t i = 0; i < d; ++i) {
        double const s2 = sigma_ref(Eigen::Index(i), Eigen::Index(i));
        auto const ou = ou_moments(lambda, s2, slow.times[last], spec.xi[i]);
        auto const m = slow.mean_at(last, i);
        auto const v = slow.variance_at(last, i);
        std::string const tag = "[" + std::to_string(i) + "]";
        c.check("mean_X" + tag + "(t=" + format_number(slow.times[last]) + ")", m.value, ou.mean,
                3.0 * m.std_error);
        c.check("var_X" + tag + "(t=" + format_number(slow.times[last]) + ")", v.value, ou.var,
                3.0 * v.std_error);
        for (double t : {0.5, 1.0}) {
            auto const it = std::find_if(wd.slices.begin(), wd.slices.end(),
                                         [t](auto const& s) { return std::abs(s.time - t) < 1e-12; });
            if (it == wd.slices.end()) continue;
            c.check("ks_X" + tag + "(t=" + format_number(t) + ")", it->ks[i], 0.0, it->ks_threshold);
        }
    }
}

inline void run_green_kubo(Context const& c)
{
    Observable const v = c.observable();
    auto const d = Eigen::Index(v.arity());
    auto const gk = green_kubo(v, c.map, c.size("max_lag"), c.size("samples"), c.stream(1),
                               CorrelationOptions{c.size("segments")});
    std::string const params = "max_lag=" + std::to_string(gk.max_lag);
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            c.row(params, std::nan(""), int(i), int(j), "sigma", gk.sigma(i, j), gk.stderr_sigma(i, j));
            c.row(params, std::nan(""), int(i), int(j), "drift_e", gk.drift_e(i, j), gk.stderr_drift(i, j));
            c.row(params, std::nan(""), int(i), int(j), "c0", gk.c0(i, j));
        }
    }
    c.row(params, std::nan(""), -1, -1, "truncation_movement", gk.truncation_movement);
    c.out.warnings.insert(c.out.warnings.end(), gk.warnings.begin(), gk.warnings.end());
    if (fourier_oracle(c.cfg, c.map)) {
        for (Eigen::Index i = 0; i < d; ++i) {
            for (Eigen::Index j = 0; j < d; ++j) {
                std::string const ij = "[" + std::to_string(i) + "," + std::to_string(j) + "]";
                c.check("sigma" + ij, gk.sigma(i, j), i == j ? 0.5 : 0.0, 0.02);
                c.check("drift_e" + ij, gk.drift_e(i, j), 0.0, 0.02);
            }
        }
    }
    c.check("truncation_movement", gk.truncation_movement, 0.0, 0.05);
}

inline void run_iwip_blocks(Context const& c)
{
    Observable const v = c.observable();
    double const gamma = c.real("gamma");
    double const a = c.real("a_exp");
    double const b = c.real("b_exp");
    double const t = c.real("t");
    std::vector<SmallBlockNorms> norms;
    for (auto const& nj : c.p["n_list"]) {
        auto const n = nj.get<std::size_t>();
        auto const scheme = make_block_scheme(gamma, n, a, b).scheme;
        auto const r = small_block_terms(v, c.map, scheme, t, c.size("trials"), c.stream(1));
        std::string const params = "n=" + std::to_string(n) + ";p=" + std::to_string(scheme.p)
                                   + ";q=" + std::to_string(scheme.q) + ";k=" + std::to_string(scheme.k);
        c.row(params, t, -1, -1, "norm_I2", r.i2.value, r.i2.std_error);
        c.row(params, t, -1, -1, "norm_J2", r.j2.value, r.j2.std_error);
        c.row(params, t, -1, -1, "norm_J3", r.j3.value, r.j3.std_error);
        norms.push_back(r);
    }
    auto count_rises = [&](auto get) {
        double bad = 0;
        for (std::size_t i = 1; i < norms.size(); ++i) bad += get(norms[i]) < get(norms[i - 1]) ? 0 : 1;
        return bad;
    };
    c.check_flag("I2_strictly_decreasing", count_rises([](auto const& r) { return r.i2.value; }));
    c.check_flag("J2_strictly_decreasing", count_rises([](auto const& r) { return r.j2.value; }));
    c.check_flag("J3_strictly_decreasing", count_rises([](auto const& r) { return r.j3.value; }));

    auto const nd = c.size("diagonal_n");
    auto const sd = make_block_scheme(gamma, nd, a, b);
    if (!sd.feasible) throw ConfigError("infeasible diagonal scheme: " + sd.report());
    auto const diag = diagonal_sum(v, c.map, sd.scheme, t, c.size("diagonal_trials"), c.stream(2),
                                   DiagonalOptions{c.size("max_lag"), c.size("gk_samples")});
    std::string const params = "n=" + std::to_string(nd);
    for (Eigen::Index i = 0; i < diag.estimate.rows(); ++i) {
        for (Eigen::Index j = 0; j < diag.estimate.cols(); ++j) {
            c.row(params, t, int(i), int(j), "diagonal_sum", diag.estimate(i, j), diag.std_error(i, j));
            c.row(params, t, int(i), int(j), "tE", diag.target(i, j), diag.target_std_error(i, j));
            double const se = std::hypot(diag.std_error(i, j), diag.target_std_error(i, j));
            c.check("diagonal_sum[" + std::to_string(i) + "," + std::to_string(j) + "]",
                    diag.estimate(i, j), diag.target(i, j), 3.0 * se);
        }
    }
}

inline void run_fcb(Context const& c)
{
    std::vector<Observable> factors;
    for (auto const& o : c.cfg["observables"]) factors.push_back(c.named(o.get<std::string>()));
    std::size_t const p = c.size("p");
    std::vector<Estimate> lhs;
    std::vector<double> gaps;
    for (auto const& gj : c.p["gaps"]) {
        auto const g = gj.get<std::size_t>();
        // Factor i sits at time i*g, so the split between blocks has gap g.
        std::vector<std::size_t> k(factors.size());
        for (std::size_t i = 0; i < k.size(); ++i) k[i] = i * g;
        auto const e = fcb_probe(factors, k, p, c.map, c.size("samples"), c.stream(1));
        c.row("gap=" + std::to_string(g), std::nan(""), -1, -1, "fcb_lhs", e.value, e.std_error);
        lhs.push_back(e);
        gaps.push_back(double(g));
    }
    double bad = 0;
    for (std::size_t i = 1; i < lhs.size(); ++i) {
        double const slack = 2.0 * std::hypot(lhs[i].std_error, lhs[i - 1].std_error);
        if (lhs[i].value > lhs[i - 1].value + slack) bad += 1;
    }
    c.check_flag("fcb_lhs_nonincreasing_in_gap", bad);
    if (gaps.size() >= 3) {
        std::vector<double> vals;
        for (auto const& e : lhs) vals.push_back(e.value);
        auto const fit = decay_fit(gaps, vals);
        c.row("fit", std::nan(""), -1, -1, "fcb_exponent", fit.exponent);
        c.row("fit", std::nan(""), -1, -1, "fcb_r_squared", fit.r_squared);
    }
}

inline void run_tails(Context const& c)
{
    double const alpha = c.map.alpha();
    auto const ks = log_spaced(c.size("k_min"), c.size("k_max"), c.size("k_points"));
    auto const r = return_time_tail(alpha, ks, c.size("events"), c.stream(1));
    for (std::size_t i = 0; i < ks.size(); ++i) {
        c.row("k=" + std::to_string(ks[i]), std::nan(""), -1, -1, "tail", r.tail[i]);
    }
    c.row("fit", std::nan(""), -1, -1, "tail_exponent", -r.fit.exponent);
    c.row("fit", std::nan(""), -1, -1, "r_squared", r.fit.r_squared);
    c.row("fit", std::nan(""), -1, -1, "exceed_max_k", double(r.exceed_max_k));
    c.out.warnings.insert(c.out.warnings.end(), r.warnings.begin(), r.warnings.end());
    c.check("tail_exponent", -r.fit.exponent, 1.0 / alpha, 0.3);
}

inline void run_transfer(Context const& c)
{
    auto const im = interval_map_from(c.cfg["map"]);
    auto const op = ulam_matrix(im, c.size("bins"), c.size("samples_per_bin"), c.sampler.workers);
    auto const rho = invariant_density(op, c.real("tol"));
    auto const v = c.observable();
    auto const r = transfer_decay(op, rho, v, c.size("k_max"));
    for (std::size_t k = 1; k <= r.deviation.size(); ++k) {
        c.row("k=" + std::to_string(k), std::nan(""), -1, -1, "sup_deviation", r.deviation[k - 1]);
    }
    c.row("fit", std::nan(""), -1, -1, "decay_exponent", r.fit.exponent);
    c.row("fit", std::nan(""), -1, -1, "r_squared", r.fit.r_squared);
    if (im.kind() == MapKind::LSV) {
        c.check("decay_exponent", r.fit.exponent, -(1.0 / im.alpha() - 1.0), 0.3);
    } else if (r.deviation.size() >= 30) {
        c.check("deviation_at_k30", r.deviation[29], 0.0, 1e-6);
    }
}

inline void run_stability(Context const& c)
{
    Observable const phi = c.observable();
    double const base = c.map.alpha();
    double const delta = c.real("delta");
    std::vector<double> alphas;
    for (auto const& n : c.p["n_list"]) alphas.push_back(base + delta / n.get<double>());
    std::vector<double> all = alphas;
    all.push_back(base);
    auto const est = stability_probe(phi, all, c.size("samples"), c.stream(1));
    auto const limit = est.back();
    c.row("alpha=" + format_number(base), std::nan(""), -1, -1, "integral", limit.value, limit.std_error);
    double bad = 0;
    std::vector<double> a2;
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        std::string const params = "alpha=" + format_number(alphas[i]);
        c.row(params, std::nan(""), -1, -1, "integral", est[i].value, est[i].std_error);
        double const gap = std::abs(est[i].value - limit.value);
        c.row(params, std::nan(""), -1, -1, "gap_to_limit", gap);
        if (i > 0) {
            double const prev = std::abs(est[i - 1].value - limit.value);
            double const slack = 2.0 * std::hypot(est[i].std_error, est[i - 1].std_error);
            if (gap > prev + slack) bad += 1;
        }
        auto const e = a2_probe(c.size("a2_j"), c.real("a2_threshold"), alphas[i], base,
                                c.size("a2_samples"), c.size("z_grid"), c.stream(2));
        c.row(params, std::nan(""), -1, -1, "a2_fraction", e.value, e.std_error);
        a2.push_back(e.value);
    }
    c.check_flag("integral_approaches_limit", bad);
    double rises = 0;
    for (std::size_t i = 1; i < a2.size(); ++i) {
        if (!(a2[i] < a2[i - 1] || (a2[i] == 0.0 && a2[i - 1] == 0.0))) rises += 1;
    }
    c.check_flag("a2_fraction_decreasing", rises);
}

inline void run_triangular(Context const& c)
{
    auto const rows = c.p["sigma"].get<std::vector<std::vector<double>>>();
    auto const d = Eigen::Index(rows.size());
    Eigen::MatrixXd sigma(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        if (Eigen::Index(rows[std::size_t(i)].size()) != d) throw ConfigError("params.sigma must be square");
        for (Eigen::Index j = 0; j < d; ++j) sigma(i, j) = rows[std::size_t(i)][std::size_t(j)];
    }
    std::size_t const kn = c.size("k_n");
    auto const r = triangular_array_demo(sigma, c.real("p_exp"), kn, c.size("trials"), c.stream(1));
    std::string const params = "k_n=" + std::to_string(kn);
    auto const& st = r.stats;
    for (Eigen::Index i = 0; i < d; ++i) {
        auto const m = st.mean_at(0, std::size_t(i));
        auto const v = st.variance_at(0, std::size_t(i));
        c.row(params, 1.0, int(i), -1, "W_mean", m.value, m.std_error);
        c.row(params, 1.0, int(i), -1, "W_var", v.value, v.std_error);
        c.check("var_W[" + std::to_string(i) + "]", v.value, sigma(i, i), 3.0 * v.std_error);
    }
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            std::size_t const col = std::size_t(d + i * d + j);
            auto const m = st.mean_at(0, col);
            auto const v = st.variance_at(0, col);
            c.row(params, 1.0, int(i), int(j), "WW_mean", m.value, m.std_error);
            c.row(params, 1.0, int(i), int(j), "WW_var", v.value, v.std_error);
            std::string const ij = "[" + std::to_string(i) + "," + std::to_string(j) + "]";
            c.check("mean_WW" + ij, m.value, 0.0, 3.0 * m.std_error);
            if (i == j) {
                // Var sum_{a<b} chi_a chi_b = sigma^2 (k choose 2) / k^2 for Gaussian chi.
                double const target = sigma(i, i) * sigma(i, i) * double(kn - 1) / (2.0 * double(kn));
                c.check("var_WW" + ij, v.value, target, 3.0 * v.std_error);
            }
        }
    }
    c.row(params, 1.0, -1, -1, "lyapunov_sum", r.lyapunov_sum);
}

}  // namespace detail

/// Runs a resolved configuration. Throws ConfigError for configuration
/// problems found late and std::runtime_error for runtime aborts.
inline RunResult run_experiment(json const& cfg)
{
    RunResult out;
    out.experiment = cfg.at("experiment").get<std::string>();
    SamplerConfig sampler;
    sampler.burn_in = cfg["burn_in"].get<std::uint64_t>();
    sampler.root_seed = cfg["root_seed"].get<std::uint64_t>();
    sampler.workers = cfg["workers"].get<unsigned>();
    auto const map = out.experiment == "transfer_decay" ? MapDescriptor::doubling()
                                                        : detail::map_from(cfg["map"]);
    detail::Context const c{cfg, cfg["params"], map, sampler, out};
    static std::map<std::string, std::function<void(detail::Context const&)>> const table{
        {"homogenise", detail::run_homogenise},   {"green_kubo", detail::run_green_kubo},
        {"iwip_blocks", detail::run_iwip_blocks}, {"fcb_probe", detail::run_fcb},
        {"tails", detail::run_tails},             {"transfer_decay", detail::run_transfer},
        {"stability", detail::run_stability},     {"triangular_array", detail::run_triangular},
    };
    table.at(out.experiment)(c);
    return out;
}

inline std::string results_csv(RunResult const& r)
{
    std::ostringstream s;
    s << "experiment,params,time,coordinate_i,coordinate_j,statistic,value,stderr\n";
    for (auto const& row : r.rows) {
        s << r.experiment << ',' << row.params << ',' << format_number(row.time) << ',';
        if (row.i >= 0) s << row.i;
        s << ',';
        if (row.j >= 0) s << row.j;
        s << ',' << row.statistic << ',' << format_number(row.value) << ','
          << format_number(row.std_error) << '\n';
    }
    return s.str();
}

inline std::string summary_txt(RunResult const& r)
{
    std::ostringstream s;
    s << "# " << r.experiment << ": name value target tolerance result\n";
    for (auto const& c : r.checks) {
        s << c.name << ' ' << format_number(c.value) << ' ' << format_number(c.target) << ' '
          << format_number(c.tolerance) << ' ' << (c.pass ? "PASS" : "FAIL") << '\n';
    }
    for (auto const& w : r.warnings) s << "# warning: " << w << '\n';
    return s.str();
}

inline json manifest(json const& cfg)
{
    json m = cfg;
    m["manifest"] = {{"build_version", HOMOG_VERSION},
                     {"root_seed", cfg["root_seed"]}};
    return m;
}

inline void write_outputs(std::filesystem::path const& dir, json const& cfg, RunResult const& r)
{
    std::filesystem::create_directories(dir);
    auto write = [&](char const* name, std::string const& text) {
        std::ofstream f(dir / name, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
        f << text;
    };
    write("results.csv", results_csv(r));
    write("manifest.json", manifest(cfg).dump(2) + "\n");
    write("summary.txt", summary_txt(r));
}

/// Machine-readable registry: one entry per experiment with its default
/// configuration, each accepted by resolve_config as is.
inline json registry_json()
{
    json a = json::array();
    for (auto const& e : registry()) {
        a.push_back({{"name", e.name},
                     {"description", e.description},
                     {"anchor", e.anchor},
                     {"config", detail::defaults_for(e.name)}});
    }
    return a;
}

}  // namespace homog::experiment
