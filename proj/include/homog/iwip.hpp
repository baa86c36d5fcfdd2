// SPDX-License-Identifier: Apache-2.0
//
// Birkhoff sums W_n and iterated sums WW_n, Bernstein big/small block
// schemes with their small-block and diagonal diagnostics, and an
// independent triangular-array harness.
#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "homog/fastslow.hpp"
#include "homog/maps.hpp"
#include "homog/observable.hpp"
#include "homog/parallel.hpp"
#include "homog/rng.hpp"
#include "homog/sampling.hpp"
#include "homog/sdelimit.hpp"
#include "homog/statistics.hpp"
#include "homog/stats.hpp"

namespace homog {

/// Running S = sum_r v_r and WW = sum_{r<s} v_r (x) v_s in one pass:
/// pushing v_s adds S (x) v_s to WW before adding v_s to S.
class IteratedSum
{
  public:
    explicit IteratedSum(std::size_t d) : d_{d}
    {
        if (d < 1 || d > std::size_t(max_arity)) {
            throw std::invalid_argument("IteratedSum dimension out of range");
        }
    }

    void push(double const* v) noexcept
    {
        for (std::size_t i = 0; i < d_; ++i) {
            for (std::size_t j = 0; j < d_; ++j) ww_[i * d_ + j] += s_[i] * v[j];
        }
        for (std::size_t i = 0; i < d_; ++i) s_[i] += v[i];
    }

    void reset() noexcept
    {
        s_.fill(0.0);
        ww_.fill(0.0);
    }

    std::size_t dimension() const noexcept { return d_; }
    double sum(std::size_t i) const noexcept { return s_[i]; }
    double iterated(std::size_t i, std::size_t j) const noexcept { return ww_[i * d_ + j]; }

  private:
    std::size_t d_;
    std::array<double, max_arity> s_{};
    std::array<double, max_arity * max_arity> ww_{};
};

struct IteratedSample
{
    double t = 0.0;
    std::vector<double> w;  ///< W_n(t)
    Eigen::MatrixXd ww;     ///< WW_n(t)
};

/// W_n(t) = n^{-1/2} sum_{r<[nt]} v o T^r and
/// WW_n(t) = n^{-1} sum_{r<s<[nt]} v o T^r (x) v o T^s along one physical
/// orbit per trial, at every time of `t_grid`.
inline std::vector<std::vector<IteratedSample>>
iterated_process(Observable const& v, MapDescriptor const& map, std::size_t n,
                 std::vector<double> const& t_grid, std::size_t trials,
                 SamplerConfig const& cfg)
{
    if (n < 10) throw std::invalid_argument("iterated_process needs n >= 10");
    check_time_grid(t_grid);
    std::size_t const d = static_cast<std::size_t>(v.arity());
    std::vector<std::size_t> record;
    for (double t : t_grid) record.push_back(grid_index(n, t));
    double const sn = std::sqrt(double(n));
    std::vector<std::vector<IteratedSample>> out(trials);
    parallel_for(trials, cfg.workers, [&](std::size_t trial) {
        Orbit orbit = physical_orbit(map, cfg, trial);
        IteratedSum acc{d};
        ObservableValue val{};
        std::span<double> vs{val.data(), d};
        std::vector<IteratedSample> samples;
        std::size_t next = 0;
        for (std::size_t r = 0; next < record.size(); ++r) {
            while (next < record.size() && record[next] == r) {
                IteratedSample s;
                s.t = t_grid[next];
                s.ww.resize(Eigen::Index(d), Eigen::Index(d));
                for (std::size_t i = 0; i < d; ++i) {
                    s.w.push_back(acc.sum(i) / sn);
                    for (std::size_t j = 0; j < d; ++j) {
                        s.ww(Eigen::Index(i), Eigen::Index(j)) = acc.iterated(i, j) / double(n);
                    }
                }
                samples.push_back(std::move(s));
                ++next;
            }
            if (next == record.size()) break;
            v.evaluate(orbit.point(), vs);
            acc.push(val.data());
            orbit.advance();
        }
        out[trial] = std::move(samples);
    });
    return out;
}

struct BlockScheme
{
    double a_exp = 0.0;
    double b_exp = 0.0;
    double gamma = 0.0;
    std::size_t n = 0;
    std::size_t p = 0;  ///< big block length [n^a]
    std::size_t q = 0;  ///< small block length [n^b]
    std::size_t k = 0;  ///< number of big blocks [n / (p + q)]

    /// Whether index r lies in a big block.
    bool in_big_block(std::size_t r) const noexcept
    {
        return r < k * (p + q) && r % (p + q) < p;
    }
};

/// Each strict inequality on (a, b) that fails at gamma, in words.
inline std::vector<std::string> violated_constraints(double gamma, double a, double b)
{
    std::vector<std::string> v;
    auto fmt = [](double x) {
        std::ostringstream s;
        s << x;
        return s.str();
    };
    if (!(b > 1.0 / gamma)) v.push_back("b > 1/gamma fails: " + fmt(b) + " <= " + fmt(1.0 / gamma));
    if (!(a > (b + 1.0) / 2.0)) {
        v.push_back("a > (b+1)/2 fails: " + fmt(a) + " <= " + fmt((b + 1.0) / 2.0));
    }
    if (!(a + gamma * b > 2.0)) {
        v.push_back("a + gamma*b > 2 fails: " + fmt(a + gamma * b) + " <= 2");
    }
    if (!(b < a)) v.push_back("b < a fails: " + fmt(b) + " >= " + fmt(a));
    if (!(a < 1.0)) v.push_back("a < 1 fails: " + fmt(a) + " >= 1");
    if (!(b > 0.0)) v.push_back("b > 0 fails: " + fmt(b) + " <= 0");
    return v;
}

/// Either a scheme or the list of violated constraints.
struct SchemeCheck
{
    bool feasible = false;
    BlockScheme scheme;
    std::vector<std::string> violations;

    std::string report() const
    {
        std::string r;
        for (auto const& s : violations) r += (r.empty() ? "" : "; ") + s;
        return r;
    }
};

inline std::size_t floor_power(std::size_t n, double e)
{
    // Guard against n^e landing just below an integer.
    double const v = std::pow(double(n), e);
    return static_cast<std::size_t>(std::floor(v * (1.0 + 1e-12)));
}

inline SchemeCheck make_block_scheme(double gamma, std::size_t n, double a_exp, double b_exp)
{
    if (!(gamma > 0.0)) throw std::invalid_argument("make_block_scheme needs gamma > 0");
    SchemeCheck c;
    c.violations = violated_constraints(gamma, a_exp, b_exp);
    BlockScheme& s = c.scheme;
    s.a_exp = a_exp;
    s.b_exp = b_exp;
    s.gamma = gamma;
    s.n = n;
    s.p = floor_power(n, a_exp);
    s.q = floor_power(n, b_exp);
    s.k = s.p + s.q > 0 ? n / (s.p + s.q) : 0;
    if (s.p < 1) c.violations.push_back("p = [n^a] >= 1 fails");
    if (s.q < 1) c.violations.push_back("q = [n^b] >= 1 fails");
    if (s.k < 1) c.violations.push_back("k = [n/(p+q)] >= 1 fails");
    c.feasible = c.violations.empty();
    // Re-verify before handing out a scheme.
    if (c.feasible && !violated_constraints(s.gamma, s.a_exp, s.b_exp).empty()) {
        throw std::logic_error("block scheme failed re-verification");
    }
    return c;
}

struct ExponentChoice
{
    bool feasible = false;
    double a = 0.0;
    double b = 0.0;
    double slack = 0.0;  ///< smallest margin over the strict inequalities
};

/// Picks (a, b) maximizing the smallest margin of the constraints, ties
/// broken toward smaller b. For a given b the best a is the midpoint of
/// (max((b+1)/2, 2 - gamma b, b), 1). Infeasible exactly when gamma <= 1.
inline ExponentChoice find_block_exponents(double gamma, std::size_t grid = 100'000)
{
    ExponentChoice best;
    if (!(gamma > 1.0)) return best;
    auto margin = [gamma](double a, double b) {
        return std::min({b - 1.0 / gamma, a - (b + 1.0) / 2.0, a + gamma * b - 2.0, a - b,
                         1.0 - a});
    };
    double best_slack = 0.0;
    for (std::size_t i = 1; i < grid; ++i) {
        double const b = double(i) / double(grid);
        if (!(b > 1.0 / gamma)) continue;
        double const lower = std::max({(b + 1.0) / 2.0, 2.0 - gamma * b, b});
        if (!(lower < 1.0)) continue;
        double const a = (lower + 1.0) / 2.0;
        double const m = margin(a, b);
        if (m > best_slack * (1.0 + 1e-12) + 1e-15) {
            best_slack = m;
            best = {true, a, b, m};
        }
    }
    if (best.feasible && !violated_constraints(gamma, best.a, best.b).empty()) {
        best = {};
    }
    return best;
}

struct SmallBlockNorms
{
    Estimate i2;  ///< E |I_2(t)|_1
    Estimate j2;  ///< E |J_2(t)|_1
    Estimate j3;  ///< E |J_3(t)|_1
};

namespace detail {

inline void outer_add(std::vector<double>& m, double const* a, double const* b, std::size_t d)
{
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) m[i * d + j] += a[i] * b[j];
    }
}

inline double l1(std::vector<double> const& x)
{
    double s = 0.0;
    for (double v : x) s += std::abs(v);
    return s;
}

inline Estimate trial_mean(std::vector<double> const& xs)
{
    return xs.size() > 1 ? mean_estimate(xs) : Estimate{xs.empty() ? 0.0 : xs[0], 0.0, true};
}

}  // namespace detail

/// Monte Carlo L1 norms (entrywise l1 on vectors and matrices) of the
/// small-block terms at time t, over `trials` physical orbits:
///   I_2 = n^{-1/2} sum_{r<[nt], r not in B} v_r
///   J_2 = n^{-1} sum_{r<s<[nt], r not in B, s in B} v_r (x) v_s
///   J_3 = n^{-1} sum_{r<s<[nt], s not in B} v_r (x) v_s
inline SmallBlockNorms small_block_terms(Observable const& v, MapDescriptor const& map,
                                         BlockScheme const& scheme, double t,
                                         std::size_t trials, SamplerConfig const& cfg)
{
    if (t < 0.0 || t > 1.0) throw std::invalid_argument("t must lie in [0, 1]");
    if (trials < 1) throw std::invalid_argument("small_block_terms needs trials >= 1");
    std::size_t const d = static_cast<std::size_t>(v.arity());
    std::size_t const n = scheme.n;
    std::size_t const m = grid_index(n, t);
    std::vector<double> n_i2(trials), n_j2(trials), n_j3(trials);
    parallel_for(trials, cfg.workers, [&](std::size_t trial) {
        Orbit orbit = physical_orbit(map, cfg, trial);
        std::vector<double> s_all(d, 0.0), s_small(d, 0.0);
        std::vector<double> j2(d * d, 0.0), j3(d * d, 0.0);
        ObservableValue val{};
        std::span<double> vs{val.data(), d};
        for (std::size_t s = 0; s < m; ++s) {
            v.evaluate(orbit.point(), vs);
            if (scheme.in_big_block(s)) {
                detail::outer_add(j2, s_small.data(), val.data(), d);
            } else {
                detail::outer_add(j3, s_all.data(), val.data(), d);
                for (std::size_t i = 0; i < d; ++i) s_small[i] += val[i];
            }
            for (std::size_t i = 0; i < d; ++i) s_all[i] += val[i];
            orbit.advance();
        }
        n_i2[trial] = detail::l1(s_small) / std::sqrt(double(n));
        n_j2[trial] = detail::l1(j2) / double(n);
        n_j3[trial] = detail::l1(j3) / double(n);
    });
    return {detail::trial_mean(n_i2), detail::trial_mean(n_j2), detail::trial_mean(n_j3)};
}

struct DiagonalSum
{
    Eigen::MatrixXd estimate;  ///< ensemble mean of sum_{i <= [kt]} XX_i
    Eigen::MatrixXd std_error;
    Eigen::MatrixXd target;    ///< t E from Green-Kubo
    Eigen::MatrixXd target_std_error;
};

struct DiagonalOptions
{
    std::size_t gk_max_lag = 100;
    std::size_t gk_samples = 1'000'000;
};

/// Sum of within-big-block iterated sums
///   XX_i = n^{-1} sum_{0<=r<s<p} (v_r (x) v_s) o T^{(i-1)(p+q)},  i <= [kt],
/// averaged over trials, next to t E.
inline DiagonalSum diagonal_sum(Observable const& v, MapDescriptor const& map,
                                BlockScheme const& scheme, double t, std::size_t trials,
                                SamplerConfig const& cfg, DiagonalOptions const& opt = {})
{
    if (t < 0.0 || t > 1.0) throw std::invalid_argument("t must lie in [0, 1]");
    if (trials < 2) throw std::invalid_argument("diagonal_sum needs trials >= 2");
    std::size_t const d = static_cast<std::size_t>(v.arity());
    auto const blocks = static_cast<std::size_t>(std::floor(double(scheme.k) * t + 1e-12));
    std::size_t const period = scheme.p + scheme.q;
    std::vector<std::vector<double>> per_trial(trials, std::vector<double>(d * d, 0.0));
    parallel_for(trials, cfg.workers, [&](std::size_t trial) {
        Orbit orbit = physical_orbit(map, cfg, trial);
        ObservableValue val{};
        std::span<double> vs{val.data(), d};
        IteratedSum acc{d};
        auto& total = per_trial[trial];
        for (std::size_t i = 0; i < blocks; ++i) {
            acc.reset();
            for (std::size_t r = 0; r < scheme.p; ++r) {
                v.evaluate(orbit.point(), vs);
                acc.push(val.data());
                orbit.advance();
            }
            for (std::size_t a = 0; a < d; ++a) {
                for (std::size_t b = 0; b < d; ++b) total[a * d + b] += acc.iterated(a, b);
            }
            orbit.advance(period - scheme.p);
        }
        for (double& x : total) x /= double(scheme.n);
    });
    DiagonalSum out;
    out.estimate.resize(Eigen::Index(d), Eigen::Index(d));
    out.std_error.resize(Eigen::Index(d), Eigen::Index(d));
    for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = 0; b < d; ++b) {
            std::vector<double> xs(trials);
            for (std::size_t r = 0; r < trials; ++r) xs[r] = per_trial[r][a * d + b];
            Estimate e = mean_estimate(xs);
            out.estimate(Eigen::Index(a), Eigen::Index(b)) = e.value;
            out.std_error(Eigen::Index(a), Eigen::Index(b)) = e.std_error;
        }
    }
    if (t == 0.0) {
        out.target = Eigen::MatrixXd::Zero(Eigen::Index(d), Eigen::Index(d));
        out.target_std_error = out.target;
        return out;
    }
    auto const gk = green_kubo(v, map, opt.gk_max_lag, opt.gk_samples,
                               cfg.with_stream(cfg.stream_id + split_stream_offset));
    out.target = t * gk.drift_e;
    out.target_std_error = t * gk.stderr_drift;
    return out;
}

struct TriangularArrayResult
{
    /// Coordinates: W(1) components, then WW(1) entries row-major; one slice at t = 1.
    EnsembleStats stats;
    /// Mean over trials of sum_i |chi_i|^{2p}; tends to 0 as k_n grows.
    double lyapunov_sum = 0.0;
};

/// Independent array chi_{n,i} = sigma^{1/2} Z_i / sqrt(k_n), Z_i standard
/// Gaussian, with W = sum_i chi_i and WW = sum_{i<j} chi_i (x) chi_j.
inline TriangularArrayResult triangular_array_demo(Eigen::MatrixXd const& sigma, double p_exp,
                                                   std::size_t k_n, std::size_t trials,
                                                   SamplerConfig const& cfg)
{
    if (!(p_exp > 1.0)) throw std::invalid_argument("triangular_array_demo needs p > 1");
    if (k_n < 1) throw std::invalid_argument("triangular_array_demo needs k_n >= 1");
    if (trials < 2) throw std::invalid_argument("triangular_array_demo needs trials >= 2");
    Eigen::MatrixXd const root = psd_sqrt(sigma);
    auto const d = static_cast<std::size_t>(root.rows());
    if (d < 1 || d > std::size_t(max_arity)) throw std::invalid_argument("sigma dimension");
    double const scale = 1.0 / std::sqrt(double(k_n));
    std::vector<std::vector<std::vector<double>>> samples(trials);
    std::vector<double> lyap(trials);
    parallel_for(trials, cfg.workers, [&](std::size_t trial) {
        CounterRng rng{derive_seed(cfg.root_seed, cfg.stream_id, trial)};
        std::normal_distribution<double> gauss;
        IteratedSum acc{d};
        Eigen::VectorXd z{Eigen::Index(d)};
        Eigen::VectorXd chi{Eigen::Index(d)};
        double ly = 0.0;
        for (std::size_t i = 0; i < k_n; ++i) {
            for (std::size_t c = 0; c < d; ++c) z(Eigen::Index(c)) = gauss(rng);
            chi = root * z * scale;
            acc.push(chi.data());
            ly += std::pow(chi.norm(), 2.0 * p_exp);
        }
        std::vector<double> row;
        for (std::size_t i = 0; i < d; ++i) row.push_back(acc.sum(i));
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < d; ++j) row.push_back(acc.iterated(i, j));
        }
        samples[trial] = {std::move(row)};
        lyap[trial] = ly;
    });
    TriangularArrayResult r;
    r.stats = summarize({1.0}, samples);
    r.lyapunov_sum = mean_of(lyap);
    return r;
}

}  // namespace homog
