// SPDX-License-Identifier: Apache-2.0
//
// Slow variable of a fast-slow system
//   x_{k+1} = x_k + a(x_k, y_k) / n + b(x_k, y_k) / sqrt(n),  y_{k+1} = T y_k
// sampled as X_n(t) = x_{[nt]}, and ensemble statistics over many paths.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "homog/maps.hpp"
#include "homog/parallel.hpp"
#include "homog/sampling.hpp"
#include "homog/stats.hpp"

namespace homog {

/// Vector field on R^d x phase space: writes f(x, y) into `out`.
using SlowField = std::function<void(std::span<double const> x, Point const& y,
                                     std::span<double> out)>;

/// `count` uniform times 0, 1/(count-1), ..., 1.
inline std::vector<double> uniform_grid(std::size_t count = 101)
{
    if (count < 2) throw std::invalid_argument("time grid needs at least two points");
    std::vector<double> t(count);
    for (std::size_t i = 0; i < count; ++i) t[i] = double(i) / double(count - 1);
    return t;
}

inline void check_time_grid(std::vector<double> const& t_grid)
{
    if (t_grid.empty()) throw std::invalid_argument("empty time grid");
    if (t_grid.front() < 0.0 || t_grid.back() > 1.0) {
        throw std::invalid_argument("time grid must lie in [0, 1]");
    }
    for (std::size_t i = 1; i < t_grid.size(); ++i) {
        if (!(t_grid[i] > t_grid[i - 1])) {
            throw std::invalid_argument("time grid must be strictly increasing");
        }
    }
}

/// Step index [n t], robust to t*n landing a rounding error below an integer.
inline std::size_t grid_index(std::size_t n, double t)
{
    double const nt = double(n) * t;
    double const r = std::round(nt);
    if (std::abs(nt - r) <= 1e-9 * std::max(1.0, nt)) return static_cast<std::size_t>(r);
    return static_cast<std::size_t>(std::floor(nt));
}

struct SlowSystemSpec
{
    std::size_t d = 1;
    std::vector<double> xi;
    SlowField drift_a;
    SlowField noise_b;
    std::size_t n = 10'000;
    MapDescriptor map = MapDescriptor::doubling();
    std::vector<double> t_grid = uniform_grid();

    void validate() const
    {
        if (d < 1) throw std::invalid_argument("slow dimension must be >= 1");
        if (xi.size() != d) throw std::invalid_argument("xi must have d components");
        if (!drift_a || !noise_b) throw std::invalid_argument("drift and noise must be set");
        if (n < 10) throw std::invalid_argument("n must be at least 10");
        check_time_grid(t_grid);
    }
};

struct Path
{
    std::vector<double> times;
    std::vector<std::vector<double>> values;  ///< values[slice][coordinate]
};

/// A trajectory produced NaN or overflow.
class TrajectoryAbort : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/// Runs one slow path with y_0 the `index`-th physical sample of `cfg`.
inline Path run_slow_path(SlowSystemSpec const& spec, SamplerConfig const& cfg,
                          std::size_t index = 0)
{
    spec.validate();
    std::size_t const d = spec.d;
    std::vector<std::size_t> record;
    for (double t : spec.t_grid) record.push_back(grid_index(spec.n, t));

    Path path;
    path.times = spec.t_grid;
    path.values.reserve(record.size());
    std::vector<double> x = spec.xi, a(d), b(d);
    double const inv_n = 1.0 / double(spec.n);
    double const inv_sqrt_n = 1.0 / std::sqrt(double(spec.n));
    Orbit orbit = physical_orbit(spec.map, cfg, index);
    std::size_t next = 0;
    for (std::size_t k = 0; k <= spec.n && next < record.size(); ++k) {
        while (next < record.size() && record[next] == k) {
            path.values.push_back(x);
            ++next;
        }
        if (k == spec.n || next == record.size()) break;
        Point const& y = orbit.point();
        spec.drift_a(x, y, a);
        spec.noise_b(x, y, b);
        for (std::size_t i = 0; i < d; ++i) {
            x[i] += a[i] * inv_n + b[i] * inv_sqrt_n;
            if (!std::isfinite(x[i])) {
                throw TrajectoryAbort("slow path " + std::to_string(index)
                                      + " became non-finite at step " + std::to_string(k));
            }
        }
        orbit.advance();
    }
    return path;
}

struct EnsembleStats
{
    std::vector<double> times;
    std::vector<std::vector<double>> mean;      ///< mean[slice][i]
    std::vector<Eigen::MatrixXd> covariance;    ///< unbiased, per slice
    /// ecdf[slice][i]: sorted sample values of coordinate i.
    std::vector<std::vector<std::vector<double>>> ecdf;
    std::size_t trials = 0;
    std::size_t aborted = 0;

    std::size_t dimension() const { return mean.empty() ? 0 : mean.front().size(); }

    /// Mean of coordinate i at slice s with its standard error.
    Estimate mean_at(std::size_t s, std::size_t i) const { return mean_estimate(ecdf.at(s).at(i)); }

    /// Variance of coordinate i at slice s with its standard error.
    Estimate variance_at(std::size_t s, std::size_t i) const
    {
        return variance_estimate(ecdf.at(s).at(i));
    }

    /// Index of the slice at time t.
    std::size_t slice(double t) const
    {
        for (std::size_t s = 0; s < times.size(); ++s) {
            if (std::abs(times[s] - t) <= 1e-12) return s;
        }
        throw std::invalid_argument("time " + std::to_string(t) + " is not on the grid");
    }
};

/// Builds per-slice statistics from samples[trial][slice][coordinate].
/// Trials are combined in index order.
inline EnsembleStats summarize(std::vector<double> const& times,
                               std::vector<std::vector<std::vector<double>>> const& samples)
{
    if (samples.size() < 2) throw std::invalid_argument("ensemble needs at least two trials");
    std::size_t const ns = times.size();
    std::size_t const d = samples.front().front().size();
    std::size_t const m = samples.size();
    EnsembleStats st;
    st.times = times;
    st.trials = m;
    st.mean.assign(ns, std::vector<double>(d, 0.0));
    st.covariance.assign(ns, Eigen::MatrixXd::Zero(Eigen::Index(d), Eigen::Index(d)));
    st.ecdf.assign(ns, std::vector<std::vector<double>>(d, std::vector<double>(m)));
    for (std::size_t s = 0; s < ns; ++s) {
        for (std::size_t i = 0; i < d; ++i) {
            CompensatedSum sum;
            for (std::size_t r = 0; r < m; ++r) sum += samples[r][s][i];
            st.mean[s][i] = sum.value() / double(m);
        }
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = i; j < d; ++j) {
                CompensatedSum sum;
                for (std::size_t r = 0; r < m; ++r) {
                    sum += (samples[r][s][i] - st.mean[s][i]) * (samples[r][s][j] - st.mean[s][j]);
                }
                double const c = sum.value() / double(m - 1);
                st.covariance[s](Eigen::Index(i), Eigen::Index(j)) = c;
                st.covariance[s](Eigen::Index(j), Eigen::Index(i)) = c;
            }
        }
        for (std::size_t i = 0; i < d; ++i) {
            auto& col = st.ecdf[s][i];
            for (std::size_t r = 0; r < m; ++r) col[r] = samples[r][s][i];
            std::sort(col.begin(), col.end());
        }
    }
    return st;
}

/// Largest tolerated fraction of aborted trials in an ensemble.
inline constexpr double max_abort_fraction = 1e-3;

/// Runs `trials` independent slow paths (trial i uses physical sample i of
/// `cfg`) and aggregates them per time slice.
inline EnsembleStats run_ensemble(SlowSystemSpec const& spec, std::size_t trials,
                                  SamplerConfig const& cfg)
{
    spec.validate();
    if (trials < 2) throw std::invalid_argument("run_ensemble needs trials >= 2");
    std::vector<std::vector<std::vector<double>>> paths(trials);
    std::vector<char> ok(trials, 0);
    parallel_for(trials, cfg.workers, [&](std::size_t i) {
        try {
            paths[i] = run_slow_path(spec, cfg, i).values;
            ok[i] = 1;
        } catch (TrajectoryAbort const&) {
            ok[i] = 0;
        }
    });
    std::vector<std::vector<std::vector<double>>> kept;
    kept.reserve(trials);
    for (std::size_t i = 0; i < trials; ++i) {
        if (ok[i]) kept.push_back(std::move(paths[i]));
    }
    std::size_t const aborted = trials - kept.size();
    if (double(aborted) > max_abort_fraction * double(trials)) {
        throw TrajectoryAbort(std::to_string(aborted) + " of " + std::to_string(trials)
                              + " slow paths aborted");
    }
    EnsembleStats st = summarize(spec.t_grid, kept);
    st.aborted = aborted;
    return st;
}

/// Empirical mean of b(xi, y) over physical samples y, per coordinate, and
/// whether every coordinate lies within 3 standard errors of 0.
struct CenteringCheck
{
    std::vector<Estimate> means;
    bool centered = true;
};

inline CenteringCheck check_noise_centering(SlowSystemSpec const& spec, std::size_t samples,
                                            SamplerConfig const& cfg,
                                            std::size_t segments = 64)
{
    spec.validate();
    std::size_t const d = spec.d;
    struct Acc
    {
        std::vector<CompensatedSum> sums;
        double n = 0;
    };
    auto parts = segment_reduce(spec.map, cfg, samples, segments, 1,
                                Acc{std::vector<CompensatedSum>(d), 0.0},
                                [&spec, d](Acc& acc, Point const& y) {
                                    std::vector<double> out(d);
                                    spec.noise_b(spec.xi, y, out);
                                    for (std::size_t i = 0; i < d; ++i) acc.sums[i] += out[i];
                                    acc.n += 1;
                                });
    CenteringCheck check;
    for (std::size_t i = 0; i < d; ++i) {
        std::vector<std::vector<double>> batches;
        for (auto const& a : parts) batches.push_back({a.sums[i].value(), a.n});
        Estimate e = jackknife(batches, [](std::span<double const> t, double) {
            return t[0] / t[1];
        });
        check.centered = check.centered && std::abs(e.value) <= 3.0 * e.std_error + 1e-15;
        check.means.push_back(e);
    }
    return check;
}

}  // namespace homog
