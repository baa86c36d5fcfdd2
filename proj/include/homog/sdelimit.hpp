// SPDX-License-Identifier: Apache-2.0
//
// Reference solutions for the limiting diffusion dX = f(X) dt + sigma dW and
// weak distances between ensembles.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "homog/fastslow.hpp"
#include "homog/parallel.hpp"
#include "homog/rng.hpp"
#include "homog/sampling.hpp"
#include "homog/stats.hpp"

namespace homog {

using DriftField = std::function<void(std::span<double const> x, std::span<double> out)>;

/// Symmetric square root of a positive semidefinite matrix; negative
/// eigenvalues from round-off are clipped to 0.
inline Eigen::MatrixXd psd_sqrt(Eigen::MatrixXd const& sigma)
{
    if (sigma.rows() != sigma.cols()) throw std::invalid_argument("covariance must be square");
    if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, sigma.norm())) {
        throw std::invalid_argument("covariance must be symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (sigma + sigma.transpose()));
    Eigen::VectorXd lam = eig.eigenvalues();
    double const tol = 1e-10 * std::max(1.0, lam.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
        if (lam(i) < -tol) throw std::invalid_argument("covariance is not positive semidefinite");
        lam(i) = std::sqrt(std::max(0.0, lam(i)));
    }
    return eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
}

struct SdeSpec
{
    std::size_t d = 1;
    DriftField drift;
    /// Sigma = sigma sigma^T; sigma itself is its PSD square root.
    Eigen::MatrixXd covariance = Eigen::MatrixXd::Identity(1, 1);
    std::vector<double> xi{0.0};
    std::size_t steps = 1000;
    std::size_t trials = 1000;
    std::vector<double> t_grid = uniform_grid();

    void validate() const
    {
        if (d < 1) throw std::invalid_argument("SDE dimension must be >= 1");
        if (!drift) throw std::invalid_argument("SDE drift must be set");
        if (covariance.rows() != Eigen::Index(d) || covariance.cols() != Eigen::Index(d)) {
            throw std::invalid_argument("SDE covariance must be d x d");
        }
        if (xi.size() != d) throw std::invalid_argument("xi must have d components");
        if (steps < 100) throw std::invalid_argument("steps must be at least 100");
        if (trials < 2) throw std::invalid_argument("trials must be at least 2");
        check_time_grid(t_grid);
    }
};

inline constexpr double divergence_bound = 1e6;

/// Euler-Maruyama on [0, 1] with step 1 / steps; trial i draws its Gaussian
/// increments from the counter stream (root_seed, stream_id, i).
inline EnsembleStats euler_maruyama(SdeSpec const& spec, SamplerConfig const& cfg)
{
    spec.validate();
    std::size_t const d = spec.d;
    Eigen::MatrixXd const sigma = psd_sqrt(spec.covariance);
    double const dt = 1.0 / double(spec.steps);
    double const sqdt = std::sqrt(dt);
    std::vector<std::size_t> record;
    for (double t : spec.t_grid) record.push_back(grid_index(spec.steps, t));

    std::vector<std::vector<std::vector<double>>> paths(spec.trials);
    std::vector<char> ok(spec.trials, 0);
    parallel_for(spec.trials, cfg.workers, [&](std::size_t trial) {
        CounterRng rng{derive_seed(cfg.root_seed, cfg.stream_id, trial)};
        std::normal_distribution<double> gauss;
        Eigen::VectorXd x = Eigen::Map<Eigen::VectorXd const>(spec.xi.data(), Eigen::Index(d));
        Eigen::VectorXd f(d), z(d);
        std::vector<std::vector<double>> values;
        std::size_t next = 0;
        for (std::size_t k = 0; next < record.size(); ++k) {
            while (next < record.size() && record[next] == k) {
                values.emplace_back(x.data(), x.data() + d);
                ++next;
            }
            if (next == record.size()) break;
            spec.drift(std::span<double const>{x.data(), d}, std::span<double>{f.data(), d});
            for (std::size_t i = 0; i < d; ++i) z(Eigen::Index(i)) = gauss(rng);
            x += f * dt + sigma * z * sqdt;
            if (!x.allFinite() || x.cwiseAbs().maxCoeff() > divergence_bound) return;
        }
        paths[trial] = std::move(values);
        ok[trial] = 1;
    });
    std::vector<std::vector<std::vector<double>>> kept;
    for (std::size_t i = 0; i < spec.trials; ++i) {
        if (ok[i]) kept.push_back(std::move(paths[i]));
    }
    std::size_t const aborted = spec.trials - kept.size();
    if (double(aborted) > max_abort_fraction * double(spec.trials)) {
        throw TrajectoryAbort(std::to_string(aborted) + " of " + std::to_string(spec.trials)
                              + " SDE trials diverged");
    }
    EnsembleStats st = summarize(spec.t_grid, kept);
    st.aborted = aborted;
    return st;
}

struct OuMoments
{
    double mean = 0.0;
    double var = 0.0;
};

/// Moments of dX = -lambda X dt + sqrt(sigma2) dW, X(0) = xi.
inline OuMoments ou_moments(double lambda, double sigma2, double t, double xi)
{
    if (lambda < 0.0) throw std::invalid_argument("ou_moments needs lambda >= 0");
    if (sigma2 < 0.0) throw std::invalid_argument("ou_moments needs sigma2 >= 0");
    OuMoments m;
    m.mean = xi * std::exp(-lambda * t);
    // (1 - e^{-2 lambda t}) / (2 lambda) via expm1 keeps the lambda -> 0 limit t.
    m.var = lambda == 0.0 ? sigma2 * t : -sigma2 * std::expm1(-2.0 * lambda * t) / (2.0 * lambda);
    return m;
}

struct SliceDistance
{
    double time = 0.0;
    std::vector<double> mean_diff;  ///< a - b per coordinate
    double cov_frobenius = 0.0;     ///< |cov_a - cov_b|_F
    std::vector<double> ks;         ///< two-sample KS per coordinate
    double ks_threshold = 0.0;      ///< 0.01-level critical value
};

struct WeakDistance
{
    std::vector<SliceDistance> slices;
};

inline WeakDistance weak_distance(EnsembleStats const& a, EnsembleStats const& b,
                                  double level = 0.01)
{
    if (a.times.size() != b.times.size()) throw std::invalid_argument("time grids differ");
    for (std::size_t s = 0; s < a.times.size(); ++s) {
        if (std::abs(a.times[s] - b.times[s]) > 1e-12) {
            throw std::invalid_argument("time grids differ");
        }
    }
    if (a.dimension() != b.dimension()) throw std::invalid_argument("dimensions differ");
    WeakDistance w;
    for (std::size_t s = 0; s < a.times.size(); ++s) {
        SliceDistance sd;
        sd.time = a.times[s];
        for (std::size_t i = 0; i < a.dimension(); ++i) {
            sd.mean_diff.push_back(a.mean[s][i] - b.mean[s][i]);
            sd.ks.push_back(ks_statistic(a.ecdf[s][i], b.ecdf[s][i]));
        }
        sd.cov_frobenius = (a.covariance[s] - b.covariance[s]).norm();
        sd.ks_threshold = ks_threshold(a.trials, b.trials, level);
        w.slices.push_back(std::move(sd));
    }
    return w;
}

}  // namespace homog
