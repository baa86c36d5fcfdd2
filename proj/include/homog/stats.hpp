// SPDX-License-Identifier: Apache-2.0
//
// Small statistical building blocks shared by the estimators: point
// estimates with standard errors, jackknife over batches, power-law fits and
// the two-sample Kolmogorov-Smirnov statistic.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "homog/parallel.hpp"

namespace homog {

/// A Monte Carlo estimate with its standard error.
struct Estimate
{
    double value = 0.0;
    double std_error = 0.0;
    bool converged = true;
};

inline double mean_of(std::span<double const> xs)
{
    if (xs.empty()) throw std::invalid_argument("mean of empty sample");
    CompensatedSum s;
    for (double x : xs) s += x;
    return s.value() / static_cast<double>(xs.size());
}

/// Unbiased sample variance.
inline double variance_of(std::span<double const> xs)
{
    if (xs.size() < 2) throw std::invalid_argument("variance needs two samples");
    double const m = mean_of(xs);
    CompensatedSum s;
    for (double x : xs) s += (x - m) * (x - m);
    return s.value() / static_cast<double>(xs.size() - 1);
}

/// Mean of i.i.d. (or batch-mean) values with the usual standard error.
inline Estimate mean_estimate(std::span<double const> xs)
{
    Estimate e;
    e.value = mean_of(xs);
    e.std_error = xs.size() > 1 ? std::sqrt(variance_of(xs) / double(xs.size())) : 0.0;
    return e;
}

/// Sample variance with the large-sample standard error
/// sqrt((m4 - s^4) / N).
inline Estimate variance_estimate(std::span<double const> xs)
{
    double const m = mean_of(xs);
    CompensatedSum s2, s4;
    for (double x : xs) {
        double const d = (x - m) * (x - m);
        s2 += d;
        s4 += d * d;
    }
    double const n = static_cast<double>(xs.size());
    double const var = s2.value() / (n - 1.0);
    double const m2 = s2.value() / n;
    double const m4 = s4.value() / n;
    return {var, std::sqrt(std::max(0.0, m4 - m2 * m2) / n), true};
}

/// Delete-one jackknife over batches.
///
/// `totals` holds the sums of per-batch statistics, `batches[b]` the
/// contribution of batch b, and `stat` maps a vector of totals (with the
/// batch count used to form them) to the estimate. Returns the full-sample
/// estimate together with the jackknife standard error.
inline Estimate jackknife(std::vector<std::vector<double>> const& batches,
                          std::function<double(std::span<double const>, double)> const& stat)
{
    if (batches.empty()) throw std::invalid_argument("jackknife needs batches");
    std::size_t const width = batches.front().size();
    std::vector<double> totals(width, 0.0);
    for (std::size_t j = 0; j < width; ++j) {
        CompensatedSum s;
        for (auto const& b : batches) s += b[j];
        totals[j] = s.value();
    }
    double const nb = static_cast<double>(batches.size());
    Estimate e;
    e.value = stat(totals, nb);
    if (batches.size() < 2) return e;
    std::vector<double> loo(width);
    std::vector<double> reps(batches.size());
    for (std::size_t b = 0; b < batches.size(); ++b) {
        for (std::size_t j = 0; j < width; ++j) loo[j] = totals[j] - batches[b][j];
        reps[b] = stat(loo, nb - 1.0);
    }
    double const rbar = mean_of(reps);
    CompensatedSum s;
    for (double r : reps) s += (r - rbar) * (r - rbar);
    e.std_error = std::sqrt((nb - 1.0) / nb * s.value());
    return e;
}

/// Least-squares line through (log lag, log |value|).
struct DecayFit
{
    double exponent = 0.0;   ///< slope in log-log coordinates
    double intercept = 0.0;  ///< log of the prefactor
    double r_squared = 0.0;
    std::vector<double> lags_used;
    bool degenerate = false;
};

inline constexpr double decay_floor = 1e-12;

/// Power-law fit value ~ exp(intercept) * lag^exponent. Absolute values are
/// floored at 1e-12 before taking logs. Flags the fit degenerate when
/// r^2 < 0.5.
inline DecayFit decay_fit(std::span<double const> lags, std::span<double const> values)
{
    if (lags.size() != values.size()) {
        throw std::invalid_argument("decay_fit: lags and values differ in length");
    }
    if (lags.size() < 3) {
        throw std::invalid_argument("decay_fit needs at least three points");
    }
    std::size_t const n = lags.size();
    std::vector<double> lx(n), ly(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(lags[i] > 0.0)) throw std::invalid_argument("decay_fit lags must be positive");
        lx[i] = std::log(lags[i]);
        ly[i] = std::log(std::max(std::abs(values[i]), decay_floor));
    }
    double const mx = mean_of(lx);
    double const my = mean_of(ly);
    CompensatedSum sxx, sxy, syy;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
        syy += (ly[i] - my) * (ly[i] - my);
    }
    if (sxx.value() <= 0.0) throw std::invalid_argument("decay_fit lags must not all coincide");
    DecayFit fit;
    fit.exponent = sxy.value() / sxx.value();
    fit.intercept = my - fit.exponent * mx;
    if (syy.value() <= 1e-300) {
        fit.r_squared = 1.0;
    } else {
        CompensatedSum ssr;
        for (std::size_t i = 0; i < n; ++i) {
            double const r = ly[i] - (fit.intercept + fit.exponent * lx[i]);
            ssr += r * r;
        }
        fit.r_squared = std::clamp(1.0 - ssr.value() / syy.value(), 0.0, 1.0);
    }
    fit.lags_used.assign(lags.begin(), lags.end());
    fit.degenerate = fit.r_squared < 0.5;
    return fit;
}

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b| for sorted
/// samples.
inline double ks_statistic(std::span<double const> a, std::span<double const> b)
{
    if (a.empty() || b.empty()) throw std::invalid_argument("ks_statistic of empty sample");
    double const na = static_cast<double>(a.size());
    double const nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        double const x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(double(i) / na - double(j) / nb));
    }
    return d;
}

/// Asymptotic two-sample KS critical value at significance `level`:
/// c(level) sqrt((n + m) / (n m)), c = sqrt(-ln(level / 2) / 2).
inline double ks_threshold(std::size_t n, std::size_t m, double level = 0.01)
{
    double const c = std::sqrt(-0.5 * std::log(0.5 * level));
    return c * std::sqrt(double(n + m) / (double(n) * double(m)));
}

/// One-sample KS distance of sorted data from the uniform law on [0,1].
inline double ks_uniform(std::span<double const> sorted)
{
    double const n = static_cast<double>(sorted.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        double const x = std::clamp(sorted[i], 0.0, 1.0);
        d = std::max({d, std::abs(double(i + 1) / n - x), std::abs(x - double(i) / n)});
    }
    return d;
}

/// Integers spread approximately log-uniformly over [lo, hi], deduplicated.
inline std::vector<std::size_t> log_spaced(std::size_t lo, std::size_t hi, std::size_t count)
{
    if (lo == 0 || hi < lo || count < 2) {
        throw std::invalid_argument("log_spaced needs 0 < lo <= hi and count >= 2");
    }
    std::vector<std::size_t> out;
    double const a = std::log(double(lo));
    double const b = std::log(double(hi));
    for (std::size_t i = 0; i < count; ++i) {
        auto const v = static_cast<std::size_t>(
            std::llround(std::exp(a + (b - a) * double(i) / double(count - 1))));
        if (out.empty() || out.back() != v) out.push_back(v);
    }
    return out;
}

}  // namespace homog
