// SPDX-License-Identifier: Apache-2.0
//
// Correlation functions and the estimators built on them: Green-Kubo
// covariance/drift matrices, moment growth of Birkhoff and iterated sums,
// functional-correlation probes, and first-return-time tails.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "homog/maps.hpp"
#include "homog/observable.hpp"
#include "homog/parallel.hpp"
#include "homog/sampling.hpp"
#include "homog/stats.hpp"

namespace homog {

struct CorrelationOptions
{
    /// Independent orbit segments (batches for the jackknife).
    std::size_t segments = 64;
};

namespace detail {

// Sums over one or more orbit segments of length W (per segment) of
// v_r and, for every requested lag, w_{r+lag} and v_r (x) w_{r+lag}, r < W.
struct LaggedSums
{
    double count = 0;
    std::vector<double> sum_v;
    std::vector<double> sum_w;  // lag-major
    std::vector<double> cross;  // lag-major, then dv x dw row-major
};

inline std::size_t effective_segments(std::size_t samples, std::size_t segments,
                                      std::size_t max_lag)
{
    if (samples < 2) throw std::invalid_argument("need at least two samples");
    std::size_t s = std::max<std::size_t>(1, segments);
    if (max_lag > 0) {
        // Each window must be at least ten times the largest lag.
        s = std::min(s, samples / (10 * max_lag));
    }
    if (s < 2) {
        throw std::invalid_argument("samples too small: need windows of at least 10 x lag "
                                    "in two or more segments");
    }
    return s;
}

inline std::vector<LaggedSums> lagged_sums(Observable const& v, Observable const& w,
                                           MapDescriptor const& map,
                                           std::vector<std::size_t> const& lags,
                                           std::size_t samples, SamplerConfig const& cfg,
                                           std::size_t segments)
{
    std::size_t const dv = static_cast<std::size_t>(v.arity());
    std::size_t const dw = static_cast<std::size_t>(w.arity());
    std::size_t const max_lag = lags.empty() ? 0 : *std::max_element(lags.begin(), lags.end());
    std::size_t const nseg = effective_segments(samples, segments, max_lag);
    std::size_t const nl = lags.size();
    std::vector<LaggedSums> out(nseg);
    parallel_for(nseg, cfg.workers, [&](std::size_t s) {
        std::size_t const window = segment_share(samples, nseg, s);
        LaggedSums acc;
        acc.count = double(window);
        acc.sum_v.assign(dv, 0.0);
        acc.sum_w.assign(nl * dw, 0.0);
        acc.cross.assign(nl * dv * dw, 0.0);
        std::size_t const ring = max_lag + 1;
        std::vector<double> vbuf(ring * dv, 0.0);
        ObservableValue vv{}, wv{};
        std::span<double> vspan{vv.data(), dv};
        std::span<double> wspan{wv.data(), dw};
        Orbit orbit = physical_orbit(map, cfg, s);
        for (std::size_t t = 0; t < window + max_lag; ++t) {
            Point const& p = orbit.point();
            v.evaluate(p, vspan);
            w.evaluate(p, wspan);
            double* slot = &vbuf[(t % ring) * dv];
            std::copy(vv.begin(), vv.begin() + dv, slot);
            if (t < window) {
                for (std::size_t i = 0; i < dv; ++i) acc.sum_v[i] += vv[i];
            }
            for (std::size_t l = 0; l < nl; ++l) {
                std::size_t const lag = lags[l];
                if (t < lag || t - lag >= window) continue;
                double const* vr = &vbuf[((t - lag) % ring) * dv];
                for (std::size_t j = 0; j < dw; ++j) acc.sum_w[l * dw + j] += wv[j];
                double* c = &acc.cross[l * dv * dw];
                for (std::size_t i = 0; i < dv; ++i) {
                    for (std::size_t j = 0; j < dw; ++j) c[i * dw + j] += vr[i] * wv[j];
                }
            }
            orbit.advance();
        }
        out[s] = std::move(acc);
    });
    return out;
}

// Flattens segment sums into jackknife batches: [count, sum_v, sum_w, cross].
inline std::vector<std::vector<double>> as_batches(std::vector<LaggedSums> const& parts)
{
    std::vector<std::vector<double>> batches;
    batches.reserve(parts.size());
    for (auto const& p : parts) {
        std::vector<double> b{p.count};
        b.insert(b.end(), p.sum_v.begin(), p.sum_v.end());
        b.insert(b.end(), p.sum_w.begin(), p.sum_w.end());
        b.insert(b.end(), p.cross.begin(), p.cross.end());
        batches.push_back(std::move(b));
    }
    return batches;
}

// Centered lagged covariance entry from batch totals; `nl` lags in total.
// The mean of w is taken over the same shifted window as the products.
inline double lagged_cov(std::span<double const> t, std::size_t dv, std::size_t dw,
                         std::size_t nl, std::size_t lag_index, std::size_t i, std::size_t j)
{
    double const n = t[0];
    double const mv = t[1 + i] / n;
    double const mw = t[1 + dv + lag_index * dw + j] / n;
    double const cross = t[1 + dv + nl * dw + lag_index * dv * dw + i * dw + j] / n;
    return cross - mv * mw;
}

inline void flag_convergence(Estimate& e)
{
    e.converged = !(e.std_error > std::abs(e.value) && std::abs(e.value) > 0.1);
}

}  // namespace detail

/// Lagged covariances Cov(v, w o T^lag) of scalar observables under the
/// physical measure, for several lags from the same orbit segments.
///
/// Each segment is one physical orbit whose window of `samples / segments`
/// start times contributes one time average per lag. Standard errors come
/// from the delete-one-segment jackknife.
inline std::vector<Estimate> autocorrelation(Observable const& v, Observable const& w,
                                             MapDescriptor const& map,
                                             std::vector<std::size_t> const& lags,
                                             std::size_t samples, SamplerConfig const& cfg,
                                             CorrelationOptions const& opt = {})
{
    if (v.arity() != 1 || w.arity() != 1) {
        throw std::invalid_argument("autocorrelation needs scalar observables");
    }
    if (lags.empty()) throw std::invalid_argument("autocorrelation needs at least one lag");
    auto const batches = detail::as_batches(
        detail::lagged_sums(v, w, map, lags, samples, cfg, opt.segments));
    std::vector<Estimate> out;
    for (std::size_t l = 0; l < lags.size(); ++l) {
        Estimate e = jackknife(batches, [l, nl = lags.size()](std::span<double const> t, double) {
            return detail::lagged_cov(t, 1, 1, nl, l, 0, 0);
        });
        detail::flag_convergence(e);
        out.push_back(e);
    }
    return out;
}

/// C(v, w; lag) = E[v w o T^lag] - E[v] E[w] under the physical measure.
inline Estimate correlation(Observable const& v, Observable const& w,
                            MapDescriptor const& map, std::size_t lag, std::size_t samples,
                            SamplerConfig const& cfg, CorrelationOptions const& opt = {})
{
    return autocorrelation(v, w, map, {lag}, samples, cfg, opt).front();
}

struct GreenKuboResult
{
    Eigen::MatrixXd sigma;     ///< c0 + drift_e + drift_e^T
    Eigen::MatrixXd drift_e;   ///< sum over lags >= 1 of E[v (x) v o T^lag]
    Eigen::MatrixXd c0;        ///< lag-0 covariance
    std::size_t max_lag = 0;
    Eigen::MatrixXd stderr_sigma;
    Eigen::MatrixXd stderr_drift;
    /// |Sigma(max_lag) - Sigma(max_lag / 10)|_F / |Sigma(max_lag)|_F.
    double truncation_movement = 0.0;
    std::vector<std::string> warnings;
};

/// Truncated Green-Kubo series for a vector observable v:
///   Sigma = E[v (x) v] + sum_{1 <= l <= L} (E[v (x) v o T^l] + E[v o T^l (x) v])
///   E     = sum_{1 <= l <= L} E[v (x) v o T^l]
/// with v centered by its empirical mean.
inline GreenKuboResult green_kubo(Observable const& v, MapDescriptor const& map,
                                  std::size_t max_lag, std::size_t samples,
                                  SamplerConfig const& cfg, CorrelationOptions const& opt = {})
{
    if (max_lag < 1) throw std::invalid_argument("green_kubo needs max_lag >= 1");
    std::size_t const d = static_cast<std::size_t>(v.arity());
    std::vector<std::size_t> lags(max_lag + 1);
    for (std::size_t l = 0; l <= max_lag; ++l) lags[l] = l;
    std::size_t const nl = lags.size();
    auto const batches =
        detail::as_batches(detail::lagged_sums(v, v, map, lags, samples, cfg, opt.segments));

    std::vector<double> totals(batches.front().size(), 0.0);
    for (std::size_t j = 0; j < totals.size(); ++j) {
        CompensatedSum s;
        for (auto const& b : batches) s += b[j];
        totals[j] = s.value();
    }

    auto partial = [&](std::span<double const> t, std::size_t upto, Eigen::MatrixXd& c0,
                       Eigen::MatrixXd& e) {
        c0.setZero(d, d);
        e.setZero(d, d);
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                c0(i, j) = detail::lagged_cov(t, d, d, nl, 0, i, j);
                CompensatedSum s;
                for (std::size_t l = 1; l <= upto; ++l) {
                    s += detail::lagged_cov(t, d, d, nl, l, i, j);
                }
                e(i, j) = s.value();
            }
        }
    };

    GreenKuboResult r;
    r.max_lag = max_lag;
    partial(totals, max_lag, r.c0, r.drift_e);
    r.sigma = r.c0 + r.drift_e + r.drift_e.transpose();

    Eigen::MatrixXd c0_short, e_short;
    partial(totals, max_lag / 10, c0_short, e_short);
    Eigen::MatrixXd const sigma_short = c0_short + e_short + e_short.transpose();
    double const norm = r.sigma.norm();
    r.truncation_movement = norm > 0.0 ? (r.sigma - sigma_short).norm() / norm : 0.0;
    if (r.truncation_movement > 0.05) {
        r.warnings.push_back("Green-Kubo partial sums moved by "
                             + std::to_string(100.0 * r.truncation_movement)
                             + "% over the last decade of lags; increase max_lag");
    }

    r.stderr_sigma.setZero(d, d);
    r.stderr_drift.setZero(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            r.stderr_drift(i, j) =
                jackknife(batches, [&](std::span<double const> t, double) {
                    CompensatedSum s;
                    for (std::size_t l = 1; l <= max_lag; ++l) {
                        s += detail::lagged_cov(t, d, d, nl, l, i, j);
                    }
                    return s.value();
                }).std_error;
            r.stderr_sigma(i, j) =
                jackknife(batches, [&](std::span<double const> t, double) {
                    CompensatedSum s;
                    s += detail::lagged_cov(t, d, d, nl, 0, i, j);
                    for (std::size_t l = 1; l <= max_lag; ++l) {
                        s += detail::lagged_cov(t, d, d, nl, l, i, j);
                        s += detail::lagged_cov(t, d, d, nl, l, j, i);
                    }
                    return s.value();
                }).std_error;
        }
    }
    return r;
}

struct MomentGrowth
{
    std::vector<std::size_t> k_list;
    std::vector<double> birkhoff_norms;  ///< L^{2 gamma} norms of sum_{r<k} v o T^r
    std::vector<double> iterated_norms;  ///< L^{gamma} norms of sum_{r<s<k} v o T^r v o T^s
    DecayFit birkhoff;                   ///< expected growth exponent 1/2
    DecayFit iterated;                   ///< expected growth exponent 1
};

namespace detail {

// (mean |x|^q)^{1/q} after clipping |x| at its 99.9th percentile.
inline double stabilized_power_mean(std::vector<double> xs, double q)
{
    for (double& x : xs) x = std::abs(x);
    std::vector<double> sorted = xs;
    std::sort(sorted.begin(), sorted.end());
    double const cap = sorted[std::min(sorted.size() - 1,
                                       static_cast<std::size_t>(0.999 * double(sorted.size())))];
    CompensatedSum s;
    for (double x : xs) s += std::pow(std::min(x, cap), q);
    return std::pow(s.value() / double(xs.size()), 1.0 / q);
}

}  // namespace detail

/// Growth of Birkhoff sums in L^{2 gamma} and iterated sums in L^{gamma}
/// along k_list, with log-log growth fits. Each trial is an independent
/// physical orbit; v is centered by the pooled empirical mean.
inline MomentGrowth moment_growth(Observable const& v, MapDescriptor const& map,
                                  std::vector<std::size_t> const& k_list, double gamma,
                                  std::size_t samples, SamplerConfig const& cfg)
{
    if (v.arity() != 1) throw std::invalid_argument("moment_growth needs a scalar observable");
    if (k_list.size() < 3) throw std::invalid_argument("moment_growth needs >= 3 values of k");
    if (!std::is_sorted(k_list.begin(), k_list.end())
        || std::adjacent_find(k_list.begin(), k_list.end()) != k_list.end() || k_list[0] < 1) {
        throw std::invalid_argument("moment_growth needs a strictly increasing positive k_list");
    }
    if (!(gamma > 1.0)) throw std::invalid_argument("moment_growth needs gamma > 1");
    if (samples < 2) throw std::invalid_argument("moment_growth needs >= 2 samples");
    std::size_t const nk = k_list.size();
    std::size_t const kmax = k_list.back();
    // Per trial: S_k and raw iterated sum II_k for each k.
    std::vector<double> s_raw(samples * nk), ii_raw(samples * nk);
    parallel_for(samples, cfg.workers, [&](std::size_t trial) {
        Orbit orbit = physical_orbit(map, cfg, trial);
        double s = 0.0, ii = 0.0;
        std::size_t next = 0;
        for (std::size_t r = 0; r < kmax; ++r) {
            double const x = v.scalar_value(orbit.point());
            ii += s * x;
            s += x;
            orbit.advance();
            if (r + 1 == k_list[next]) {
                s_raw[trial * nk + next] = s;
                ii_raw[trial * nk + next] = ii;
                ++next;
            }
        }
    });
    // Pooled mean from the longest window of every trial.
    CompensatedSum total;
    for (std::size_t t = 0; t < samples; ++t) total += s_raw[t * nk + nk - 1];
    double const m = total.value() / (double(samples) * double(kmax));

    MomentGrowth out;
    out.k_list = k_list;
    std::vector<double> lags;
    for (std::size_t i = 0; i < nk; ++i) {
        double const k = double(k_list[i]);
        std::vector<double> sc(samples), ic(samples);
        for (std::size_t t = 0; t < samples; ++t) {
            double const s = s_raw[t * nk + i];
            sc[t] = s - k * m;
            // sum_{r<s<k} (v_r - m)(v_s - m) = II - m (k-1) S + m^2 k (k-1) / 2
            ic[t] = ii_raw[t * nk + i] - m * (k - 1.0) * s + m * m * k * (k - 1.0) / 2.0;
        }
        out.birkhoff_norms.push_back(detail::stabilized_power_mean(sc, 2.0 * gamma));
        out.iterated_norms.push_back(detail::stabilized_power_mean(ic, gamma));
        lags.push_back(k);
    }
    out.birkhoff = decay_fit(lags, out.birkhoff_norms);
    out.iterated = decay_fit(lags, out.iterated_norms);
    auto all_zero = [](std::vector<double> const& xs) {
        return std::all_of(xs.begin(), xs.end(), [](double x) { return x <= decay_floor; });
    };
    if (all_zero(out.birkhoff_norms)) out.birkhoff.degenerate = true;
    if (all_zero(out.iterated_norms)) out.iterated.degenerate = true;
    return out;
}

struct FcbOptions
{
    std::size_t segments = 64;
};

/// Stream offset for the independent second draw of the split integral.
inline constexpr std::uint64_t split_stream_offset = 0x5851f42d4c957f2dULL;

/// Left-hand side of the functional correlation bound for product-form
///   G(x_0, ..., x_{q-1}) = prod_i v_i(x_i):
///   | E[prod_i v_i(T^{k_i} x)]
///     - E[prod_{i<p} v_i(T^{k_i} x0) prod_{i>=p} v_i(T^{k_i} x1)] |
/// with x, x0, x1 drawn from the physical measure (x1 = x, x0 independent).
inline Estimate fcb_probe(std::vector<Observable> const& factors,
                          std::vector<std::size_t> const& k_vec, std::size_t p,
                          MapDescriptor const& map, std::size_t samples,
                          SamplerConfig const& cfg, FcbOptions const& opt = {})
{
    std::size_t const q = factors.size();
    if (q == 0 || k_vec.size() != q) {
        throw std::invalid_argument("fcb_probe needs one lag per factor");
    }
    if (p >= q) throw std::invalid_argument("fcb_probe needs 0 <= p < q");
    if (!std::is_sorted(k_vec.begin(), k_vec.end())) {
        throw std::invalid_argument("fcb_probe needs nondecreasing k_vec");
    }
    for (auto const& f : factors) {
        if (f.arity() != 1) throw std::invalid_argument("fcb_probe factors must be scalar");
    }
    std::size_t const nseg = std::min(opt.segments, samples);
    if (nseg < 2) throw std::invalid_argument("fcb_probe needs at least two samples");
    std::size_t const kmax = k_vec.back();
    SamplerConfig const split_cfg = cfg.with_stream(cfg.stream_id + split_stream_offset);

    // Products along one orbit window: values[i] = v_i(T^{k_i} x).
    auto window = [&](Orbit& orbit, std::vector<double>& values) {
        std::size_t i = 0;
        for (std::size_t t = 0; t <= kmax; ++t) {
            while (i < q && k_vec[i] == t) {
                values[i] = factors[i].scalar_value(orbit.point());
                ++i;
            }
            orbit.advance();
        }
    };

    std::vector<std::vector<double>> batches(nseg);
    parallel_for(nseg, cfg.workers, [&](std::size_t s) {
        Orbit joint = physical_orbit(map, cfg, s);
        Orbit split = physical_orbit(map, split_cfg, s);
        std::vector<double> a(q), b(q);
        CompensatedSum sum_d, sum_d2;
        std::size_t const n = segment_share(samples, nseg, s);
        for (std::size_t k = 0; k < n; ++k) {
            window(joint, a);
            if (p > 0) window(split, b);
            double whole = 1.0, parted = 1.0;
            for (std::size_t i = 0; i < q; ++i) {
                whole *= a[i];
                parted *= i < p ? b[i] : a[i];
            }
            double const diff = whole - parted;
            sum_d += diff;
            sum_d2 += diff * diff;
        }
        batches[s] = {sum_d.value(), sum_d2.value(), double(n)};
    });
    CompensatedSum sd, sd2, sn;
    for (auto const& b : batches) {
        sd += b[0];
        sd2 += b[1];
        sn += b[2];
    }
    double const n = sn.value();
    double const mean = sd.value() / n;
    double const var = std::max(0.0, sd2.value() / n - mean * mean);
    return {std::abs(mean), std::sqrt(var / std::max(1.0, n - 1.0)), true};
}

struct ReturnTimeTail
{
    std::vector<std::size_t> k_list;
    std::vector<double> tail;  ///< fraction of returns with phi > k
    DecayFit fit;              ///< fit of tail against k over the positive entries
    std::size_t events = 0;
    std::size_t exceed_max_k = 0;
    std::vector<std::string> warnings;
};

struct ReturnTimeOptions
{
    std::size_t segments = 64;
};

/// First-return-time tails of the LSV map to Y = [1/2, 1].
///
/// Visits of a long physical orbit to Y sample the invariant measure
/// conditioned on Y; for each visit the time to the next visit is recorded.
/// `samples` is the number of return events.
inline ReturnTimeTail return_time_tail(double alpha, std::vector<std::size_t> const& k_list,
                                       std::size_t samples, SamplerConfig const& cfg,
                                       ReturnTimeOptions const& opt = {})
{
    auto const map = MapDescriptor::lsv(alpha);
    if (k_list.empty() || !std::is_sorted(k_list.begin(), k_list.end())) {
        throw std::invalid_argument("return_time_tail needs a sorted nonempty k_list");
    }
    std::size_t const nseg = std::min(opt.segments, samples);
    if (nseg == 0) throw std::invalid_argument("return_time_tail needs samples");
    std::size_t const cap = k_list.back() + 1;
    // counts[s][m] = number of returns with phi == m (m < cap), last bin phi >= cap.
    std::vector<std::vector<std::uint64_t>> counts(nseg);
    parallel_for(nseg, cfg.workers, [&](std::size_t s) {
        std::vector<std::uint64_t> hist(cap + 1, 0);
        Orbit orbit = physical_orbit(map, cfg, s);
        while (orbit.point().x < 0.5) orbit.advance();
        std::size_t const n = segment_share(samples, nseg, s);
        for (std::size_t e = 0; e < n; ++e) {
            std::size_t phi = 0;
            do {
                orbit.advance();
                ++phi;
            } while (orbit.point().x < 0.5);
            ++hist[std::min(phi, cap)];
        }
        counts[s] = std::move(hist);
    });
    std::vector<std::uint64_t> total(cap + 1, 0);
    for (auto const& h : counts) {
        for (std::size_t m = 0; m <= cap; ++m) total[m] += h[m];
    }
    ReturnTimeTail out;
    out.k_list = k_list;
    out.events = samples;
    // exceed[k] = #returns with phi > k, accumulated from the top.
    std::vector<std::uint64_t> exceed(cap + 1, 0);
    std::uint64_t running = 0;
    for (std::size_t m = cap + 1; m-- > 0;) {
        exceed[m] = running;
        running += total[m];
    }
    std::vector<double> fit_k, fit_v;
    for (std::size_t k : k_list) {
        double const t = double(exceed[std::min(k, cap)]) / double(samples);
        out.tail.push_back(t);
        if (t > 0.0 && k > 0) {
            fit_k.push_back(double(k));
            fit_v.push_back(t);
        }
    }
    out.exceed_max_k = exceed[k_list.back()];
    if (out.exceed_max_k < 100) {
        out.warnings.push_back("only " + std::to_string(out.exceed_max_k)
                               + " returns exceed the largest k; the tail there is noisy");
    }
    if (fit_k.size() >= 3) {
        out.fit = decay_fit(fit_k, fit_v);
    } else {
        out.fit.degenerate = true;
        out.warnings.push_back("fewer than three positive tail values; no fit");
    }
    return out;
}

}  // namespace homog
