// SPDX-License-Identifier: Apache-2.0
//
// Initial conditions drawn from physical measures, orbit-segment sampling
// and diagnostics for intermittent Baker families.
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "homog/maps.hpp"
#include "homog/observable.hpp"
#include "homog/parallel.hpp"
#include "homog/rng.hpp"
#include "homog/stats.hpp"

namespace homog {

struct SamplerConfig
{
    std::uint64_t burn_in = 10'000;
    std::uint64_t root_seed = 0;
    std::uint64_t stream_id = 0;
    /// Threads used by estimators. Never changes a result.
    unsigned workers = 1;

    void validate() const
    {
        if (burn_in < 1000) {
            throw std::invalid_argument("burn_in must be at least 1000");
        }
    }

    SamplerConfig with_stream(std::uint64_t stream) const
    {
        SamplerConfig c = *this;
        c.stream_id = stream;
        return c;
    }
};

/// Orbit started at a Lebesgue-random point (seeded by sample `index` of the
/// configured stream) and advanced through the burn-in.
inline Orbit physical_orbit(MapDescriptor const& map, SamplerConfig const& cfg,
                            std::uint64_t index)
{
    cfg.validate();
    CounterRng rng{derive_seed(cfg.root_seed, cfg.stream_id, index)};
    std::uint64_t const digit_key = rng();
    Orbit orbit = Orbit::uniform(map, rng, digit_key);
    orbit.advance(cfg.burn_in);
    return orbit;
}

/// Approximate draw from the physical measure: uniform start plus burn-in.
inline Point sample_physical(MapDescriptor const& map, SamplerConfig const& cfg,
                             std::uint64_t index = 0)
{
    return physical_orbit(map, cfg, index).point();
}

/// Number of samples assigned to segment s when `total` samples are split
/// over `segments` contiguous orbit segments.
inline std::size_t segment_share(std::size_t total, std::size_t segments, std::size_t s)
{
    return total * (s + 1) / segments - total * s / segments;
}

/// Orbit-segment sampling: `segments` independent physical orbits, each
/// contributing consecutive points (every `stride`-th iterate) to `visit`.
///
/// Returns one accumulator per segment, in segment order. `visit(acc, p)`
/// is called for each sampled point; segments run in parallel.
template<class Acc, class Visit>
std::vector<Acc> segment_reduce(MapDescriptor const& map, SamplerConfig const& cfg,
                                std::size_t samples, std::size_t segments,
                                std::size_t stride, Acc const& init, Visit visit)
{
    if (segments == 0 || samples < segments) {
        throw std::invalid_argument("need at least one sample per segment");
    }
    stride = std::max<std::size_t>(1, stride);
    std::vector<Acc> out(segments, init);
    parallel_for(segments, cfg.workers, [&](std::size_t s) {
        Orbit orbit = physical_orbit(map, cfg, s);
        std::size_t const n = segment_share(samples, segments, s);
        Acc& acc = out[s];
        for (std::size_t i = 0; i < n; ++i) {
            visit(acc, orbit.point());
            orbit.advance(stride);
        }
    });
    return out;
}

/// Birkhoff mean of an observable with batch-means standard errors, one
/// entry per component.
inline std::vector<Estimate> birkhoff_mean(Observable const& v, MapDescriptor const& map,
                                           std::size_t samples, SamplerConfig const& cfg,
                                           std::size_t segments = 64)
{
    int const d = v.arity();
    struct Acc
    {
        std::vector<CompensatedSum> sums;
        std::size_t n = 0;
    };
    auto parts = segment_reduce(map, cfg, samples, segments, 1,
                                Acc{std::vector<CompensatedSum>(std::size_t(d)), 0},
                                [&](Acc& a, Point const& p) {
                                    auto const val = v(p);
                                    for (int i = 0; i < d; ++i) a.sums[i] += val[i];
                                    ++a.n;
                                });
    std::vector<Estimate> out;
    for (int i = 0; i < d; ++i) {
        std::vector<std::vector<double>> batches;
        for (auto const& a : parts) {
            batches.push_back({a.sums[i].value(), double(a.n)});
        }
        out.push_back(jackknife(batches, [](std::span<double const> t, double) {
            return t[0] / t[1];
        }));
    }
    return out;
}

/// Observable shifted by its empirical mean under the physical measure.
inline Observable center_observable(Observable const& v, MapDescriptor const& map,
                                    std::size_t samples, SamplerConfig const& cfg)
{
    auto const means = birkhoff_mean(v, map, samples, cfg);
    std::vector<double> shift;
    for (auto const& m : means) shift.push_back(m.value);
    return v.centered(shift);
}

/// Fibre grid used wherever a supremum over z in [0,1] is needed:
/// `interior` evenly spaced cell midpoints plus both endpoints.
inline std::vector<double> fibre_grid(std::size_t interior)
{
    std::vector<double> z;
    z.reserve(interior + 2);
    z.push_back(0.0);
    for (std::size_t i = 0; i < interior; ++i) {
        z.push_back((double(i) + 0.5) / double(interior));
    }
    z.push_back(1.0);
    return z;
}

struct LiftOptions
{
    std::size_t segments = 64;
};

/// Estimates the integral of (phi o T^m)^+ against the base measure of an
/// intermittent Baker map, where (psi)^+(x) = max over the fibre grid of
/// psi(x, z). As m grows this converges to the integral of phi against the
/// lifted invariant measure on the square.
inline Estimate lift_integral_estimate(Observable const& phi, MapDescriptor const& map,
                                       std::size_t m, std::size_t samples,
                                       std::size_t z_grid, SamplerConfig const& cfg,
                                       LiftOptions const& opt = {})
{
    if (map.kind() != MapKind::IntermittentBaker) {
        throw std::invalid_argument("lift_integral_estimate needs an intermittent Baker map");
    }
    if (m < 1) throw std::invalid_argument("lift_integral_estimate needs m >= 1");
    if (z_grid < 2) throw std::invalid_argument("lift_integral_estimate needs z_grid >= 2");
    if (phi.arity() != 1) throw std::invalid_argument("lift_integral_estimate needs a scalar phi");
    auto const zs = fibre_grid(z_grid);
    auto const base = MapDescriptor::lsv(map.alpha());
    double const alpha = map.alpha();
    struct Acc
    {
        CompensatedSum sum;
        double n = 0;
    };
    auto parts = segment_reduce(base, cfg, samples, opt.segments, 1, Acc{},
                                [&](Acc& a, Point const& p) {
                                    double best = -std::numeric_limits<double>::infinity();
                                    for (double z : zs) {
                                        Point q{p.x, z};
                                        for (std::size_t i = 0; i < m; ++i) {
                                            q = detail::baker_raw(q, alpha);
                                        }
                                        best = std::max(best, phi.scalar_value(q));
                                    }
                                    a.sum += best;
                                    a.n += 1;
                                });
    std::vector<std::vector<double>> batches;
    for (auto const& a : parts) batches.push_back({a.sum.value(), a.n});
    return jackknife(batches, [](std::span<double const> t, double) { return t[0] / t[1]; });
}

/// Monte Carlo estimates of the integral of phi against the physical measure
/// of the intermittent Baker map for each parameter in `alphas`. The same
/// seeds are used for every parameter.
inline std::vector<Estimate> stability_probe(Observable const& phi,
                                             std::vector<double> const& alphas,
                                             std::size_t samples, SamplerConfig const& cfg,
                                             std::size_t segments = 64)
{
    if (alphas.empty()) throw std::invalid_argument("stability_probe needs parameters");
    if (phi.arity() != 1) throw std::invalid_argument("stability_probe needs a scalar phi");
    std::vector<Estimate> out;
    for (double a : alphas) {
        out.push_back(birkhoff_mean(phi, MapDescriptor::baker(a), samples, cfg, segments)[0]);
    }
    return out;
}

/// Fraction of base points x (drawn from the physical measure of the LSV map
/// with parameter alpha_n) for which
///   max_z d(T_{alpha_n}^j (x,z), T_{alpha_inf}^j (x,z)) > a,
/// the maximum taken over the fibre grid.
inline Estimate a2_probe(std::size_t j, double a, double alpha_n, double alpha_inf,
                         std::size_t samples, std::size_t z_grid, SamplerConfig const& cfg,
                         std::size_t segments = 64)
{
    if (!(a > 0.0)) throw std::invalid_argument("a2_probe threshold must be positive");
    auto const map_n = MapDescriptor::baker(alpha_n);
    auto const map_inf = MapDescriptor::baker(alpha_inf);
    auto const zs = fibre_grid(z_grid);
    struct Acc
    {
        double hits = 0;
        double n = 0;
    };
    auto parts = segment_reduce(MapDescriptor::lsv(alpha_n), cfg, samples, segments, 1, Acc{},
                                [&](Acc& acc, Point const& p) {
                                    double worst = 0.0;
                                    for (double z : zs) {
                                        Point u{p.x, z};
                                        Point w{p.x, z};
                                        for (std::size_t i = 0; i < j; ++i) {
                                            u = detail::baker_raw(u, map_n.alpha());
                                            w = detail::baker_raw(w, map_inf.alpha());
                                        }
                                        worst = std::max(worst, distance(u, w));
                                    }
                                    acc.hits += worst > a ? 1.0 : 0.0;
                                    acc.n += 1;
                                });
    std::vector<std::vector<double>> batches;
    for (auto const& acc : parts) batches.push_back({acc.hits, acc.n});
    return jackknife(batches, [](std::span<double const> t, double) { return t[0] / t[1]; });
}

}  // namespace homog
