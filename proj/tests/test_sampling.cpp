// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "homog/maps.hpp"
#include "homog/observable.hpp"
#include "homog/sampling.hpp"
#include "homog/stats.hpp"

using namespace homog;

namespace {

SamplerConfig config(std::uint64_t seed = 11, std::uint64_t burn_in = 10'000)
{
    SamplerConfig cfg;
    cfg.root_seed = seed;
    cfg.stream_id = 1;
    cfg.burn_in = burn_in;
    return cfg;
}

}  // namespace

TEST(Sampling, RejectsShortBurnIn)
{
    EXPECT_THROW(sample_physical(MapDescriptor::doubling(), config(1, 999)),
                 std::invalid_argument);
}

TEST(Sampling, SameConfigSameSample)
{
    auto const map = MapDescriptor::baker(0.3);
    auto const cfg = config();
    EXPECT_EQ(sample_physical(map, cfg, 4), sample_physical(map, cfg, 4));
    EXPECT_NE(sample_physical(map, cfg, 4), sample_physical(map, cfg, 5));
    EXPECT_NE(sample_physical(map, cfg, 4), sample_physical(map, cfg.with_stream(2), 4));
}

TEST(Sampling, DoublingSamplesInUnitInterval)
{
    auto const cfg = config(3, 1000);
    for (std::size_t i = 0; i < 1000; ++i) {
        Point const p = sample_physical(MapDescriptor::doubling(), cfg, i);
        ASSERT_GE(p.x, 0.0);
        ASSERT_LT(p.x, 1.0);
    }
}

TEST(Sampling, DoublingMeanIsHalf)
{
    auto const m = birkhoff_mean(observables::coordinate(), MapDescriptor::doubling(),
                                 1'000'000, config());
    EXPECT_NEAR(m[0].value, 0.5, 0.002);
}

TEST(Sampling, DoublingBurnInSamplesAreUniform)
{
    auto const cfg = config(5, 1000);
    std::vector<double> xs(100'000);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        xs[i] = sample_physical(MapDescriptor::doubling(), cfg, i).x;
    }
    std::sort(xs.begin(), xs.end());
    EXPECT_LT(ks_uniform(xs), 0.01);
}

TEST(Sampling, LsvMassNearZeroExceedsLebesgue)
{
    auto const map = MapDescriptor::lsv(0.4);
    auto const cfg = config(9);
    std::size_t const m = 4000;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < m; ++i) hits += sample_physical(map, cfg, i).x < 0.1;
    double const burned = double(hits) / double(m);

    // Oracle: visit frequency of [0, 0.1] along one long orbit.
    Orbit orbit = physical_orbit(map, cfg.with_stream(77), 0);
    std::size_t const len = 2'000'000;
    std::size_t visits = 0;
    for (std::size_t k = 0; k < len; ++k) {
        visits += orbit.point().x < 0.1;
        orbit.advance();
    }
    double const freq = double(visits) / double(len);
    EXPECT_GT(freq, 0.1);
    EXPECT_GT(burned, 0.1);
    EXPECT_NEAR(burned, freq, 4.0 * std::sqrt(freq * (1 - freq) / double(m)) + 0.02);
}

TEST(Sampling, BirkhoffMeanIndependentOfWorkers)
{
    auto cfg = config();
    auto const map = MapDescriptor::lsv(0.3);
    auto const a = birkhoff_mean(observables::coordinate(), map, 100'000, cfg);
    cfg.workers = 4;
    auto const b = birkhoff_mean(observables::coordinate(), map, 100'000, cfg);
    EXPECT_EQ(a[0].value, b[0].value);
    EXPECT_EQ(a[0].std_error, b[0].std_error);
}

TEST(Sampling, CenterObservableHasZeroMean)
{
    auto const map = MapDescriptor::lsv(0.3);
    auto const cfg = config();
    auto const v = center_observable(observables::coordinate(), map, 100'000, cfg);
    EXPECT_TRUE(v.mean_zero());
    EXPECT_NEAR(birkhoff_mean(v, map, 100'000, cfg)[0].value, 0.0, 1e-12);
}

TEST(Sampling, FibreGridHasEndpointsAndMidpoints)
{
    auto const z = fibre_grid(4);
    std::vector<double> const want{0.0, 0.125, 0.375, 0.625, 0.875, 1.0};
    EXPECT_EQ(z, want);
}

TEST(Sampling, LiftOfConstantIsConstant)
{
    auto const e = lift_integral_estimate(observables::constant(0.7), MapDescriptor::baker(0.3),
                                          5, 2000, 8, config());
    EXPECT_DOUBLE_EQ(e.value, 0.7);
}

TEST(Sampling, LiftOfBaseFunctionIsBaseEstimate)
{
    double const alpha = 0.3;
    std::size_t const m = 7;
    auto const psi = [](double x) { return std::sin(3.0 * x) + x * x; };
    auto const phi = Observable::scalar("psi", [psi](Point const& p) { return psi(p.x); });
    auto const lifted = lift_integral_estimate(phi, MapDescriptor::baker(alpha), m, 20'000, 8,
                                               config());
    auto const pushed = Observable::scalar("psi o T^m", [psi, alpha, m](Point const& p) {
        double x = p.x;
        for (std::size_t i = 0; i < m; ++i) x = lsv_step(x, alpha);
        return psi(x);
    });
    auto const base = birkhoff_mean(pushed, MapDescriptor::lsv(alpha), 20'000, config());
    EXPECT_NEAR(lifted.value, base[0].value, 1e-12);
}

TEST(Sampling, LiftOfFibreCoordinateSettles)
{
    auto const map = MapDescriptor::baker(0.3);
    auto const z = observables::coordinate(1);
    std::vector<double> est;
    for (std::size_t m : {5, 10, 20}) {
        est.push_back(lift_integral_estimate(z, map, m, 20'000, 16, config()).value);
    }
    EXPECT_GT(std::abs(est[0] - est[1]), std::abs(est[1] - est[2]));
}

TEST(Sampling, LiftRejectsBadArguments)
{
    auto const z = observables::coordinate(1);
    EXPECT_THROW(lift_integral_estimate(z, MapDescriptor::lsv(0.3), 5, 100, 8, config()),
                 std::invalid_argument);
    EXPECT_THROW(lift_integral_estimate(z, MapDescriptor::baker(0.3), 0, 100, 8, config()),
                 std::invalid_argument);
    EXPECT_THROW(lift_integral_estimate(z, MapDescriptor::baker(0.3), 5, 100, 1, config()),
                 std::invalid_argument);
}

TEST(Sampling, StabilityProbeOfOneIsOne)
{
    auto const e = stability_probe(observables::constant(1.0), {0.3, 0.35, 0.4}, 10'000, config());
    for (auto const& x : e) EXPECT_EQ(x.value, 1.0);
}

TEST(Sampling, StabilityProbeConstantSequence)
{
    auto const e = stability_probe(observables::coordinate(), {0.3, 0.3, 0.3}, 50'000, config());
    for (auto const& x : e) {
        double const se = std::sqrt(2.0) * x.std_error;
        EXPECT_NEAR(x.value, e[0].value, 3.0 * se + 1e-15);
    }
}

TEST(Sampling, StabilityProbeApproachesLimit)
{
    std::vector<double> alphas;
    for (double n : {8.0, 32.0, 128.0}) alphas.push_back(0.3 + 1.0 / n);
    alphas.push_back(0.3);
    auto const e = stability_probe(observables::coordinate(), alphas, 400'000, config());
    double const first = std::abs(e[0].value - e[3].value);
    double const last = std::abs(e[2].value - e[3].value);
    EXPECT_LT(last, first);
}

TEST(Sampling, A2ProbeTrivialCases)
{
    EXPECT_EQ(a2_probe(3, 0.05, 0.3, 0.3, 2000, 8, config()).value, 0.0);
    EXPECT_EQ(a2_probe(0, 0.05, 0.4, 0.3, 2000, 8, config()).value, 0.0);
    EXPECT_THROW(a2_probe(3, 0.0, 0.4, 0.3, 2000, 8, config()), std::invalid_argument);
}

TEST(Sampling, A2ProbeGrowsWithPerturbation)
{
    double const near = a2_probe(3, 0.05, 0.31, 0.30, 20'000, 16, config()).value;
    double const far = a2_probe(3, 0.05, 0.40, 0.30, 20'000, 16, config()).value;
    EXPECT_LT(near, far);
}
