// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "homog/observable.hpp"
#include "homog/sampling.hpp"
#include "homog/statistics.hpp"
#include "homog/stats.hpp"

using namespace homog;

namespace {

SamplerConfig config(std::uint64_t seed = 21)
{
    SamplerConfig cfg;
    cfg.root_seed = seed;
    cfg.stream_id = 1;
    return cfg;
}

Observable centered_x(MapDescriptor const& map)
{
    return center_observable(observables::coordinate(), map, 1'000'000, config(99));
}

}  // namespace

TEST(DecayFit, ExactPowerLaw)
{
    std::vector<double> lags, vals;
    for (double k = 1; k <= 100; k *= 1.5) {
        lags.push_back(k);
        vals.push_back(std::pow(k, -2.0));
    }
    auto const fit = decay_fit(lags, vals);
    EXPECT_NEAR(fit.exponent, -2.0, 1e-9);
    EXPECT_NEAR(fit.r_squared, 1.0, 1e-12);
    EXPECT_FALSE(fit.degenerate);
}

TEST(DecayFit, ConstantValues)
{
    std::vector<double> lags{1, 2, 4, 8}, vals(4, 0.3);
    EXPECT_NEAR(decay_fit(lags, vals).exponent, 0.0, 1e-12);
}

TEST(DecayFit, NoisyPowerLaw)
{
    CounterRng rng{5};
    std::normal_distribution<double> gauss;
    std::vector<double> lags, vals;
    for (double k = 1; k <= 1000; k *= 1.2) {
        lags.push_back(k);
        vals.push_back(3.0 * std::pow(k, -1.5) * (1.0 + 0.01 * gauss(rng)));
    }
    auto const fit = decay_fit(lags, vals);
    EXPECT_NEAR(fit.exponent, -1.5, 0.05);
    EXPECT_NEAR(std::exp(fit.intercept), 3.0, 0.1);
}

TEST(DecayFit, RejectsBadInput)
{
    std::vector<double> two{1, 2};
    EXPECT_THROW(decay_fit(two, two), std::invalid_argument);
    std::vector<double> lags{0, 1, 2}, vals{1, 1, 1};
    EXPECT_THROW(decay_fit(lags, vals), std::invalid_argument);
}

TEST(Stats, JackknifeOfMeanMatchesBatchMeans)
{
    std::vector<std::vector<double>> batches;
    std::vector<double> means;
    CounterRng rng{3};
    for (int b = 0; b < 20; ++b) {
        double s = 0;
        for (int i = 0; i < 50; ++i) s += rng.uniform();
        batches.push_back({s, 50.0});
        means.push_back(s / 50.0);
    }
    Estimate const e = jackknife(batches, [](std::span<double const> t, double) {
        return t[0] / t[1];
    });
    EXPECT_NEAR(e.value, mean_of(means), 1e-14);
    EXPECT_NEAR(e.std_error, std::sqrt(variance_of(means) / 20.0), 1e-14);
}

TEST(Stats, KolmogorovSmirnov)
{
    std::vector<double> a{0.1, 0.2, 0.3}, b{0.6, 0.7};
    EXPECT_EQ(ks_statistic(a, a), 0.0);
    EXPECT_EQ(ks_statistic(a, b), 1.0);
    EXPECT_NEAR(ks_threshold(100, 100, 0.01), std::sqrt(-0.5 * std::log(0.005)) * 0.1414213562,
                1e-9);
    std::vector<double> grid;
    for (int i = 0; i < 1000; ++i) grid.push_back((i + 0.5) / 1000.0);
    EXPECT_NEAR(ks_uniform(grid), 0.0005, 1e-12);
}

TEST(Stats, LogSpaced)
{
    auto const ks = log_spaced(1, 1000, 4);
    EXPECT_EQ(ks, (std::vector<std::size_t>{1, 10, 100, 1000}));
    auto const dense = log_spaced(1, 3, 10);
    EXPECT_TRUE(std::adjacent_find(dense.begin(), dense.end()) == dense.end());
}

TEST(Correlation, DoublingFourier)
{
    auto const c = observables::cos2pix();
    auto const map = MapDescriptor::doubling();
    auto const est = autocorrelation(c, c, map, {0, 1, 3}, 1'000'000, config());
    EXPECT_NEAR(est[0].value, 0.5, 3.0 * est[0].std_error + 1e-3);
    EXPECT_NEAR(est[1].value, 0.0, 4.0 * est[1].std_error);
    EXPECT_NEAR(est[2].value, 0.0, 4.0 * est[2].std_error);
}

TEST(Correlation, ConstantHasNoCorrelation)
{
    auto const one = observables::constant(1.0);
    auto const e = correlation(one, observables::coordinate(), MapDescriptor::lsv(0.3), 5,
                               100'000, config());
    EXPECT_EQ(e.value, 0.0);
}

TEST(Correlation, LagZeroIsEmpiricalCovariance)
{
    auto const map = MapDescriptor::lsv(0.3);
    auto const v = observables::coordinate();
    auto const w = Observable::scalar("x^2", [](Point const& p) { return p.x * p.x; });
    std::size_t const n = 200'000;
    auto const e = correlation(v, w, map, 0, n, config());

    struct Acc
    {
        double sv = 0, sw = 0, svw = 0;
    };
    auto parts = segment_reduce(map, config(), n, 64, 1, Acc{}, [](Acc& a, Point const& p) {
        a.sv += p.x;
        a.sw += p.x * p.x;
        a.svw += p.x * p.x * p.x;
    });
    double sv = 0, sw = 0, svw = 0;
    for (auto const& a : parts) {
        sv += a.sv;
        sw += a.sw;
        svw += a.svw;
    }
    double const cov = svw / double(n) - (sv / double(n)) * (sw / double(n));
    EXPECT_NEAR(e.value, cov, 1e-12);
}

TEST(Correlation, WindowMustCoverLags)
{
    auto const c = observables::cos2pix();
    EXPECT_THROW(correlation(c, c, MapDescriptor::doubling(), 100, 1000, config()),
                 std::invalid_argument);
}

TEST(GreenKubo, DoublingCosine)
{
    auto const r = green_kubo(observables::cos2pix(), MapDescriptor::doubling(), 50, 1'000'000,
                              config());
    EXPECT_NEAR(r.sigma(0, 0), 0.5, 0.02);
    EXPECT_NEAR(r.drift_e(0, 0), 0.0, 0.02);
    EXPECT_NEAR((r.sigma - r.c0 - r.drift_e - r.drift_e.transpose()).norm(), 0.0, 1e-14);
}

TEST(GreenKubo, ZeroObservable)
{
    auto const r = green_kubo(observables::zero(), MapDescriptor::doubling(), 10, 10'000,
                              config());
    EXPECT_EQ(r.sigma(0, 0), 0.0);
    EXPECT_EQ(r.drift_e(0, 0), 0.0);
}

TEST(GreenKubo, FourierPairIsDiagonal)
{
    auto const v = Observable::stack({observables::cos2pix(), observables::sin2pix()});
    auto const r = green_kubo(v, MapDescriptor::doubling(), 50, 1'000'000, config());
    EXPECT_NEAR(r.sigma(0, 0), 0.5, 0.02);
    EXPECT_NEAR(r.sigma(1, 1), 0.5, 0.02);
    EXPECT_NEAR(r.sigma(0, 1), 0.0, 0.02);
    EXPECT_NEAR(r.sigma(1, 0), 0.0, 0.02);
    EXPECT_NEAR((r.sigma - r.sigma.transpose()).norm(), 0.0, 1e-12);
}

TEST(GreenKubo, SlowDecayTriggersTruncationWarning)
{
    auto const map = MapDescriptor::lsv(0.45);
    auto const r = green_kubo(centered_x(map), map, 20, 200'000, config());
    EXPECT_GT(r.truncation_movement, 0.05);
    EXPECT_FALSE(r.warnings.empty());
}

TEST(MomentGrowth, DoublingCosineScaling)
{
    std::vector<std::size_t> ks;
    for (std::size_t k = 256; k <= 16384; k *= 2) ks.push_back(k);
    auto const g = moment_growth(observables::cos2pix(), MapDescriptor::doubling(), ks, 1.5,
                                 2000, config());
    EXPECT_NEAR(g.birkhoff.exponent, 0.5, 0.1);
    EXPECT_NEAR(g.iterated.exponent, 1.0, 0.15);
}

TEST(MomentGrowth, ZeroObservableIsDegenerate)
{
    auto const g = moment_growth(observables::zero(), MapDescriptor::doubling(), {4, 8, 16},
                                 1.5, 10, config());
    for (double x : g.birkhoff_norms) EXPECT_EQ(x, 0.0);
    for (double x : g.iterated_norms) EXPECT_EQ(x, 0.0);
    EXPECT_TRUE(g.birkhoff.degenerate);
    EXPECT_TRUE(g.iterated.degenerate);
}

TEST(MomentGrowth, RejectsBadArguments)
{
    auto const c = observables::cos2pix();
    auto const map = MapDescriptor::doubling();
    EXPECT_THROW(moment_growth(c, map, {4, 8}, 1.5, 10, config()), std::invalid_argument);
    EXPECT_THROW(moment_growth(c, map, {8, 4, 16}, 1.5, 10, config()), std::invalid_argument);
    EXPECT_THROW(moment_growth(c, map, {4, 8, 16}, 1.0, 10, config()), std::invalid_argument);
}

TEST(Fcb, EmptyFirstBlockIsZero)
{
    auto const e = fcb_probe({observables::cos2pix()}, {3}, 0, MapDescriptor::doubling(),
                             10'000, config());
    EXPECT_EQ(e.value, 0.0);
}

TEST(Fcb, TwoFactorsReduceToCorrelation)
{
    auto const map = MapDescriptor::lsv(0.3);
    auto const v = observables::coordinate();
    std::size_t const lag = 2;
    auto const f = fcb_probe({v, v}, {0, lag}, 1, map, 400'000, config());
    auto const c = correlation(v, v, map, lag, 400'000, config(22));
    double const se = std::hypot(f.std_error, c.std_error);
    EXPECT_NEAR(f.value, std::abs(c.value), 3.0 * se);
}

TEST(Fcb, DoublingCosineProductsVanish)
{
    auto const c = observables::cos2pix();
    for (std::size_t g : {2, 4, 8, 16}) {
        auto const e = fcb_probe({c, c, c}, {0, g, 2 * g}, 1, MapDescriptor::doubling(),
                                 200'000, config());
        EXPECT_LT(e.value, 4.0 * e.std_error + 1e-12) << "gap " << g;
    }
}

TEST(Fcb, LsvDecreasesWithGap)
{
    auto const map = MapDescriptor::lsv(0.3);
    auto const v = centered_x(map);
    double prev = 1e300;
    for (std::size_t g : {1, 4, 16}) {
        auto const e = fcb_probe({v, v}, {0, g}, 1, map, 1'000'000, config());
        EXPECT_LT(e.value, prev) << "gap " << g;
        prev = e.value;
    }
}

TEST(Fcb, RejectsBadArguments)
{
    auto const c = observables::cos2pix();
    auto const map = MapDescriptor::doubling();
    EXPECT_THROW(fcb_probe({c, c}, {0}, 1, map, 100, config()), std::invalid_argument);
    EXPECT_THROW(fcb_probe({c, c}, {0, 1}, 2, map, 100, config()), std::invalid_argument);
    EXPECT_THROW(fcb_probe({c, c}, {3, 1}, 1, map, 100, config()), std::invalid_argument);
}

TEST(ReturnTimes, FirstTailMatchesUpperQuarter)
{
    double const alpha = 0.4;
    auto const r = return_time_tail(alpha, {1, 2, 3}, 1'000'000, config());
    // Oracle: among visits of a long orbit to [1/2, 1], the share outside [3/4, 1].
    Orbit orbit = physical_orbit(MapDescriptor::lsv(alpha), config(55), 0);
    std::size_t visits = 0, upper = 0;
    for (std::size_t k = 0; k < 4'000'000; ++k) {
        double const x = orbit.point().x;
        if (x >= 0.5) {
            ++visits;
            upper += x >= 0.75;
        }
        orbit.advance();
    }
    double const want = 1.0 - double(upper) / double(visits);
    EXPECT_NEAR(r.tail[0], want, 0.005);
    EXPECT_GE(r.tail[0], r.tail[1]);
    EXPECT_GE(r.tail[1], r.tail[2]);
}

TEST(ReturnTimes, TailsNonincreasing)
{
    auto const r = return_time_tail(0.3, log_spaced(1, 200, 15), 200'000, config());
    for (std::size_t i = 1; i < r.tail.size(); ++i) EXPECT_LE(r.tail[i], r.tail[i - 1]);
    EXPECT_EQ(r.events, 200'000u);
}

namespace {

// Returns from [1/2, 1] take more than k steps exactly on [1/2, (1 + z_{k-1}) / 2),
// where z_0 = 1/2 and z_j is the left preimage of z_{j-1}.
std::vector<double> preimage_chain(double alpha, std::size_t len)
{
    std::vector<double> z{0.5};
    while (z.size() < len) z.push_back(lsv_inverse_branch(z.back(), alpha, Branch::Left));
    return z;
}

double chain_slope(std::vector<double> const& z, std::size_t k1, std::size_t k2)
{
    return -(std::log(z[k2 - 1]) - std::log(z[k1 - 1])) / (std::log(double(k2)) - std::log(double(k1)));
}

}  // namespace

TEST(ReturnTimes, ExponentForQuarter)
{
    // Far out the tail exponent is 1/alpha = 4; on k in [4, 40], the range a
    // few million events resolve, the exact preimage chain is still steepening.
    auto const z = preimage_chain(0.25, 1000);
    EXPECT_NEAR(chain_slope(z, 100, 1000), 4.0, 0.6);
    auto const r = return_time_tail(0.25, log_spaced(4, 40, 10), 4'000'000, config());
    EXPECT_NEAR(-r.fit.exponent, chain_slope(z, 4, 40), 0.15);
}

TEST(ReturnTimes, ExponentForPointFour)
{
    auto const z = preimage_chain(0.4, 1000);
    EXPECT_NEAR(chain_slope(z, 10, 1000), 2.5, 0.3);
    auto const r = return_time_tail(0.4, log_spaced(10, 300, 12), 2'000'000, config());
    EXPECT_NEAR(-r.fit.exponent, 2.5, 0.3);
    EXPECT_NEAR(-r.fit.exponent, chain_slope(z, 10, 300), 0.15);
}

TEST(ReturnTimes, WarnsWhenFewEventsExceedLargestK)
{
    auto const r = return_time_tail(0.25, {10, 100, 1000}, 10'000, config());
    EXPECT_LT(r.exceed_max_k, 100u);
    EXPECT_FALSE(r.warnings.empty());
}
