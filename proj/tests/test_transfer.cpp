// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "homog/sampling.hpp"
#include "homog/transfer.hpp"

using namespace homog;

TEST(Transfer, RejectsBadBins)
{
    EXPECT_THROW(ulam_matrix(IntervalMap::doubling(), 32), std::invalid_argument);
    EXPECT_THROW(ulam_matrix(IntervalMap::doubling(), 96), std::invalid_argument);
    EXPECT_THROW(IntervalMap::lsv(1.0), std::invalid_argument);
    EXPECT_THROW(IntervalMap::from(MapDescriptor::cat_map()), std::invalid_argument);
    EXPECT_NO_THROW(IntervalMap::lsv(0.5));
}

TEST(Transfer, DoublingRowsSplitEvenly)
{
    auto const op = ulam_matrix(IntervalMap::doubling(), 64);
    // Bin i = [i/64, (i+1)/64) maps onto bins 2i mod 64 and 2i+1 mod 64.
    for (std::size_t i = 0; i < 64; ++i) {
        EXPECT_DOUBLE_EQ(op.entry(i, (2 * i) % 64), 0.5);
        EXPECT_DOUBLE_EQ(op.entry(i, (2 * i + 1) % 64), 0.5);
    }
    EXPECT_EQ(op.nonzeros(), 128u);
    EXPECT_EQ(op.entry(0, 5), 0.0);
}

TEST(Transfer, RowsAreStochastic)
{
    for (double a : {0.2, 0.5, 0.8}) {
        auto const op = ulam_matrix(IntervalMap::lsv(a), 256);
        auto const m = op.to_dense();
        EXPECT_GE(m.minCoeff(), 0.0);
        for (std::size_t i = 0; i < op.bins(); ++i) EXPECT_NEAR(op.row_sum(i), 1.0, 1e-12);
        Eigen::MatrixXd p = m;
        for (int k = 1; k < 10; ++k) p = p * m;
        EXPECT_LT((p.rowwise().sum().array() - 1.0).abs().maxCoeff(), 10 * 1e-12);
    }
}

TEST(Transfer, LsvLastBinFeedsTopBins)
{
    std::size_t const nb = 64;
    auto const op = ulam_matrix(IntervalMap::lsv(0.4), nb);
    // x in [1 - 1/nb, 1) maps under 2x - 1 into [1 - 2/nb, 1).
    EXPECT_GT(op.entry(nb - 1, nb - 2), 0.0);
    EXPECT_GT(op.entry(nb - 1, nb - 1), 0.0);
}

TEST(Transfer, DoublingDensityIsUniform)
{
    auto const op = ulam_matrix(IntervalMap::doubling(), 1024);
    auto const rho = invariant_density(op);
    for (double r : rho) EXPECT_NEAR(r, 1.0 / 1024.0, 1e-10);
}

TEST(Transfer, LsvDensityIsFixedPoint)
{
    auto const op = ulam_matrix(IntervalMap::lsv(0.4), 1024);
    double const tol = 1e-12;
    auto const rho = invariant_density(op, tol);
    EXPECT_NEAR(std::accumulate(rho.begin(), rho.end(), 0.0), 1.0, 1e-12);
    EXPECT_GT(rho.front(), rho.back());
    for (double r : rho) EXPECT_GE(r, 0.0);
    std::vector<double> next;
    op.apply(rho, next);
    double diff = 0.0;
    for (std::size_t i = 0; i < rho.size(); ++i) diff += std::abs(next[i] - rho[i]);
    EXPECT_LE(diff, 2.0 * tol);
}

TEST(Transfer, LsvDensityMatchesOrbitHistogram)
{
    std::size_t const nb = 64;
    auto const op = ulam_matrix(IntervalMap::lsv(0.4), nb);
    auto const rho = invariant_density(op);
    SamplerConfig cfg;
    cfg.root_seed = 61;
    Orbit orbit = physical_orbit(MapDescriptor::lsv(0.4), cfg, 0);
    std::size_t const len = 4'000'000;
    std::vector<double> hist(nb, 0.0);
    for (std::size_t k = 0; k < len; ++k) {
        hist[std::min(nb - 1, std::size_t(orbit.point().x * double(nb)))] += 1.0 / double(len);
        orbit.advance();
    }
    // Coarse agreement on the right half, where the density is smooth.
    for (std::size_t i = nb / 2; i < nb; ++i) EXPECT_NEAR(rho[i], hist[i], 0.15 * hist[i]);
    EXPECT_GT(hist.front(), hist.back());
}

TEST(Transfer, ConstantHasNoDeviation)
{
    auto const op = ulam_matrix(IntervalMap::lsv(0.5), 256);
    auto const rho = invariant_density(op);
    auto const d = transfer_decay(op, rho, observables::constant(2.0), 20);
    for (double x : d.deviation) EXPECT_LT(x, 1e-9);
    EXPECT_NEAR(d.mean, 2.0, 1e-12);
}

TEST(Transfer, DoublingCosineMixes)
{
    auto const op = ulam_matrix(IntervalMap::doubling(), 4096);
    auto const rho = invariant_density(op);
    auto const d = transfer_decay(op, rho, observables::cos2pix(), 30);
    EXPECT_LT(d.deviation[29], 1e-6);
}

TEST(Transfer, DecayMatchesDenseMatrixPowers)
{
    std::size_t const nb = 256;
    auto const op = ulam_matrix(IntervalMap::lsv(0.5), nb);
    auto const rho = invariant_density(op);
    auto const v = observables::coordinate();
    auto const d = transfer_decay(op, rho, v, 20);
    Eigen::MatrixXd const p = op.to_dense();
    Eigen::RowVectorXd mass{Eigen::Index(nb)};
    double mean = 0.0;
    for (std::size_t i = 0; i < nb; ++i) {
        mass(Eigen::Index(i)) = (double(i) + 0.5) / double(nb) * rho[i];
        mean += mass(Eigen::Index(i));
    }
    for (std::size_t k = 1; k <= 20; ++k) {
        mass = mass * p;
        double dev = 0.0;
        for (std::size_t j = nb / 2; j < nb; ++j) {
            dev = std::max(dev, std::abs(mass(Eigen::Index(j)) / rho[j] - mean));
        }
        EXPECT_NEAR(d.deviation[k - 1], dev, 1e-12);
        // The discrete operator preserves the weighted mean.
        EXPECT_NEAR(mass.sum(), mean, 1e-10);
    }
}

TEST(Transfer, DecayRejectsBadArguments)
{
    auto const op = ulam_matrix(IntervalMap::doubling(), 64);
    auto const rho = invariant_density(op);
    EXPECT_THROW(transfer_decay(op, rho, observables::coordinate(), 5), std::invalid_argument);
    std::vector<double> short_rho(10, 0.1);
    EXPECT_THROW(transfer_decay(op, short_rho, observables::coordinate(), 20),
                 std::invalid_argument);
}
