// SPDX-License-Identifier: Apache-2.0
//
// Ulam discretization of the transfer operator of an interval map.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "homog/maps.hpp"
#include "homog/observable.hpp"
#include "homog/parallel.hpp"
#include "homog/stats.hpp"

namespace homog {

/// Interval map for the Ulam discretization. Unlike MapDescriptor, the LSV
/// parameter may be any alpha in (0, 1): the map itself is defined there and
/// the decay experiments use alpha = 1/2.
class IntervalMap
{
  public:
    static IntervalMap lsv(double alpha)
    {
        if (!(alpha > 0.0 && alpha < 1.0)) {
            throw std::invalid_argument("LSV parameter must lie in (0, 1) for the transfer operator");
        }
        return IntervalMap{MapKind::LSV, alpha};
    }
    static IntervalMap doubling() { return IntervalMap{MapKind::Doubling, 0.0}; }
    static IntervalMap from(MapDescriptor const& map)
    {
        if (map.kind() == MapKind::LSV) return lsv(map.alpha());
        if (map.kind() == MapKind::Doubling) return doubling();
        throw std::invalid_argument("transfer operator needs an interval map (lsv or doubling)");
    }

    MapKind kind() const noexcept { return kind_; }
    double alpha() const noexcept { return alpha_; }

    double operator()(double x) const
    {
        return kind_ == MapKind::LSV ? lsv_step(x, alpha_) : validation_step({x, 0.0}, kind_).x;
    }

  private:
    IntervalMap(MapKind kind, double alpha) : kind_{kind}, alpha_{alpha} {}
    MapKind kind_;
    double alpha_;
};

/// Row-stochastic sparse matrix on `bins` equal cells of [0, 1]. Densities
/// are row vectors of per-bin masses and evolve as rho <- rho P.
class UlamOperator
{
  public:
    UlamOperator(IntervalMap map, std::size_t bins, std::vector<std::size_t> row_ptr,
                 std::vector<std::size_t> cols, std::vector<double> vals)
        : map_{map}, bins_{bins}, row_ptr_{std::move(row_ptr)}, cols_{std::move(cols)},
          vals_{std::move(vals)}
    {
    }

    IntervalMap const& map() const noexcept { return map_; }
    std::size_t bins() const noexcept { return bins_; }
    std::size_t nonzeros() const noexcept { return vals_.size(); }

    double entry(std::size_t i, std::size_t j) const
    {
        auto const lo = cols_.begin() + std::ptrdiff_t(row_ptr_.at(i));
        auto const hi = cols_.begin() + std::ptrdiff_t(row_ptr_.at(i + 1));
        auto const it = std::lower_bound(lo, hi, j);
        return it != hi && *it == j ? vals_[std::size_t(it - cols_.begin())] : 0.0;
    }

    double row_sum(std::size_t i) const
    {
        CompensatedSum s;
        for (std::size_t e = row_ptr_.at(i); e < row_ptr_.at(i + 1); ++e) s += vals_[e];
        return s.value();
    }

    /// out = in P.
    void apply(std::vector<double> const& in, std::vector<double>& out) const
    {
        out.assign(bins_, 0.0);
        for (std::size_t i = 0; i < bins_; ++i) {
            double const x = in[i];
            if (x == 0.0) continue;
            for (std::size_t e = row_ptr_[i]; e < row_ptr_[i + 1]; ++e) {
                out[cols_[e]] += x * vals_[e];
            }
        }
    }

    Eigen::MatrixXd to_dense() const
    {
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(Eigen::Index(bins_), Eigen::Index(bins_));
        for (std::size_t i = 0; i < bins_; ++i) {
            for (std::size_t e = row_ptr_[i]; e < row_ptr_[i + 1]; ++e) {
                m(Eigen::Index(i), Eigen::Index(cols_[e])) = vals_[e];
            }
        }
        return m;
    }

  private:
    IntervalMap map_;
    std::size_t bins_;
    std::vector<std::size_t> row_ptr_;
    std::vector<std::size_t> cols_;
    std::vector<double> vals_;
};

/// Entry (i, j) is the fraction of the `samples_per_bin` sub-cell midpoints
/// of bin i whose image lies in bin j.
inline UlamOperator ulam_matrix(IntervalMap const& map, std::size_t bins,
                                std::size_t samples_per_bin = 64, unsigned workers = 1)
{
    if (bins < 64 || (bins & (bins - 1)) != 0) {
        throw std::invalid_argument("bins must be a power of two >= 64");
    }
    if (samples_per_bin < 1) throw std::invalid_argument("samples_per_bin must be >= 1");
    std::vector<std::vector<std::size_t>> targets(bins);
    parallel_for(bins, workers, [&](std::size_t i) {
        auto& t = targets[i];
        t.reserve(samples_per_bin);
        for (std::size_t s = 0; s < samples_per_bin; ++s) {
            double const x = (double(i) + (double(s) + 0.5) / double(samples_per_bin)) / double(bins);
            double const y = map(x);
            t.push_back(std::min(bins - 1, static_cast<std::size_t>(y * double(bins))));
        }
        std::sort(t.begin(), t.end());
    });
    std::vector<std::size_t> row_ptr{0}, cols;
    std::vector<double> vals;
    double const w = 1.0 / double(samples_per_bin);
    for (auto const& t : targets) {
        for (std::size_t a = 0; a < t.size();) {
            std::size_t b = a;
            while (b < t.size() && t[b] == t[a]) ++b;
            cols.push_back(t[a]);
            vals.push_back(double(b - a) * w);
            a = b;
        }
        row_ptr.push_back(cols.size());
    }
    return UlamOperator{map, bins, std::move(row_ptr), std::move(cols), std::move(vals)};
}

inline UlamOperator ulam_matrix(MapDescriptor const& map, std::size_t bins,
                                std::size_t samples_per_bin = 64, unsigned workers = 1)
{
    return ulam_matrix(IntervalMap::from(map), bins, samples_per_bin, workers);
}

inline constexpr std::size_t max_power_iterations = 100'000;

/// Fixed point of rho <- rho P by power iteration from the uniform vector,
/// stopping when the l1 change drops below `tol`. Per-bin masses summing to 1.
inline std::vector<double> invariant_density(UlamOperator const& op, double tol = 1e-12)
{
    std::size_t const nb = op.bins();
    std::vector<double> rho(nb, 1.0 / double(nb)), next;
    for (std::size_t it = 0; it < max_power_iterations; ++it) {
        op.apply(rho, next);
        CompensatedSum total;
        for (double x : next) total += x;
        double const z = total.value();
        double diff = 0.0;
        for (std::size_t j = 0; j < nb; ++j) {
            next[j] /= z;
            diff += std::abs(next[j] - rho[j]);
        }
        rho.swap(next);
        if (diff < tol) return rho;
    }
    throw std::runtime_error("invariant_density did not converge in "
                             + std::to_string(max_power_iterations) + " iterations");
}

struct TransferDecay
{
    std::vector<double> deviation;  ///< deviation[k-1] for k = 1..k_max
    double mean = 0.0;              ///< integral of the binned v against rho
    DecayFit fit;                   ///< over k in [k_max/10, k_max]
};

/// Iterates the discretized operator on the bin-midpoint values of v
/// (weighted by rho) and records, for each k, the sup over bins in [1/2, 1]
/// of |L^k v - integral of v|.
inline TransferDecay transfer_decay(UlamOperator const& op, std::vector<double> const& rho,
                                    Observable const& v, std::size_t k_max)
{
    if (k_max < 10) throw std::invalid_argument("transfer_decay needs k_max >= 10");
    if (v.arity() != 1) throw std::invalid_argument("transfer_decay needs a scalar observable");
    std::size_t const nb = op.bins();
    if (rho.size() != nb) throw std::invalid_argument("density has the wrong size");
    std::vector<double> mass(nb), next;
    CompensatedSum mean;
    for (std::size_t i = 0; i < nb; ++i) {
        double const vi = v.scalar_value({(double(i) + 0.5) / double(nb), 0.0});
        mass[i] = vi * rho[i];
        mean += mass[i];
    }
    TransferDecay out;
    out.mean = mean.value();
    for (std::size_t k = 1; k <= k_max; ++k) {
        op.apply(mass, next);
        mass.swap(next);
        double dev = 0.0;
        for (std::size_t j = nb / 2; j < nb; ++j) {
            if (rho[j] > 0.0) dev = std::max(dev, std::abs(mass[j] / rho[j] - out.mean));
        }
        out.deviation.push_back(dev);
    }
    std::vector<double> ks, ds;
    for (std::size_t k = std::max<std::size_t>(1, k_max / 10); k <= k_max; ++k) {
        ks.push_back(double(k));
        ds.push_back(out.deviation[k - 1]);
    }
    out.fit = decay_fit(ks, ds);
    return out;
}

}  // namespace homog
