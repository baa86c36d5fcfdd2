// SPDX-License-Identifier: Apache-2.0
//
// Fast maps: the Liverani-Saussol-Vaienti (LSV) intermittent interval map,
// its invertible intermittent Baker extension on the unit square, and two
// exactly solvable calibration maps (doubling map, Arnold cat map).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include "homog/rng.hpp"

namespace homog {

enum class MapKind { LSV, IntermittentBaker, Doubling, CatMap };

inline std::string_view to_string(MapKind kind) noexcept
{
    switch (kind) {
    case MapKind::LSV: return "lsv";
    case MapKind::IntermittentBaker: return "intermittent_baker";
    case MapKind::Doubling: return "doubling";
    case MapKind::CatMap: return "cat_map";
    }
    return "unknown";
}

inline MapKind parse_map_kind(std::string_view name)
{
    if (name == "lsv") return MapKind::LSV;
    if (name == "intermittent_baker") return MapKind::IntermittentBaker;
    if (name == "doubling") return MapKind::Doubling;
    if (name == "cat_map") return MapKind::CatMap;
    throw std::invalid_argument("unknown map kind '" + std::string{name}
                                + "' (expected lsv, intermittent_baker, "
                                  "doubling or cat_map)");
}

/// Identifies a fast map. `alpha` is meaningful only for the intermittent
/// kinds, where it must lie strictly inside (0, 1/2).
class MapDescriptor
{
  public:
    static MapDescriptor lsv(double alpha) { return {MapKind::LSV, alpha}; }
    static MapDescriptor baker(double alpha)
    {
        return {MapKind::IntermittentBaker, alpha};
    }
    static MapDescriptor doubling() { return {MapKind::Doubling, 0.0}; }
    static MapDescriptor cat_map() { return {MapKind::CatMap, 0.0}; }

    static MapDescriptor make(MapKind kind, double alpha)
    {
        return {kind, alpha};
    }

    MapKind kind() const noexcept { return kind_; }
    double alpha() const noexcept { return alpha_; }

    bool is_intermittent() const noexcept
    {
        return kind_ == MapKind::LSV || kind_ == MapKind::IntermittentBaker;
    }
    /// Phase-space dimension: 1 for interval maps, 2 for maps of the square.
    int dimension() const noexcept
    {
        return (kind_ == MapKind::LSV || kind_ == MapKind::Doubling) ? 1 : 2;
    }

    friend bool operator==(MapDescriptor const&, MapDescriptor const&) = default;

  private:
    MapDescriptor(MapKind kind, double alpha) : kind_{kind}, alpha_{alpha}
    {
        if (is_intermittent()) {
            if (!(alpha > 0.0 && alpha < 0.5)) {
                throw std::invalid_argument(
                    "intermittent map parameter alpha must lie in (0, 1/2), got "
                    + std::to_string(alpha));
            }
        } else {
            alpha_ = 0.0;
        }
    }

    MapKind kind_;
    double alpha_;
};

/// A point of [0,1] (only `x` used) or of [0,1]^2.
struct Point
{
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(Point const&, Point const&) = default;
};

/// l1 distance on the square (interval maps carry y = 0).
inline double distance(Point const& a, Point const& b) noexcept
{
    return std::abs(a.x - b.x) + std::abs(a.y - b.y);
}

namespace detail {

inline constexpr double domain_slack = 1e-12;

inline double checked_unit(double v, char const* what)
{
    if (!(v >= -domain_slack && v <= 1.0 + domain_slack)) {
        throw std::domain_error(std::string{what} + " outside [0,1]: "
                                + std::to_string(v));
    }
    return std::clamp(v, 0.0, 1.0);
}

inline void check_branch_alpha(double alpha)
{
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw std::domain_error("LSV parameter must lie in (0,1), got "
                                + std::to_string(alpha));
    }
}

// g_alpha(x) = x (1 + 2^alpha x^alpha), written as x (1 + (2x)^alpha).
inline double lsv_left(double x, double alpha) noexcept
{
    return x * (1.0 + std::pow(2.0 * x, alpha));
}

inline double lsv_left_derivative(double x, double alpha) noexcept
{
    return 1.0 + (1.0 + alpha) * std::pow(2.0 * x, alpha);
}

// Unchecked step; the inner loops of every estimator go through this.
inline double lsv_raw(double x, double alpha) noexcept
{
    double const y = x < 0.5 ? lsv_left(x, alpha) : 2.0 * x - 1.0;
    return std::clamp(y, 0.0, 1.0);
}

// Inverse of g_alpha on [0, 1/2]. Newton safeguarded by a bisection bracket:
// g_alpha is strictly increasing, so the bracket always contains the root.
inline double lsv_left_inverse_raw(double y, double alpha) noexcept
{
    if (y <= 0.0) return 0.0;
    if (y >= 1.0) return 0.5;
    double lo = 0.0;
    double hi = 0.5;
    double z = 0.5 * y;
    for (int iter = 0; iter < 200; ++iter) {
        double const f = lsv_left(z, alpha) - y;
        if (f == 0.0) return z;
        if (f < 0.0) {
            lo = z;
        } else {
            hi = z;
        }
        double next = z - f / lsv_left_derivative(z, alpha);
        if (!(next > lo && next < hi)) {
            next = 0.5 * (lo + hi);
        }
        if (std::abs(next - z) <= 1e-17 || hi - lo <= 1e-16) {
            z = next;
            break;
        }
        z = next;
    }
    // One Newton polish from the converged iterate.
    double const polished = z - (lsv_left(z, alpha) - y) / lsv_left_derivative(z, alpha);
    return std::clamp(polished, 0.0, 0.5);
}

inline Point baker_raw(Point p, double alpha) noexcept
{
    if (p.x < 0.5) {
        return {lsv_raw(p.x, alpha), lsv_left_inverse_raw(p.y, alpha)};
    }
    return {lsv_raw(p.x, alpha), std::min(1.0, 0.5 * (p.y + 1.0))};
}

inline double doubling_raw(double x) noexcept
{
    double y = 2.0 * x;
    if (y >= 1.0) y -= 1.0;
    return std::clamp(y, 0.0, 1.0);
}

inline double frac(double v) noexcept
{
    double const r = v - std::floor(v);
    return r >= 1.0 ? 0.0 : r;
}

inline Point cat_raw(Point p) noexcept
{
    return {frac(2.0 * p.x + p.y), frac(p.x + p.y)};
}

}  // namespace detail

/// One step of the LSV map: g_alpha on [0, 1/2), 2x - 1 on [1/2, 1].
inline double lsv_step(double x, double alpha)
{
    detail::check_branch_alpha(alpha);
    return detail::lsv_raw(detail::checked_unit(x, "lsv_step input"), alpha);
}

enum class Branch { Left, Right };

/// Inverse branches of the LSV map. Left inverts g_alpha onto [0, 1/2];
/// Right inverts 2x - 1 onto [1/2, 1].
inline double lsv_inverse_branch(double y, double alpha, Branch branch)
{
    detail::check_branch_alpha(alpha);
    y = detail::checked_unit(y, "lsv_inverse_branch input");
    if (branch == Branch::Right) {
        return 0.5 * (y + 1.0);
    }
    return detail::lsv_left_inverse_raw(y, alpha);
}

/// Intermittent Baker map on [0,1]^2. The first coordinate follows the LSV
/// map through the same code path as lsv_step; the fibre coordinate is
/// contracted by the inverse branch selected by x.
inline Point baker_step(Point p, double alpha)
{
    detail::check_branch_alpha(alpha);
    p.x = detail::checked_unit(p.x, "baker_step x");
    p.y = detail::checked_unit(p.y, "baker_step z");
    return detail::baker_raw(p, alpha);
}

/// Calibration maps: doubling x -> 2x mod 1 and cat map (2x+y, x+y) mod 1.
inline Point validation_step(Point p, MapKind kind)
{
    switch (kind) {
    case MapKind::Doubling:
        return {detail::doubling_raw(detail::checked_unit(p.x, "doubling input")), 0.0};
    case MapKind::CatMap:
        p.x = detail::checked_unit(p.x, "cat map x");
        p.y = detail::checked_unit(p.y, "cat map y");
        return detail::cat_raw(p);
    default:
        throw std::invalid_argument("validation_step accepts only doubling or cat_map");
    }
}

/// One step of any supported map.
inline Point step(MapDescriptor const& map, Point p)
{
    switch (map.kind()) {
    case MapKind::LSV: return {lsv_step(p.x, map.alpha()), 0.0};
    case MapKind::IntermittentBaker: return baker_step(p, map.alpha());
    default: return validation_step(p, map.kind());
    }
}

/// k-fold composition; k = 0 is the identity.
inline Point iterate(MapDescriptor const& map, Point p, std::uint64_t k)
{
    for (std::uint64_t i = 0; i < k; ++i) {
        p = step(map, p);
    }
    return p;
}

/// A trajectory of a fast map.
///
/// Intermittent maps are iterated in double precision. The doubling and cat
/// maps are iterated exactly on 64-bit fixed-point words: naive floating
/// point collapses the doubling map onto 0 after ~53 steps. The doubling
/// orbit shifts fresh binary digits in from a counter-based stream, which
/// is the exact law of the orbit of a Lebesgue-random point given its
/// leading 64 digits. The cat map acts on (Z / 2^64)^2 with wrap-around
/// arithmetic, an exact automorphism.
class Orbit
{
  public:
    Orbit(MapDescriptor const& map, Point start, std::uint64_t digit_key)
        : map_{map}, digits_{digit_key}
    {
        set(start);
    }

    /// Orbit from a point drawn from Lebesgue measure on the phase space.
    static Orbit uniform(MapDescriptor const& map, CounterRng& rng,
                         std::uint64_t digit_key)
    {
        Orbit orbit{map, Point{}, digit_key};
        switch (map.kind()) {
        case MapKind::Doubling:
            orbit.u_ = rng();
            break;
        case MapKind::CatMap:
            orbit.u_ = rng();
            orbit.v_ = rng();
            break;
        case MapKind::LSV:
            orbit.p_.x = rng.uniform();
            break;
        case MapKind::IntermittentBaker:
            orbit.p_.x = rng.uniform();
            orbit.p_.y = rng.uniform();
            break;
        }
        orbit.sync();
        return orbit;
    }

    MapDescriptor const& map() const noexcept { return map_; }
    Point const& point() const noexcept { return p_; }

    void advance() noexcept
    {
        switch (map_.kind()) {
        case MapKind::LSV:
            p_.x = detail::lsv_raw(p_.x, map_.alpha());
            return;
        case MapKind::IntermittentBaker:
            p_ = detail::baker_raw(p_, map_.alpha());
            return;
        case MapKind::Doubling:
            if (bits_left_ == 0) {
                bit_buffer_ = digits_();
                bits_left_ = 64;
            }
            u_ = (u_ << 1) | (bit_buffer_ & 1u);
            bit_buffer_ >>= 1;
            --bits_left_;
            p_.x = to_unit(u_);
            return;
        case MapKind::CatMap: {
            std::uint64_t const u = 2 * u_ + v_;
            std::uint64_t const v = u_ + v_;
            u_ = u;
            v_ = v;
            p_ = {to_unit(u_), to_unit(v_)};
            return;
        }
        }
    }

    void advance(std::uint64_t k) noexcept
    {
        for (std::uint64_t i = 0; i < k; ++i) {
            advance();
        }
    }

  private:
    static double to_unit(std::uint64_t w) noexcept
    {
        return static_cast<double>(w >> 11) * 0x1.0p-53;
    }
    static std::uint64_t from_unit(double v) noexcept
    {
        v = std::clamp(v, 0.0, 1.0);
        if (v >= 1.0) return ~std::uint64_t{0};
        return static_cast<std::uint64_t>(std::ldexp(v, 64));
    }

    void set(Point start)
    {
        start.x = detail::checked_unit(start.x, "orbit start x");
        start.y = detail::checked_unit(start.y, "orbit start y");
        p_ = start;
        u_ = from_unit(start.x);
        v_ = from_unit(start.y);
        sync();
    }

    void sync() noexcept
    {
        if (map_.kind() == MapKind::Doubling) {
            p_ = {to_unit(u_), 0.0};
        } else if (map_.kind() == MapKind::CatMap) {
            p_ = {to_unit(u_), to_unit(v_)};
        } else if (map_.dimension() == 1) {
            p_.y = 0.0;
        }
    }

    MapDescriptor map_;
    Point p_{};
    std::uint64_t u_ = 0;
    std::uint64_t v_ = 0;
    CounterRng digits_;
    std::uint64_t bit_buffer_ = 0;
    int bits_left_ = 0;
};

}  // namespace homog
