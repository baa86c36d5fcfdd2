// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "homog/maps.hpp"

namespace homog {

/// Largest observable arity supported by the fixed-size evaluation buffers.
inline constexpr int max_arity = 4;

using ObservableValue = std::array<double, max_arity>;

/// A bounded Hölder test function on the phase space, scalar or vector.
///
/// The evaluator writes `arity` components into the output span. `eta` and
/// `mean_zero` are metadata: the Hölder exponent is never certified, and
/// estimators center empirically regardless of the flag. The sup-norm bound
/// is measured on a 10^4-point grid when the observable is built.
class Observable
{
  public:
    using Evaluator = std::function<void(Point const&, std::span<double>)>;

    Observable(std::string name, int arity, double eta, bool mean_zero,
               Evaluator eval)
        : name_{std::move(name)}, arity_{arity}, eta_{eta},
          mean_zero_{mean_zero}, eval_{std::move(eval)}
    {
        if (arity_ < 1 || arity_ > max_arity) {
            throw std::invalid_argument("observable arity must be in [1, "
                                        + std::to_string(max_arity) + "]");
        }
        if (!(eta_ > 0.0 && eta_ <= 1.0)) {
            throw std::invalid_argument("Hölder exponent must lie in (0, 1]");
        }
        if (!eval_) {
            throw std::invalid_argument("observable needs an evaluator");
        }
        bound_ = measure_bound();
    }

    /// Scalar observable from a plain function.
    template<class F>
    static Observable scalar(std::string name, F f, double eta = 1.0,
                             bool mean_zero = false)
    {
        return Observable{std::move(name), 1, eta, mean_zero,
                          [f](Point const& p, std::span<double> out) {
                              out[0] = f(p);
                          }};
    }

    std::string const& name() const noexcept { return name_; }
    int arity() const noexcept { return arity_; }
    double eta() const noexcept { return eta_; }
    bool mean_zero() const noexcept { return mean_zero_; }
    double bound() const noexcept { return bound_; }

    void evaluate(Point const& p, std::span<double> out) const
    {
        eval_(p, out);
    }

    ObservableValue operator()(Point const& p) const
    {
        ObservableValue v{};
        eval_(p, std::span<double>{v.data(), static_cast<std::size_t>(arity_)});
        return v;
    }

    double scalar_value(Point const& p) const { return (*this)(p)[0]; }

    /// Same observable with `shift` subtracted componentwise.
    Observable centered(std::span<double const> shift) const
    {
        if (static_cast<int>(shift.size()) != arity_) {
            throw std::invalid_argument("centering shift has wrong arity");
        }
        ObservableValue s{};
        std::copy(shift.begin(), shift.end(), s.begin());
        auto inner = eval_;
        int const d = arity_;
        return Observable{name_ + "-centered", arity_, eta_, true,
                          [inner, s, d](Point const& p, std::span<double> out) {
                              inner(p, out);
                              for (int i = 0; i < d; ++i) out[i] -= s[i];
                          }};
    }

    /// Componentwise concatenation, e.g. (cos 2 pi x, sin 2 pi x).
    static Observable stack(std::vector<Observable> const& parts)
    {
        int total = 0;
        double eta = 1.0;
        bool mz = true;
        std::string name;
        for (auto const& p : parts) {
            total += p.arity();
            eta = std::min(eta, p.eta());
            mz = mz && p.mean_zero();
            name += (name.empty() ? "" : ",") + p.name();
        }
        auto copy = parts;
        return Observable{"(" + name + ")", total, eta, mz,
                          [copy](Point const& pt, std::span<double> out) {
                              std::size_t off = 0;
                              for (auto const& p : copy) {
                                  auto const n = static_cast<std::size_t>(p.arity());
                                  p.evaluate(pt, out.subspan(off, n));
                                  off += n;
                              }
                          }};
    }

  private:
    double measure_bound() const
    {
        double b = 0.0;
        ObservableValue v{};
        std::span<double> out{v.data(), static_cast<std::size_t>(arity_)};
        for (int i = 0; i < 100; ++i) {
            for (int j = 0; j < 100; ++j) {
                Point const p{(i + 0.5) / 100.0, (j + 0.5) / 100.0};
                eval_(p, out);
                for (double c : out) {
                    if (!std::isfinite(c)) {
                        throw std::invalid_argument("observable '" + name_
                                                    + "' is not finite on the grid");
                    }
                    b = std::max(b, std::abs(c));
                }
            }
        }
        return b;
    }

    std::string name_;
    int arity_;
    double eta_;
    bool mean_zero_;
    Evaluator eval_;
    double bound_ = 0.0;
};

namespace observables {

inline Observable cos2pix()
{
    return Observable::scalar(
        "cos2pix", [](Point const& p) { return std::cos(2.0 * std::numbers::pi * p.x); },
        1.0, true);
}

inline Observable sin2pix()
{
    return Observable::scalar(
        "sin2pix", [](Point const& p) { return std::sin(2.0 * std::numbers::pi * p.x); },
        1.0, true);
}

/// Coordinate `index` (0 = x, 1 = second coordinate of the square).
inline Observable coordinate(int index = 0)
{
    if (index != 0 && index != 1) {
        throw std::invalid_argument("coordinate index must be 0 or 1");
    }
    return Observable::scalar(
        index == 0 ? "x" : "z",
        [index](Point const& p) { return index == 0 ? p.x : p.y; }, 1.0, false);
}

inline Observable constant(double c)
{
    return Observable::scalar(
        "const", [c](Point const&) { return c; }, 1.0, c == 0.0);
}

inline Observable zero(int arity = 1)
{
    return Observable{"zero", arity, 1.0, true,
                      [](Point const&, std::span<double> out) {
                          for (double& c : out) c = 0.0;
                      }};
}

}  // namespace observables

/// Grid estimate of the eta-Hölder seminorm over neighbouring grid pairs of
/// the interval (dimension 1) or the square (l1 metric). Reporting only.
inline double estimate_holder_seminorm(Observable const& v, int dimension,
                                       int grid = 1000)
{
    double best = 0.0;
    auto update = [&](Point const& a, Point const& b) {
        double const d = distance(a, b);
        if (d <= 0.0) return;
        auto const va = v(a);
        auto const vb = v(b);
        for (int i = 0; i < v.arity(); ++i) {
            best = std::max(best, std::abs(va[i] - vb[i]) / std::pow(d, v.eta()));
        }
    };
    if (dimension == 1) {
        for (int i = 0; i < grid; ++i) {
            update({double(i) / grid, 0.0}, {double(i + 1) / grid, 0.0});
        }
        return best;
    }
    int const g = std::max(2, static_cast<int>(std::sqrt(double(grid)) * 4));
    for (int i = 0; i < g; ++i) {
        for (int j = 0; j < g; ++j) {
            Point const p{double(i) / g, double(j) / g};
            update(p, {double(i + 1) / g, p.y});
            update(p, {p.x, double(j + 1) / g});
        }
    }
    return best;
}

}  // namespace homog
