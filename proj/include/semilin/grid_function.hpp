#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <vector>

#include "semilin/errors.hpp"

namespace semilin {

namespace detail {

/// Cubic Hermite on [xl, xr] with values (fl, fr) and derivatives (dl, dr).
inline double hermite_value(double xl, double xr, double fl, double fr, double dl, double dr,
                            double x) {
    const double w = xr - xl;
    const double t = (x - xl) / w;
    const double t2 = t * t;
    const double t3 = t2 * t;
    return fl * (2.0 * t3 - 3.0 * t2 + 1.0) + fr * (-2.0 * t3 + 3.0 * t2) +
           w * (dl * (t3 - 2.0 * t2 + t) + dr * (t3 - t2));
}

inline double hermite_deriv(double xl, double xr, double fl, double fr, double dl, double dr,
                            double x) {
    const double w = xr - xl;
    const double t = (x - xl) / w;
    const double t2 = t * t;
    return (fl * (6.0 * t2 - 6.0 * t) + fr * (-6.0 * t2 + 6.0 * t)) / w +
           dl * (3.0 * t2 - 4.0 * t + 1.0) + dr * (3.0 * t2 - 2.0 * t);
}

inline std::size_t locate_cell(const std::vector<double>& grid, double x) {
    // index of the cell [grid[i], grid[i+1]] containing x, clamped at the ends
    if (x <= grid.front()) return 0;
    if (x >= grid[grid.size() - 2]) return grid.size() - 2;
    std::size_t lo = 0, hi = grid.size() - 1;
    while (hi - lo > 1) {
        const std::size_t mid = (lo + hi) / 2;
        if (grid[mid] <= x)
            lo = mid;
        else
            hi = mid;
    }
    return lo;
}

}  // namespace detail

/// A function tabulated with its first derivative on a strictly increasing grid.
/// Between nodes both tracks come from the same C^1 cubic Hermite interpolant,
/// so value() and deriv() are mutually consistent everywhere.
class GridFunction {
public:
    GridFunction() = default;
    GridFunction(std::vector<double> grid, std::vector<double> values,
                 std::vector<double> derivs)
        : grid_(std::move(grid)), f_(std::move(values)), df_(std::move(derivs)) {
        if (grid_.size() < 2 || f_.size() != grid_.size() || df_.size() != grid_.size())
            throw Error("GridFunction: inconsistent array sizes");
        for (std::size_t i = 1; i < grid_.size(); ++i)
            if (!(grid_[i] > grid_[i - 1]))
                throw Error("GridFunction: grid must be strictly increasing");
    }

    const std::vector<double>& grid() const { return grid_; }
    const std::vector<double>& values() const { return f_; }
    const std::vector<double>& derivs() const { return df_; }
    std::size_t size() const { return grid_.size(); }
    double lo() const { return grid_.front(); }
    double hi() const { return grid_.back(); }

    double value(double x) const {
        check_range(x);
        const std::size_t i = detail::locate_cell(grid_, x);
        return detail::hermite_value(grid_[i], grid_[i + 1], f_[i], f_[i + 1], df_[i],
                                     df_[i + 1], x);
    }

    double deriv(double x) const {
        check_range(x);
        const std::size_t i = detail::locate_cell(grid_, x);
        return detail::hermite_deriv(grid_[i], grid_[i + 1], f_[i], f_[i + 1], df_[i],
                                     df_[i + 1], x);
    }

    double operator()(double x) const { return value(x); }

    /// sup over nodes of |f - g.f| + |f' - g.f'| (grids must match).
    double node_distance(const GridFunction& g) const {
        if (g.size() != size()) throw Error("GridFunction: grid size mismatch");
        double d = 0.0;
        for (std::size_t i = 0; i < grid_.size(); ++i)
            d = std::max(d, std::abs(f_[i] - g.f_[i]) + std::abs(df_[i] - g.df_[i]));
        return d;
    }

    void write_csv(std::ostream& os) const {
        os << "x,u,u_prime\n";
        char buf[96];
        for (std::size_t i = 0; i < grid_.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", grid_[i], f_[i], df_[i]);
            os << buf;
        }
    }

private:
    void check_range(double x) const {
        const double pad = 1e-9 * (1.0 + std::abs(grid_.front()) + std::abs(grid_.back()));
        if (x < grid_.front() - pad || x > grid_.back() + pad)
            throw OutOfRange("GridFunction: point outside tabulated range");
    }

    std::vector<double> grid_;
    std::vector<double> f_;
    std::vector<double> df_;
};

/// Uniform grid helper: n cells (n+1 nodes) spanning [lo, hi].
inline std::vector<double> uniform_grid(double lo, double hi, std::size_t cells) {
    if (!(hi > lo) || cells == 0) throw Error("uniform_grid: bad range");
    std::vector<double> g(cells + 1);
    const double h = (hi - lo) / static_cast<double>(cells);
    for (std::size_t i = 0; i <= cells; ++i) g[i] = lo + h * static_cast<double>(i);
    g.back() = hi;
    return g;
}

}  // namespace semilin
