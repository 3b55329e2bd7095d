#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "semilin/coefficients.hpp"
#include "semilin/grid_function.hpp"
#include "semilin/quadrature.hpp"

namespace semilin {

/// Solution of the linear problem Lu = l with initial data u(a) = x0,
/// (e^Sigma u')(a) = x1, valid on any interval containing the anchor:
///   u'(x) = exp(-Sigma(x)) * (2 int_a^x exp(Sigma) l / sigma^2 + x1)
/// The anchor must coincide with a grid node.
inline GridFunction solve_linear_ivp(const ScaleData& scale,
                                     const std::function<double(double)>& l, double anchor,
                                     double x0, double x1, double lo, double hi,
                                     std::size_t cells = 1024) {
    const std::vector<double> grid = uniform_grid(lo, hi, cells);
    std::size_t ai = grid.size();
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (std::abs(grid[i] - anchor) <= 1e-12 * (1.0 + std::abs(anchor))) {
            ai = i;
            break;
        }
    if (ai == grid.size())
        throw BadAnchor("solve_linear_ivp: anchor is not a node of the requested grid");

    CumulativeIntegral J(
        grid, ai,
        [&](double y) {
            return std::exp(scale.sigma_fn(y)) * l(y) / scale.coeffs().sigma2(y);
        },
        1e-13);
    auto uprime = [&](double y) {
        return std::exp(-scale.sigma_fn(y)) * (2.0 * J(y) + x1);
    };
    CumulativeIntegral U(grid, ai, uprime, 1e-13);

    std::vector<double> u(grid.size()), du(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        u[i] = x0 + U.at_node(i);
        du[i] = std::exp(-scale.sigma_fn(grid[i])) * (2.0 * J.at_node(i) + x1);
    }
    return GridFunction(grid, std::move(u), std::move(du));
}

namespace detail {

inline void kernel_domain_check(const ScaleData& s, double x, double y) {
    if (!s.has_scale()) throw Error("green_kernel: scale stage not computed");
    const double pad = 1e-12;
    if (x < -pad || x > 1.0 + pad || y < -pad || y > 1.0 + pad)
        throw OutOfRange("green_kernel: arguments must lie in [0, 1]");
    if (s.lo() > 0.0 || s.hi() < 1.0)
        throw OutOfRange("green_kernel: scale tabulation does not cover [0, 1]");
}

}  // namespace detail

/// Dirichlet Green kernel of L on [0, 1], written with scale differences:
///   K(x, y) = q(y) [ 1_{y<=x} (h(x) - h(y)) - h(x)(h(1) - h(y))/h(1) ],
///   q(y) = 2 exp(Sigma(y)) / sigma^2(y).
/// K <= 0 on the square and K(0, .) = K(1, .) = 0.
inline double green_kernel(const ScaleData& s, double x, double y) {
    detail::kernel_domain_check(s, x, y);
    const double q = 2.0 * std::exp(s.sigma_fn(y)) / s.coeffs().sigma2(y);
    const double h1 = s.scale(1.0);
    const double hx = s.scale(x);
    const double hy = s.scale(y);
    const double part = (y <= x ? hx - hy : 0.0) - hx * (h1 - hy) / h1;
    return q * part;
}

/// x-derivative of the kernel; jumps across y = x.
inline double green_kernel_dx(const ScaleData& s, double x, double y) {
    detail::kernel_domain_check(s, x, y);
    const double q = 2.0 * std::exp(s.sigma_fn(y)) / s.coeffs().sigma2(y);
    const double h1 = s.scale(1.0);
    const double hy = s.scale(y);
    return q * s.scale_prime(x) * ((y <= x ? 1.0 : 0.0) - (h1 - hy) / h1);
}

/// Two-point boundary problem Lu = l on [0, 1], u(0) = A, u(1) = B:
///   u(x) = A + (B - A) h(x)/h(1) + int_0^1 K(x, y) l(y) dy.
/// The y-integral is done adaptively, split at y = x where the kernel kinks.
inline GridFunction solve_linear_bvp(const ScaleData& scale,
                                     const std::function<double(double)>& l, double A, double B,
                                     std::size_t cells = 1024, double quad_tol = 1e-12) {
    detail::kernel_domain_check(scale, 0.0, 0.0);
    const std::vector<double> grid = uniform_grid(0.0, 1.0, cells);
    const double h1 = scale.scale(1.0);
    std::vector<double> u(grid.size()), du(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double x = grid[i];
        auto kg = [&](double y) { return green_kernel(scale, x, y) * l(y); };
        auto dkg = [&](double y) { return green_kernel_dx(scale, x, y) * l(y); };
        const double ik = integrate(kg, 0.0, x, quad_tol) + integrate(kg, x, 1.0, quad_tol);
        const double idk = integrate(dkg, 0.0, x, quad_tol) + integrate(dkg, x, 1.0, quad_tol);
        u[i] = A + (B - A) * scale.scale(x) / h1 + ik;
        du[i] = (B - A) * scale.scale_prime(x) / h1 + idk;
    }
    return GridFunction(grid, std::move(u), std::move(du));
}

/// sup over x of max( int_0^1 |K(x, y)| dy, int_0^1 |dK/dx (x, y)| dy ),
/// the operator bound entering the fixed-point contraction gate.
inline double kernel_bound(const ScaleData& scale, std::size_t nx = 512, double quad_tol = 1e-9) {
    detail::kernel_domain_check(scale, 0.0, 0.0);
    double bound = 0.0;
    for (std::size_t i = 0; i <= nx; ++i) {
        const double x = static_cast<double>(i) / static_cast<double>(nx);
        auto absk = [&](double y) { return std::abs(green_kernel(scale, x, y)); };
        auto absdk = [&](double y) { return std::abs(green_kernel_dx(scale, x, y)); };
        const double ik =
            integrate(absk, 0.0, x, quad_tol) + integrate(absk, x, 1.0, quad_tol);
        const double idk =
            integrate(absdk, 0.0, x, quad_tol) + integrate(absdk, x, 1.0, quad_tol);
        bound = std::max(bound, std::max(ik, idk));
    }
    return bound;
}

/// Mean exit-time function: the solution of L Gamma = -1, Gamma(0) = Gamma(1) = 0.
inline GridFunction gamma_function(const ScaleData& scale, std::size_t cells = 1024) {
    return solve_linear_bvp(scale, [](double) { return -1.0; }, 0.0, 0.0, cells);
}

}  // namespace semilin
