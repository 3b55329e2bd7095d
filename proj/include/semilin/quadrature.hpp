#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "semilin/errors.hpp"

namespace semilin {

/// Compensated (Kahan) accumulator; keeps long prefix sums at ~1 ulp.
class KahanSum {
public:
    void add(double x) {
        const double y = x - c_;
        const double t = s_ + y;
        c_ = (t - s_) - y;
        s_ = t;
    }
    double value() const { return s_; }

private:
    double s_ = 0.0;
    double c_ = 0.0;
};

namespace detail {

template <class F>
double simpson(F&& f, double a, double fa, double b, double fb, double m, double fm) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

template <class F>
double adaptive_step(F&& f, double a, double fa, double b, double fb, double m, double fm,
                     double whole, double tol, int depth) {
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = simpson(f, a, fa, m, fm, lm, flm);
    const double right = simpson(f, m, fm, b, fb, rm, frm);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    return adaptive_step(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) +
           adaptive_step(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

/// Adaptive Simpson integration of f over [a, b] to absolute tolerance tol.
template <class F>
double integrate(F&& f, double a, double b, double tol = 1e-12, int max_depth = 48) {
    if (a == b) return 0.0;
    double sign = 1.0;
    if (b < a) {
        std::swap(a, b);
        sign = -1.0;
    }
    const double m = 0.5 * (a + b);
    const double fa = f(a);
    const double fb = f(b);
    const double fm = f(m);
    const double whole = detail::simpson(f, a, fa, b, fb, m, fm);
    return sign * detail::adaptive_step(f, a, fa, b, fb, m, fm, whole, tol, max_depth);
}

/// Tabulated antiderivative: values of int_{anchor}^{x} f on a sorted node set,
/// with evaluation at arbitrary points via the nearest node plus an adaptive
/// remainder.  Node prefix sums are Kahan-compensated outward from the anchor,
/// so the anchor value is exactly zero and cell contributions telescope.
class CumulativeIntegral {
public:
    using Fn = std::function<double(double)>;
    using CellFn = std::function<double(double, double)>;  // integral over [l, r]

    CumulativeIntegral(std::vector<double> nodes, std::size_t anchor_index, Fn f,
                       double cell_tol = 1e-13)
        : CumulativeIntegral(std::move(nodes), anchor_index, std::move(f),
                             CellFn{}, cell_tol) {}

    /// cell_integral overrides the per-cell quadrature (closed forms); f is still
    /// used for off-node remainders unless cell_integral covers those too.
    CumulativeIntegral(std::vector<double> nodes, std::size_t anchor_index, Fn f,
                       CellFn cell_integral, double cell_tol = 1e-13)
        : nodes_(std::move(nodes)),
          anchor_(anchor_index),
          f_(std::move(f)),
          cell_(std::move(cell_integral)),
          tol_(cell_tol) {
        if (nodes_.size() < 2) throw Error("CumulativeIntegral: need at least two nodes");
        if (anchor_ >= nodes_.size()) throw Error("CumulativeIntegral: anchor outside node set");
        for (std::size_t i = 1; i < nodes_.size(); ++i) {
            if (!(nodes_[i] > nodes_[i - 1]))
                throw Error("CumulativeIntegral: nodes must be strictly increasing");
        }
        prefix_.assign(nodes_.size(), 0.0);
        KahanSum fwd;
        for (std::size_t i = anchor_; i + 1 < nodes_.size(); ++i) {
            fwd.add(cell(nodes_[i], nodes_[i + 1]));
            prefix_[i + 1] = fwd.value();
        }
        KahanSum bwd;
        for (std::size_t i = anchor_; i > 0; --i) {
            bwd.add(-cell(nodes_[i - 1], nodes_[i]));
            prefix_[i - 1] = bwd.value();
        }
    }

    const std::vector<double>& nodes() const { return nodes_; }
    const std::vector<double>& node_values() const { return prefix_; }
    double anchor() const { return nodes_[anchor_]; }

    double at_node(std::size_t i) const { return prefix_[i]; }

    /// Integral from anchor to y; y may lie anywhere inside the node range.
    double operator()(double y) const {
        if (y < nodes_.front() - kEdgeTol || y > nodes_.back() + kEdgeTol)
            throw OutOfRange("CumulativeIntegral: point outside node range");
        const std::size_t k = locate(y);
        if (y == nodes_[k]) return prefix_[k];
        return prefix_[k] + cell(nodes_[k], y);
    }

private:
    static constexpr double kEdgeTol = 1e-12;

    std::size_t locate(double y) const {
        // greatest node index with nodes_[k] <= y (clamped)
        std::size_t lo = 0, hi = nodes_.size() - 1;
        if (y <= nodes_.front()) return 0;
        if (y >= nodes_.back()) return nodes_.size() - 1;
        while (hi - lo > 1) {
            const std::size_t mid = (lo + hi) / 2;
            if (nodes_[mid] <= y)
                lo = mid;
            else
                hi = mid;
        }
        return lo;
    }

    double cell(double l, double r) const {
        if (cell_) return cell_(l, r);
        return integrate(f_, l, r, tol_);
    }

    std::vector<double> nodes_;
    std::size_t anchor_;
    Fn f_;
    CellFn cell_;
    double tol_;
    std::vector<double> prefix_;
};

/// Fourth-order cumulative integral of uniformly sampled values: returns I with
/// I[0] = 0 and I[j] ~= int_{x0}^{x0 + j h} f.  Used by the fixed-point sweeps,
/// where the integrand is only known at grid nodes.
inline std::vector<double> cumulative_uniform(const std::vector<double>& f, double h) {
    const std::size_t n = f.size();
    std::vector<double> out(n, 0.0);
    if (n < 2) return out;
    KahanSum acc;
    if (n == 2) {
        acc.add(0.5 * h * (f[0] + f[1]));
        out[1] = acc.value();
        return out;
    }
    if (n == 3) {
        acc.add(h / 12.0 * (5.0 * f[0] + 8.0 * f[1] - f[2]));
        out[1] = acc.value();
        acc.add(h / 12.0 * (-f[0] + 8.0 * f[1] + 5.0 * f[2]));
        out[2] = acc.value();
        return out;
    }
    acc.add(h / 24.0 * (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3]));
    out[1] = acc.value();
    for (std::size_t j = 1; j + 2 < n; ++j) {
        acc.add(h / 24.0 * (-f[j - 1] + 13.0 * f[j] + 13.0 * f[j + 1] - f[j + 2]));
        out[j + 1] = acc.value();
    }
    acc.add(h / 24.0 * (f[n - 4] - 5.0 * f[n - 3] + 19.0 * f[n - 2] + 9.0 * f[n - 1]));
    out[n - 1] = acc.value();
    return out;
}

}  // namespace semilin
