#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "semilin/errors.hpp"
#include "semilin/fields.hpp"
#include "semilin/grid_function.hpp"
#include "semilin/quadrature.hpp"

namespace semilin {

/// Diffusion coefficients on the truncated line [-radius, radius].
/// sigma must be strictly positive; beta is the (continuous) drift potential,
/// entering the operator only through its weak derivative.
struct CoefficientField {
    ScalarField sigma = ScalarField::constant(1.0);
    ScalarField beta = ScalarField::constant(0.0);
    double radius = 2.0;
    double grid_step = 1.0 / 1024.0;

    void validate() const {
        if (!(radius > 0.0)) throw CoefficientError("coefficients: radius must be positive");
        if (!(grid_step > 0.0) || grid_step > radius)
            throw CoefficientError("coefficients: grid_step must lie in (0, radius]");
        // positivity probe at nodes and midpoints
        const auto m = static_cast<std::size_t>(std::ceil(radius / grid_step - 1e-9));
        for (std::size_t i = 0; i <= 4 * m; ++i) {
            const double x =
                -radius + (2.0 * radius) * static_cast<double>(i) / static_cast<double>(4 * m);
            if (!(sigma(x) > 0.0))
                throw CoefficientError("coefficients: sigma must be strictly positive (fails near x=" +
                                       std::to_string(x) + ")");
        }
    }

    double sigma2(double x) const {
        const double s = sigma(x);
        return s * s;
    }
};

inline constexpr const char* kTruncationCaveat =
    "truncated-domain diagnostic: v is tabulated on [-R, R] only, so boundary growth is "
    "evidence, not proof, of v(+/-infinity) = +infinity";

struct WellposednessReport {
    double radius = 0.0;
    double threshold = 0.0;
    double v_left = 0.0;
    double v_right = 0.0;
    bool monotone_ok = true;
    enum class Verdict { Consistent, Inconclusive, Inconsistent } verdict = Verdict::Inconclusive;
    std::string caveat = kTruncationCaveat;
};

/// Scale objects of the operator (sigma^2/2) u'' + beta' u':
///   Sigma(x) = 2 int_0^x beta'/sigma^2        (tabulated, piecewise linear)
///   h(x)     = int_0^x exp(-Sigma)            (strictly increasing, h(0) = 0)
///   v(x)     = int_0^x exp(-Sigma(y)) W(y) dy, W(y) = 2 int_0^y sigma^-2
/// Stages are computed on a knot grid that joins the uniform tabulation nodes
/// with every breakpoint of piecewise-linear coefficients, so cell integrals
/// never straddle a kink.  When beta is constant the scale is the identity and
/// evaluators short-circuit: scale(x) == x and scale_inv(y) == y exactly.
class ScaleData {
public:
    static ScaleData from(const CoefficientField& coeffs) {
        coeffs.validate();
        if (!coeffs.beta.has_derivative())
            throw UnsupportedRepresentation(
                "beta representation does not define a drift derivative");
        ScaleData s;
        s.coeffs_ = coeffs;
        s.identity_ = coeffs.beta.is_constant();
        s.build_knots();
        s.build_sigma_fn();
        return s;
    }

    bool identity_scale() const { return identity_; }
    bool has_scale() const { return !h_.empty(); }
    bool has_speed() const { return !v_.empty(); }
    const CoefficientField& coeffs() const { return coeffs_; }
    const std::vector<double>& knots() const { return knots_; }
    const std::vector<double>& sigma_nodes() const { return Sigma_; }
    const std::vector<double>& scale_nodes() const { return h_; }
    const std::vector<double>& speed_nodes() const { return v_; }
    double lo() const { return knots_.front(); }
    double hi() const { return knots_.back(); }

    /// Sigma by linear interpolation between knots.
    double sigma_fn(double x) const {
        if (identity_) {
            check_range(x);
            return 0.0;
        }
        check_range(x);
        const std::size_t i = detail::locate_cell(knots_, x);
        const double t = (x - knots_[i]) / (knots_[i + 1] - knots_[i]);
        return Sigma_[i] + t * (Sigma_[i + 1] - Sigma_[i]);
    }

    void add_scale() {
        if (has_scale()) return;
        h_.assign(knots_.size(), 0.0);
        if (identity_) {
            h_ = knots_;
            return;
        }
        CumulativeIntegral H(
            knots_, anchor_, [this](double y) { return std::exp(-sigma_eval_->operator()(y)); },
            1e-13);
        for (std::size_t i = 0; i < knots_.size(); ++i) h_[i] = H.at_node(i);
        for (std::size_t i = 1; i < h_.size(); ++i)
            if (!(h_[i] > h_[i - 1]))
                throw Error("scale tabulation is not strictly increasing");
    }

    void add_speed() {
        if (has_speed()) return;
        // W(y) = 2 int_0^y sigma^-2, with closed-form cells for constant sigma
        CumulativeIntegral::CellFn wcell;
        if (coeffs_.sigma.is_constant()) {
            const double s2 = coeffs_.sigma.constant_value() * coeffs_.sigma.constant_value();
            wcell = [s2](double l, double r) { return 2.0 * (r - l) / s2; };
        }
        auto W = std::make_shared<CumulativeIntegral>(
            knots_, anchor_, [this](double y) { return 2.0 / coeffs_.sigma2(y); }, wcell, 1e-13);
        CumulativeIntegral V(
            knots_, anchor_,
            [this, W](double y) {
                const double s = identity_ ? 0.0 : sigma_eval_->operator()(y);
                return std::exp(-s) * W->operator()(y);
            },
            1e-13);
        v_.assign(knots_.size(), 0.0);
        vp_.assign(knots_.size(), 0.0);
        for (std::size_t i = 0; i < knots_.size(); ++i) {
            v_[i] = V.at_node(i);
            vp_[i] = std::exp(-Sigma_[i]) * W->at_node(i);
        }
    }

    /// h(x) (cubic Hermite between knots; node derivatives are exp(-Sigma)).
    double scale(double x) const {
        require(has_scale(), "scale stage not computed");
        check_range(x);
        if (identity_) return x;
        const std::size_t i = detail::locate_cell(knots_, x);
        return detail::hermite_value(knots_[i], knots_[i + 1], h_[i], h_[i + 1],
                                     std::exp(-Sigma_[i]), std::exp(-Sigma_[i + 1]), x);
    }

    /// h'(x) = exp(-Sigma(x)).
    double scale_prime(double x) const {
        if (identity_) {
            check_range(x);
            return 1.0;
        }
        return std::exp(-sigma_fn(x));
    }

    double scale_min() const {
        require(has_scale(), "scale stage not computed");
        return identity_ ? knots_.front() : h_.front();
    }
    double scale_max() const {
        require(has_scale(), "scale stage not computed");
        return identity_ ? knots_.back() : h_.back();
    }

    /// Inverse of h by bracketed Newton on the Hermite cell cubic.
    double scale_inv(double y) const {
        require(has_scale(), "scale stage not computed");
        const double pad = 1e-9 * (1.0 + std::abs(scale_min()) + std::abs(scale_max()));
        if (y < scale_min() - pad || y > scale_max() + pad)
            throw OutOfRange("scale_inv: value outside the tabulated h-range");
        if (identity_) return y;
        if (y <= h_.front()) return knots_.front();
        if (y >= h_.back()) return knots_.back();
        std::size_t lo = 0, hi = h_.size() - 1;
        while (hi - lo > 1) {
            const std::size_t mid = (lo + hi) / 2;
            if (h_[mid] <= y)
                lo = mid;
            else
                hi = mid;
        }
        const double xl = knots_[lo], xr = knots_[lo + 1];
        const double fl = h_[lo], fr = h_[lo + 1];
        const double dl = std::exp(-Sigma_[lo]), dr = std::exp(-Sigma_[lo + 1]);
        double a = xl, b = xr;
        double x = xl + (xr - xl) * (y - fl) / (fr - fl);
        const double tol = 1e-14 * (1.0 + std::abs(y));
        for (int it = 0; it < 80; ++it) {
            const double g = detail::hermite_value(xl, xr, fl, fr, dl, dr, x) - y;
            if (std::abs(g) <= tol) break;
            if (g > 0.0)
                b = x;
            else
                a = x;
            const double gp = detail::hermite_deriv(xl, xr, fl, fr, dl, dr, x);
            double next = x - g / gp;
            if (!(next > a) || !(next < b)) next = 0.5 * (a + b);
            if (next == x) break;
            x = next;
        }
        return x;
    }

    double speed(double x) const {
        require(has_speed(), "speed stage not computed");
        check_range(x);
        const std::size_t i = detail::locate_cell(knots_, x);
        return detail::hermite_value(knots_[i], knots_[i + 1], v_[i], v_[i + 1], vp_[i],
                                     vp_[i + 1], x);
    }

    /// Construction-grade Sigma (adaptive cell remainders, not interpolation).
    double sigma_exact(double y) const {
        if (identity_) return 0.0;
        return sigma_eval_->operator()(y);
    }

    /// Escape hatch for diagnostics tests: same object with tampered speed values.
    ScaleData with_speed_override(std::vector<double> v) const {
        if (v.size() != knots_.size()) throw Error("speed override size mismatch");
        ScaleData s = *this;
        s.v_ = std::move(v);
        if (s.vp_.empty()) s.vp_.assign(s.knots_.size(), 0.0);
        return s;
    }

private:
    ScaleData() = default;

    static void require(bool ok, const char* what) {
        if (!ok) throw Error(std::string("ScaleData: ") + what);
    }

    void check_range(double x) const {
        const double pad = 1e-9 * (1.0 + knots_.back());
        if (x < knots_.front() - pad || x > knots_.back() + pad)
            throw OutOfRange("ScaleData: point outside tabulated range");
    }

    void build_knots() {
        const double R = coeffs_.radius;
        const double step = coeffs_.grid_step;
        const auto m = static_cast<std::size_t>(std::ceil(R / step - 1e-9));
        std::vector<double> pts;
        pts.reserve(2 * m + 1);
        for (std::size_t k = 0; k <= 2 * m; ++k)
            pts.push_back(step * (static_cast<double>(k) - static_cast<double>(m)));
        pts[m] = 0.0;
        auto add_breaks = [&](const ScalarField& f) {
            for (double b : f.breakpoints())
                if (b > pts.front() && b < pts.back()) pts.push_back(b);
        };
        add_breaks(coeffs_.beta);
        add_breaks(coeffs_.sigma);
        std::sort(pts.begin(), pts.end());
        knots_.clear();
        const double eps = 1e-12 * (1.0 + R);
        for (double p : pts)
            if (knots_.empty() || p - knots_.back() > eps) knots_.push_back(p);
        anchor_ = static_cast<std::size_t>(
            std::lower_bound(knots_.begin(), knots_.end(), 0.0) - knots_.begin());
        if (knots_[anchor_] != 0.0) knots_[anchor_] = 0.0;
    }

    void build_sigma_fn() {
        Sigma_.assign(knots_.size(), 0.0);
        if (identity_) return;
        const bool closed_form =
            coeffs_.beta.is_piecewise_linear() && coeffs_.sigma.is_constant();
        CumulativeIntegral::CellFn cell;
        if (closed_form) {
            const double s2 = coeffs_.sigma.constant_value() * coeffs_.sigma.constant_value();
            const ScalarField beta = coeffs_.beta;
            cell = [beta, s2](double l, double r) { return 2.0 * (beta(r) - beta(l)) / s2; };
        }
        sigma_eval_ = std::make_shared<CumulativeIntegral>(
            knots_, anchor_,
            [this](double y) { return 2.0 * coeffs_.beta.derivative(y) / coeffs_.sigma2(y); },
            cell, 1e-13);
        for (std::size_t i = 0; i < knots_.size(); ++i) {
            Sigma_[i] = sigma_eval_->at_node(i);
            if (!(std::abs(Sigma_[i]) < 700.0))
                throw ScaleOverflow("exp(Sigma) overflows at x=" + std::to_string(knots_[i]),
                                    knots_[i]);
        }
    }

    CoefficientField coeffs_;
    bool identity_ = false;
    std::vector<double> knots_;
    std::size_t anchor_ = 0;
    std::vector<double> Sigma_;
    std::vector<double> h_;
    std::vector<double> v_, vp_;
    std::shared_ptr<const CumulativeIntegral> sigma_eval_;
};

inline ScaleData compute_sigma_fn(const CoefficientField& coeffs) {
    return ScaleData::from(coeffs);
}

inline ScaleData& compute_scale(ScaleData& s) {
    s.add_scale();
    return s;
}

inline ScaleData& compute_speed_v(ScaleData& s) {
    s.add_speed();
    return s;
}

/// All three stages (Sigma, h, v) in one call.
inline ScaleData build_scale(const CoefficientField& coeffs) {
    ScaleData s = ScaleData::from(coeffs);
    s.add_scale();
    s.add_speed();
    return s;
}

inline double invert_scale(const ScaleData& s, double y) { return s.scale_inv(y); }

/// Boundary-growth diagnostic for the uniqueness class.  Large v at both ends
/// of the truncated domain is consistent with v(+/-infinity) = +infinity; the
/// verdict can never be stronger than the caveat says.
inline WellposednessReport check_wellposedness(const ScaleData& s, double threshold = 10.0) {
    if (!s.has_speed()) throw Error("check_wellposedness: speed stage not computed");
    WellposednessReport r;
    r.radius = s.hi();
    r.threshold = threshold;
    const auto& v = s.speed_nodes();
    const auto& x = s.knots();
    r.v_left = v.front();
    r.v_right = v.back();
    const double slack = 1e-10 * (1.0 + std::max(std::abs(r.v_left), std::abs(r.v_right)));
    for (std::size_t i = 1; i < v.size(); ++i) {
        const bool left_half = x[i] <= 0.0;
        const double dv = v[i] - v[i - 1];
        if ((left_half && dv > slack) || (!left_half && dv < -slack)) r.monotone_ok = false;
    }
    if (!r.monotone_ok)
        r.verdict = WellposednessReport::Verdict::Inconsistent;
    else if (r.v_left >= threshold && r.v_right >= threshold)
        r.verdict = WellposednessReport::Verdict::Consistent;
    else
        r.verdict = WellposednessReport::Verdict::Inconclusive;
    return r;
}

}  // namespace semilin
