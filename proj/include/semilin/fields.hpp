#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "semilin/errors.hpp"
#include "semilin/rng.hpp"

namespace semilin {

/// A scalar coefficient on the line.  Supported representations:
///   - constant
///   - expression from a small catalog (analytic derivative)
///   - piecewise-linear samples on a uniform breakpoint grid (continuous,
///     derivative is the segment slope; constant continuation outside)
///   - raw point samples with no interpolation rule (inert: any use that needs
///     values between samples or derivatives throws UnsupportedRepresentation)
class ScalarField {
public:
    enum class Kind { Constant, Expr, PiecewiseLinear, PointSamples };

    static ScalarField constant(double c) {
        ScalarField f;
        f.kind_ = Kind::Constant;
        f.c_ = c;
        return f;
    }

    static ScalarField expr(std::string id, std::vector<double> params) {
        ScalarField f;
        f.kind_ = Kind::Expr;
        f.id_ = std::move(id);
        f.params_ = std::move(params);
        f.validate_expr();
        return f;
    }

    static ScalarField piecewise_linear(double x0, double step, std::vector<double> values) {
        if (!(step > 0.0) || values.size() < 2)
            throw CoefficientError("piecewise_linear: need step > 0 and at least two samples");
        ScalarField f;
        f.kind_ = Kind::PiecewiseLinear;
        f.x0_ = x0;
        f.step_ = step;
        f.samples_ = std::move(values);
        return f;
    }

    static ScalarField point_samples(std::vector<double> xs, std::vector<double> values) {
        if (xs.size() != values.size() || xs.empty())
            throw CoefficientError("point_samples: mismatched sample arrays");
        ScalarField f;
        f.kind_ = Kind::PointSamples;
        f.sample_xs_ = std::move(xs);
        f.samples_ = std::move(values);
        return f;
    }

    /// Piecewise-linear path of a Brownian motion started at 0, tabulated with
    /// the given breakpoint step on [-radius, radius].  Deterministic in seed.
    static ScalarField brownian_env(std::uint64_t seed, double step, double radius) {
        if (!(step > 0.0) || !(radius > 0.0))
            throw CoefficientError("brownian_env: need step > 0 and radius > 0");
        const auto m = static_cast<std::size_t>(std::ceil(radius / step - 1e-9));
        const double sq = std::sqrt(step);
        std::vector<double> vals(2 * m + 1, 0.0);
        for (std::size_t k = 0; k < m; ++k)
            vals[m + k + 1] =
                vals[m + k] + sq * rng_normal(seed, 0, k, StreamPurpose::BrownianEnv);
        for (std::size_t k = 0; k < m; ++k)
            vals[m - k - 1] =
                vals[m - k] + sq * rng_normal(seed, 1, k, StreamPurpose::BrownianEnv);
        return piecewise_linear(-step * static_cast<double>(m), step, std::move(vals));
    }

    /// post_scale * this(pre_shift + pre_scale * x), composed with any existing
    /// transform.  Used by the affine interval transport.
    ScalarField transformed(double post_scale, double pre_shift, double pre_scale) const {
        if (kind_ == Kind::PointSamples)
            throw UnsupportedRepresentation("point samples cannot be transformed");
        ScalarField f = *this;
        if (kind_ == Kind::Constant) {
            f.c_ *= post_scale;
            return f;
        }
        if (kind_ == Kind::PiecewiseLinear) {
            // remap breakpoints exactly: x0 + step*i = pre_shift + pre_scale * t
            if (!(pre_scale > 0.0))
                throw CoefficientError("transformed: pre_scale must be positive");
            f.x0_ = (x0_ - pre_shift) / pre_scale;
            f.step_ = step_ / pre_scale;
            for (double& v : f.samples_) v *= post_scale;
            return f;
        }
        f.post_ *= post_scale;
        f.prea_ = prea_ + preb_ * pre_shift;
        f.preb_ = preb_ * pre_scale;
        return f;
    }

    Kind kind() const { return kind_; }
    bool is_constant() const { return kind_ == Kind::Constant; }
    double constant_value() const {
        if (kind_ != Kind::Constant) throw Error("ScalarField: not a constant");
        return c_;
    }
    bool is_piecewise_linear() const { return kind_ == Kind::PiecewiseLinear; }

    bool has_derivative() const { return kind_ != Kind::PointSamples; }

    double operator()(double x) const {
        switch (kind_) {
            case Kind::Constant:
                return c_;
            case Kind::Expr:
                return post_ * expr_value(prea_ + preb_ * x);
            case Kind::PiecewiseLinear: {
                const auto [i, t] = segment(x);
                return samples_[i] + t * (samples_[i + 1] - samples_[i]);
            }
            case Kind::PointSamples:
                for (std::size_t i = 0; i < sample_xs_.size(); ++i)
                    if (sample_xs_[i] == x) return samples_[i];
                throw UnsupportedRepresentation(
                    "point samples carry no interpolation rule; value defined only at "
                    "sample points");
        }
        return 0.0;
    }

    double derivative(double x) const {
        switch (kind_) {
            case Kind::Constant:
                return 0.0;
            case Kind::Expr:
                return post_ * preb_ * expr_derivative(prea_ + preb_ * x);
            case Kind::PiecewiseLinear: {
                const auto [i, t] = segment(x);
                (void)t;
                if (x < x0_ || x > x0_ + step_ * static_cast<double>(samples_.size() - 1))
                    return 0.0;  // constant continuation
                return (samples_[i + 1] - samples_[i]) / step_;
            }
            case Kind::PointSamples:
                throw UnsupportedRepresentation(
                    "point samples carry no interpolation rule; derivative undefined");
        }
        return 0.0;
    }

    /// Breakpoints of the piecewise-linear representation (empty otherwise).
    std::vector<double> breakpoints() const {
        std::vector<double> b;
        if (kind_ == Kind::PiecewiseLinear) {
            b.resize(samples_.size());
            for (std::size_t i = 0; i < samples_.size(); ++i)
                b[i] = x0_ + step_ * static_cast<double>(i);
        }
        return b;
    }

private:
    ScalarField() = default;

    std::pair<std::size_t, double> segment(double x) const {
        const double n = static_cast<double>(samples_.size() - 1);
        double s = (x - x0_) / step_;
        if (s <= 0.0) return {0, 0.0};
        if (s >= n) return {samples_.size() - 2, 1.0};
        auto i = static_cast<std::size_t>(s);
        if (i > samples_.size() - 2) i = samples_.size() - 2;
        return {i, s - static_cast<double>(i)};
    }

    void validate_expr() const {
        const std::size_t want = id_ == "linear"  ? 2
                                 : id_ == "sin"   ? 3
                                 : id_ == "cos"   ? 3
                                 : id_ == "abs"   ? 2
                                 : id_ == "exp"   ? 2
                                                  : 0;
        if (want == 0) throw CoefficientError("unknown field expression id: " + id_);
        if (params_.size() != want)
            throw CoefficientError("field expression '" + id_ + "' wants " +
                                   std::to_string(want) + " parameters");
    }

    double expr_value(double x) const {
        if (id_ == "linear") return params_[0] + params_[1] * x;
        if (id_ == "sin") return params_[0] * std::sin(params_[1] * x + params_[2]);
        if (id_ == "cos") return params_[0] * std::cos(params_[1] * x + params_[2]);
        if (id_ == "abs") return params_[0] + params_[1] * std::abs(x);
        if (id_ == "exp") return params_[0] * std::exp(params_[1] * x);
        throw CoefficientError("unknown field expression id: " + id_);
    }

    double expr_derivative(double x) const {
        if (id_ == "linear") return params_[1];
        if (id_ == "sin") return params_[0] * params_[1] * std::cos(params_[1] * x + params_[2]);
        if (id_ == "cos") return -params_[0] * params_[1] * std::sin(params_[1] * x + params_[2]);
        if (id_ == "abs") return x > 0.0 ? params_[1] : (x < 0.0 ? -params_[1] : 0.0);
        if (id_ == "exp") return params_[0] * params_[1] * std::exp(params_[1] * x);
        throw CoefficientError("unknown field expression id: " + id_);
    }

    Kind kind_ = Kind::Constant;
    double c_ = 0.0;
    std::string id_;
    std::vector<double> params_;
    double post_ = 1.0;
    double prea_ = 0.0;
    double preb_ = 1.0;
    double x0_ = 0.0;
    double step_ = 1.0;
    std::vector<double> samples_;
    std::vector<double> sample_xs_;
};

}  // namespace semilin
