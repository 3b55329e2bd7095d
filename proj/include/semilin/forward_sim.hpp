#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "semilin/coefficients.hpp"
#include "semilin/errors.hpp"
#include "semilin/grid_function.hpp"
#include "semilin/parallel.hpp"
#include "semilin/quadrature.hpp"
#include "semilin/rng.hpp"

namespace semilin {

/// Euler-Maruyama simulation of the diffusion with generator
/// (sigma^2/2) u'' + beta' u', run in scale coordinates: Y = h(X) is a local
/// martingale with dY = h'(X) sigma(X) dW, so one Gaussian increment per step
/// advances Y and the state is recovered through X = h^{-1}(Y).  When the
/// scale is the identity (constant beta) the transform drops out and the raw
/// increments are exact.
struct SimConfig {
    double dt = 1e-3;
    std::uint64_t n_paths = 1;
    std::uint64_t seed = 1;
    double t_max = 4.0;
    double lo = 0.0;   // exit interval (lo, hi)
    double hi = 1.0;
    double x0 = 0.5;
    int threads = 0;   // 0 -> hardware concurrency
    // Gaussian increments aggregated per step.  A run at (2*dt, substeps=2)
    // consumes the same underlying stream as (dt, substeps=1), which couples a
    // Richardson pair to common driving noise without changing distributions.
    std::uint32_t substeps = 1;

    void validate() const {
        if (!(dt > 0.0) || dt > 1e-2) throw ConfigError("sim: dt must lie in (0, 1e-2]");
        if (n_paths == 0) throw ConfigError("sim: n_paths must be positive");
        if (!(t_max > 0.0)) throw ConfigError("sim: t_max must be positive");
        if (!(t_max / dt < 9.0e15)) throw ConfigError("sim: t_max/dt overflows the step counter");
        if (!(lo < hi)) throw ConfigError("sim: interval must satisfy lo < hi");
        if (substeps == 0 || substeps > 64) throw ConfigError("sim: substeps must lie in [1, 64]");
    }

    std::uint64_t max_steps() const {
        const double r = t_max / dt;
        return static_cast<std::uint64_t>(std::max(1.0, std::ceil(r - 1e-9)));
    }
};

/// Everything retained per path.  Full trajectories are never stored; they are
/// reproduced on demand by replaying the counter-based generator.
struct PathSummary {
    double tau = std::numeric_limits<double>::quiet_NaN();  // set when exited
    std::uint64_t n_steps = 0;  // Gaussian increments consumed
    bool exited = false;
    bool censored = false;          // reached t_max inside the interval
    bool range_exceeded = false;    // Y left the tabulated h-range; path abandoned
    bool side_high = false;         // valid when exited: left through hi
};

/// One Euler step as seen by a replay visitor.  The pre-step state x sits at
/// time t = index * dt; on the exit step x_next lies on or beyond the boundary.
struct StepPoint {
    std::uint64_t index = 0;
    double t = 0.0;
    double x = 0.0;
    double x_next = 0.0;
    double dm = 0.0;        // martingale increment dY / h'(X) = sigma(X) sqrt(dt) xi
    double dbracket = 0.0;  // bracket increment sigma^2(X) dt
    bool crossing = false;
};

namespace detail {

inline double aggregated_normal(std::uint64_t seed, std::uint64_t path, std::uint64_t step,
                                std::uint32_t substeps) {
    if (substeps == 1) return rng_normal(seed, path, step, StreamPurpose::Simulation);
    double acc = 0.0;
    const std::uint64_t base = step * substeps;
    for (std::uint32_t j = 0; j < substeps; ++j)
        acc += rng_normal(seed, path, base + j, StreamPurpose::Simulation);
    return acc / std::sqrt(static_cast<double>(substeps));
}

/// Walks one path; the visitor sees every completed step in order.  Used both
/// for the initial sweep (no-op visitor) and for deterministic replay.
template <class Visit>
PathSummary walk_path(const ScaleData& scale, const SimConfig& cfg, std::uint64_t path,
                      Visit&& visit) {
    PathSummary out;
    if (cfg.x0 <= cfg.lo || cfg.x0 >= cfg.hi) {
        out.exited = true;
        out.tau = 0.0;
        out.side_high = cfg.x0 >= cfg.hi;
        return out;
    }
    const bool identity = scale.identity_scale();
    const ScalarField& sigma = scale.coeffs().sigma;
    const bool sigma_const = sigma.is_constant();
    const double sigma_c = sigma_const ? sigma.constant_value() : 0.0;
    const double hmin = scale.scale_min();
    const double hmax = scale.scale_max();
    const double sqdt = std::sqrt(cfg.dt);
    const std::uint64_t max_steps = cfg.max_steps();

    double x = cfg.x0;
    double y = identity ? x : scale.scale(x);
    for (std::uint64_t i = 0; i < max_steps; ++i) {
        const double xi = aggregated_normal(cfg.seed, path, i, cfg.substeps);
        const double sig = sigma_const ? sigma_c : sigma(x);
        const double hp = identity ? 1.0 : scale.scale_prime(x);
        const double dm = sig * sqdt * xi;
        const double ynext = y + hp * dm;
        if (ynext < hmin || ynext > hmax) {
            // The tabulated scale cannot be inverted here.  Stop without
            // counting an exit; the increment stays consumed so a replay
            // reproduces the walk exactly.
            out.range_exceeded = true;
            out.n_steps = i;
            return out;
        }
        const double xnext = identity ? ynext : scale.scale_inv(ynext);
        const bool crossing = xnext <= cfg.lo || xnext >= cfg.hi;
        visit(StepPoint{i, static_cast<double>(i) * cfg.dt, x, xnext, dm, sig * sig * cfg.dt,
                        crossing});
        if (crossing) {
            const bool high = xnext >= cfg.hi;
            const double bnd = high ? cfg.hi : cfg.lo;
            const double frac = (bnd - x) / (xnext - x);  // linear crossing inside the step
            out.tau = (static_cast<double>(i) + frac) * cfg.dt;
            out.exited = true;
            out.side_high = high;
            out.n_steps = i + 1;
            return out;
        }
        x = xnext;
        y = ynext;
    }
    out.censored = true;
    out.n_steps = max_steps;
    return out;
}

}  // namespace detail

/// Simulates n_paths on construction (in parallel) keeping only per-path
/// summaries.  Any path can be replayed step by step afterwards; replay
/// depends only on (seed, path index), never on thread count.
class PathEnsemble {
public:
    PathEnsemble(std::shared_ptr<const ScaleData> scale, SimConfig cfg)
        : scale_(std::move(scale)), cfg_(cfg) {
        if (!scale_) throw Error("PathEnsemble: null scale");
        if (!scale_->has_scale()) throw Error("PathEnsemble: scale stage not computed");
        cfg_.validate();
        if (cfg_.x0 > cfg_.lo && cfg_.x0 < cfg_.hi) {
            if (cfg_.x0 < scale_->lo() || cfg_.x0 > scale_->hi())
                throw OutOfRange("PathEnsemble: x0 outside the tabulated coefficient range");
        }
        summaries_.resize(cfg_.n_paths);
        std::exception_ptr err = nullptr;
        std::mutex err_mutex;
        parallel_for(cfg_.n_paths, cfg_.threads, [&](std::size_t p) {
            try {
                summaries_[p] = detail::walk_path(*scale_, cfg_, p, [](const StepPoint&) {});
            } catch (...) {
                std::lock_guard<std::mutex> g(err_mutex);
                if (!err) err = std::current_exception();
            }
        });
        if (err) std::rethrow_exception(err);
        for (const auto& s : summaries_) {
            n_exited_ += s.exited ? 1 : 0;
            n_censored_ += s.censored ? 1 : 0;
            n_range_exceeded_ += s.range_exceeded ? 1 : 0;
        }
    }

    const SimConfig& config() const { return cfg_; }
    const ScaleData& scale() const { return *scale_; }
    const std::vector<PathSummary>& summaries() const { return summaries_; }
    std::size_t n_exited() const { return n_exited_; }
    std::size_t n_censored() const { return n_censored_; }
    std::size_t n_range_exceeded() const { return n_range_exceeded_; }

    template <class Visit>
    PathSummary replay(std::uint64_t path, Visit&& visit) const {
        if (path >= summaries_.size()) throw OutOfRange("PathEnsemble: path index out of range");
        return detail::walk_path(*scale_, cfg_, path, std::forward<Visit>(visit));
    }

private:
    std::shared_ptr<const ScaleData> scale_;
    SimConfig cfg_;
    std::vector<PathSummary> summaries_;
    std::size_t n_exited_ = 0;
    std::size_t n_censored_ = 0;
    std::size_t n_range_exceeded_ = 0;
};

inline PathEnsemble simulate_paths(std::shared_ptr<const ScaleData> scale, double x0,
                                   SimConfig cfg) {
    cfg.x0 = x0;
    return PathEnsemble(std::move(scale), cfg);
}

struct ExitReport {
    std::size_t n_paths = 0;
    std::size_t n_exited = 0;
    std::size_t n_censored = 0;
    std::size_t n_range_exceeded = 0;
    double censored_fraction = 0.0;
    double mean_tau = std::numeric_limits<double>::quiet_NaN();
    double se_tau = std::numeric_limits<double>::quiet_NaN();
    double frac_exit_high = std::numeric_limits<double>::quiet_NaN();
    bool degenerate = false;  // no exits observed: tau statistics are undefined
};

inline ExitReport exit_stats(const PathEnsemble& ens) {
    ExitReport r;
    r.n_paths = ens.summaries().size();
    r.n_exited = ens.n_exited();
    r.n_censored = ens.n_censored();
    r.n_range_exceeded = ens.n_range_exceeded();
    r.censored_fraction = static_cast<double>(r.n_censored) / static_cast<double>(r.n_paths);
    if (r.n_exited == 0) {
        r.degenerate = true;
        return r;
    }
    KahanSum s, s2;
    std::size_t high = 0;
    for (const auto& p : ens.summaries()) {
        if (!p.exited) continue;
        s.add(p.tau);
        s2.add(p.tau * p.tau);
        high += p.side_high ? 1 : 0;
    }
    const double n = static_cast<double>(r.n_exited);
    r.mean_tau = s.value() / n;
    r.frac_exit_high = static_cast<double>(high) / n;
    if (r.n_exited > 1) {
        const double var = std::max(0.0, (s2.value() - n * r.mean_tau * r.mean_tau) / (n - 1.0));
        r.se_tau = std::sqrt(var / n);
    }
    return r;
}

/// Monte Carlo mean exit time against the PDE-side Gamma = solution of
/// L Gamma = -1 with zero boundary values.
struct GammaComparison {
    double expected = 0.0;
    double estimate = 0.0;
    double se = 0.0;
    double z = 0.0;
    bool richardson = false;
    double dt_coarse = 0.0;
    double dt_fine = 0.0;
    std::string bias_note;
    bool consistent = false;  // |z| <= 3
};

inline GammaComparison compare_exit_to_gamma(const PathEnsemble& ens, const GridFunction& gamma) {
    const ExitReport r = exit_stats(ens);
    if (r.degenerate) throw Error("compare_exit_to_gamma: no exited paths");
    GammaComparison c;
    c.expected = gamma.value(ens.config().x0);
    c.estimate = r.mean_tau;
    c.se = r.se_tau;
    c.dt_coarse = c.dt_fine = ens.config().dt;
    c.bias_note =
        "single-level estimate: discrete monitoring overshoots the exit time by O(sqrt(dt))";
    c.z = (c.estimate - c.expected) / c.se;
    c.consistent = std::abs(c.z) <= 3.0;
    return c;
}

/// Richardson pair at dt and dt/2.  The leading discretization error of the
/// first-exit time decays like c * sqrt(dt), so
///   (sqrt(2) * m_fine - m_coarse) / (sqrt(2) - 1)
/// cancels it.  The standard error combines the two levels as if independent,
/// which is conservative when the pair shares driving noise via substeps.
inline GammaComparison compare_exit_to_gamma(const PathEnsemble& coarse, const PathEnsemble& fine,
                                             const GridFunction& gamma) {
    const double dtc = coarse.config().dt;
    const double dtf = fine.config().dt;
    if (std::abs(dtc - 2.0 * dtf) > 1e-12 * dtc)
        throw Error("compare_exit_to_gamma: Richardson pair needs dt_coarse = 2 * dt_fine");
    if (coarse.config().x0 != fine.config().x0)
        throw Error("compare_exit_to_gamma: Richardson pair must share x0");
    const ExitReport rc = exit_stats(coarse);
    const ExitReport rf = exit_stats(fine);
    if (rc.degenerate || rf.degenerate)
        throw Error("compare_exit_to_gamma: no exited paths at one level");
    GammaComparison c;
    c.expected = gamma.value(fine.config().x0);
    const double w = std::numbers::sqrt2;
    c.estimate = (w * rf.mean_tau - rc.mean_tau) / (w - 1.0);
    c.se = std::sqrt(2.0 * rf.se_tau * rf.se_tau + rc.se_tau * rc.se_tau) / (w - 1.0);
    c.richardson = true;
    c.dt_coarse = dtc;
    c.dt_fine = dtf;
    c.bias_note = "sqrt(dt) Richardson extrapolation cancels the leading discrete-monitoring bias";
    c.z = (c.estimate - c.expected) / c.se;
    c.consistent = std::abs(c.z) <= 3.0;
    return c;
}

/// E[exp(gamma * tau)] for the exit of (a, b) from x0 under the Brownian field
/// (sigma == 1, constant beta).  Finite for gamma < pi^2 / (2 (b-a)^2), +inf at
/// and above that threshold.
inline double exp_moment_exit_closed_form(const CoefficientField& coeffs, double gamma, double a,
                                          double b, double x0) {
    if (!(a < b)) throw Error("exp_moment_exit_closed_form: need a < b");
    if (!coeffs.sigma.is_constant() || std::abs(coeffs.sigma.constant_value() - 1.0) > 1e-12 ||
        !coeffs.beta.is_constant())
        throw Unsupported(
            "closed-form exit moments cover the Brownian field only (sigma == 1, constant beta)");
    if (x0 < a || x0 > b) throw OutOfRange("exp_moment_exit_closed_form: x0 outside [a, b]");
    if (x0 == a || x0 == b) return 1.0;  // tau = 0
    if (gamma == 0.0) return 1.0;
    const double span = b - a;
    if (gamma > 0.0) {
        const double threshold = std::numbers::pi * std::numbers::pi / (2.0 * span * span);
        if (gamma >= threshold) return std::numeric_limits<double>::infinity();
        const double r = std::sqrt(0.5 * gamma);
        return std::cos((b + a - 2.0 * x0) * r) / std::cos(span * r);
    }
    const double r = std::sqrt(-0.5 * gamma);
    return std::cosh((b + a - 2.0 * x0) * r) / std::cosh(span * r);
}

struct ExpMomentEstimate {
    double gamma = 0.0;
    double mean = std::numeric_limits<double>::quiet_NaN();  // over exited paths
    double se = std::numeric_limits<double>::quiet_NaN();
    std::size_t n_exited = 0;
    double censored_fraction = 0.0;
    // For gamma > 0 each censored path contributes at least exp(gamma * t_max),
    // so the estimate is biased low by at least this much probability-weighted mass.
    double censored_floor = 0.0;
    std::string caveat;
};

inline ExpMomentEstimate estimate_exp_moment(const PathEnsemble& ens, double gamma) {
    ExpMomentEstimate e;
    e.gamma = gamma;
    const auto& paths = ens.summaries();
    KahanSum s, s2;
    for (const auto& p : paths) {
        if (!p.exited) continue;
        const double v = std::exp(gamma * p.tau);
        s.add(v);
        s2.add(v * v);
        ++e.n_exited;
    }
    e.censored_fraction =
        static_cast<double>(ens.n_censored()) / static_cast<double>(paths.size());
    if (e.n_exited > 0) {
        const double n = static_cast<double>(e.n_exited);
        e.mean = s.value() / n;
        if (e.n_exited > 1) {
            const double var = std::max(0.0, (s2.value() - n * e.mean * e.mean) / (n - 1.0));
            e.se = std::sqrt(var / n);
        }
    }
    if (ens.n_censored() > 0) {
        if (gamma > 0.0)
            e.censored_floor = e.censored_fraction * std::exp(gamma * ens.config().t_max);
        e.caveat = "censored paths (tau > t_max) are excluded; for gamma > 0 the mean is biased "
                   "low by at least the censored floor";
    }
    return e;
}

/// Shared verdict for divergence witnesses over nested horizons: "growing"
/// when every consecutive ratio gains at least 25%, "stable" when every
/// relative change stays under 5%, "inconclusive" otherwise.
inline std::string divergence_verdict(const std::vector<double>& estimates) {
    if (estimates.size() < 2) return "inconclusive";
    bool growing = true;
    bool stable = true;
    for (std::size_t k = 1; k < estimates.size(); ++k) {
        const double prev = estimates[k - 1];
        const double cur = estimates[k];
        if (!std::isfinite(cur) || !std::isfinite(prev)) return "inconclusive";
        if (cur == prev) {  // covers the identically-zero ladder
            growing = false;
            continue;
        }
        if (!(prev > 0.0)) return "inconclusive";
        const double ratio = cur / prev;
        growing = growing && ratio >= 1.25;
        stable = stable && std::abs(ratio - 1.0) <= 0.05;
    }
    if (growing) return "growing";
    if (stable) return "stable";
    return "inconclusive";
}

/// Truncated exponential moments E[exp(gamma * min(tau, T))] over a ladder of
/// horizons.  Censored paths certify tau > t_max >= T and contribute
/// exp(gamma * T) exactly, so every estimate here is unbiased.
struct HorizonSweep {
    double gamma = 0.0;
    std::vector<double> horizons;
    std::vector<double> estimates;
    std::vector<double> ratios;  // estimates[k] / estimates[k-1]
    std::string verdict;
};

inline HorizonSweep exp_moment_horizon_sweep(const PathEnsemble& ens, double gamma,
                                             std::vector<double> horizons) {
    if (horizons.empty()) throw Error("exp_moment_horizon_sweep: no horizons");
    for (std::size_t k = 0; k < horizons.size(); ++k) {
        if (!(horizons[k] > 0.0)) throw Error("exp_moment_horizon_sweep: horizons must be positive");
        if (k > 0 && !(horizons[k] > horizons[k - 1]))
            throw Error("exp_moment_horizon_sweep: horizons must increase");
    }
    if (horizons.back() > ens.config().t_max * (1.0 + 1e-12))
        throw OutOfHorizon("exp_moment_horizon_sweep: horizon beyond t_max");
    if (ens.n_range_exceeded() > 0)
        throw Error("exp_moment_horizon_sweep: ensemble contains range-exceeded paths");
    HorizonSweep sweep;
    sweep.gamma = gamma;
    sweep.horizons = horizons;
    const auto& paths = ens.summaries();
    for (const double T : horizons) {
        KahanSum s;
        for (const auto& p : paths) {
            const double t = p.exited ? std::min(p.tau, T) : T;
            s.add(std::exp(gamma * t));
        }
        sweep.estimates.push_back(s.value() / static_cast<double>(paths.size()));
    }
    for (std::size_t k = 1; k < sweep.estimates.size(); ++k)
        sweep.ratios.push_back(sweep.estimates[k] / sweep.estimates[k - 1]);
    sweep.verdict = divergence_verdict(sweep.estimates);
    return sweep;
}

}  // namespace semilin
