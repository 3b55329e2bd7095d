#include "semilin/forward_sim.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <vector>

#include "semilin/coefficients.hpp"
#include "semilin/linear_solver.hpp"
#include "semilin/rng.hpp"

namespace {

using semilin::build_scale;
using semilin::CoefficientField;
using semilin::compare_exit_to_gamma;
using semilin::estimate_exp_moment;
using semilin::exit_stats;
using semilin::exp_moment_exit_closed_form;
using semilin::exp_moment_horizon_sweep;
using semilin::gamma_function;
using semilin::PathEnsemble;
using semilin::rng_normal;
using semilin::ScalarField;
using semilin::ScaleData;
using semilin::SimConfig;
using semilin::StepPoint;
using semilin::StreamPurpose;

CoefficientField brownian(double radius = 2.0) {
    CoefficientField c;
    c.sigma = ScalarField::constant(1.0);
    c.beta = ScalarField::constant(0.0);
    c.radius = radius;
    return c;
}

CoefficientField wavy_drift() {
    CoefficientField c;
    c.sigma = ScalarField::constant(1.0);
    c.beta = ScalarField::expr("sin", {0.3, 1.0, 0.0});
    c.radius = 2.0;
    return c;
}

std::shared_ptr<const ScaleData> shared_scale(const CoefficientField& c) {
    return std::make_shared<const ScaleData>(build_scale(c));
}

SimConfig unit_interval(double dt, std::uint64_t n, std::uint64_t seed, double t_max = 4.0) {
    SimConfig cfg;
    cfg.dt = dt;
    cfg.n_paths = n;
    cfg.seed = seed;
    cfg.t_max = t_max;
    cfg.lo = 0.0;
    cfg.hi = 1.0;
    cfg.x0 = 0.5;
    return cfg;
}

TEST(Rng, CounterDeterminismAndStreamSeparation) {
    const double a = rng_normal(42, 7, 1000, StreamPurpose::Simulation);
    const double b = rng_normal(42, 7, 1000, StreamPurpose::Simulation);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, rng_normal(42, 7, 1001, StreamPurpose::Simulation));
    EXPECT_NE(a, rng_normal(42, 8, 1000, StreamPurpose::Simulation));
    EXPECT_NE(a, rng_normal(43, 7, 1000, StreamPurpose::Simulation));
    EXPECT_NE(a, rng_normal(42, 7, 1000, StreamPurpose::Probe));
}

TEST(Rng, StandardNormalMoments) {
    const std::size_t n = 100000;
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double z = rng_normal(2026, 0, i, StreamPurpose::Simulation);
        s += z;
        s2 += z * z;
    }
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    EXPECT_NEAR(mean, 0.0, 3.0 / std::sqrt(double(n)));
    EXPECT_NEAR(var, 1.0, 3.0 * std::sqrt(2.0 / double(n)));
}

TEST(SimConfig, ValidationRejectsBadInput) {
    SimConfig cfg = unit_interval(1e-3, 10, 1);
    cfg.dt = 0.0;
    EXPECT_THROW(cfg.validate(), semilin::ConfigError);
    cfg = unit_interval(2e-2, 10, 1);  // coarser than the documented cap
    EXPECT_THROW(cfg.validate(), semilin::ConfigError);
    cfg = unit_interval(1e-3, 0, 1);
    EXPECT_THROW(cfg.validate(), semilin::ConfigError);
    cfg = unit_interval(1e-3, 10, 1);
    cfg.t_max = 0.0;
    EXPECT_THROW(cfg.validate(), semilin::ConfigError);
    cfg = unit_interval(1e-3, 10, 1);
    cfg.lo = 1.0;
    cfg.hi = 0.0;
    EXPECT_THROW(cfg.validate(), semilin::ConfigError);
    cfg = unit_interval(1e-3, 10, 1);
    cfg.substeps = 0;
    EXPECT_THROW(cfg.validate(), semilin::ConfigError);
}

TEST(SimConfig, StepCountIsExactForIntegerRatios) {
    SimConfig cfg = unit_interval(1e-4, 1, 1, 3.0);
    EXPECT_EQ(cfg.max_steps(), 30000u);
    cfg = unit_interval(1e-3, 1, 1, 0.25);
    EXPECT_EQ(cfg.max_steps(), 250u);
    cfg = unit_interval(1e-3, 1, 1, 0.0015);  // partial step still needs a full increment
    EXPECT_EQ(cfg.max_steps(), 2u);
}

TEST(PathEnsemble, StartOnOrOutsideBoundaryExitsImmediately) {
    auto scale = shared_scale(brownian());
    for (double x0 : {0.0, 1.0, -0.3, 1.7}) {
        SimConfig cfg = unit_interval(1e-3, 5, 11);
        cfg.x0 = x0;
        PathEnsemble ens(scale, cfg);
        for (const auto& p : ens.summaries()) {
            EXPECT_TRUE(p.exited);
            EXPECT_EQ(p.tau, 0.0);
            EXPECT_EQ(p.n_steps, 0u);
            EXPECT_EQ(p.side_high, x0 >= 1.0);
        }
    }
}

// With constant beta the scale is the identity, so the simulated increments
// must equal sigma * sqrt(dt) * xi with no transform round-off at all.
TEST(PathEnsemble, IdentityScaleIncrementsAreExactGaussians) {
    auto scale = shared_scale(brownian());
    SimConfig cfg = unit_interval(1e-3, 16, 909);
    PathEnsemble ens(scale, cfg);
    const double sqdt = std::sqrt(cfg.dt);
    for (std::uint64_t p : {std::uint64_t{0}, std::uint64_t{7}, std::uint64_t{15}}) {
        std::uint64_t expect_index = 0;
        ens.replay(p, [&](const StepPoint& sp) {
            EXPECT_EQ(sp.index, expect_index++);
            const double xi = rng_normal(cfg.seed, p, sp.index, StreamPurpose::Simulation);
            EXPECT_EQ(sp.dm, sqdt * xi);
            EXPECT_EQ(sp.x_next, sp.x + sqdt * xi);
            EXPECT_EQ(sp.dbracket, cfg.dt);
        });
        EXPECT_EQ(expect_index, ens.summaries()[p].n_steps);
    }
}

TEST(PathEnsemble, ReplayReconstructsSummaries) {
    auto scale = shared_scale(wavy_drift());
    SimConfig cfg = unit_interval(2e-3, 64, 33, 1.0);
    PathEnsemble ens(scale, cfg);
    std::size_t exited = 0, censored = 0;
    for (std::uint64_t p = 0; p < cfg.n_paths; ++p) {
        const auto& s = ens.summaries()[p];
        std::uint64_t steps = 0;
        bool saw_crossing = false;
        double tau = std::numeric_limits<double>::quiet_NaN();
        const auto again = ens.replay(p, [&](const StepPoint& sp) {
            ++steps;
            if (sp.crossing) {
                saw_crossing = true;
                const double bnd = sp.x_next >= cfg.hi ? cfg.hi : cfg.lo;
                const double frac = (bnd - sp.x) / (sp.x_next - sp.x);
                tau = (double(sp.index) + frac) * cfg.dt;
            }
        });
        EXPECT_EQ(steps, s.n_steps);
        EXPECT_EQ(saw_crossing, s.exited);
        EXPECT_EQ(again.exited, s.exited);
        EXPECT_EQ(again.censored, s.censored);
        EXPECT_EQ(again.n_steps, s.n_steps);
        if (s.exited) {
            EXPECT_EQ(tau, s.tau);
            EXPECT_GT(s.tau, 0.0);
            EXPECT_LE(s.tau, double(s.n_steps) * cfg.dt);
            ++exited;
        }
        if (s.censored) {
            EXPECT_EQ(s.n_steps, cfg.max_steps());
            ++censored;
        }
    }
    EXPECT_EQ(exited, ens.n_exited());
    EXPECT_EQ(censored, ens.n_censored());
    EXPECT_GT(exited, 0u);
}

TEST(PathEnsemble, SummariesDoNotDependOnThreadCount) {
    auto scale = shared_scale(wavy_drift());
    SimConfig base = unit_interval(2e-3, 300, 77, 1.0);
    base.threads = 1;
    PathEnsemble one(scale, base);
    for (int t : {2, 3, 8}) {
        SimConfig cfg = base;
        cfg.threads = t;
        PathEnsemble many(scale, cfg);
        ASSERT_EQ(many.summaries().size(), one.summaries().size());
        for (std::size_t p = 0; p < one.summaries().size(); ++p) {
            const auto& a = one.summaries()[p];
            const auto& b = many.summaries()[p];
            // bitwise equality, not approximate agreement (tau is NaN unless exited)
            if (a.exited) EXPECT_EQ(a.tau, b.tau);
            EXPECT_EQ(a.n_steps, b.n_steps);
            EXPECT_EQ(a.exited, b.exited);
            EXPECT_EQ(a.censored, b.censored);
            EXPECT_EQ(a.side_high, b.side_high);
        }
    }
}

// A run at (2 dt, substeps = 2) must consume the same Gaussian stream as
// (dt, substeps = 1), pairing consecutive fine increments.
TEST(PathEnsemble, SubstepsCoupleCoarseRunToFineStream) {
    auto scale = shared_scale(brownian());
    SimConfig coarse = unit_interval(2e-3, 4, 555);
    coarse.substeps = 2;
    PathEnsemble ens(scale, coarse);
    const double sqdt = std::sqrt(coarse.dt);
    ens.replay(1, [&](const StepPoint& sp) {
        const double z0 = rng_normal(coarse.seed, 1, 2 * sp.index, StreamPurpose::Simulation);
        const double z1 = rng_normal(coarse.seed, 1, 2 * sp.index + 1, StreamPurpose::Simulation);
        const double xi = (z0 + z1) / std::sqrt(2.0);
        EXPECT_EQ(sp.dm, sqdt * xi);
    });
}

TEST(PathEnsemble, StoppedMartingaleHasMeanZeroAndMatchingBracket) {
    auto scale = shared_scale(brownian());
    SimConfig cfg = unit_interval(1e-3, 20000, 2401, 1.0);
    PathEnsemble ens(scale, cfg);
    const std::uint64_t cutoff = 200;  // M stopped at min(0.2, tau)
    double sm = 0.0, sm2 = 0.0, sd2 = 0.0, sdiff = 0.0, sdiff2 = 0.0;
    for (std::uint64_t p = 0; p < cfg.n_paths; ++p) {
        double m = 0.0, qv = 0.0, br = 0.0;
        ens.replay(p, [&](const StepPoint& sp) {
            if (sp.index >= cutoff) return;
            m += sp.dm;
            qv += sp.dm * sp.dm;
            br += sp.dbracket;
        });
        sm += m;
        sm2 += m * m;
        sd2 += br;
        const double diff = qv - br;
        sdiff += diff;
        sdiff2 += diff * diff;
    }
    const double n = double(cfg.n_paths);
    const double mean_m = sm / n;
    const double se_m = std::sqrt((sm2 / n - mean_m * mean_m) / n);
    EXPECT_NEAR(mean_m, 0.0, 3.0 * se_m);
    // E[M^2] = E[<M>] for the stopped discrete martingale
    const double mean_diff = sdiff / n;
    const double se_diff = std::sqrt((sdiff2 / n - mean_diff * mean_diff) / n);
    EXPECT_NEAR(mean_diff, 0.0, 3.0 * se_diff + 1e-12);
    EXPECT_GT(sd2 / n, 0.05);  // sanity: a visible amount of bracket accrued
}

// The realized quadratic variation approaches the bracket as dt shrinks, at
// the Monte Carlo rate sqrt(dt).
TEST(PathEnsemble, QuadraticVariationConvergesToBracket) {
    auto scale = shared_scale(wavy_drift());
    auto mean_abs_gap = [&](double dt) {
        SimConfig cfg = unit_interval(dt, 4000, 616, 1.0);
        PathEnsemble ens(scale, cfg);
        const std::uint64_t cutoff = static_cast<std::uint64_t>(0.2 / dt);
        double acc = 0.0;
        for (std::uint64_t p = 0; p < cfg.n_paths; ++p) {
            double qv = 0.0, br = 0.0;
            ens.replay(p, [&](const StepPoint& sp) {
                if (sp.index >= cutoff) return;
                qv += sp.dm * sp.dm;
                br += sp.dbracket;
            });
            acc += std::abs(qv - br);
        }
        return acc / double(cfg.n_paths);
    };
    const double coarse = mean_abs_gap(4e-3);
    const double fine = mean_abs_gap(1e-3);
    EXPECT_LT(fine, coarse);
    EXPECT_GT(coarse / fine, 1.5);  // expected factor 2 at one quarter the step
    EXPECT_LT(fine, 0.02);
}

// Driftless mean and Brownian variance at t = 0.1, measured on a wide interval
// so essentially no path exits first.
TEST(PathEnsemble, BrownianMeanAndVarianceAtFixedTime) {
    auto scale = shared_scale(brownian());
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.n_paths = 100000;
    cfg.seed = 8088;
    cfg.t_max = 0.1;
    cfg.lo = -1.9;
    cfg.hi = 1.9;
    cfg.x0 = 0.0;
    PathEnsemble ens(scale, cfg);
    ASSERT_EQ(ens.n_censored(), cfg.n_paths);  // nobody reaches +-1.9 by t = 0.1
    double s = 0.0, s2 = 0.0;
    const std::uint64_t last = cfg.max_steps() - 1;
    for (std::uint64_t p = 0; p < cfg.n_paths; ++p) {
        ens.replay(p, [&](const StepPoint& sp) {
            if (sp.index != last) return;
            s += sp.x_next;
            s2 += sp.x_next * sp.x_next;
        });
    }
    const double n = double(cfg.n_paths);
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    const double se_mean = std::sqrt(0.1 / n);
    const double se_var = 0.1 * std::sqrt(2.0 / n);
    EXPECT_NEAR(mean, 0.0, 3.0 * se_mean);
    EXPECT_NEAR(var, 0.1, 3.0 * se_var);
}

TEST(ExitStats, SymmetricStartsHaveSymmetricMeans) {
    auto scale = shared_scale(brownian());
    SimConfig a = unit_interval(1e-3, 5000, 111);
    a.x0 = 0.3;
    SimConfig b = unit_interval(1e-3, 5000, 222);
    b.x0 = 0.7;
    const auto ra = exit_stats(PathEnsemble(scale, a));
    const auto rb = exit_stats(PathEnsemble(scale, b));
    const double se = std::sqrt(ra.se_tau * ra.se_tau + rb.se_tau * rb.se_tau);
    EXPECT_NEAR(ra.mean_tau, rb.mean_tau, 3.0 * se);
}

TEST(ExitStats, BrownianFromCenterMatchesQuarter) {
    auto scale = shared_scale(brownian());
    SimConfig cfg = unit_interval(1e-3, 20000, 314159);
    PathEnsemble ens(scale, cfg);
    const auto r = exit_stats(ens);
    EXPECT_FALSE(r.degenerate);
    EXPECT_EQ(r.n_exited + r.n_censored, cfg.n_paths);
    EXPECT_EQ(r.n_range_exceeded, 0u);
    EXPECT_LT(r.censored_fraction, 1e-3);
    // mean exit time 1/4 plus an O(sqrt(dt)) monitoring bias
    EXPECT_NEAR(r.mean_tau, 0.25, 0.035);
    EXPECT_GT(r.se_tau, 0.0);
    // symmetric start: either side is equally likely
    EXPECT_NEAR(r.frac_exit_high, 0.5, 3.0 * 0.5 / std::sqrt(double(cfg.n_paths)));
}

TEST(ExitStats, NoExitWithinTinyHorizonIsDegenerate) {
    auto scale = shared_scale(brownian());
    SimConfig cfg = unit_interval(1e-3, 50, 5, 2e-3);
    PathEnsemble ens(scale, cfg);
    const auto r = exit_stats(ens);
    EXPECT_TRUE(r.degenerate);
    EXPECT_EQ(r.n_censored, 50u);
    EXPECT_TRUE(std::isnan(r.mean_tau));
    const auto gamma = gamma_function(ens.scale());
    EXPECT_THROW(compare_exit_to_gamma(ens, gamma), semilin::Error);
}

TEST(GammaComparison, SingleLevelSeesTheMonitoringBias) {
    auto scale = shared_scale(brownian());
    SimConfig cfg = unit_interval(1e-3, 20000, 777);
    PathEnsemble ens(scale, cfg);
    const auto gamma = gamma_function(*scale);
    const auto c = compare_exit_to_gamma(ens, gamma);
    EXPECT_FALSE(c.richardson);
    EXPECT_NEAR(c.expected, 0.25, 1e-6);
    EXPECT_EQ(c.dt_coarse, c.dt_fine);
    // discrete monitoring overestimates tau; at dt = 1e-3 the bias is well
    // above the Monte Carlo noise
    EXPECT_GT(c.estimate - c.expected, 0.008);
    EXPECT_FALSE(c.bias_note.empty());
}

TEST(GammaComparison, RichardsonPairCancelsTheBias) {
    auto scale = shared_scale(brownian());
    SimConfig fine = unit_interval(1e-3, 20000, 777);
    SimConfig coarse = fine;
    coarse.dt = 2e-3;
    coarse.substeps = 2;  // shares the fine stream: common driving noise
    PathEnsemble fine_ens(scale, fine);
    PathEnsemble coarse_ens(scale, coarse);
    const auto gamma = gamma_function(*scale);
    const auto c = compare_exit_to_gamma(coarse_ens, fine_ens, gamma);
    EXPECT_TRUE(c.richardson);
    EXPECT_EQ(c.dt_coarse, 2e-3);
    EXPECT_EQ(c.dt_fine, 1e-3);
    EXPECT_NEAR(c.estimate, 0.25, 0.008);
    EXPECT_TRUE(c.consistent);
    // the two levels bracket the limit from above, coarse highest
    const auto rc = exit_stats(coarse_ens);
    const auto rf = exit_stats(fine_ens);
    EXPECT_GT(rc.mean_tau, rf.mean_tau);
    EXPECT_GT(rf.mean_tau, c.expected);
    // misuse: the pair must be a proper dt / dt/2 ladder with one start point
    SimConfig bad = fine;
    bad.dt = 8e-4;
    PathEnsemble bad_ens(scale, bad);
    EXPECT_THROW(compare_exit_to_gamma(coarse_ens, bad_ens, gamma), semilin::Error);
}

TEST(ClosedForm, ExpMomentKnownValues) {
    const CoefficientField c = brownian();
    EXPECT_EQ(exp_moment_exit_closed_form(c, 0.0, 0.0, 1.0, 0.5), 1.0);
    // 1 / cos(sqrt(1/2)) for gamma = 1 from the middle of a unit interval
    EXPECT_NEAR(exp_moment_exit_closed_form(c, 1.0, 0.0, 1.0, 0.5), 1.31536613853833, 1e-12);
    // 1 / cosh(sqrt(1/2)) on the negative side
    EXPECT_NEAR(exp_moment_exit_closed_form(c, -1.0, 0.0, 1.0, 0.5), 0.7932781817463869, 1e-12);
    // divergence at and above pi^2 / 2
    const double pi2 = std::numbers::pi * std::numbers::pi;
    EXPECT_TRUE(std::isinf(exp_moment_exit_closed_form(c, pi2 / 2.0, 0.0, 1.0, 0.5)));
    EXPECT_TRUE(std::isinf(exp_moment_exit_closed_form(c, 20.0, 0.0, 1.0, 0.5)));
    EXPECT_TRUE(std::isfinite(exp_moment_exit_closed_form(c, pi2 / 2.0 - 1e-6, 0.0, 1.0, 0.5)));
}

TEST(ClosedForm, ExpMomentStructuralProperties) {
    const CoefficientField c = brownian();
    // symmetry about the midpoint and value 1 on the boundary
    EXPECT_DOUBLE_EQ(exp_moment_exit_closed_form(c, 1.0, 0.0, 1.0, 0.3),
                     exp_moment_exit_closed_form(c, 1.0, 0.0, 1.0, 0.7));
    EXPECT_EQ(exp_moment_exit_closed_form(c, 3.0, 0.0, 1.0, 0.0), 1.0);
    EXPECT_EQ(exp_moment_exit_closed_form(c, 3.0, 0.0, 1.0, 1.0), 1.0);
    // monotone in gamma, and interval scaling moves the blow-up threshold
    EXPECT_LT(exp_moment_exit_closed_form(c, 0.5, 0.0, 1.0, 0.5),
              exp_moment_exit_closed_form(c, 1.0, 0.0, 1.0, 0.5));
    EXPECT_TRUE(std::isfinite(exp_moment_exit_closed_form(c, 4.0, 0.0, 0.5, 0.25)));
    EXPECT_TRUE(std::isinf(exp_moment_exit_closed_form(c, 4.0, 0.0, 2.0, 1.0)));
    EXPECT_THROW(exp_moment_exit_closed_form(c, 1.0, 0.0, 1.0, 1.5), semilin::OutOfRange);
    EXPECT_THROW(exp_moment_exit_closed_form(c, 1.0, 1.0, 0.0, 0.5), semilin::Error);
}

TEST(ClosedForm, NonBrownianFieldsAreRejected) {
    CoefficientField c = brownian();
    c.sigma = ScalarField::constant(std::sqrt(2.0));
    EXPECT_THROW(exp_moment_exit_closed_form(c, 1.0, 0.0, 1.0, 0.5), semilin::Unsupported);
    c = wavy_drift();
    EXPECT_THROW(exp_moment_exit_closed_form(c, 1.0, 0.0, 1.0, 0.5), semilin::Unsupported);
}

TEST(ExpMoment, EstimateTracksClosedForm) {
    auto scale = shared_scale(brownian());
    SimConfig cfg = unit_interval(1e-3, 20000, 424242);
    PathEnsemble ens(scale, cfg);
    const auto est = estimate_exp_moment(ens, 1.0);
    const double exact = exp_moment_exit_closed_form(brownian(), 1.0, 0.0, 1.0, 0.5);
    // dt = 1e-3 leaves a visible sqrt(dt) bias; stay within a loose band
    EXPECT_NEAR(est.mean, exact, 0.05);
    EXPECT_GT(est.se, 0.0);
    EXPECT_GT(est.n_exited, 19000u);
}

TEST(ExpMoment, CensoringIsReportedNotHidden) {
    auto scale = shared_scale(brownian());
    SimConfig cfg = unit_interval(1e-3, 2000, 99, 0.05);  // many paths outlive t_max
    PathEnsemble ens(scale, cfg);
    const auto est = estimate_exp_moment(ens, 2.0);
    EXPECT_GT(est.censored_fraction, 0.2);
    EXPECT_FALSE(est.caveat.empty());
    EXPECT_NEAR(est.censored_floor, est.censored_fraction * std::exp(2.0 * 0.05), 1e-12);
    const auto neg = estimate_exp_moment(ens, -1.0);
    EXPECT_EQ(neg.censored_floor, 0.0);  // only gamma > 0 loses mass below
    EXPECT_FALSE(neg.caveat.empty());
}

TEST(HorizonSweep, SupercriticalGammaGrows) {
    auto scale = shared_scale(brownian());
    // the tail matters here: growth past T = 2 needs sampled exits with
    // tau > 2, which occur at rate ~6.6e-5 per path
    SimConfig cfg = unit_interval(1e-3, 40000, 1618);
    PathEnsemble ens(scale, cfg);
    const double gamma = 2.0 * std::numbers::pi * std::numbers::pi;  // above pi^2/2
    const auto sweep = exp_moment_horizon_sweep(ens, gamma, {1.0, 2.0, 4.0});
    ASSERT_EQ(sweep.estimates.size(), 3u);
    EXPECT_LT(sweep.estimates[0], sweep.estimates[1]);
    EXPECT_LT(sweep.estimates[1], sweep.estimates[2]);
    for (double r : sweep.ratios) EXPECT_GE(r, 1.25);
    EXPECT_EQ(sweep.verdict, "growing");
}

TEST(HorizonSweep, SubcriticalGammaStabilizes) {
    auto scale = shared_scale(brownian());
    SimConfig cfg = unit_interval(1e-3, 4000, 1618);
    PathEnsemble ens(scale, cfg);
    const auto sweep = exp_moment_horizon_sweep(ens, -1.0, {1.0, 2.0, 4.0});
    EXPECT_EQ(sweep.verdict, "stable");
    EXPECT_THROW(exp_moment_horizon_sweep(ens, 1.0, {1.0, 8.0}), semilin::OutOfHorizon);
    EXPECT_THROW(exp_moment_horizon_sweep(ens, 1.0, {2.0, 1.0}), semilin::Error);
    EXPECT_THROW(exp_moment_horizon_sweep(ens, 1.0, {}), semilin::Error);
}

// An interval reaching past the tabulated coefficient range: paths heading
// that way must be flagged, not clamped and not counted as exits.
TEST(PathEnsemble, LeavingTheTabulatedRangeIsFlagged) {
    auto scale = shared_scale(brownian(1.03));
    SimConfig cfg = unit_interval(1e-3, 2000, 31337, 2.0);
    cfg.hi = 1.2;  // beyond the tabulated radius
    PathEnsemble ens(scale, cfg);
    EXPECT_GT(ens.n_range_exceeded(), 0u);
    EXPECT_EQ(ens.n_exited() + ens.n_censored() + ens.n_range_exceeded(), cfg.n_paths);
    for (const auto& p : ens.summaries()) {
        EXPECT_EQ(p.exited + p.censored + p.range_exceeded, 1);
        if (p.exited) EXPECT_FALSE(p.side_high);  // hi is unreachable inside the table
        if (p.range_exceeded) EXPECT_FALSE(p.exited);
    }
    EXPECT_THROW(exp_moment_horizon_sweep(ens, 1.0, {1.0}), semilin::Error);
}

TEST(PathEnsemble, SimulatePathsSetsTheStartPoint) {
    auto scale = shared_scale(brownian());
    SimConfig cfg = unit_interval(1e-3, 8, 5);
    const auto ens = semilin::simulate_paths(scale, 0.25, cfg);
    EXPECT_EQ(ens.config().x0, 0.25);
    std::uint64_t first = 1;
    ens.replay(0, [&](const StepPoint& sp) {
        if (sp.index == 0) {
            first = 0;
            EXPECT_EQ(sp.x, 0.25);
        }
    });
    EXPECT_EQ(first, 0u);
}

TEST(PathEnsemble, RejectsBadConstruction) {
    auto scale = shared_scale(brownian());
    EXPECT_THROW(PathEnsemble(nullptr, unit_interval(1e-3, 1, 1)), semilin::Error);
    SimConfig cfg = unit_interval(1e-3, 1, 1);
    cfg.lo = -5.0;
    cfg.hi = 5.0;
    cfg.x0 = 3.0;  // inside the interval but outside the tabulated range
    EXPECT_THROW(PathEnsemble(scale, cfg), semilin::OutOfRange);
    PathEnsemble ok(scale, unit_interval(1e-3, 4, 1));
    EXPECT_THROW(ok.replay(4, [](const StepPoint&) {}), semilin::OutOfRange);
}

}  // namespace
