#include "semilin/quadrature.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

namespace {

using semilin::CumulativeIntegral;
using semilin::cumulative_uniform;
using semilin::integrate;
using semilin::KahanSum;

TEST(Integrate, PolynomialAndExp) {
    EXPECT_NEAR(integrate([](double x) { return x * x; }, 0.0, 1.0), 1.0 / 3.0, 1e-13);
    EXPECT_NEAR(integrate([](double x) { return std::exp(x); }, 0.0, 2.0),
                std::exp(2.0) - 1.0, 1e-11);
    EXPECT_NEAR(integrate([](double x) { return std::sin(x); }, 0.0, M_PI), 2.0, 1e-11);
}

TEST(Integrate, OrientationAndDegenerate) {
    const double fwd = integrate([](double x) { return x; }, 0.0, 1.0);
    const double bwd = integrate([](double x) { return x; }, 1.0, 0.0);
    EXPECT_DOUBLE_EQ(fwd, -bwd);
    EXPECT_EQ(integrate([](double x) { return x; }, 0.5, 0.5), 0.0);
}

TEST(Integrate, KinkedIntegrand) {
    // |x - 1/3| over [0, 1]: 1/2 - 1/3 + 1/9 = 5/18... compute directly:
    // int_0^{1/3}(1/3 - x) + int_{1/3}^1 (x - 1/3) = (1/3)^2/2 + (2/3)^2/2
    const double want = (1.0 / 18.0) + (2.0 / 9.0);
    EXPECT_NEAR(integrate([](double x) { return std::abs(x - 1.0 / 3.0); }, 0.0, 1.0), want,
                1e-11);
}

TEST(Kahan, LongAlternatingSum) {
    KahanSum s;
    for (int i = 0; i < 1000000; ++i) s.add(0.1);
    EXPECT_NEAR(s.value(), 100000.0, 1e-9);
}

TEST(Cumulative, MatchesClosedFormAtNodesAndBetween) {
    std::vector<double> nodes;
    for (int i = 0; i <= 64; ++i) nodes.push_back(-1.0 + 2.0 * i / 64.0);
    CumulativeIntegral F(nodes, 32, [](double y) { return std::cos(y); });
    EXPECT_EQ(F.anchor(), 0.0);
    EXPECT_EQ(F.at_node(32), 0.0);
    for (int i = 0; i <= 64; ++i) EXPECT_NEAR(F.at_node(i), std::sin(nodes[i]), 1e-12);
    EXPECT_NEAR(F(0.37), std::sin(0.37), 1e-12);
    EXPECT_NEAR(F(-0.995), std::sin(-0.995), 1e-12);
}

TEST(Cumulative, AnchorIsExactZeroAndThrowsOutside) {
    std::vector<double> nodes = {0.0, 0.5, 1.0, 2.0};
    CumulativeIntegral F(nodes, 0, [](double y) { return std::exp(y); });
    EXPECT_EQ(F.at_node(0), 0.0);
    EXPECT_THROW(F(2.5), semilin::OutOfRange);
    EXPECT_THROW(F(-0.5), semilin::OutOfRange);
}

TEST(Cumulative, ClosedFormCellsTelescope) {
    std::vector<double> nodes;
    for (int i = 0; i <= 100; ++i) nodes.push_back(0.01 * i);
    // cell integrals supplied exactly: integral of 2y over [l, r]
    CumulativeIntegral F(
        nodes, 0, [](double y) { return 2.0 * y; },
        [](double l, double r) { return r * r - l * l; });
    for (int i = 0; i <= 100; ++i)
        EXPECT_NEAR(F.at_node(i), nodes[i] * nodes[i], 1e-15);
}

TEST(CumulativeUniform, FourthOrderOnSmoothIntegrand) {
    for (std::size_t n : {64u, 128u, 256u}) {
        const double h = 1.0 / n;
        std::vector<double> f(n + 1);
        for (std::size_t j = 0; j <= n; ++j) f[j] = std::exp(h * j);
        const auto I = cumulative_uniform(f, h);
        double worst = 0.0;
        for (std::size_t j = 0; j <= n; ++j)
            worst = std::max(worst, std::abs(I[j] - (std::exp(h * j) - 1.0)));
        EXPECT_LT(worst, 1.0 / (n * n * n * n) * 30.0);
    }
}

TEST(CumulativeUniform, TinyGrids) {
    const auto I2 = cumulative_uniform({0.0, 1.0}, 1.0);
    EXPECT_NEAR(I2[1], 0.5, 1e-15);
    const auto I3 = cumulative_uniform({0.0, 0.25, 1.0}, 0.5);  // f = x^2 on step 1/2
    EXPECT_NEAR(I3[2], 1.0 / 3.0, 1e-12);
}

}  // namespace
