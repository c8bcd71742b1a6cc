#include <gtest/gtest.h>

#include <cmath>

#include "jumpvol/hsolver.hpp"

using namespace jumpvol;

namespace {

// h_t + g h_y + 1/2 h_yy + S = 0 with S and g given directly.
HEquation injected(double T, double hT, std::function<double(double t, double y, double h)> src,
                   std::function<double(double y)> drift = [](double) { return 0.0; }) {
    HEquation eq;
    eq.horizon = T;
    eq.terminal = [hT](double) { return hT; };
    eq.drift = [drift](const TimeContext&, double y, double) { return drift(y); };
    eq.source = [src](const TimeContext& c, double y, double, double h, double) { return src(c.t, y, h); };
    return eq;
}

struct MertonCase {
    Preferences prefs{-1.0, 0.3, 1.0, 2.0};
    double r = 0.03, mu = 0.04, beta = 0.2, sigma = 0.15, rho = 0.05, T = 1.0;

    CoefficientSet cs() const {
        return {constant_rate(r), constant_map(r + mu), constant_map(beta), constant_map(sigma),
                affine_jump_scale(1.0, 0.0), JumpSpec::none()};
    }
    ActuarialModel am() const { return ActuarialModel(constant_rate(0.0), constant_rate(rho), T); }

    // Value function V = g^{1-delta} x^delta / delta of the HJB equation without mortality,
    // g' = k g - kappa1^{1/(1-delta)}, g(T) = kappa3^{1/(1-delta)}; A1 = e^{-rho t} V_x.
    double h(double t) const {
        const double d = prefs.delta;
        const double nu = r + mu * mu / (2.0 * (1.0 - d) * (beta * beta + sigma * sigma));
        const double k = (rho - d * nu) / (1.0 - d);
        const double q = std::pow(prefs.kappa1, 1.0 / (1.0 - d));
        const double gT = std::pow(prefs.kappa3, 1.0 / (1.0 - d));
        const double e = std::exp(-k * (T - t));
        const double g = e * gT + q * (1.0 - e) / k;
        return rho * t - (1.0 - d) * std::log(g);
    }
};

}  // namespace

TEST(Slopes, ExactOnQuadraticsWithUnevenNodes) {
    const std::vector<double> x{-1.0, -0.7, 0.0, 0.2, 1.0, 1.9};
    std::vector<double> v;
    for (double s : x) v.push_back(2.0 - 3.0 * s + 1.5 * s * s);
    const auto d = slopes(x, v);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(d[i], -3.0 + 3.0 * x[i], 1e-12);
}

TEST(KTerm, Examples) {
    const Preferences p{0.5, 1, 1, 1};
    const CoefficientSet flat{constant_rate(0.05), constant_map(0.05), constant_map(0.0), constant_map(0.0),
                              affine_jump_scale(1.0, 0.0), JumpSpec::none()};
    EXPECT_NEAR(k_term(p, flat, 0.0, 0.0, 0.0, 0.02), 0.03, 1e-15);

    CoefficientSet zero = flat;
    zero.r = constant_rate(0.0);
    zero.alpha = constant_map(0.0);
    EXPECT_EQ(k_term(p, zero, 0.0, 0.0, 0.0, 0.0), 0.0);

    // -(delta-1) * 1/2 (delta-1)(delta-2) pi^2 (beta^2+sigma^2) = 0.5 * 0.5 * 0.75 * 0.01 * 0.18
    CoefficientSet vol = zero;
    vol.beta = constant_map(0.3);
    vol.sigma = constant_map(0.3);
    EXPECT_NEAR(k_term(p, vol, 0.0, 0.0, 0.1, 0.0), 3.375e-4, 1e-15);
}

TEST(KTerm, JumpCompensatorClosedForm) {
    const Preferences p{-1.0, 1, 1, 1};
    const CoefficientSet cs{constant_rate(0.0), constant_map(0.0), constant_map(0.0), constant_map(0.0),
                            affine_jump_scale(1.0, 0.0), JumpSpec(2.0, {{0.1, 0.5}, {-0.2, 0.5}})};
    const double pi = 0.5;
    double expected = 0.0;
    for (double z : {0.1, -0.2}) expected += 1.0 * (1.0 / std::pow(1.0 + pi * z, 2.0) - 1.0 + 2.0 * pi * z);
    EXPECT_NEAR(jump_compensator_term(p, cs, 0.0, 0.0, pi), expected, 1e-14);
}

TEST(AdjointRate, EqualsRatePlusEtaWhenInsuranceIsBought) {
    const Preferences p{-1.0, 1.0, 2.5, 1.0};
    TimeContext c;
    c.t = 0.4;
    c.r = 0.03;
    c.lambda = 0.02;
    c.discount = 0.028;
    c.insurer = {1, 0.025, false};
    // h small: A1 large relative to the legacy target, premium interior.
    const double h = 0.0;
    const PremiumChoice pc = premium_given_discount(p, c.lambda, c.insurer, c.discount, 1.0, std::exp(-h));
    ASSERT_GT(pc.amount, 0.0);
    EXPECT_NEAR(adjoint_rate(p, c, h), c.r + 0.025, 1e-13);

    // No insurance: the rate is r + lambda e^{-D} U2'(x) / A1 at x = 1.
    const Preferences lean{-1.0, 1.0, 0.01, 1.0};
    const double expected = c.r + c.lambda * lean.kappa2 * std::exp(h - c.discount);
    ASSERT_EQ(premium_given_discount(lean, c.lambda, c.insurer, c.discount, 1.0, 1.0).amount, 0.0);
    EXPECT_NEAR(adjoint_rate(lean, c, h), expected, 1e-15);

    c.lambda = 0.0;
    EXPECT_DOUBLE_EQ(adjoint_rate(p, c, h), 0.03);
}

TEST(TerminalValue, Modes) {
    const Preferences p{0.5, 1, 1, 2.0};
    const ActuarialModel am(constant_rate(0.02), constant_rate(0.05), 2.0);
    EXPECT_NEAR(terminal_value(TerminalMode::ansatz, p, am), 0.14 - std::log(2.0), 1e-12);
    EXPECT_NEAR(terminal_value(TerminalMode::log_discount, p, am), 0.14, 1e-12);
    EXPECT_NEAR(terminal_value(TerminalMode::discount_factor, p, am), std::exp(-0.14), 1e-12);
}

TEST(Phi, TerminalRowIsExact) {
    const HEquation eq = injected(1.0, 0.7, [](double, double y, double) { return y * y; });
    const HGrid g = initial_grid(eq, {5, -1.0, 1.0, 5});
    const PhiResult r = apply_phi(g, eq, {64, 2, 1, 1.0});
    for (std::size_t j = 0; j < g.ny(); ++j) {
        EXPECT_EQ(r.values[g.index(g.nt() - 1, j)], 0.7);
        EXPECT_EQ(r.stderr_values[g.index(g.nt() - 1, j)], 0.0);
    }
}

TEST(Phi, DeterministicReductionIsAffineInTimeToGo) {
    const double hT = 0.3, k = 0.12, T = 2.0;
    const HEquation eq = injected(T, hT, [k](double, double, double) { return k; });
    const HGrid g = initial_grid(eq, {11, -2.0, 2.0, 9});
    const PhiResult r = apply_phi(g, eq, {32, 3, 5, 1.0});
    for (std::size_t i = 0; i < g.nt(); ++i)
        for (std::size_t j = 0; j < g.ny(); ++j)
            EXPECT_NEAR(r.values[g.index(i, j)], hT + k * (T - g.t_nodes[i]), 1e-12);
}

TEST(Phi, OrnsteinUhlenbeckSourceMatchesMoments) {
    // h(t, y) = E int_t^T Y_s^2 ds for dY = -Y ds + dW:
    //   y^2 (1 - e^{-2tau}) / 2 + tau / 2 - (1 - e^{-2tau}) / 4,  tau = T - t.
    const HEquation eq =
        injected(1.0, 0.0, [](double, double y, double) { return y * y; }, [](double y) { return -y; });
    const HGrid g = initial_grid(eq, {11, -1.5, 1.5, 7});
    const PhiResult a = apply_phi(g, eq, {4000, 8, 1, 1.0});
    const PhiResult b = apply_phi(g, eq, {8000, 8, 2, 1.0});
    for (std::size_t j : {std::size_t{1}, std::size_t{3}, std::size_t{6}}) {
        const double y = g.y_nodes[j];
        const double e = 1.0 - std::exp(-2.0);
        const double exact = y * y * e / 2.0 + 0.5 - e / 4.0;
        const std::size_t k = g.index(0, j);
        EXPECT_NEAR(a.values[k], exact, 3.0 * a.stderr_values[k] + 0.02) << "y " << y;
        // doubling the paths agrees within 3x combined stderr
        EXPECT_LE(std::abs(a.values[k] - b.values[k]),
                  3.0 * std::hypot(a.stderr_values[k], b.stderr_values[k]));
        EXPECT_NEAR(b.stderr_values[k] / a.stderr_values[k], 1.0 / std::sqrt(2.0), 0.2 / std::sqrt(2.0));
    }
}

TEST(Phi, StderrAboveTargetWarns) {
    const HEquation eq =
        injected(1.0, 0.0, [](double, double y, double) { return y * y; }, [](double y) { return -y; });
    const HGrid g = initial_grid(eq, {3, -1.0, 1.0, 3});
    const PhiResult r = apply_phi(g, eq, {8, 1, 1, 1e-9});
    ASSERT_FALSE(r.warnings.empty());
    EXPECT_NE(r.warnings.front().find("exceeds target"), std::string::npos);
}

TEST(FixedPoint, SingleRowReturnsTerminal) {
    const HEquation eq = injected(1.0, 0.4, [](double, double, double) { return 1.0; });
    const HGrid g = solve_h_fixed_point(eq, {1, -1.0, 1.0, 5}, {16, 1, 1, 1.0});
    EXPECT_EQ(g.nt(), 1u);
    EXPECT_EQ(g.iterations, 1u);
    for (double v : g.h) EXPECT_EQ(v, 0.4);
}

TEST(FixedPoint, DeterministicReductionWithTimeVaryingSource) {
    // S(t) = a + b t + c sin(3t): h = hT + int_t^T S.
    const double a = 0.05, b = -0.02, c = 0.1, T = 1.5, hT = -0.2;
    const HEquation eq =
        injected(T, hT, [=](double t, double, double) { return a + b * t + c * std::sin(3.0 * t); });
    const HGrid g = solve_h_fixed_point(eq, {21, -1.0, 1.0, 5}, {16, 2, 1, 1.0});
    for (std::size_t i = 0; i < g.nt(); ++i) {
        const double t = g.t_nodes[i];
        const double exact = hT + a * (T - t) + 0.5 * b * (T * T - t * t) + c * (std::cos(3.0 * t) - std::cos(3.0 * T)) / 3.0;
        EXPECT_NEAR(g.h[g.index(i, 2)], exact, 1e-3);
    }
}

TEST(FixedPoint, NonlinearSourceAndDamping) {
    // S = -a h: h = hT e^{-a (T - t)}.
    const double a = 0.8, hT = 1.0;
    const HEquation eq = injected(1.0, hT, [a](double, double, double h) { return -a * h; });
    const FixedPointConfig plain{1.0, 1e-8, 100}, damped{0.5, 1e-8, 200};
    const HGrid g1 = solve_h_fixed_point(eq, {21, -1.0, 1.0, 3}, {8, 2, 1, 1.0}, plain);
    const HGrid g2 = solve_h_fixed_point(eq, {21, -1.0, 1.0, 3}, {8, 2, 1, 1.0}, damped);
    EXPECT_GT(g2.iterations, g1.iterations);
    for (std::size_t i = 0; i < g1.nt(); ++i) {
        EXPECT_NEAR(g1.h[g1.index(i, 1)], std::exp(-a * (1.0 - g1.t_nodes[i])), 1e-3);
        EXPECT_NEAR(g1.h[g1.index(i, 1)], g2.h[g2.index(i, 1)], 2e-8);
    }
}

TEST(FixedPoint, NonConvergenceCarriesHistory) {
    const HEquation eq = injected(1.0, 1.0, [](double, double, double h) { return -5.0 * h; });
    try {
        solve_h_fixed_point(eq, {11, -1.0, 1.0, 3}, {8, 1, 1, 1.0}, {1.0, 1e-12, 3});
        FAIL();
    } catch (const ConvergenceError& e) {
        EXPECT_EQ(e.history().size(), 3u);
    }
    EXPECT_THROW(solve_h_fixed_point(eq, {11, -1.0, 1.0, 3}, {8, 1, 1, 1.0}, {1.5, 1e-6, 3}), InputError);
}

TEST(FixedPoint, NonFiniteOperatorIsConvergenceError) {
    const HEquation eq = injected(1.0, 1.0, [](double, double, double h) { return std::exp(800.0 * h); });
    EXPECT_THROW(solve_h_fixed_point(eq, {5, -1.0, 1.0, 3}, {8, 1, 1, 1.0}), ConvergenceError);
}

TEST(ModelEquation, MertonMatchesValueFunction) {
    const MertonCase m;
    const CoefficientSet cs = m.cs();
    const ActuarialModel am = m.am();
    const InsuranceMarket im({constant_rate(0.03)});
    const HEquation eq = make_h_equation(m.prefs, am, im, cs, ou_factor(1.0));
    const HGrid g = solve_h_fixed_point(eq, {41, -2.0, 2.0, 5}, {16, 2, 1, 1.0}, {1.0, 1e-10, 60});
    const double merton = m.mu / ((1.0 - m.prefs.delta) * (m.beta * m.beta + m.sigma * m.sigma));
    for (std::size_t i = 0; i < g.nt(); ++i)
        for (std::size_t j = 0; j < g.ny(); ++j) {
            const std::size_t k = g.index(i, j);
            EXPECT_NEAR(g.h[k], m.h(g.t_nodes[i]), 1e-4);
            EXPECT_NEAR(g.h_y[k], 0.0, 1e-12);
            EXPECT_NEAR(g.pi_star[k], merton, 1e-8);
        }
}

TEST(ModelEquation, PrintedFormIsSelectableAndDiffers) {
    const MertonCase m;
    const InsuranceMarket im({constant_rate(0.03)});
    HModelOptions opts;
    opts.form = PdeForm::printed;
    const HEquation printed = make_h_equation(m.prefs, m.am(), im, m.cs(), ou_factor(1.0), opts);
    const HGrid g = solve_h_fixed_point(printed, {11, -1.0, 1.0, 3}, {8, 1, 1, 1.0});
    for (double v : g.h) EXPECT_TRUE(std::isfinite(v));
    EXPECT_GT(std::abs(g.h[g.index(0, 1)] - m.h(0.0)), 1e-2);
}

TEST(ModelEquation, LiteralPhiProducesFiniteValues) {
    const MertonCase m;
    const InsuranceMarket im({constant_rate(0.03)});
    HModelOptions opts;
    opts.phi = PhiMode::literal;
    const HEquation eq = make_h_equation(m.prefs, m.am(), im, m.cs(), ou_factor(1.0), opts);
    ASSERT_TRUE(static_cast<bool>(eq.weight));
    HGrid g = initial_grid(eq, {5, -1.0, 1.0, 3});
    refresh_derivatives(g, eq);
    const PhiResult r = apply_phi(g, eq, {16, 1, 1, 1.0});
    for (double v : r.values) EXPECT_TRUE(std::isfinite(v));
}

TEST(GridDistance, InterpolatesFinerGrid) {
    const HEquation eq = injected(1.0, 0.0, [](double, double, double) { return 0.0; });
    HGrid coarse = initial_grid(eq, {3, -1.0, 1.0, 3});
    HGrid fine = initial_grid(eq, {5, -1.0, 1.0, 5});
    for (std::size_t i = 0; i < fine.nt(); ++i)
        for (std::size_t j = 0; j < fine.ny(); ++j) fine.h[fine.index(i, j)] = fine.t_nodes[i] + fine.y_nodes[j];
    for (std::size_t i = 0; i < coarse.nt(); ++i)
        for (std::size_t j = 0; j < coarse.ny(); ++j)
            coarse.h[coarse.index(i, j)] = coarse.t_nodes[i] + coarse.y_nodes[j];
    EXPECT_NEAR(grid_distance(coarse, fine), 0.0, 1e-14);
    coarse.h[coarse.index(1, 1)] += 0.25;
    EXPECT_NEAR(grid_distance(coarse, fine), 0.25, 1e-14);
}
