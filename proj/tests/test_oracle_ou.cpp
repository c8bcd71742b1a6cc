#include <gtest/gtest.h>

#include <cmath>

#include "jumpvol/oracle_ou.hpp"

using namespace jumpvol;

namespace {

OUParams low_gamma() {
    OUParams p;
    p.gamma = 0.2;
    p.alpha0 = 0.1;
    p.alpha1 = 0.1;
    return p;
}

struct Moments {
    double mean, var, se_mean, se_var;
};

Moments moments(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    double m = 0.0;
    for (double x : v) m += x;
    m /= n;
    double s2 = 0.0, s4 = 0.0;
    for (double x : v) {
        s2 += (x - m) * (x - m);
        s4 += std::pow(x - m, 4);
    }
    s2 /= n;
    s4 /= n;
    return {m, s2, std::sqrt(s2 / n), std::sqrt((s4 - s2 * s2) / n)};
}

}  // namespace

TEST(OuPortfolio, PrintedFormulaExamples) {
    EXPECT_NEAR(ou_printed_portfolio(low_gamma(), 1.0), 6.0, 1e-12);
    EXPECT_NEAR(ou_printed_portfolio(OUParams{}, 1.0), 2.0 * (1.0 / 0.36 - 1.0), 1e-12);
    OUParams p;
    p.alpha0 = -0.3;
    EXPECT_NEAR(ou_printed_portfolio(p, 1.0), 0.0, 1e-15);
}

TEST(OuPortfolio, FocRootExamples) {
    EXPECT_NEAR(ou_foc_portfolio(OUParams{}, 1.0), 3.5555555555555556, 1e-10);
    EXPECT_NEAR(ou_foc_portfolio(low_gamma(), 1.0), 15.0, 1e-10);
    EXPECT_NEAR(ou_closed_form_portfolio(low_gamma(), 1.0), 15.0, 1e-12);
    OUParams p;
    p.alpha0 = -0.3;
    EXPECT_NEAR(ou_foc_portfolio(p, 1.0), 0.0, 1e-12);
}

TEST(OuPortfolio, FormsCoincideOnlyWhenGammaYEqualsDelta) {
    const OUParams p;
    for (double y : {0.7, 1.0, 1.6}) {
        const double a = ou_printed_portfolio(p, y), b = ou_foc_portfolio(p, y);
        if (std::abs(p.gamma * y - p.delta) < 1e-12)
            EXPECT_NEAR(a, b, 1e-10);
        else
            EXPECT_GT(std::abs(a - b), 1e-3);
    }
}

TEST(OuPortfolio, GenericSolverMatchesFocOracle) {
    const OUParams p;
    const OUModel m = make_ou_model(p);
    for (int k = 0; k < 50; ++k) {
        const double y = 0.9 + 0.02 * k;
        const double oracle = ou_foc_portfolio(p, y);
        const auto sol = solve_portfolio(m.prefs, m.cs, 0.0, y, 0.0);
        EXPECT_NEAR(sol.pi, oracle, 1e-8) << "y=" << y;
        EXPECT_LT(std::abs(portfolio_foc_residual(m.prefs, m.cs, 0.0, y, oracle, 0.0)), 1e-10);
    }
}

TEST(OuPortfolio, ClosedFormAgreesWithBisection) {
    const OUParams p;
    for (double y : {0.8, 1.3, 2.5, -0.5}) {
        try {
            EXPECT_NEAR(ou_foc_portfolio(p, y), ou_closed_form_portfolio(p, y), 1e-9 * (1 + std::abs(ou_foc_portfolio(p, y))));
        } catch (const DomainError&) {
            EXPECT_THROW(ou_closed_form_portfolio(p, y), DomainError);
        }
    }
}

TEST(OuPortfolio, DomainErrors) {
    const OUParams p;
    EXPECT_THROW(ou_printed_portfolio(p, 0.0), DomainError);
    EXPECT_THROW(ou_foc_portfolio(p, 0.0), DomainError);
    OUParams q;
    q.alpha0 = 2.0;
    EXPECT_THROW(ou_printed_portfolio(q, 1.0), DomainError);
    EXPECT_THROW(ou_foc_portfolio(q, 1.0), DomainError);
}

TEST(OuParamsCheck, Validation) {
    OUParams p;
    p.b = 0.0;
    EXPECT_THROW(p.validate(), InputError);
    p = OUParams{};
    p.delta = 1.0;
    EXPECT_THROW(make_ou_model(p), InputError);
    p = OUParams{};
    p.eta = 0.0;
    EXPECT_THROW(p.validate(), InputError);
    EXPECT_THROW(ou_adjoint_a1(OUParams{}, constant_rule(0.0), 1.0, 1.5, {}), InputError);
}

TEST(OuFactor, ZeroNoiseDecay) {
    OUParams p;
    p.b = 0.7;
    p.y0 = 1.5;
    auto rng = make_stream(1, stream::test, 0);
    const auto grid = uniform_grid(2.0, 8);
    const auto y = ou_exact_factor(p, grid, rng, true);
    for (std::size_t k = 0; k < grid.size(); ++k) EXPECT_NEAR(y[k], 1.5 * std::exp(-0.7 * grid[k]), 1e-14);
}

TEST(OuFactor, MeanAndStationaryVariance) {
    OUParams p;
    p.y0 = 2.0;
    std::vector<double> at1, at20;
    for (int i = 0; i < 20000; ++i) {
        auto rng = make_stream(2, stream::test, i);
        const auto y = ou_exact_factor(p, {0.0, 1.0, 20.0}, rng);
        at1.push_back(y[1]);
        at20.push_back(y[2]);
    }
    const Moments a = moments(at1), b = moments(at20);
    EXPECT_LT(std::abs(a.mean - 2.0 * std::exp(-1.0)), 3.0 * a.se_mean);
    EXPECT_LT(std::abs(b.var - 0.5), 3.0 * b.se_var);
}

TEST(OuFactor, ExactAndEulerAgreeInLaw) {
    const OUParams p;
    const auto grid = uniform_grid(1.0, 1000);
    std::vector<double> ex, eu;
    for (int i = 0; i < 4000; ++i) {
        auto r1 = make_stream(3, stream::test, i);
        auto r2 = make_stream(4, stream::test, i);
        ex.push_back(ou_exact_factor(p, grid, r1).back());
        eu.push_back(simulate_factor(ou_factor(p.b), p.y0, grid, r2, FactorScheme::euler).back());
    }
    const Moments a = moments(ex), b = moments(eu);
    EXPECT_LT(std::abs(a.mean - b.mean), 3.0 * std::hypot(a.se_mean, b.se_mean));
    EXPECT_LT(std::abs(a.var - b.var), 3.0 * std::hypot(a.se_var, b.se_var));
}

TEST(OuAdjoint, TerminalTimeIsExact) {
    const OUParams p;
    const double pi = ou_foc_portfolio(p, p.y0);
    NestedConfig cfg;
    cfg.n_outer = 4;
    cfg.n_inner = 10;
    for (auto form : {OUAdjointForm::consistent, OUAdjointForm::printed}) {
        cfg.form = form;
        const double rate = form == OUAdjointForm::consistent ? p.rho + p.lambda : p.rho;
        for (const auto& e : ou_adjoint_a1(p, constant_rule(pi), 1.0, p.horizon, cfg)) {
            if (std::isnan(e.a1)) continue;
            EXPECT_NEAR(e.a1, std::exp(-rate * p.horizon) * std::pow(e.x, p.delta - 1.0), 1e-12);
            EXPECT_EQ(e.stderr_a1, 0.0);
        }
    }
}

TEST(OuAdjoint, DeterministicWealth) {
    // pi = 0, no consumption or premium, r = 0: wealth stays at x0.
    const OUParams p;
    NestedConfig cfg;
    cfg.n_outer = 3;
    cfg.n_inner = 50;
    const double t = 0.4, x0 = 2.0;
    const double expected = std::exp(-(p.rho + p.lambda) * p.horizon + p.eta * (p.horizon - t)) / std::sqrt(x0);
    for (const auto& e : ou_adjoint_a1(p, constant_rule(0.0), x0, t, cfg)) {
        EXPECT_NEAR(e.a1, expected, 1e-12);
        EXPECT_NEAR(e.stderr_a1, 0.0, 1e-12);
        EXPECT_EQ(e.inner_paths, 50u);
    }
}

TEST(OuAdjoint, InnerStandardErrorScaling) {
    const OUParams p;
    NestedConfig cfg;
    cfg.n_outer = 8;
    cfg.n_inner = 2000;
    const auto rule = constant_rule(0.5);
    const auto a = ou_adjoint_a1(p, rule, 1.0, 0.5, cfg);
    cfg.n_inner = 4000;
    const auto b = ou_adjoint_a1(p, rule, 1.0, 0.5, cfg);
    double ratio = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ASSERT_EQ(a[i].x, b[i].x);
        if (a[i].stderr_a1 > 0.0) {
            ratio += b[i].stderr_a1 / a[i].stderr_a1;
            ++n;
        }
    }
    ASSERT_GT(n, 0);
    EXPECT_NEAR(ratio / n, 1.0 / std::sqrt(2.0), 0.2 / std::sqrt(2.0));
}
