#pragma once

// CRRA preferences, the Hamiltonian of the consumption/insurance/investment
// problem, and the first-order optimal controls.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "jumpvol/actuarial.hpp"
#include "jumpvol/errors.hpp"
#include "jumpvol/market.hpp"

namespace jumpvol {

struct Preferences {
    double delta = 0.5;
    double kappa1 = 1.0;
    double kappa2 = 1.0;
    double kappa3 = 1.0;

    void validate() const {
        if (!(delta < 1.0) || delta == 0.0 || !std::isfinite(delta))
            throw InputError("preferences: delta must lie in (-inf, 1) \\ {0}");
        if (!(kappa1 > 0.0 && kappa2 > 0.0 && kappa3 > 0.0))
            throw InputError("preferences: kappa1..kappa3 must be positive");
    }

    double kappa(int which) const {
        switch (which) {
            case 1: return kappa1;
            case 2: return kappa2;
            case 3: return kappa3;
            default: throw InputError("utility index must be 1, 2 or 3");
        }
    }
};

// kappa_i x^delta / delta
inline double utility(const Preferences& prefs, int which, double x) {
    const double k = prefs.kappa(which);
    if (x > 0.0) return k * std::pow(x, prefs.delta) / prefs.delta;
    if (x == 0.0 && prefs.delta > 0.0) return 0.0;
    throw DomainError("utility: argument must be positive");
}

inline double marginal_utility(const Preferences& prefs, int which, double x) {
    if (!(x > 0.0)) throw DomainError("marginal utility: argument must be positive");
    return prefs.kappa(which) * std::pow(x, prefs.delta - 1.0);
}

// I_i(y) = (y / kappa_i)^{1/(delta-1)}, the inverse of the marginal utility.
inline double inverse_marginal(const Preferences& prefs, int which, double y) {
    if (!(y > 0.0)) throw DomainError("inverse marginal utility: argument must be positive");
    return std::pow(y / prefs.kappa(which), 1.0 / (prefs.delta - 1.0));
}

// c* = I_1(A1 e^{D}) where D = int_0^t (rho + lambda) is supplied by the caller.
inline double consumption_given_discount(const Preferences& prefs, double discount_exponent,
                                         double A1) {
    if (!(A1 > 0.0)) throw DomainError("optimal consumption: A1 must be positive");
    const double inv = 1.0 / (prefs.delta - 1.0);
    return std::pow(A1 / prefs.kappa1, inv) * std::exp(inv * discount_exponent);
}

inline double optimal_consumption(const Preferences& prefs, const ActuarialModel& am, double t,
                                  double A1) {
    return consumption_given_discount(prefs, am.total_discount(t), A1);
}

// Premium paid to a single insurer; every other insurer receives zero.
struct PremiumChoice {
    std::size_t insurer = 0;
    double amount = 0.0;
    double eta = 1.0;
};

// Kuhn-Tucker optimum at the cheapest insurer, given hazard lambda(t), the
// selected insurer and D = int_0^t (rho + lambda).
inline PremiumChoice premium_given_discount(const Preferences& prefs, double lam,
                                            const InsurerChoice& sel, double discount_exponent,
                                            double x, double A1) {
    if (!(A1 > 0.0)) throw DomainError("optimal premium: A1 must be positive");
    if (!(x >= 0.0)) throw InputError("optimal premium: wealth must be nonnegative");
    if (!(lam > 0.0)) throw DomainError("optimal premium: insurance undefined for zero hazard");
    const double inv = 1.0 / (prefs.delta - 1.0);
    const double target_legacy = std::pow(sel.eta * A1 / (prefs.kappa2 * lam), inv) *
                                 std::exp(inv * discount_exponent);
    return {sel.index, std::max(0.0, sel.eta * (target_legacy - x)), sel.eta};
}

inline PremiumChoice optimal_premium_choice(const Preferences& prefs, const ActuarialModel& am,
                                            const InsuranceMarket& im, double t, double x,
                                            double A1) {
    if (!(am.lambda(t) > 0.0))
        throw DomainError("optimal premium: insurance undefined for zero hazard");
    return premium_given_discount(prefs, am.lambda(t), select_insurer(im, t), am.total_discount(t),
                                  x, A1);
}

struct PremiumDecision {
    std::vector<double> premiums;
    std::vector<double> multipliers;
    std::size_t insurer = 0;
};

// Full Kuhn-Tucker solution (p_n, xi_n). The multipliers come from the
// stationarity equation -A1 + (lambda/eta_n) e^{-D} U2'(legacy) = -xi_n.
inline PremiumDecision optimal_premium(const Preferences& prefs, const ActuarialModel& am,
                                       const InsuranceMarket& im, double t, double x, double A1) {
    const PremiumChoice choice = optimal_premium_choice(prefs, am, im, t, x, A1);
    PremiumDecision out;
    out.insurer = choice.insurer;
    out.premiums.assign(im.size(), 0.0);
    out.multipliers.assign(im.size(), 0.0);
    out.premiums[choice.insurer] = choice.amount;
    const double leg = x + choice.amount / choice.eta;
    const double discount = std::exp(-am.total_discount(t));
    const double marginal = marginal_utility(prefs, 2, leg);
    const double lam = am.lambda(t);
    for (std::size_t n = 0; n < im.size(); ++n) {
        if (out.premiums[n] > 0.0) continue;  // complementary slackness: xi_n = 0
        out.multipliers[n] = std::max(0.0, A1 - lam / im.eta(n, t) * discount * marginal);
    }
    return out;
}

// max_n |stationarity residual| / max(1, A1).
inline double kuhn_tucker_residual(const Preferences& prefs, const ActuarialModel& am,
                                   const InsuranceMarket& im, double t, double x, double A1,
                                   const PremiumDecision& d) {
    const double leg = legacy(x, d.premiums, im, t);
    const double discount = std::exp(-am.total_discount(t));
    const double marginal = marginal_utility(prefs, 2, leg);
    double worst = 0.0;
    for (std::size_t n = 0; n < im.size(); ++n) {
        const double r = -A1 + am.lambda(t) / im.eta(n, t) * discount * marginal + d.multipliers[n];
        worst = std::max(worst, std::abs(r));
    }
    return worst / std::max(1.0, std::abs(A1));
}

// ---- portfolio first-order condition --------------------------------------

namespace detail {
inline void check_jump_admissible(const CoefficientSet& cs, double t, double y, double pi) {
    const auto& atoms = cs.jumps.atoms();
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        if (!(1.0 + pi * cs.gamma(t, y, atoms[i].mark) > 0.0))
            throw DomainError("1 + pi*gamma must be positive (jump atom " + std::to_string(i) +
                              ", mark " + std::to_string(atoms[i].mark) + ")");
    }
}
}  // namespace detail

// beta h_y - { mu - (1-delta)(beta^2+sigma^2) pi - int [1 - (1+pi gamma)^{delta-1}] gamma nu(dz) }.
// Increasing in pi; its root is the optimal allocation.
inline double portfolio_foc_residual(const Preferences& prefs, const CoefficientSet& cs, double t,
                                     double y, double pi, double h_y) {
    detail::check_jump_admissible(cs, t, y, pi);
    const CoefficientValues v = eval_coefficients_raw(cs, t, y);
    const double dm1 = prefs.delta - 1.0;
    const double jump = cs.jumps.integrate([&](double z) {
        const double g = cs.gamma(t, y, z);
        return (1.0 - std::pow(1.0 + pi * g, dm1)) * g;
    });
    return v.beta * h_y -
           (v.mu - (1.0 - prefs.delta) * (v.beta * v.beta + v.sigma * v.sigma) * pi - jump);
}

// d^2/dpi^2 of the pi-part of the Hamiltonian per unit x A1.
inline double portfolio_second_derivative(const Preferences& prefs, const CoefficientSet& cs,
                                          double t, double y, double pi) {
    const CoefficientValues v = eval_coefficients_raw(cs, t, y);
    const double jump = cs.jumps.integrate([&](double z) {
        const double g = cs.gamma(t, y, z);
        return std::pow(1.0 + pi * g, prefs.delta - 2.0) * g * g;
    });
    return -(1.0 - prefs.delta) * (v.beta * v.beta + v.sigma * v.sigma + jump);
}

struct PortfolioOptions {
    double lo = -5.0;
    double hi = 5.0;
    double tolerance = 1e-10;
};

struct PortfolioSolution {
    double pi = 0.0;
    double residual = 0.0;
    bool in_unit_interval = false;
    double second_derivative = 0.0;
    double bracket_lo = 0.0;
    double bracket_hi = 0.0;
    std::size_t evaluations = 0;
};

// [lo, hi] intersected with {pi : 1 + pi gamma(z) > 0 for every atom}.
inline std::pair<double, double> admissible_bracket(const CoefficientSet& cs, double t, double y,
                                                    double lo, double hi) {
    for (const auto& atom : cs.jumps.atoms()) {
        const double g = cs.gamma(t, y, atom.mark);
        if (g > 0.0) {
            const double b = -1.0 / g;
            lo = std::max(lo, b + 1e-9 * (1.0 + std::abs(b)));
        } else if (g < 0.0) {
            const double b = -1.0 / g;
            hi = std::min(hi, b - 1e-9 * (1.0 + std::abs(b)));
        }
    }
    return {lo, hi};
}

inline PortfolioSolution solve_portfolio(const Preferences& prefs, const CoefficientSet& cs,
                                         double t, double y, double h_y,
                                         const PortfolioOptions& opts = {}) {
    PortfolioSolution sol;
    const auto [lo, hi] = admissible_bracket(cs, t, y, opts.lo, opts.hi);
    sol.bracket_lo = lo;
    sol.bracket_hi = hi;
    if (!(lo < hi)) throw NoInteriorSolution("solve_portfolio: empty admissible bracket", lo, hi, 0, 0);

    auto f = [&](double pi) {
        ++sol.evaluations;
        return portfolio_foc_residual(prefs, cs, t, y, pi, h_y);
    };
    double a = lo, b = hi;
    double fa = f(a), fb = f(b);
    if (fa > 0.0 || fb < 0.0)
        throw NoInteriorSolution("solve_portfolio: no sign change of the first-order condition", lo,
                                 hi, fa, fb);

    double root;
    double froot;
    if (fa == 0.0) {
        root = a;
        froot = fa;
    } else if (fb == 0.0) {
        root = b;
        froot = fb;
    } else {
        const int bits = std::clamp(static_cast<int>(std::ceil(-std::log2(opts.tolerance))) + 8, 20, 52);
        std::uintmax_t max_iter = 200;
        const auto br = boost::math::tools::toms748_solve(
            f, a, b, fa, fb, boost::math::tools::eps_tolerance<double>(bits), max_iter);
        a = br.first;
        b = br.second;
        fa = f(a);
        fb = f(b);
        // Bisect further if the bracket closed before the residual did.
        for (int k = 0; k < 200 && std::min(std::abs(fa), std::abs(fb)) > opts.tolerance; ++k) {
            const double m = 0.5 * (a + b);
            if (m == a || m == b) break;
            const double fm = f(m);
            if (fm < 0.0) {
                a = m;
                fa = fm;
            } else {
                b = m;
                fb = fm;
            }
        }
        if (std::abs(fa) <= std::abs(fb)) {
            root = a;
            froot = fa;
        } else {
            root = b;
            froot = fb;
        }
    }
    sol.pi = root;
    sol.residual = froot;
    sol.in_unit_interval = root > 0.0 && root < 1.0;
    sol.second_derivative = portfolio_second_derivative(prefs, cs, t, y, root);
    return sol;
}

// ---- Hamiltonian ----------------------------------------------------------

// Adjoint processes at one instant. Jump components are stored per atom, in
// the order of CoefficientSet::jumps.atoms().
struct AdjointState {
    double A1 = 0.0;
    double B1 = 0.0;
    double B2 = 0.0;
    std::vector<double> D1;
    double A2 = 0.0;
    double B3 = 0.0;
    double B4 = 0.0;
    std::vector<double> D2;
};

struct ControlVector {
    double c = 0.0;
    double pi = 0.0;
    std::vector<double> premiums;  // length M
};

inline double hamiltonian(const Preferences& prefs, const ActuarialModel& am,
                          const InsuranceMarket& im, const CoefficientSet& cs,
                          const FactorDynamics& fd, double t, double x, double y,
                          const ControlVector& u, const AdjointState& adj) {
    const CoefficientValues v = eval_coefficients_raw(cs, t, y);
    const double lam = am.lambda(t);
    double reward = utility(prefs, 1, u.c);
    if (lam > 0.0) reward += lam * utility(prefs, 2, legacy(x, u.premiums, im, t));
    double premium_total = 0.0;
    for (double p : u.premiums) premium_total += p;

    double jump = 0.0;
    const auto& atoms = cs.jumps.atoms();
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        const double d1 = i < adj.D1.size() ? adj.D1[i] : 0.0;
        jump += cs.jumps.weight(i) * cs.gamma(t, y, atoms[i].mark) * d1;
    }
    return std::exp(-am.total_discount(t)) * reward +
           (x * (v.r + u.pi * v.mu) - u.c - premium_total) * adj.A1 + fd.g(y) * adj.A2 +
           u.pi * x * (v.beta * adj.B1 + v.sigma * adj.B2) + adj.B3 + u.pi * x * jump;
}

// Analytic dH/dpi = x (mu A1 + beta B1 + sigma B2 + int gamma D1 nu(dz)).
inline double hamiltonian_dpi(const CoefficientSet& cs, double t, double x, double y,
                              const AdjointState& adj) {
    const CoefficientValues v = eval_coefficients_raw(cs, t, y);
    double jump = 0.0;
    const auto& atoms = cs.jumps.atoms();
    for (std::size_t i = 0; i < atoms.size(); ++i)
        jump += cs.jumps.weight(i) * cs.gamma(t, y, atoms[i].mark) * adj.D1[i];
    return x * (v.mu * adj.A1 + v.beta * adj.B1 + v.sigma * adj.B2 + jump);
}

// y-derivative of the optimal-allocation relation, evaluated by central
// differences in the coefficient maps. Reported as a diagnostic only.
inline double investment_y_relation(const CoefficientSet& cs, double t, double y,
                                    const AdjointState& adj, double dy = 1e-5) {
    const double h = dy * std::max(1.0, std::abs(y));
    const auto d = [&](const FactorMap& m) { return (m(t, y + h) - m(t, y - h)) / (2.0 * h); };
    const double dmu = (cs.alpha(t, y + h) - cs.alpha(t, y - h)) / (2.0 * h);
    double jump = 0.0;
    const auto& atoms = cs.jumps.atoms();
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        const double dg =
            (cs.gamma(t, y + h, atoms[i].mark) - cs.gamma(t, y - h, atoms[i].mark)) / (2.0 * h);
        jump += cs.jumps.weight(i) * dg * adj.D1[i];
    }
    return dmu * adj.A1 + d(cs.beta) * adj.B1 + d(cs.sigma) * adj.B2 + jump;
}

// ---- feedback rules -------------------------------------------------------

struct Controls {
    double pi = 0.0;
    double c = 0.0;
    PremiumChoice premium;
};

// Feedback map (t, x, y) -> (pi, c, p). At most one premium is nonzero by
// construction.
struct StrategyRule {
    std::function<Controls(double t, double x, double y)> evaluate;

    Controls operator()(double t, double x, double y) const { return evaluate(t, x, y); }

    std::vector<double> premium_vector(const Controls& u, std::size_t m) const {
        std::vector<double> p(m, 0.0);
        p[u.premium.insurer] = u.premium.amount;
        return p;
    }
};

}  // namespace jumpvol
