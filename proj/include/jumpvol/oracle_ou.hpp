#pragma once

// Closed forms for the pure-jump Ornstein-Uhlenbeck example:
//   B = 1,  dS = S[(a0 + a1 Y) dt + gamma Y dN~],  dY = -b Y dt + dW,
// constant mortality, premium ratio and discount, kappa1 = kappa2 = kappa3 = 1.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "jumpvol/actuarial.hpp"
#include "jumpvol/errors.hpp"
#include "jumpvol/market.hpp"
#include "jumpvol/random.hpp"
#include "jumpvol/simulation.hpp"
#include "jumpvol/strategy.hpp"

namespace jumpvol {

struct OUParams {
    double alpha0 = 0.1;
    double alpha1 = 0.3;
    double gamma = 0.5;
    double nu = 2.0;
    double b = 1.0;
    double y0 = 1.0;
    double lambda = 0.02;
    double rho = 0.05;
    double eta = 0.03;
    double delta = 0.5;
    double horizon = 1.0;

    void validate() const {
        if (!(b > 0.0)) throw InputError("OU example: b must be positive");
        if (!(nu > 0.0)) throw InputError("OU example: nu must be positive");
        if (!(lambda > 0.0 && rho > 0.0 && eta > 0.0))
            throw InputError("OU example: lambda, rho and eta must be positive");
        if (!(horizon > 0.0)) throw InputError("OU example: horizon must be positive");
        Preferences{delta, 1.0, 1.0, 1.0}.validate();
    }
};

// Generic model objects for the example: r = 0, beta = sigma = 0, a single
// jump atom z = 1 with rate nu and dispersion gamma(t, y, z) = gamma y z.
struct OUModel {
    Preferences prefs;
    CoefficientSet cs;
    FactorDynamics fd;
    ActuarialModel am;
    InsuranceMarket im;
};

inline OUModel make_ou_model(const OUParams& p, FactorDomain domain = {-3.0, 3.0}) {
    p.validate();
    CoefficientSet cs{constant_rate(0.0),
                      affine_in_y(p.alpha0, p.alpha1),
                      constant_map(0.0),
                      constant_map(0.0),
                      affine_jump_scale(0.0, p.gamma),
                      JumpSpec(p.nu, {{1.0, 1.0}})};
    return {Preferences{p.delta, 1.0, 1.0, 1.0}, std::move(cs), ou_factor(p.b, domain),
            ActuarialModel(constant_rate(p.lambda), constant_rate(p.rho), p.horizon),
            InsuranceMarket({constant_rate(p.eta)})};
}

template <class Rng>
std::vector<double> ou_exact_factor(const OUParams& p, const std::vector<double>& t_grid, Rng& rng,
                                    bool zero_noise = false) {
    return ou_exact_path(p.b, p.y0, t_grid, rng, zero_noise);
}

namespace detail {
// (gamma nu y - a0 - a1 y) / (gamma nu y)
inline double ou_ratio(const OUParams& p, double y) {
    const double s = p.gamma * p.nu * y;
    if (s == 0.0) throw DomainError("OU portfolio: gamma nu y must be nonzero");
    const double r = (s - p.alpha0 - p.alpha1 * y) / s;
    if (!(r > 0.0)) throw DomainError("OU portfolio: nonpositive ratio");
    return r;
}
}  // namespace detail

// The example's printed formula, (1/delta) [ratio^{1/(delta-1)} - 1].
inline double ou_printed_portfolio(const OUParams& p, double y) {
    return (std::pow(detail::ou_ratio(p, y), 1.0 / (p.delta - 1.0)) - 1.0) / p.delta;
}

// mu + gamma y nu [(1 + pi gamma y)^{delta-1} - 1]; decreasing in pi.
inline double ou_foc(const OUParams& p, double y, double pi) {
    const double j = p.gamma * y;
    return p.alpha0 + p.alpha1 * y + j * p.nu * (std::pow(1.0 + pi * j, p.delta - 1.0) - 1.0);
}

// Root of the first-order condition by plain bisection on the admissible
// half-line 1 + pi gamma y > 0.
inline double ou_foc_portfolio(const OUParams& p, double y, double tol = 1e-14) {
    const double j = p.gamma * y;
    if (j == 0.0) throw DomainError("OU portfolio: gamma y must be nonzero");
    detail::ou_ratio(p, y);
    // The admissible side is pi > -1/j for j > 0 and pi < -1/j for j < 0.
    const double edge = -1.0 / j;
    const double sgn = j > 0.0 ? 1.0 : -1.0;
    double inner = edge + sgn * 1e-12 * std::max(1.0, std::abs(edge));
    double outer = edge + sgn;
    const auto f = [&](double pi) { return sgn * ou_foc(p, y, pi); };
    for (int k = 0; k < 200 && f(outer) > 0.0; ++k) outer = edge + 2.0 * (outer - edge);
    const double f_in = f(inner), f_out = f(outer);
    if (f_in > 0.0 && f_out == 0.0) return outer;
    if (!(f_in > 0.0 && f_out < 0.0))
        throw NoInteriorSolution("OU portfolio: no sign change", std::min(inner, outer), std::max(inner, outer),
                                 f_in, f_out);
    for (int k = 0; k < 400 && std::abs(outer - inner) > tol * std::max(1.0, std::abs(inner)); ++k) {
        const double mid = 0.5 * (inner + outer);
        (f(mid) > 0.0 ? inner : outer) = mid;
    }
    return 0.5 * (inner + outer);
}

inline double ou_closed_form_portfolio(const OUParams& p, double y) {
    return (std::pow(detail::ou_ratio(p, y), 1.0 / (p.delta - 1.0)) - 1.0) / (p.gamma * y);
}

// Prefactor of A1(t) = e^{-D} e^{eta (T-t)} E[X(T)^{delta-1} | F_t]. The
// consistent terminal adjoint discounts by rho + lambda; the printed example
// uses rho alone.
enum class OUAdjointForm { consistent, printed };

inline double ou_adjoint_prefactor(const OUParams& p, double t, OUAdjointForm form) {
    const double rate = form == OUAdjointForm::consistent ? p.rho + p.lambda : p.rho;
    return std::exp(-rate * p.horizon + p.eta * (p.horizon - t));
}

struct NestedEstimate {
    double x = 0.0;
    double y = 0.0;
    double a1 = 0.0;
    double stderr_a1 = 0.0;
    std::size_t inner_paths = 0;
};

struct NestedConfig {
    std::size_t n_outer = 8;
    std::size_t n_inner = 2000;
    std::size_t steps = 200;  // on [0, T]
    std::uint64_t seed = 1;
    OUAdjointForm form = OUAdjointForm::consistent;
};

// Nested Monte Carlo for A1(t): outer paths on [0, t] give states (X, Y),
// inner continuation paths on [t, T] estimate the conditional expectation.
inline std::vector<NestedEstimate> ou_adjoint_a1(const OUParams& p, const StrategyRule& rule, double x0, double t,
                                                 const NestedConfig& cfg) {
    const OUModel m = make_ou_model(p);
    const double T = p.horizon;
    if (!(t >= 0.0 && t <= T)) throw InputError("ou_adjoint_a1: t must lie in [0, T]");
    const std::size_t outer_steps =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg.steps * t / T)));
    const std::size_t inner_steps = cfg.steps > outer_steps ? cfg.steps - outer_steps : 1;
    const double pref = ou_adjoint_prefactor(p, t, cfg.form);
    const double dm1 = p.delta - 1.0;

    std::vector<NestedEstimate> out(cfg.n_outer);
    parallel_for(cfg.n_outer, [&](std::size_t i) {
        double x = x0, y = p.y0;
        if (t > 0.0) {
            auto rng = make_stream(cfg.seed, stream::nested_outer, i);
            PathBundle b = make_bundle(m.fd, p.y0, linspace(0.0, t, outer_steps + 1),
                                       draw_noise(m.cs.jumps, linspace(0.0, t, outer_steps + 1), rng));
            simulate_wealth(m.cs, rule, x0, b);
            if (b.ruined) {
                out[i] = {0.0, b.Y.back(), std::numeric_limits<double>::quiet_NaN(), 0.0, 0};
                return;
            }
            x = b.X.back();
            y = b.Y.back();
        }
        NestedEstimate e{x, y, 0.0, 0.0, 0};
        if (!(t < T)) {
            e.a1 = pref * std::pow(x, dm1);
            e.inner_paths = 1;
            out[i] = e;
            return;
        }
        const std::vector<double> inner_grid = linspace(t, T, inner_steps + 1);
        // Welford running moments.
        double mean = 0.0, m2 = 0.0;
        std::size_t n = 0;
        for (std::size_t j = 0; j < cfg.n_inner; ++j) {
            auto rng = make_stream(cfg.seed, stream::nested_inner, i * cfg.n_inner + j);
            PathBundle b = make_bundle(m.fd, y, inner_grid, draw_noise(m.cs.jumps, inner_grid, rng));
            simulate_wealth(m.cs, rule, x, b);
            if (b.ruined) continue;
            const double v = pref * std::pow(b.X.back(), dm1);
            ++n;
            const double dv = v - mean;
            mean += dv / static_cast<double>(n);
            m2 += dv * (v - mean);
        }
        if (n > 0) {
            const double dn = static_cast<double>(n);
            e.a1 = mean;
            if (n > 1) e.stderr_a1 = std::sqrt(m2 / (dn - 1.0) / dn);
        } else {
            e.a1 = std::numeric_limits<double>::quiet_NaN();
        }
        e.inner_paths = n;
        out[i] = e;
    });
    return out;
}

}  // namespace jumpvol
