#pragma once

// Path simulation of the factor and the wealth process, the optimal feedback
// rule built from a solved h-grid, and Monte Carlo estimation of the
// performance functional.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "jumpvol/actuarial.hpp"
#include "jumpvol/errors.hpp"
#include "jumpvol/hsolver.hpp"
#include "jumpvol/market.hpp"
#include "jumpvol/parallel.hpp"
#include "jumpvol/random.hpp"
#include "jumpvol/strategy.hpp"

namespace jumpvol {

inline std::vector<double> uniform_grid(double horizon, std::size_t steps) {
    if (steps == 0) throw InputError("time grid needs at least one step");
    if (!(horizon > 0.0)) throw InputError("time grid: horizon must be positive");
    return linspace(0.0, horizon, steps + 1);
}

inline void check_grid(const std::vector<double>& t_grid) {
    if (t_grid.size() < 2) throw InputError("time grid needs at least two points");
    require_increasing(t_grid, "time grid");
}

// ---- noise ------------------------------------------------------------------

// One realization of (W1, W2, N) on a time grid. Draw order per step is
// z1, z2, jump count, marks, so the noise never depends on the controls.
struct Noise {
    std::vector<double> dW1;
    std::vector<double> dW2;
    std::vector<std::vector<double>> jumps;
};

template <class Rng>
Noise draw_noise(const JumpSpec& js, const std::vector<double>& t_grid, Rng& rng) {
    check_grid(t_grid);
    const std::size_t n = t_grid.size() - 1;
    Noise out;
    out.dW1.resize(n);
    out.dW2.resize(n);
    out.jumps.resize(n);
    std::normal_distribution<double> normal;
    for (std::size_t k = 0; k < n; ++k) {
        const double dt = t_grid[k + 1] - t_grid[k];
        const double sq = std::sqrt(dt);
        out.dW1[k] = sq * normal(rng);
        out.dW2[k] = sq * normal(rng);
        if (js.active()) out.jumps[k] = sample_jump_marks(js, dt, rng).marks;
    }
    return out;
}

// Negates both Brownian increment sequences; jump marks are kept.
inline Noise antithetic(const Noise& n) {
    Noise out = n;
    for (auto& v : out.dW1) v = -v;
    for (auto& v : out.dW2) v = -v;
    return out;
}

// ---- factor -----------------------------------------------------------------

enum class FactorScheme { euler, exact, zero_noise };

// Euler path of dY = g(Y) dt + dW1 driven by given increments.
inline std::vector<double> factor_from_increments(const FactorDynamics& fd, double y0,
                                                  const std::vector<double>& t_grid,
                                                  const std::vector<double>& dW1) {
    std::vector<double> y(t_grid.size());
    y[0] = y0;
    for (std::size_t k = 0; k + 1 < t_grid.size(); ++k)
        y[k + 1] = y[k] + fd.g(y[k]) * (t_grid[k + 1] - t_grid[k]) + dW1[k];
    return y;
}

// Exact OU transition Y(t+d) = e^{-b d} Y(t) + sqrt((1 - e^{-2bd})/(2b)) Z.
template <class Rng>
std::vector<double> ou_exact_path(double b, double y0, const std::vector<double>& t_grid, Rng& rng,
                                  bool zero_noise = false) {
    if (!(b > 0.0)) throw InputError("OU path: reversion speed must be positive");
    check_grid(t_grid);
    std::normal_distribution<double> normal;
    std::vector<double> y(t_grid.size());
    y[0] = y0;
    for (std::size_t k = 0; k + 1 < t_grid.size(); ++k) {
        const double d = t_grid[k + 1] - t_grid[k];
        const double decay = std::exp(-b * d);
        const double sd = std::sqrt((1.0 - decay * decay) / (2.0 * b));
        y[k + 1] = decay * y[k] + (zero_noise ? 0.0 : sd * normal(rng));
    }
    return y;
}

template <class Rng>
std::vector<double> simulate_factor(const FactorDynamics& fd, double y0,
                                    const std::vector<double>& t_grid, Rng& rng,
                                    FactorScheme scheme = FactorScheme::euler) {
    check_grid(t_grid);
    if (scheme == FactorScheme::exact) {
        if (!fd.ou_reversion) throw InputError("exact factor transitions need an OU factor");
        return ou_exact_path(*fd.ou_reversion, y0, t_grid, rng);
    }
    std::vector<double> dW(t_grid.size() - 1, 0.0);
    if (scheme == FactorScheme::euler) {
        std::normal_distribution<double> normal;
        for (std::size_t k = 0; k < dW.size(); ++k) dW[k] = std::sqrt(t_grid[k + 1] - t_grid[k]) * normal(rng);
    }
    return factor_from_increments(fd, y0, t_grid, dW);
}

// ---- paths ------------------------------------------------------------------

struct PathBundle {
    std::vector<double> t_grid;
    Noise noise;
    std::vector<double> Y;
    std::vector<double> X;
    std::vector<Controls> controls;  // applied on [t_k, t_{k+1})
    bool ruined = false;
    std::size_t ruin_step = 0;
};

inline PathBundle make_bundle(const FactorDynamics& fd, double y0, std::vector<double> t_grid, Noise noise) {
    PathBundle b;
    b.t_grid = std::move(t_grid);
    b.noise = std::move(noise);
    b.Y = factor_from_increments(fd, y0, b.t_grid, b.noise.dW1);
    return b;
}

// Euler step for the wealth equation over [t_k, t_{k+1}], with jumps applied
// multiplicatively and the compensator in the drift.
inline double wealth_step(const CoefficientSet& cs, double t, double dt, double x, double y,
                          const Controls& u, double dW1, double dW2, const std::vector<double>& marks) {
    const CoefficientValues v = eval_coefficients_raw(cs, t, y);
    const double compensator = cs.jumps.integrate([&](double z) { return cs.gamma(t, y, z); });
    double next = x + (x * (v.r + u.pi * v.mu - u.pi * compensator) - u.c - u.premium.amount) * dt +
                  u.pi * x * (v.beta * dW1 + v.sigma * dW2);
    for (double z : marks) next *= 1.0 + u.pi * cs.gamma(t, y, z);
    return next;
}

// Runs the wealth SDE under a feedback rule along the bundle's noise. A path
// whose wealth reaches zero or below is flagged and stopped there.
inline void simulate_wealth(const CoefficientSet& cs, const StrategyRule& rule, double x0, PathBundle& b) {
    if (!(x0 > 0.0)) throw InputError("simulate_wealth: x0 must be positive");
    const std::size_t n = b.t_grid.size() - 1;
    b.X.assign(1, x0);
    b.X.reserve(n + 1);
    b.controls.clear();
    b.controls.reserve(n);
    b.ruined = false;
    for (std::size_t k = 0; k < n; ++k) {
        const double t = b.t_grid[k], dt = b.t_grid[k + 1] - t;
        const double x = b.X[k], y = b.Y[k];
        const Controls u = rule(t, x, y);
        b.controls.push_back(u);
        const double next = wealth_step(cs, t, dt, x, y, u, b.noise.dW1[k], b.noise.dW2[k], b.noise.jumps[k]);
        if (!(next > 0.0) || !std::isfinite(next)) {
            b.ruined = true;
            b.ruin_step = k + 1;
            return;
        }
        b.X.push_back(next);
    }
}

// Exponential solution for a rule that is homogeneous of degree one in x:
// X(t) = x0 exp( int [G - pi^2 (beta^2+sigma^2)/2] ds + int pi (beta dW1 + sigma dW2)
//               + sum ln(1 + pi gamma) ),  G = r + pi mu - c(t,1,y) - p(t,1,y) - pi int gamma nu.
inline std::vector<double> wealth_closed_form(const CoefficientSet& cs, const StrategyRule& rule, double x0,
                                              const PathBundle& b) {
    if (!(x0 > 0.0)) throw InputError("wealth_closed_form: x0 must be positive");
    const std::size_t n = b.t_grid.size() - 1;
    std::vector<double> out(n + 1);
    out[0] = x0;
    double logx = std::log(x0);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = b.t_grid[k], dt = b.t_grid[k + 1] - t, y = b.Y[k];
        const CoefficientValues v = eval_coefficients_raw(cs, t, y);
        const Controls u = rule(t, 1.0, y);
        const double compensator = cs.jumps.integrate([&](double z) { return cs.gamma(t, y, z); });
        const double G = v.r + u.pi * v.mu - u.c - u.premium.amount - u.pi * compensator;
        logx += (G - 0.5 * u.pi * u.pi * (v.beta * v.beta + v.sigma * v.sigma)) * dt +
                u.pi * (v.beta * b.noise.dW1[k] + v.sigma * b.noise.dW2[k]);
        for (double z : b.noise.jumps[k]) {
            const double j = 1.0 + u.pi * cs.gamma(t, y, z);
            if (!(j > 0.0)) throw DomainError("wealth_closed_form: jump drives wealth nonpositive");
            logx += std::log(j);
        }
        out[k + 1] = std::exp(logx);
    }
    return out;
}

// ---- optimal rule -----------------------------------------------------------

// Feedback rule: pi* from the grid, c* and p* from the
// adjoint candidate A1 = x^{delta-1} e^{-h(t,y)}.
inline StrategyRule optimal_rule(const Preferences& prefs, const ActuarialModel& am,
                                 const InsuranceMarket& im, const HGrid& grid) {
    return StrategyRule{[prefs, am, im, grid](double t, double x, double y) {
        const HSample s = grid.sample(t, y);
        const double A1 = std::pow(x, prefs.delta - 1.0) * std::exp(-s.h);
        const double D = am.total_discount(t);
        Controls u;
        u.pi = s.pi;
        u.c = consumption_given_discount(prefs, D, A1);
        const double lam = am.lambda(t);
        const InsurerChoice sel = select_insurer(im, t);
        if (lam > 0.0)
            u.premium = premium_given_discount(prefs, lam, sel, D, x, A1);
        else
            u.premium = {sel.index, 0.0, sel.eta};
        return u;
    }};
}

// Constant-proportion rule: pi fixed, c = c_ratio x, no insurance.
inline StrategyRule constant_rule(double pi, double c_ratio = 0.0) {
    return StrategyRule{[pi, c_ratio](double, double x, double) {
        Controls u;
        u.pi = pi;
        u.c = c_ratio * x;
        return u;
    }};
}

// ---- performance ------------------------------------------------------------

struct SimulationConfig {
    std::size_t steps = 2000;
    std::size_t paths = 10000;
    std::uint64_t seed = 1;
};

struct PerformanceComponents {
    double consumption = 0.0;
    double legacy = 0.0;
    double terminal = 0.0;
};

struct PerformanceEstimate {
    double mean = 0.0;
    double stderr_mean = 0.0;
    std::size_t n_paths = 0;
    std::size_t ruined = 0;
    PerformanceComponents components;
    // Per-path totals in path-index order; NaN marks a ruined path.
    std::vector<double> per_path;
};

struct PathValue {
    double consumption = 0.0;
    double legacy = 0.0;
    double terminal = 0.0;
    double x_end = 0.0;  // wealth at T, or at ruin
    double y_end = 0.0;
    bool ruined = false;
    double total() const { return consumption + legacy + terminal; }
};

// int e^{-D} [U1(c) + lambda U2(x + p/eta)] dt + e^{-D(T)} U3(X(T)) along one
// simulated path, left-point rule.
inline PathValue path_value(const Preferences& prefs, const ActuarialModel& am, const PathBundle& b) {
    PathValue v;
    v.x_end = b.ruined ? 0.0 : b.X.back();
    v.y_end = b.Y[b.ruined ? b.ruin_step : b.Y.size() - 1];
    if (b.ruined) {
        v.ruined = true;
        return v;
    }
    const std::size_t n = b.t_grid.size() - 1;
    for (std::size_t k = 0; k < n; ++k) {
        const double t = b.t_grid[k], dt = b.t_grid[k + 1] - t;
        const double w = std::exp(-am.total_discount(t));
        const Controls& u = b.controls[k];
        v.consumption += w * utility(prefs, 1, u.c) * dt;
        const double lam = am.lambda(t);
        if (lam > 0.0) v.legacy += w * lam * utility(prefs, 2, b.X[k] + u.premium.amount / u.premium.eta) * dt;
    }
    v.terminal = std::exp(-am.total_discount(b.t_grid.back())) * utility(prefs, 3, b.X.back());
    return v;
}

inline PathBundle simulate_path(const CoefficientSet& cs, const FactorDynamics& fd, const StrategyRule& rule,
                                double x0, double y0, const std::vector<double>& t_grid, std::uint64_t seed,
                                std::size_t index) {
    auto rng = make_stream(seed, stream::wealth_path, index);
    PathBundle b = make_bundle(fd, y0, t_grid, draw_noise(cs.jumps, t_grid, rng));
    simulate_wealth(cs, rule, x0, b);
    return b;
}

inline PerformanceEstimate estimate_performance(const Preferences& prefs, const ActuarialModel& am,
                                                const CoefficientSet& cs, const FactorDynamics& fd,
                                                const StrategyRule& rule, double x0, double y0,
                                                const SimulationConfig& sim,
                                                std::vector<PathValue>* path_values = nullptr) {
    if (sim.paths < 2) throw InputError("estimate_performance: need at least two paths");
    const std::vector<double> t_grid = uniform_grid(am.horizon(), sim.steps);
    std::vector<PathValue> values(sim.paths);
    parallel_for(sim.paths, [&](std::size_t i) {
        const PathBundle b = simulate_path(cs, fd, rule, x0, y0, t_grid, sim.seed, i);
        values[i] = path_value(prefs, am, b);
    });

    PerformanceEstimate est;
    est.per_path.resize(sim.paths);
    double sum = 0.0, sum_sq = 0.0;
    PerformanceComponents comp;
    for (std::size_t i = 0; i < sim.paths; ++i) {
        if (values[i].ruined) {
            ++est.ruined;
            est.per_path[i] = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        const double v = values[i].total();
        est.per_path[i] = v;
        sum += v;
        sum_sq += v * v;
        comp.consumption += values[i].consumption;
        comp.legacy += values[i].legacy;
        comp.terminal += values[i].terminal;
    }
    const std::size_t n = sim.paths - est.ruined;
    if (n == 0) throw EstimationError("estimate_performance: every path was ruined");
    const double dn = static_cast<double>(n);
    est.n_paths = n;
    est.components = {comp.consumption / dn, comp.legacy / dn, comp.terminal / dn};
    est.mean = est.components.consumption + est.components.legacy + est.components.terminal;
    const double var = n > 1 ? std::max(0.0, (sum_sq - dn * (sum / dn) * (sum / dn)) / (dn - 1.0)) : 0.0;
    est.stderr_mean = std::sqrt(var / dn);
    if (path_values) *path_values = std::move(values);
    return est;
}

struct PairedDifference {
    double mean = 0.0;
    double stderr_mean = 0.0;
    std::size_t n_paths = 0;
};

// Mean and standard error of a - b over paths retained in both estimates.
inline PairedDifference paired_difference(const PerformanceEstimate& a, const PerformanceEstimate& b) {
    if (a.per_path.size() != b.per_path.size()) throw InputError("paired_difference: path counts differ");
    double sum = 0.0, sum_sq = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.per_path.size(); ++i) {
        if (std::isnan(a.per_path[i]) || std::isnan(b.per_path[i])) continue;
        const double d = a.per_path[i] - b.per_path[i];
        sum += d;
        sum_sq += d * d;
        ++n;
    }
    if (n < 2) throw EstimationError("paired_difference: fewer than two common paths");
    const double dn = static_cast<double>(n);
    const double mean = sum / dn;
    const double var = std::max(0.0, (sum_sq - dn * mean * mean) / (dn - 1.0));
    return {mean, std::sqrt(var / dn), n};
}

// ---- adjoint candidate ------------------------------------------------------

// A1 = x^{delta-1} e^{-h}, B1 = ((delta-1) pi beta - h_y) A1, B2 = (delta-1) pi sigma A1,
// D1(z) = A1 [(1 + pi gamma)^{delta-1} - 1], second adjoint identically zero.
inline AdjointState adjoint_from_values(const Preferences& prefs, const CoefficientSet& cs, double t,
                                        double x, double y, double h, double h_y, double pi) {
    if (!(x > 0.0)) throw DomainError("adjoint candidate: wealth must be positive");
    const double dm1 = prefs.delta - 1.0;
    AdjointState a;
    a.A1 = std::pow(x, dm1) * std::exp(-h);
    const double beta = cs.beta(t, y), sigma = cs.sigma(t, y);
    a.B1 = (dm1 * pi * beta - h_y) * a.A1;
    a.B2 = dm1 * pi * sigma * a.A1;
    const auto& atoms = cs.jumps.atoms();
    a.D1.resize(atoms.size());
    a.D2.assign(atoms.size(), 0.0);
    for (std::size_t i = 0; i < atoms.size(); ++i)
        a.D1[i] = a.A1 * (std::pow(1.0 + pi * cs.gamma(t, y, atoms[i].mark), dm1) - 1.0);
    return a;
}

inline AdjointState adjoint_candidate(const Preferences& prefs, const CoefficientSet& cs, const HGrid& grid,
                                      double t, double x, double y) {
    const HSample s = grid.sample(t, y);
    return adjoint_from_values(prefs, cs, t, x, y, s.h, s.h_y, s.pi);
}

}  // namespace jumpvol
