#pragma once

// Numerical checks of the maximum principles along simulated paths: the
// adjoint martingale test, variation processes and the necessary condition,
// the sufficient-condition report, strategy perturbations and the second
// adjoint check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "jumpvol/actuarial.hpp"
#include "jumpvol/errors.hpp"
#include "jumpvol/hsolver.hpp"
#include "jumpvol/market.hpp"
#include "jumpvol/parallel.hpp"
#include "jumpvol/simulation.hpp"
#include "jumpvol/strategy.hpp"

namespace jumpvol {

struct CheckLine {
    std::string name;
    bool passed = true;
    std::string detail;
};

inline std::string format_check(const CheckLine& c) {
    return std::string(c.passed ? "PASS " : "FAIL ") + c.name + (c.detail.empty() ? "" : ": " + c.detail);
}

// Sample mean and standard error, skipping NaN entries.
struct SampleStats {
    double mean = 0.0;
    double stderr_mean = 0.0;
    std::size_t n = 0;
};

inline SampleStats sample_stats(const std::vector<double>& v) {
    double sum = 0.0, sum_sq = 0.0;
    std::size_t n = 0;
    for (double x : v) {
        if (std::isnan(x)) continue;
        sum += x;
        sum_sq += x * x;
        ++n;
    }
    SampleStats s;
    s.n = n;
    if (n == 0) return s;
    const double dn = static_cast<double>(n);
    s.mean = sum / dn;
    if (n > 1) s.stderr_mean = std::sqrt(std::max(0.0, (sum_sq - dn * s.mean * s.mean) / (dn - 1.0)) / dn);
    return s;
}

inline std::string num(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

inline HGrid shifted_grid(HGrid g, double shift) {
    for (double& v : g.h) v += shift;
    return g;
}

// ---- adjoint martingale -----------------------------------------------------

struct MartingalePair {
    double s = 0.0;
    double t = 0.0;
    double mean = 0.0;
    double stderr_mean = 0.0;
    bool passed = true;
};

struct AdjointTestReport {
    std::vector<MartingalePair> pairs;
    std::size_t paths = 0;
    std::size_t ruined = 0;
    bool passed = true;
};

inline std::vector<std::pair<double, double>> default_time_pairs(double T) {
    return {{0.0, 0.5 * T}, {0.25 * T, 0.75 * T}, {0.5 * T, T}, {0.0, T}};
}

// M(t) = exp(int_0^t a ds) A1(t) along optimal paths, where a A1 = dH/dx at the
// optimum = r A1 + lambda e^{-D} U2'(legacy). At t = T the terminal adjoint
// e^{-D(T)} U3'(X(T)) replaces the candidate, so the test also checks that the
// candidate meets its terminal condition.
inline AdjointTestReport adjoint_residual_test(const Preferences& prefs, const ActuarialModel& am,
                                               const InsuranceMarket& im, const CoefficientSet& cs,
                                               const FactorDynamics& fd, const HGrid& grid, double x0, double y0,
                                               const SimulationConfig& sim,
                                               std::vector<std::pair<double, double>> time_pairs = {}) {
    const double T = am.horizon();
    if (time_pairs.empty()) time_pairs = default_time_pairs(T);
    const std::vector<double> t_grid = uniform_grid(T, sim.steps);
    const auto step_of = [&](double t) {
        return static_cast<std::size_t>(std::lround(t / T * static_cast<double>(sim.steps)));
    };
    std::vector<std::size_t> wanted;
    for (const auto& [s, t] : time_pairs) {
        if (!(s < t) || s < 0.0 || t > T) throw InputError("adjoint test: time pairs need 0 <= s < t <= T");
        wanted.push_back(step_of(s));
        wanted.push_back(step_of(t));
    }
    const StrategyRule rule = optimal_rule(prefs, am, im, grid);
    const std::size_t n_steps = sim.steps;
    std::vector<std::vector<double>> M(sim.paths);

    parallel_for(sim.paths, [&](std::size_t i) {
        const PathBundle b = simulate_path(cs, fd, rule, x0, y0, t_grid, sim.seed, i);
        if (b.ruined) return;
        std::vector<double> m(n_steps + 1);
        double log_growth = 0.0;
        for (std::size_t k = 0; k <= n_steps; ++k) {
            const double t = t_grid[k];
            const double x = b.X[k];
            double A1;
            if (k == n_steps) {
                A1 = std::exp(-am.total_discount(T)) * marginal_utility(prefs, 3, x);
            } else {
                A1 = std::pow(x, prefs.delta - 1.0) * std::exp(-grid.sample(t, b.Y[k]).h);
            }
            m[k] = std::exp(log_growth) * A1;
            if (k == n_steps) break;
            const Controls& u = b.controls[k];
            double a = cs.r(t);
            const double lam = am.lambda(t);
            if (lam > 0.0)
                a += lam * std::exp(-am.total_discount(t)) *
                     marginal_utility(prefs, 2, x + u.premium.amount / u.premium.eta) / A1;
            log_growth += a * (t_grid[k + 1] - t);
        }
        std::vector<double> kept;
        for (std::size_t w : wanted) kept.push_back(m[w]);
        M[i] = std::move(kept);
    });

    AdjointTestReport rep;
    rep.paths = sim.paths;
    for (const auto& m : M)
        if (m.empty()) ++rep.ruined;
    for (std::size_t p = 0; p < time_pairs.size(); ++p) {
        std::vector<double> inc(sim.paths, std::numeric_limits<double>::quiet_NaN());
        for (std::size_t i = 0; i < sim.paths; ++i)
            if (!M[i].empty()) inc[i] = M[i][2 * p + 1] - M[i][2 * p];
        const SampleStats st = sample_stats(inc);
        MartingalePair mp{time_pairs[p].first, time_pairs[p].second, st.mean, st.stderr_mean, false};
        mp.passed = std::abs(st.mean) < 3.0 * st.stderr_mean ||
                    std::abs(st.mean) < 1e-12 * std::max(1.0, std::abs(M.front().empty() ? 1.0 : M.front()[0]));
        rep.passed = rep.passed && mp.passed;
        rep.pairs.push_back(mp);
    }
    return rep;
}

// ---- general controlled dynamics --------------------------------------------

// dX = b dt + s1 dW1 + s2 dW2 + int theta N~(dt,dz),  dY = phi dt + varphi dW1,
// reward int f dt + g(X(T), Y(T)). Controls are (pi, c, p) with p the premium
// paid to the cheapest insurer.
struct ControlledDynamics {
    using StateFn = std::function<double(double t, double x, double y, double pi, double c, double p)>;
    StateFn drift;
    StateFn vol1;
    StateFn vol2;
    std::function<double(double t, double x, double y, double pi, double z)> jump;
    JumpSpec jumps;
    std::function<double(double y)> factor_drift;
    std::function<double(double y)> factor_vol;
    StateFn running;
    std::function<double(double x, double y)> terminal;
};

inline ControlledDynamics controlled_dynamics(const Preferences& prefs, const ActuarialModel& am,
                                            const InsuranceMarket& im, const CoefficientSet& cs,
                                            const FactorDynamics& fd) {
    ControlledDynamics d;
    d.drift = [cs](double t, double x, double y, double pi, double c, double p) {
        const CoefficientValues v = eval_coefficients_raw(cs, t, y);
        return x * (v.r + pi * v.mu) - c - p;
    };
    d.vol1 = [cs](double t, double x, double y, double pi, double, double) { return pi * x * cs.beta(t, y); };
    d.vol2 = [cs](double t, double x, double y, double pi, double, double) { return pi * x * cs.sigma(t, y); };
    d.jump = [cs](double t, double x, double y, double pi, double z) { return pi * x * cs.gamma(t, y, z); };
    d.jumps = cs.jumps;
    d.factor_drift = fd.g;
    d.factor_vol = [](double) { return 1.0; };
    d.running = [prefs, am, im](double t, double x, double, double, double c, double p) {
        double v = utility(prefs, 1, c);
        const double lam = am.lambda(t);
        if (lam > 0.0) v += lam * utility(prefs, 2, x + p / select_insurer(im, t).eta);
        return std::exp(-am.total_discount(t)) * v;
    };
    const double wT = std::exp(-am.total_discount(am.horizon()));
    d.terminal = [prefs, wT](double x, double) { return wT * utility(prefs, 3, x); };
    return d;
}

struct OpenLoopControls {
    std::vector<double> pi;
    std::vector<double> c;
    std::vector<double> p;
};

inline OpenLoopControls record_controls(const PathBundle& b) {
    OpenLoopControls u;
    for (const Controls& k : b.controls) {
        u.pi.push_back(k.pi);
        u.c.push_back(k.c);
        u.p.push_back(k.premium.amount);
    }
    return u;
}

// Additive Euler scheme for the general dynamics with open-loop controls
// pi + ell zeta. Returns the reward, NaN if wealth leaves (0, inf).
inline double open_loop_reward(const ControlledDynamics& d, double x0, const PathBundle& base,
                               const OpenLoopControls& u, const std::vector<double>& zeta, double ell,
                               std::vector<double>* x_path = nullptr) {
    const std::size_t n = base.t_grid.size() - 1;
    double x = x0, reward = 0.0;
    if (x_path) x_path->assign(1, x0);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = base.t_grid[k], dt = base.t_grid[k + 1] - t, y = base.Y[k];
        const double pi = u.pi[k] + ell * zeta[k];
        reward += d.running(t, x, y, pi, u.c[k], u.p[k]) * dt;
        const double comp = d.jumps.integrate([&](double z) { return d.jump(t, x, y, pi, z); });
        double next = x + (d.drift(t, x, y, pi, u.c[k], u.p[k]) - comp) * dt +
                      d.vol1(t, x, y, pi, u.c[k], u.p[k]) * base.noise.dW1[k] +
                      d.vol2(t, x, y, pi, u.c[k], u.p[k]) * base.noise.dW2[k];
        for (double z : base.noise.jumps[k]) next += d.jump(t, x, y, pi, z);
        if (!(next > 0.0) || !std::isfinite(next)) return std::numeric_limits<double>::quiet_NaN();
        x = next;
        if (x_path) x_path->push_back(x);
    }
    return reward + d.terminal(x, base.Y.back());
}

namespace detail {
inline double fd_step(double v) { return 1e-5 * std::max(1.0, std::abs(v)); }

template <class F>
double central(F&& f, double v) {
    const double h = fd_step(v);
    return (f(v + h) - f(v - h)) / (2.0 * h);
}
}  // namespace detail

struct VariationPaths {
    std::vector<double> x1;
    std::vector<double> y1;
};

// Euler scheme for the linear derivative SDEs
//   dx1 = x1 [b_x dt + s1_x dW1 + s2_x dW2 + int theta_x N~] + y1 [.._y] + zeta [.._pi],
//   dy1 = y1 [phi' dt + varphi' dW1],  x1(0) = y1(0) = 0,
// with partials by central differences along the given state path.
inline VariationPaths variation_processes(const ControlledDynamics& d, const PathBundle& base,
                                          const std::vector<double>& x_path, const OpenLoopControls& u,
                                          const std::vector<double>& zeta) {
    const std::size_t n = base.t_grid.size() - 1;
    VariationPaths v;
    v.x1.assign(n + 1, 0.0);
    v.y1.assign(n + 1, 0.0);
    const auto& atoms = d.jumps.atoms();
    for (std::size_t k = 0; k < n; ++k) {
        const double t = base.t_grid[k], dt = base.t_grid[k + 1] - t;
        const double x = x_path[k], y = base.Y[k], pi = u.pi[k], c = u.c[k], p = u.p[k];
        const double x1 = v.x1[k], y1 = v.y1[k], z = zeta[k];
        const auto lin = [&](const ControlledDynamics::StateFn& f) {
            return x1 * detail::central([&](double s) { return f(t, s, y, pi, c, p); }, x) +
                   y1 * detail::central([&](double s) { return f(t, x, s, pi, c, p); }, y) +
                   z * detail::central([&](double s) { return f(t, x, y, s, c, p); }, pi);
        };
        const auto lin_jump = [&](double mark) {
            return x1 * detail::central([&](double s) { return d.jump(t, s, y, pi, mark); }, x) +
                   y1 * detail::central([&](double s) { return d.jump(t, x, s, pi, mark); }, y) +
                   z * detail::central([&](double s) { return d.jump(t, x, y, s, mark); }, pi);
        };
        double comp = 0.0;
        for (std::size_t i = 0; i < atoms.size(); ++i) comp += d.jumps.weight(i) * lin_jump(atoms[i].mark);
        double next = x1 + (lin(d.drift) - comp) * dt + lin(d.vol1) * base.noise.dW1[k] +
                      lin(d.vol2) * base.noise.dW2[k];
        for (double mark : base.noise.jumps[k]) next += lin_jump(mark);
        v.x1[k + 1] = next;
        v.y1[k + 1] = y1 + y1 * (detail::central(d.factor_drift, y) * dt +
                                 detail::central(d.factor_vol, y) * base.noise.dW1[k]);
    }
    return v;
}

// int (f_x x1 + f_y y1 + f_pi zeta) dt + g_x x1(T) + g_y y1(T) along one path.
inline double variation_derivative(const ControlledDynamics& d, const PathBundle& base,
                                   const std::vector<double>& x_path, const OpenLoopControls& u,
                                   const std::vector<double>& zeta, const VariationPaths& v) {
    const std::size_t n = base.t_grid.size() - 1;
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double t = base.t_grid[k], dt = base.t_grid[k + 1] - t;
        const double x = x_path[k], y = base.Y[k], pi = u.pi[k], c = u.c[k], p = u.p[k];
        double fk = 0.0;
        if (v.x1[k] != 0.0) fk += v.x1[k] * detail::central([&](double s) { return d.running(t, s, y, pi, c, p); }, x);
        if (v.y1[k] != 0.0) fk += v.y1[k] * detail::central([&](double s) { return d.running(t, x, s, pi, c, p); }, y);
        if (zeta[k] != 0.0) fk += zeta[k] * detail::central([&](double s) { return d.running(t, x, y, s, c, p); }, pi);
        acc += fk * dt;
    }
    const double xT = x_path[n], yT = base.Y[n];
    acc += v.x1[n] * detail::central([&](double s) { return d.terminal(s, yT); }, xT);
    if (v.y1[n] != 0.0) acc += v.y1[n] * detail::central([&](double s) { return d.terminal(xT, s); }, yT);
    return acc;
}

// ---- necessary condition ----------------------------------------------------

struct Perturbation {
    std::string name;
    std::function<double(double t, double y)> zeta;
};

inline std::vector<Perturbation> default_perturbations(double T) {
    return {{"zeta=1", [](double, double) { return 1.0; }},
            {"zeta=1[T/2,T]", [T](double t, double) { return t >= 0.5 * T ? 1.0 : 0.0; }},
            {"zeta=tanh(Y)", [](double, double y) { return std::tanh(y); }}};
}

struct DerivativeEstimate {
    std::string name;
    SampleStats finite_difference;
    SampleStats variation;
    SampleStats hamiltonian;  // E[int dH/dpi zeta dt] with the candidate adjoint
    bool fd_zero = false;
    bool variation_zero = false;
    bool agree = false;
};

struct NecessaryConditionReport {
    std::vector<DerivativeEstimate> at_optimum;
    std::vector<DerivativeEstimate> at_suboptimal;
    double suboptimal_shift = 0.2;
    std::size_t paths = 0;
    std::size_t ruined = 0;
    bool passed = true;
    bool suboptimal_detected = false;
};

struct NecessaryConfig {
    SimulationConfig sim{250, 10000, 1};
    double epsilon = 1e-2;
    double suboptimal_shift = 0.2;
};

namespace detail {
inline std::vector<DerivativeEstimate> derivative_estimates(
    const Preferences& prefs, const CoefficientSet& cs, const FactorDynamics& fd, const ControlledDynamics& dyn,
    const StrategyRule& rule, const HGrid& grid, double x0, double y0, const std::vector<Perturbation>& family,
    const NecessaryConfig& cfg, std::size_t& ruined) {
    const std::vector<double> t_grid = uniform_grid(grid.t_nodes.back(), cfg.sim.steps);
    const std::size_t m = family.size(), n = cfg.sim.paths;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::vector<double>> fd_est(m, std::vector<double>(n, nan));
    std::vector<std::vector<double>> var_est = fd_est, ham_est = fd_est;

    parallel_for(n, [&](std::size_t i) {
        const PathBundle b = simulate_path(cs, fd, rule, x0, y0, t_grid, cfg.sim.seed, i);
        if (b.ruined) return;
        const OpenLoopControls u = record_controls(b);
        std::vector<double> x_path;
        const double base = open_loop_reward(dyn, x0, b, u, std::vector<double>(u.pi.size(), 0.0), 0.0, &x_path);
        if (std::isnan(base)) return;
        for (std::size_t j = 0; j < m; ++j) {
            std::vector<double> zeta(u.pi.size());
            bool zero = true;
            for (std::size_t k = 0; k < zeta.size(); ++k) {
                zeta[k] = family[j].zeta(t_grid[k], b.Y[k]);
                zero = zero && zeta[k] == 0.0;
            }
            if (zero) {
                fd_est[j][i] = var_est[j][i] = ham_est[j][i] = 0.0;
                continue;
            }
            const double up = open_loop_reward(dyn, x0, b, u, zeta, cfg.epsilon);
            const double dn = open_loop_reward(dyn, x0, b, u, zeta, -cfg.epsilon);
            fd_est[j][i] = (up - dn) / (2.0 * cfg.epsilon);
            const VariationPaths v = variation_processes(dyn, b, x_path, u, zeta);
            var_est[j][i] = variation_derivative(dyn, b, x_path, u, zeta, v);
            double ham = 0.0;
            for (std::size_t k = 0; k + 1 < t_grid.size(); ++k) {
                if (zeta[k] == 0.0) continue;
                const HSample s = grid.sample(t_grid[k], b.Y[k]);
                const AdjointState adj =
                    adjoint_from_values(prefs, cs, t_grid[k], x_path[k], b.Y[k], s.h, s.h_y, u.pi[k]);
                ham += hamiltonian_dpi(cs, t_grid[k], x_path[k], b.Y[k], adj) * zeta[k] *
                       (t_grid[k + 1] - t_grid[k]);
            }
            ham_est[j][i] = ham;
        }
    });

    ruined = 0;
    if (m > 0)
        for (double v : fd_est[0])
            if (std::isnan(v)) ++ruined;
    std::vector<DerivativeEstimate> out;
    for (std::size_t j = 0; j < m; ++j) {
        DerivativeEstimate e;
        e.name = family[j].name;
        e.finite_difference = sample_stats(fd_est[j]);
        e.variation = sample_stats(var_est[j]);
        e.hamiltonian = sample_stats(ham_est[j]);
        const auto zero_ok = [](const SampleStats& s) {
            return std::abs(s.mean) <= 3.0 * s.stderr_mean || (s.mean == 0.0 && s.stderr_mean == 0.0);
        };
        e.fd_zero = zero_ok(e.finite_difference);
        e.variation_zero = zero_ok(e.variation);
        const double combined = std::hypot(e.finite_difference.stderr_mean, e.variation.stderr_mean);
        e.agree = std::abs(e.finite_difference.mean - e.variation.mean) <= 3.0 * combined ||
                  e.finite_difference.mean == e.variation.mean;
        out.push_back(e);
    }
    return out;
}
}  // namespace detail

// Directional derivatives of J along bounded perturbations zeta of the
// portfolio, estimated by central differences of the reward with common
// random numbers and by the variation processes. The second portfolio,
// pi* + shift, must show a derivative whose confidence interval excludes 0.
inline NecessaryConditionReport necessary_condition_test(const Preferences& prefs, const ActuarialModel& am,
                                                         const InsuranceMarket& im, const CoefficientSet& cs,
                                                         const FactorDynamics& fd, const HGrid& grid, double x0,
                                                         double y0, const std::vector<Perturbation>& family,
                                                         const NecessaryConfig& cfg = {}) {
    const ControlledDynamics dyn = controlled_dynamics(prefs, am, im, cs, fd);
    const StrategyRule rule = optimal_rule(prefs, am, im, grid);
    NecessaryConditionReport rep;
    rep.paths = cfg.sim.paths;
    rep.suboptimal_shift = cfg.suboptimal_shift;
    rep.at_optimum =
        detail::derivative_estimates(prefs, cs, fd, dyn, rule, grid, x0, y0, family, cfg, rep.ruined);
    for (const auto& e : rep.at_optimum) rep.passed = rep.passed && e.fd_zero && e.variation_zero && e.agree;

    const double shift = cfg.suboptimal_shift;
    const StrategyRule shifted{[rule, shift](double t, double x, double y) {
        Controls u = rule(t, x, y);
        u.pi += shift;
        return u;
    }};
    std::size_t ruined_sub = 0;
    const std::vector<Perturbation> constant{{"zeta=1", [](double, double) { return 1.0; }}};
    rep.at_suboptimal =
        detail::derivative_estimates(prefs, cs, fd, dyn, shifted, grid, x0, y0, constant, cfg, ruined_sub);
    const SampleStats& s = rep.at_suboptimal.front().finite_difference;
    rep.suboptimal_detected = std::abs(s.mean) > 3.0 * s.stderr_mean;
    rep.passed = rep.passed && rep.suboptimal_detected;
    return rep;
}

// ---- perturbation suite -----------------------------------------------------

struct StrategyVariant {
    std::string name;
    StrategyRule rule;
};

inline std::vector<StrategyVariant> perturbation_family(const StrategyRule& opt) {
    const auto shift_pi = [opt](double d) {
        return StrategyRule{[opt, d](double t, double x, double y) {
            Controls u = opt(t, x, y);
            u.pi += d;
            return u;
        }};
    };
    const auto scale_c = [opt](double f) {
        return StrategyRule{[opt, f](double t, double x, double y) {
            Controls u = opt(t, x, y);
            u.c *= f;
            return u;
        }};
    };
    const auto scale_p = [opt](double f) {
        return StrategyRule{[opt, f](double t, double x, double y) {
            Controls u = opt(t, x, y);
            u.premium.amount *= f;
            return u;
        }};
    };
    return {{"pi+0.05", shift_pi(0.05)}, {"pi-0.05", shift_pi(-0.05)}, {"pi+0.1", shift_pi(0.1)},
            {"pi-0.1", shift_pi(-0.1)},  {"c*1.1", scale_c(1.1)},      {"c*0.9", scale_c(0.9)},
            {"premium off", scale_p(0.0)}, {"premium*1.5", scale_p(1.5)}};
}

struct PerturbationResult {
    std::string name;
    double j_perturbed = 0.0;
    PairedDifference gain;  // J(optimal) - J(perturbed)
    bool passed = true;
};

struct PerturbationReport {
    PerformanceEstimate optimal;
    std::vector<PerturbationResult> results;
    bool passed = true;
};

inline PerturbationReport perturbation_suite(const Preferences& prefs, const ActuarialModel& am,
                                             const InsuranceMarket& im, const CoefficientSet& cs,
                                             const FactorDynamics& fd, const HGrid& grid, double x0, double y0,
                                             const SimulationConfig& sim) {
    const StrategyRule opt = optimal_rule(prefs, am, im, grid);
    PerturbationReport rep;
    rep.optimal = estimate_performance(prefs, am, cs, fd, opt, x0, y0, sim);
    for (const auto& v : perturbation_family(opt)) {
        const PerformanceEstimate e = estimate_performance(prefs, am, cs, fd, v.rule, x0, y0, sim);
        PerturbationResult r;
        r.name = v.name;
        r.j_perturbed = e.mean;
        r.gain = paired_difference(rep.optimal, e);
        r.passed = r.gain.mean >= -3.0 * r.gain.stderr_mean;
        rep.passed = rep.passed && r.passed;
        rep.results.push_back(r);
    }
    return rep;
}

// ---- second adjoint ---------------------------------------------------------

struct SecondAdjointReport {
    SampleStats dH_dy;  // E[int dH/dy dt] along optimal paths
    bool passed = true;
};

// With A2 = B3 = B4 = D2 = 0 the second adjoint equation forces dH/dy = 0;
// the integral of dH/dy along optimal paths must vanish in mean.
inline SecondAdjointReport second_adjoint_check(const Preferences& prefs, const ActuarialModel& am,
                                                const InsuranceMarket& im, const CoefficientSet& cs,
                                                const FactorDynamics& fd, const HGrid& grid, double x0, double y0,
                                                const SimulationConfig& sim) {
    const StrategyRule rule = optimal_rule(prefs, am, im, grid);
    const std::vector<double> t_grid = uniform_grid(am.horizon(), sim.steps);
    std::vector<double> vals(sim.paths, std::numeric_limits<double>::quiet_NaN());
    parallel_for(sim.paths, [&](std::size_t i) {
        const PathBundle b = simulate_path(cs, fd, rule, x0, y0, t_grid, sim.seed, i);
        if (b.ruined) return;
        double acc = 0.0;
        for (std::size_t k = 0; k + 1 < t_grid.size(); ++k) {
            const double t = t_grid[k], x = b.X[k], y = b.Y[k];
            const AdjointState adj = adjoint_candidate(prefs, cs, grid, t, x, y);
            const Controls& c = b.controls[k];
            ControlVector u{c.c, c.pi, rule.premium_vector(c, im.size())};
            const double d = detail::central(
                [&](double s) { return hamiltonian(prefs, am, im, cs, fd, t, x, s, u, adj); }, y);
            acc += d * (t_grid[k + 1] - t);
        }
        vals[i] = acc;
    });
    SecondAdjointReport rep;
    rep.dH_dy = sample_stats(vals);
    rep.passed = std::abs(rep.dH_dy.mean) <= 3.0 * rep.dH_dy.stderr_mean ||
                 std::abs(rep.dH_dy.mean) < 1e-12;
    return rep;
}

// ---- sufficient conditions --------------------------------------------------

struct SufficientReport {
    std::vector<CheckLine> lines;
    double integrability_x = 0.0;  // E int X^2 (B1^2 + B2^2 + int D1^2 nu) dt
    double integrability_y = 0.0;  // E int Y^2 (B3^2 + B4^2 + int D2^2 nu) dt
    double integrability_a = 0.0;  // E int A1^2 (s1^2 + s2^2 + int theta^2 nu) + A2^2 varphi^2 dt
    bool passed = true;
};

struct SufficientConfig {
    std::vector<double> x_samples{0.25, 0.5, 1.0, 2.0, 4.0};
    std::size_t y_samples = 7;
    std::size_t t_samples = 5;
    SimulationConfig sim{200, 2000, 1};
    // Terminal reward g(x, y); defaults to e^{-D(T)} U3(x).
    std::function<double(double x, double y)> terminal;
};

// Sup over (c, p) of the Hamiltonian at fixed adjoint and portfolio.
inline double maximized_hamiltonian(const Preferences& prefs, const ActuarialModel& am, const InsuranceMarket& im,
                                    const CoefficientSet& cs, const FactorDynamics& fd, double t, double x,
                                    double y, double pi, const AdjointState& adj) {
    const double D = am.total_discount(t);
    ControlVector u;
    u.pi = pi;
    u.c = consumption_given_discount(prefs, D, adj.A1);
    u.premiums.assign(im.size(), 0.0);
    const double lam = am.lambda(t);
    if (lam > 0.0) {
        const PremiumChoice p = premium_given_discount(prefs, lam, select_insurer(im, t), D, x, adj.A1);
        u.premiums[p.insurer] = p.amount;
    }
    return hamiltonian(prefs, am, im, cs, fd, t, x, y, u, adj);
}

inline SufficientReport sufficient_condition_report(const Preferences& prefs, const ActuarialModel& am,
                                                    const InsuranceMarket& im, const CoefficientSet& cs,
                                                    const FactorDynamics& fd, const HGrid& grid, double x0,
                                                    double y0, const SufficientConfig& cfg = {}) {
    SufficientReport rep;
    const double T = am.horizon();
    const double wT = std::exp(-am.total_discount(T));
    const auto g = cfg.terminal ? cfg.terminal
                                : std::function<double(double, double)>(
                                      [&](double x, double) { return wT * utility(prefs, 3, x); });
    const std::vector<double> ys = linspace(fd.domain.lo * 0.9, fd.domain.hi * 0.9, cfg.y_samples);
    const std::vector<std::pair<double, double>> dirs{{1, 0}, {0, 1}, {1, 1}, {1, -1}};

    // (i) terminal reward concave in (x, y): second differences along directions.
    {
        double worst = -std::numeric_limits<double>::infinity();
        std::string where;
        for (double x : cfg.x_samples)
            for (double y : ys)
                for (const auto& [dx, dy] : dirs) {
                    const double h = 1e-3 * x;
                    const double c0 = g(x, y);
                    const double s2 = g(x + h * dx, y + h * dy) - 2.0 * c0 + g(x - h * dx, y - h * dy);
                    const double scaled = s2 / (h * h) / std::max(1.0, std::abs(c0));
                    if (scaled > worst) {
                        worst = scaled;
                        where = "x=" + num(x) + " y=" + num(y);
                    }
                }
        const bool ok = worst <= 1e-6;
        rep.lines.push_back({"terminal reward concave", ok, "max scaled second difference " + num(worst) + " at " + where});
        rep.passed = rep.passed && ok;
    }

    // (ii) maximized Hamiltonian concave in (x, y) with the adjoint frozen at the centre.
    {
        double worst = -std::numeric_limits<double>::infinity();
        std::string where;
        const std::vector<double> ts = linspace(0.0, T * 0.95, cfg.t_samples);
        for (double t : ts)
            for (double x : cfg.x_samples)
                for (double y : ys) {
                    const HSample s = grid.sample(t, y);
                    const AdjointState adj = adjoint_from_values(prefs, cs, t, x, y, s.h, s.h_y, s.pi);
                    const auto H = [&](double xx, double yy) {
                        return maximized_hamiltonian(prefs, am, im, cs, fd, t, xx, yy, s.pi, adj);
                    };
                    const double c0 = H(x, y);
                    for (const auto& [dx, dy] : dirs) {
                        const double h = 1e-3 * std::min(1.0, x);
                        const double s2 = H(x + h * dx, y + h * dy) - 2.0 * c0 + H(x - h * dx, y - h * dy);
                        const double scaled = s2 / (h * h) / std::max(1.0, std::abs(c0));
                        if (scaled > worst) {
                            worst = scaled;
                            where = "t=" + num(t) + " x=" + num(x) + " y=" + num(y);
                        }
                    }
                }
        const bool ok = worst <= 1e-4;
        rep.lines.push_back(
            {"maximized Hamiltonian concave", ok, "max scaled second difference " + num(worst) + " at " + where});
        rep.passed = rep.passed && ok;
    }

    // (iii) integrability expectations along optimal paths.
    {
        const StrategyRule rule = optimal_rule(prefs, am, im, grid);
        const std::vector<double> t_grid = uniform_grid(T, cfg.sim.steps);
        const double nan = std::numeric_limits<double>::quiet_NaN();
        std::vector<double> ex(cfg.sim.paths, nan), ey(cfg.sim.paths, nan), ea(cfg.sim.paths, nan);
        parallel_for(cfg.sim.paths, [&](std::size_t i) {
            const PathBundle b = simulate_path(cs, fd, rule, x0, y0, t_grid, cfg.sim.seed, i);
            if (b.ruined) return;
            double sx = 0.0, sy = 0.0, sa = 0.0;
            for (std::size_t k = 0; k + 1 < t_grid.size(); ++k) {
                const double t = t_grid[k], dt = t_grid[k + 1] - t, x = b.X[k], y = b.Y[k];
                const AdjointState adj = adjoint_candidate(prefs, cs, grid, t, x, y);
                const double pi = b.controls[k].pi;
                double d1 = 0.0, d2 = 0.0, th = 0.0;
                const auto& atoms = cs.jumps.atoms();
                for (std::size_t a = 0; a < atoms.size(); ++a) {
                    const double w = cs.jumps.weight(a);
                    d1 += w * adj.D1[a] * adj.D1[a];
                    d2 += w * adj.D2[a] * adj.D2[a];
                    const double jt = pi * x * cs.gamma(t, y, atoms[a].mark);
                    th += w * jt * jt;
                }
                const double s1 = pi * x * cs.beta(t, y), s2 = pi * x * cs.sigma(t, y);
                sx += x * x * (adj.B1 * adj.B1 + adj.B2 * adj.B2 + d1) * dt;
                sy += y * y * (adj.B3 * adj.B3 + adj.B4 * adj.B4 + d2) * dt;
                sa += (adj.A1 * adj.A1 * (s1 * s1 + s2 * s2 + th) + adj.A2 * adj.A2) * dt;
            }
            ex[i] = sx;
            ey[i] = sy;
            ea[i] = sa;
        });
        const SampleStats a = sample_stats(ex), b = sample_stats(ey), c = sample_stats(ea);
        rep.integrability_x = a.mean;
        rep.integrability_y = b.mean;
        rep.integrability_a = c.mean;
        const auto line = [&](const char* name, const SampleStats& s) {
            const bool ok = std::isfinite(s.mean) && std::isfinite(s.stderr_mean) && s.n > 0;
            rep.lines.push_back({name, ok, "mean " + num(s.mean) + " stderr " + num(s.stderr_mean) + " paths " +
                                               std::to_string(s.n)});
            rep.passed = rep.passed && ok;
        };
        line("integrability X^2 (B1^2+B2^2+int D1^2)", a);
        line("integrability Y^2 (B3^2+B4^2+int D2^2)", b);
        line("integrability A1^2 (vol^2 + int jump^2)", c);
    }
    return rep;
}

}  // namespace jumpvol
