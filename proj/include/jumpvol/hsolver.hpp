#pragma once

// Backward PDE for the exponent h(t, y) of the first adjoint,
// A1 = x^{delta-1} e^{-h(t, Y)}, solved by fixed-point iteration of a
// Feynman-Kac operator estimated by Monte Carlo, coupled with the portfolio
// first-order condition at every grid node.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "jumpvol/actuarial.hpp"
#include "jumpvol/curves.hpp"
#include "jumpvol/errors.hpp"
#include "jumpvol/market.hpp"
#include "jumpvol/parallel.hpp"
#include "jumpvol/random.hpp"
#include "jumpvol/strategy.hpp"

namespace jumpvol {

// Terminal value h(T, y).
//   ansatz:          D(T) - ln kappa3, so that A1(T) = e^{-D(T)} U3'(X(T)) exactly
//   log_discount:    D(T)
//   discount_factor: e^{-D(T)}
enum class TerminalMode { ansatz, log_discount, discount_factor };

// Which equation the operator represents.
//   consistent: the equation implied by Ito's formula on the adjoint ansatz
//   printed:    the K(t)/nonlinearity/drift-coefficient transcription kept
//               for side-by-side comparison
enum class PdeForm { consistent, printed };

// drift:   Feynman-Kac with the first-order term folded into the factor drift
// literal: expectation of e^{Q} weights as transcribed, without a terminal value
enum class PhiMode { drift, literal };

// Per-time quantities shared by every node and path at that time.
struct TimeContext {
    double t = 0.0;
    double r = 0.0;
    double lambda = 0.0;
    double discount = 0.0;  // int_0^t (rho + lambda)
    InsurerChoice insurer{0, 1.0, false};
};

struct HEquation {
    double horizon = 1.0;
    std::function<double(double y)> terminal;
    std::function<TimeContext(double t)> context;  // optional; defaults to {t}
    std::function<double(const TimeContext&, double y, double pi)> drift;
    std::function<double(const TimeContext&, double y, double pi, double h, double h_y)> source;
    std::function<double(double t, double y, double h_y)> portfolio;  // optional; pi = 0 if empty
    std::function<double(const TimeContext&, double y, double pi)> weight;  // literal mode only

    TimeContext at(double t) const {
        if (context) return context(t);
        TimeContext c;
        c.t = t;
        return c;
    }
};

struct HGridConfig {
    std::size_t t_count = 21;
    double y_lo = -3.0;
    double y_hi = 3.0;
    std::size_t y_count = 41;
};

struct PhiConfig {
    std::size_t paths = 256;  // per node, rounded up to an even count (antithetic pairs)
    std::size_t substeps = 2;  // per time-grid interval
    std::uint64_t seed = 1;
    double target_stderr = 5e-3;
};

struct FixedPointConfig {
    double omega = 1.0;
    double tolerance = 1e-4;
    std::size_t max_iters = 60;
};

struct HSample {
    double h;
    double h_y;
    double pi;
};

// Tabulated h, h_y and the coupled portfolio on a rectangular (t, y) grid,
// stored row-major by time.
struct HGrid {
    std::vector<double> t_nodes;
    std::vector<double> y_nodes;
    std::vector<double> h;
    std::vector<double> h_y;
    std::vector<double> pi_star;
    std::vector<double> stderr_h;  // Monte Carlo standard error of the last operator application
    std::size_t iterations = 0;
    std::vector<double> sup_norm_history;
    std::vector<std::string> warnings;

    std::size_t nt() const { return t_nodes.size(); }
    std::size_t ny() const { return y_nodes.size(); }
    std::size_t index(std::size_t i, std::size_t j) const { return i * ny() + j; }

    CellLocation time_cell(double t) const {
        return nt() > 1 ? locate_cell(t_nodes, t) : CellLocation{0, 0.0};
    }

    HSample sample(CellLocation tc, double y) const {
        const auto cy = ny() > 1 ? locate_cell(y_nodes, y) : CellLocation{0, 0.0};
        const std::size_t i0 = tc.index, i1 = nt() > 1 ? tc.index + 1 : 0;
        const std::size_t j0 = cy.index, j1 = ny() > 1 ? cy.index + 1 : 0;
        const double wt = tc.weight, wy = cy.weight;
        const auto blend = [&](const std::vector<double>& v) {
            const double lo = (1.0 - wy) * v[index(i0, j0)] + wy * v[index(i0, j1)];
            const double hi = (1.0 - wy) * v[index(i1, j0)] + wy * v[index(i1, j1)];
            return (1.0 - wt) * lo + wt * hi;
        };
        return {blend(h), blend(h_y), blend(pi_star)};
    }

    HSample sample(double t, double y) const { return sample(time_cell(t), y); }
};

// Derivative of a row of values on (possibly non-uniform) nodes: central
// three-point stencil inside, second-order one-sided stencils at the edges.
inline std::vector<double> slopes(const std::vector<double>& x, const std::vector<double>& v) {
    const std::size_t n = x.size();
    std::vector<double> d(n, 0.0);
    if (n < 2) return d;
    if (n == 2) {
        d[0] = d[1] = (v[1] - v[0]) / (x[1] - x[0]);
        return d;
    }
    // Derivative at x[m] of the quadratic through (a, b, c) = indices.
    const auto lagrange = [&](std::size_t a, std::size_t b, std::size_t c, std::size_t m) {
        const double xa = x[a], xb = x[b], xc = x[c], xm = x[m];
        return v[a] * ((xm - xb) + (xm - xc)) / ((xa - xb) * (xa - xc)) +
               v[b] * ((xm - xa) + (xm - xc)) / ((xb - xa) * (xb - xc)) +
               v[c] * ((xm - xa) + (xm - xb)) / ((xc - xa) * (xc - xb));
    };
    d[0] = lagrange(0, 1, 2, 0);
    for (std::size_t j = 1; j + 1 < n; ++j) d[j] = lagrange(j - 1, j, j + 1, j);
    d[n - 1] = lagrange(n - 3, n - 2, n - 1, n - 1);
    return d;
}

// ---- model terms ------------------------------------------------------------

// Jump part int [(1+pi gamma)^{delta-1} - 1 - (delta-1) pi gamma] nu(dz).
inline double jump_compensator_term(const Preferences& prefs, const CoefficientSet& cs, double t,
                                    double y, double pi) {
    const double dm1 = prefs.delta - 1.0;
    return cs.jumps.integrate([&](double z) {
        const double g = cs.gamma(t, y, z);
        return std::pow(1.0 + pi * g, dm1) - 1.0 - dm1 * pi * g;
    });
}

// K(t) as transcribed, with the bracket closed after the nu-integral:
// -(delta-1) [ r + mu pi + delta eta + (1/2)(delta-1)(delta-2) pi^2 (beta^2+sigma^2) + jumps ].
inline double k_term(const Preferences& prefs, const CoefficientSet& cs, double t, double y,
                     double pi, double eta_star) {
    detail::check_jump_admissible(cs, t, y, pi);
    const CoefficientValues v = eval_coefficients_raw(cs, t, y);
    const double d = prefs.delta;
    const double inner = v.r + v.mu * pi + d * eta_star +
                         0.5 * (d - 1.0) * (d - 2.0) * pi * pi * (v.beta * v.beta + v.sigma * v.sigma) +
                         jump_compensator_term(prefs, cs, t, y, pi);
    return -(d - 1.0) * inner;
}

// Rate a with dA1 = -a A1 dt + martingale along the optimal policy:
// a A1 = dH/dx = r A1 + lambda e^{-D} U2'(legacy). Homogeneity lets us
// evaluate at x = 1, A1 = e^{-h}. Equals r + eta_{n*} wherever insurance is bought.
inline double adjoint_rate(const Preferences& prefs, const TimeContext& ctx, double h) {
    if (!(ctx.lambda > 0.0)) return ctx.r;
    const double A1 = std::exp(-h);
    const PremiumChoice p = premium_given_discount(prefs, ctx.lambda, ctx.insurer, ctx.discount, 1.0, A1);
    const double leg = 1.0 + p.amount / p.eta;
    return ctx.r + ctx.lambda * prefs.kappa2 * std::pow(leg, prefs.delta - 1.0) * std::exp(h - ctx.discount);
}

// Source of the consistent equation
//   h_t + (g + (delta-1) pi beta) h_y + 1/2 h_yy + S = 0,
//   S = -1/2 h_y^2 - [ (delta-1)(r + pi mu) + 1/2 (delta-1)(delta-2) pi^2 (beta^2+sigma^2)
//                      + jumps + a + (1-delta)(c/x + p/x) ].
inline double consistent_source(const Preferences& prefs, const CoefficientSet& cs,
                                const TimeContext& ctx, double y, double pi, double h, double h_y) {
    const double d = prefs.delta;
    const double t = ctx.t;
    const CoefficientValues v = eval_coefficients_raw(cs, t, y);
    const double r = ctx.r;
    const double A1 = std::exp(-h);
    const double c_ratio = consumption_given_discount(prefs, ctx.discount, A1);
    double p_ratio = 0.0;
    if (ctx.lambda > 0.0)
        p_ratio = premium_given_discount(prefs, ctx.lambda, ctx.insurer, ctx.discount, 1.0, A1).amount;
    const double bracket = (d - 1.0) * (r + pi * v.mu) +
                           0.5 * (d - 1.0) * (d - 2.0) * pi * pi * (v.beta * v.beta + v.sigma * v.sigma) +
                           jump_compensator_term(prefs, cs, t, y, pi) + adjoint_rate(prefs, ctx, h) +
                           (1.0 - d) * (c_ratio + p_ratio);
    return -0.5 * h_y * h_y - bracket;
}

// Nonlinearity as transcribed:
// (1-delta) e^{h/(1-delta)} e^{D(t)} [1 + eta (eta/(kappa2 lambda))^{1/(delta-1)}].
inline double printed_nonlinearity(const Preferences& prefs, const TimeContext& ctx, double h) {
    const double d = prefs.delta;
    const double eta = ctx.insurer.eta;
    double insurance = 0.0;
    if (ctx.lambda > 0.0) insurance = eta * std::pow(eta / (prefs.kappa2 * ctx.lambda), 1.0 / (d - 1.0));
    return (1.0 - d) * std::exp(h / (1.0 - d)) * std::exp(ctx.discount) * (1.0 + insurance);
}

inline double terminal_value(TerminalMode mode, const Preferences& prefs, const ActuarialModel& am) {
    const double D = am.total_discount(am.horizon());
    switch (mode) {
        case TerminalMode::ansatz: return D - std::log(prefs.kappa3);
        case TerminalMode::log_discount: return D;
        case TerminalMode::discount_factor: return std::exp(-D);
    }
    return D;
}

struct HModelOptions {
    TerminalMode terminal = TerminalMode::ansatz;
    PdeForm form = PdeForm::consistent;
    PhiMode phi = PhiMode::drift;
    PortfolioOptions portfolio;
};

// Builds the operator ingredients from the model. The model objects are
// copied into shared storage so the returned equation owns what it uses.
inline HEquation make_h_equation(const Preferences& prefs, const ActuarialModel& am,
                                 const InsuranceMarket& im, const CoefficientSet& cs,
                                 const FactorDynamics& fd, const HModelOptions& opts = {}) {
    struct Model {
        Preferences prefs;
        ActuarialModel am;
        InsuranceMarket im;
        CoefficientSet cs;
        FactorDynamics fd;
        HModelOptions opts;
    };
    auto m = std::make_shared<const Model>(Model{prefs, am, im, cs, fd, opts});

    HEquation eq;
    eq.horizon = am.horizon();
    const double hT = terminal_value(opts.terminal, prefs, am);
    eq.terminal = [hT](double) { return hT; };
    eq.context = [m](double t) {
        TimeContext c;
        c.t = t;
        c.r = m->cs.r(t);
        c.lambda = m->am.lambda(t);
        c.discount = m->am.total_discount(t);
        c.insurer = select_insurer(m->im, t);
        return c;
    };
    eq.portfolio = [m](double t, double y, double h_y) {
        return solve_portfolio(m->prefs, m->cs, t, y, h_y, m->opts.portfolio).pi;
    };

    const bool literal = opts.phi == PhiMode::literal;
    const bool printed = literal || opts.form == PdeForm::printed;
    // Coefficient of pi beta in the factor drift.
    const double cross = printed ? 0.5 * (prefs.delta - 1.0) : (prefs.delta - 1.0);

    if (literal) {
        eq.drift = [m](const TimeContext&, double y, double) { return m->fd.g(y); };
        eq.weight = [m, cross](const TimeContext& c, double y, double pi) {
            return std::exp(m->fd.g(y) + cross * pi * m->cs.beta(c.t, y));
        };
    } else {
        eq.drift = [m, cross](const TimeContext& c, double y, double pi) {
            return m->fd.g(y) + cross * pi * m->cs.beta(c.t, y);
        };
    }

    if (printed) {
        eq.source = [m, literal](const TimeContext& c, double y, double pi, double h, double h_y) {
            const double k = k_term(m->prefs, m->cs, c.t, y, pi, c.insurer.eta);
            const double n = printed_nonlinearity(m->prefs, c, h);
            return literal ? k + n : k + n - 0.5 * h_y * h_y;
        };
    } else {
        eq.source = [m](const TimeContext& c, double y, double pi, double h, double h_y) {
            return consistent_source(m->prefs, m->cs, c, y, pi, h, h_y);
        };
    }
    return eq;
}

// ---- Monte Carlo operator ---------------------------------------------------

// Standard normals shared by every node and every iteration: pair p, global
// substep k. Paths from later start times reuse the tail of the same rows.
struct NormalBank {
    std::size_t pairs = 0;
    std::size_t steps = 0;
    std::vector<double> z;

    double at(std::size_t p, std::size_t k) const { return z[p * steps + k]; }
};

inline NormalBank make_normal_bank(std::size_t pairs, std::size_t steps, std::uint64_t seed) {
    NormalBank bank{pairs, steps, std::vector<double>(pairs * steps)};
    for (std::size_t p = 0; p < pairs; ++p) {
        auto rng = make_stream(seed, stream::phi_bank, p);
        std::normal_distribution<double> normal;
        for (std::size_t k = 0; k < steps; ++k) bank.z[p * steps + k] = normal(rng);
    }
    return bank;
}

struct PhiResult {
    std::vector<double> values;
    std::vector<double> stderr_values;
    std::vector<std::string> warnings;
};

inline std::size_t phi_pairs(const PhiConfig& cfg) { return std::max<std::size_t>(1, (cfg.paths + 1) / 2); }

inline PhiResult apply_phi(const HGrid& state, const HEquation& eq, const PhiConfig& cfg,
                           const NormalBank& bank) {
    const std::size_t nt = state.nt(), ny = state.ny();
    const std::size_t m = std::max<std::size_t>(1, cfg.substeps);
    const std::size_t total_steps = (nt - 1) * m;
    if (bank.steps < total_steps || bank.pairs < phi_pairs(cfg))
        throw InputError("apply_phi: normal bank too small for the grid");
    const std::size_t pairs = phi_pairs(cfg);
    const bool literal = static_cast<bool>(eq.weight);

    // Global substep times and their cached contexts and cells.
    std::vector<double> times(total_steps + 1);
    std::vector<TimeContext> ctx(total_steps + 1);
    std::vector<CellLocation> cells(total_steps + 1);
    for (std::size_t i = 0; i + 1 < nt; ++i) {
        const double t0 = state.t_nodes[i], t1 = state.t_nodes[i + 1];
        for (std::size_t s = 0; s < m; ++s)
            times[i * m + s] = t0 + (t1 - t0) * static_cast<double>(s) / static_cast<double>(m);
    }
    times[total_steps] = state.t_nodes.back();
    for (std::size_t k = 0; k <= total_steps; ++k) {
        ctx[k] = eq.at(times[k]);
        cells[k] = state.time_cell(times[k]);
    }

    PhiResult out;
    out.values.assign(nt * ny, 0.0);
    out.stderr_values.assign(nt * ny, 0.0);
    for (std::size_t j = 0; j < ny; ++j) out.values[state.index(nt - 1, j)] = eq.terminal(state.y_nodes[j]);
    if (literal) {
        for (std::size_t j = 0; j < ny; ++j) {
            const double y = state.y_nodes[j];
            const HSample s = state.sample(cells[total_steps], y);
            out.values[state.index(nt - 1, j)] = eq.weight(ctx[total_steps], y, s.pi);
        }
    }

    const auto node_value = [&](std::size_t i, std::size_t j) {
        double sum = 0.0, sum_sq = 0.0;
        for (std::size_t p = 0; p < pairs; ++p) {
            double pair_value = 0.0;
            for (int sign = 1; sign >= -1; sign -= 2) {
                double y = state.y_nodes[j];
                double integral = 0.0;
                double prev = 0.0;
                double start_weight = 1.0;
                for (std::size_t k = i * m; k <= total_steps; ++k) {
                    const HSample s = state.sample(cells[k], y);
                    double f = eq.source(ctx[k], y, s.pi, s.h, s.h_y);
                    if (literal) {
                        const double w = eq.weight(ctx[k], y, s.pi);
                        if (k == i * m) start_weight = w;
                        f *= w;
                    }
                    if (k > i * m) integral += 0.5 * (prev + f) * (times[k] - times[k - 1]);
                    prev = f;
                    if (k == total_steps) break;
                    const double ds = times[k + 1] - times[k];
                    y += eq.drift(ctx[k], y, s.pi) * ds + sign * bank.at(p, k) * std::sqrt(ds);
                }
                const double v = literal ? start_weight + integral : eq.terminal(y) + integral;
                pair_value += 0.5 * v;
            }
            sum += pair_value;
            sum_sq += pair_value * pair_value;
        }
        const double n = static_cast<double>(pairs);
        const double mean = sum / n;
        const double var = pairs > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0)) : 0.0;
        out.values[state.index(i, j)] = mean;
        out.stderr_values[state.index(i, j)] = std::sqrt(var / n);
    };

    if (nt > 1) {
        parallel_for((nt - 1) * ny, [&](std::size_t idx) { node_value(idx / ny, idx % ny); });
    }
    double worst = 0.0;
    for (double s : out.stderr_values) worst = std::max(worst, s);
    if (worst > cfg.target_stderr)
        out.warnings.push_back("phi: Monte Carlo stderr " + std::to_string(worst) +
                               " exceeds target " + std::to_string(cfg.target_stderr));
    return out;
}

inline PhiResult apply_phi(const HGrid& state, const HEquation& eq, const PhiConfig& cfg) {
    const std::size_t steps = (state.nt() - 1) * std::max<std::size_t>(1, cfg.substeps);
    return apply_phi(state, eq, cfg, make_normal_bank(phi_pairs(cfg), steps, cfg.seed));
}

// ---- fixed point ------------------------------------------------------------

// Recomputes h_y row by row and the coupled portfolio at every node.
inline void refresh_derivatives(HGrid& g, const HEquation& eq) {
    for (std::size_t i = 0; i < g.nt(); ++i) {
        std::vector<double> row(g.h.begin() + static_cast<std::ptrdiff_t>(g.index(i, 0)),
                                g.h.begin() + static_cast<std::ptrdiff_t>(g.index(i, 0) + g.ny()));
        const std::vector<double> d = slopes(g.y_nodes, row);
        for (std::size_t j = 0; j < g.ny(); ++j) g.h_y[g.index(i, j)] = d[j];
    }
    parallel_for(g.nt() * g.ny(), [&](std::size_t idx) {
        const std::size_t i = idx / g.ny(), j = idx % g.ny();
        g.pi_star[idx] = eq.portfolio ? eq.portfolio(g.t_nodes[i], g.y_nodes[j], g.h_y[idx]) : 0.0;
    });
}

inline HGrid initial_grid(const HEquation& eq, const HGridConfig& grid) {
    if (grid.t_count == 0 || grid.y_count == 0) throw InputError("h-grid needs at least one node per axis");
    if (!(grid.y_hi > grid.y_lo) && grid.y_count > 1) throw InputError("h-grid: empty y range");
    HGrid g;
    g.t_nodes = grid.t_count == 1 ? std::vector<double>{eq.horizon} : linspace(0.0, eq.horizon, grid.t_count);
    g.y_nodes = linspace(grid.y_lo, grid.y_hi, grid.y_count);
    const std::size_t n = g.nt() * g.ny();
    g.h.assign(n, 0.0);
    g.h_y.assign(n, 0.0);
    g.pi_star.assign(n, 0.0);
    g.stderr_h.assign(n, 0.0);
    for (std::size_t i = 0; i < g.nt(); ++i)
        for (std::size_t j = 0; j < g.ny(); ++j) g.h[g.index(i, j)] = eq.terminal(g.y_nodes[j]);
    return g;
}

inline HGrid solve_h_fixed_point(const HEquation& eq, const HGridConfig& grid, const PhiConfig& phi,
                                 const FixedPointConfig& fp = {}) {
    if (!(fp.omega > 0.0 && fp.omega <= 1.0)) throw InputError("damping omega must lie in (0, 1]");
    HGrid g = initial_grid(eq, grid);
    refresh_derivatives(g, eq);
    if (g.nt() == 1) {
        g.iterations = 1;
        g.sup_norm_history.push_back(0.0);
        return g;
    }
    const std::size_t steps = (g.nt() - 1) * std::max<std::size_t>(1, phi.substeps);
    const NormalBank bank = make_normal_bank(phi_pairs(phi), steps, phi.seed);
    const std::size_t last_row = g.index(g.nt() - 1, 0);

    for (std::size_t it = 1; it <= fp.max_iters; ++it) {
        PhiResult next = apply_phi(g, eq, phi, bank);
        double diff = 0.0;
        bool finite = true;
        for (std::size_t k = 0; k < last_row; ++k) {
            if (!std::isfinite(next.values[k])) finite = false;
            diff = std::max(diff, std::abs(next.values[k] - g.h[k]));
            g.h[k] = (1.0 - fp.omega) * g.h[k] + fp.omega * next.values[k];
        }
        g.stderr_h = std::move(next.stderr_values);
        g.iterations = it;
        g.sup_norm_history.push_back(finite ? diff : std::numeric_limits<double>::infinity());
        if (!finite)
            throw ConvergenceError("h fixed point: operator produced non-finite values", g.sup_norm_history);
        g.warnings = std::move(next.warnings);
        refresh_derivatives(g, eq);
        if (diff < fp.tolerance) return g;
    }
    throw ConvergenceError("h fixed point: no convergence within max_iters", g.sup_norm_history);
}

// Largest |h1 - h2| over the nodes of the coarser grid, with the finer grid
// interpolated there.
inline double grid_distance(const HGrid& coarse, const HGrid& fine) {
    double worst = 0.0;
    for (std::size_t i = 0; i < coarse.nt(); ++i)
        for (std::size_t j = 0; j < coarse.ny(); ++j)
            worst = std::max(worst, std::abs(coarse.h[coarse.index(i, j)] -
                                             fine.sample(coarse.t_nodes[i], coarse.y_nodes[j]).h));
    return worst;
}

}  // namespace jumpvol
