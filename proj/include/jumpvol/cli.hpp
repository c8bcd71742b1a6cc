#pragma once

// Scenario runner behind the jumpvol command-line tool.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "jumpvol/actuarial.hpp"
#include "jumpvol/config.hpp"
#include "jumpvol/csv.hpp"
#include "jumpvol/errors.hpp"
#include "jumpvol/hsolver.hpp"
#include "jumpvol/market.hpp"
#include "jumpvol/oracle_ou.hpp"
#include "jumpvol/simulation.hpp"
#include "jumpvol/strategy.hpp"
#include "jumpvol/verification.hpp"

namespace jumpvol {

inline const std::set<std::string>& run_modes() {
    static const std::set<std::string> modes{"solve-h", "simulate", "verify", "example", "all"};
    return modes;
}

struct SimulationSettings {
    std::size_t steps = 2000;
    std::size_t paths = 10000;
    double x0 = 1.0;
    double y0 = 0.0;
    std::size_t necessary_steps = 250;
    std::size_t necessary_paths = 10000;
    double fd_epsilon = 1e-2;
    double suboptimal_shift = 0.2;
    double negative_control_shift = 0.1;
    std::size_t sufficient_paths = 2000;
};

struct ExampleSettings {
    OUParams params;
    double y_start = 0.9;
    double y_step = 0.02;
    std::size_t y_count = 50;
    double adjoint_t = 0.5;
    double x0 = 1.0;
    NestedConfig nested;
};

struct ScenarioConfig {
    ConfigFile file;
    std::string mode = "all";
    std::optional<std::uint64_t> seed;
    std::string out_dir = "out";

    Preferences prefs;
    std::optional<CoefficientSet> cs;
    std::optional<FactorDynamics> fd;
    std::optional<ActuarialModel> am;
    std::optional<InsuranceMarket> im;
    std::size_t check_t_count = 101;
    std::size_t check_y_count = 101;

    HGridConfig grid;
    PhiConfig phi;
    FixedPointConfig fixed_point;
    HModelOptions h_options;
    SimulationSettings sim;
    std::optional<ExampleSettings> example;
};

namespace cli_detail {

inline std::vector<double> number_list(const ConfigFile& cf, const std::string& section, const std::string& key) {
    const ConfigEntry* e = cf.find(section, key);
    if (!e) cf.fail(section, key, "missing key '" + key + "' in [" + section + "]");
    std::vector<double> out;
    for (const auto& w : ConfigFile::split(e->value, ',')) {
        double v = 0.0;
        if (!ConfigFile::parse_double(w, v)) cf.fail(*e, "key '" + key + "': bad number '" + w + "'");
        out.push_back(v);
    }
    return out;
}

inline std::vector<double> form_args(const ConfigFile& cf, const ConfigEntry& e, const std::string& key,
                                     const std::vector<std::string>& w, std::size_t count) {
    if (w.size() != count + 1)
        cf.fail(e, "key '" + key + "': form '" + w[0] + "' takes " + std::to_string(count) + " number(s)");
    std::vector<double> out;
    for (std::size_t i = 1; i < w.size(); ++i) {
        double v = 0.0;
        if (!ConfigFile::parse_double(w[i], v)) cf.fail(e, "key '" + key + "': bad number '" + w[i] + "'");
        out.push_back(v);
    }
    return out;
}

// constant v | linear a b (a + b t) | table (key_t, key_values)
inline TimeMap time_map(const ConfigFile& cf, const std::string& section, const std::string& key) {
    const ConfigEntry* e = cf.find(section, key);
    if (!e) cf.fail(section, key, "missing key '" + key + "' in [" + section + "]");
    const auto w = ConfigFile::words(e->value);
    if (w.empty()) cf.fail(*e, "key '" + key + "': empty value");
    if (w[0] == "constant") return constant_rate(form_args(cf, *e, key, w, 1)[0]);
    if (w[0] == "linear") {
        const auto a = form_args(cf, *e, key, w, 2);
        return [a0 = a[0], a1 = a[1]](double t) { return a0 + a1 * t; };
    }
    if (w[0] == "table") {
        try {
            PiecewiseLinear pl(number_list(cf, section, key + "_t"), number_list(cf, section, key + "_values"));
            return [pl](double t) { return pl(t); };
        } catch (const InputError& err) {
            cf.fail(*e, "key '" + key + "': " + err.what());
        }
    }
    double v = 0.0;
    if (w.size() == 1 && ConfigFile::parse_double(w[0], v)) return constant_rate(v);
    cf.fail(*e, "key '" + key + "': unknown form '" + w[0] + "' (constant, linear, table)");
}

// constant v | affine a0 a1 (a0 + a1 y) | table (key_t, key_y, key_values row-major in t)
inline FactorMap factor_map(const ConfigFile& cf, const std::string& section, const std::string& key) {
    const ConfigEntry* e = cf.find(section, key);
    if (!e) cf.fail(section, key, "missing key '" + key + "' in [" + section + "]");
    const auto w = ConfigFile::words(e->value);
    if (w.empty()) cf.fail(*e, "key '" + key + "': empty value");
    if (w[0] == "constant") return constant_map(form_args(cf, *e, key, w, 1)[0]);
    if (w[0] == "affine") {
        const auto a = form_args(cf, *e, key, w, 2);
        return affine_in_y(a[0], a[1]);
    }
    if (w[0] == "table") {
        try {
            return tabulated_map(BilinearTable(number_list(cf, section, key + "_t"),
                                               number_list(cf, section, key + "_y"),
                                               number_list(cf, section, key + "_values")));
        } catch (const InputError& err) {
            cf.fail(*e, "key '" + key + "': " + err.what());
        }
    }
    double v = 0.0;
    if (w.size() == 1 && ConfigFile::parse_double(w[0], v)) return constant_map(v);
    cf.fail(*e, "key '" + key + "': unknown form '" + w[0] + "' (constant, affine, table)");
}

// mark (gamma = z) | affine g0 g1 ((g0 + g1 y) z) | constant g
inline JumpMap jump_map(const ConfigFile& cf, const std::string& section, const std::string& key) {
    const ConfigEntry* e = cf.find(section, key);
    if (!e) return affine_jump_scale(1.0, 0.0);
    const auto w = ConfigFile::words(e->value);
    if (w.empty()) cf.fail(*e, "key '" + key + "': empty value");
    if (w[0] == "mark") return affine_jump_scale(1.0, 0.0);
    if (w[0] == "affine") {
        const auto a = form_args(cf, *e, key, w, 2);
        return affine_jump_scale(a[0], a[1]);
    }
    if (w[0] == "constant") {
        const double g = form_args(cf, *e, key, w, 1)[0];
        return [g](double, double, double) { return g; };
    }
    cf.fail(*e, "key '" + key + "': unknown form '" + w[0] + "' (mark, affine, constant)");
}

inline JumpSpec jump_spec(const ConfigFile& cf) {
    const double rate = cf.get_double("market", "jump_rate", 0.0);
    std::vector<JumpAtom> atoms;
    if (const ConfigEntry* e = cf.find("market", "jump_atoms")) {
        for (const auto& item : ConfigFile::split(e->value, ',')) {
            const auto parts = ConfigFile::split(item, ':');
            JumpAtom a{0.0, 0.0};
            if (parts.size() != 2 || !ConfigFile::parse_double(parts[0], a.mark) ||
                !ConfigFile::parse_double(parts[1], a.probability))
                cf.fail(*e, "jump_atoms: expected mark:probability pairs, got '" + item + "'");
            atoms.push_back(a);
        }
    }
    try {
        return JumpSpec(rate, atoms);
    } catch (const InputError& err) {
        cf.fail("market", cf.find("market", "jump_atoms") ? "jump_atoms" : "jump_rate", err.what());
    }
}

inline FactorDynamics factor(const ConfigFile& cf) {
    const FactorDomain dom{cf.get_double("market", "factor_lo", -3.0), cf.get_double("market", "factor_hi", 3.0)};
    if (!(dom.hi > dom.lo)) cf.fail("market", "factor_hi", "factor domain must satisfy factor_lo < factor_hi");
    const ConfigEntry* e = cf.find("market", "factor");
    FactorDynamics fd = driftless_factor(dom);
    if (e) {
        const auto w = ConfigFile::words(e->value);
        if (w.empty()) cf.fail(*e, "factor: empty value");
        if (w[0] == "ou") {
            const double b = form_args(cf, *e, "factor", w, 1)[0];
            if (!(b > 0.0)) cf.fail(*e, "factor: OU reversion must be positive");
            fd = ou_factor(b, dom);
        } else if (w[0] == "affine") {
            const auto a = form_args(cf, *e, "factor", w, 2);
            fd.g = [a0 = a[0], a1 = a[1]](double y) { return a0 + a1 * y; };
            fd.g_lipschitz_bound = std::max(std::abs(a[1]), 1e-12);
        } else if (w[0] != "driftless") {
            cf.fail(*e, "factor: unknown form '" + w[0] + "' (ou, affine, driftless)");
        }
    }
    if (cf.find("market", "factor_lipschitz")) fd.g_lipschitz_bound = cf.get_double("market", "factor_lipschitz", 1.0);
    return fd;
}

template <class T>
T enum_value(const ConfigFile& cf, const std::string& section, const std::string& key,
             const std::vector<std::pair<std::string, T>>& options, T fallback) {
    const ConfigEntry* e = cf.find(section, key);
    if (!e) return fallback;
    std::string names;
    for (const auto& [n, v] : options) {
        if (n == e->value) return v;
        names += (names.empty() ? "" : ", ") + n;
    }
    cf.fail(*e, "key '" + key + "': expected one of " + names);
}

inline std::size_t positive_count(const ConfigFile& cf, const std::string& section, const std::string& key,
                                  std::size_t fallback) {
    const std::uint64_t v = cf.get_uint(section, key, fallback);
    if (v == 0) cf.fail(section, key, "key '" + key + "' must be positive");
    return static_cast<std::size_t>(v);
}

inline double positive(const ConfigFile& cf, const std::string& section, const std::string& key, double fallback) {
    const double v = cf.get_double(section, key, fallback);
    if (!(v > 0.0)) cf.fail(section, key, "key '" + key + "' must be positive");
    return v;
}

}  // namespace cli_detail

inline ScenarioConfig parse_scenario(ConfigFile cf) {
    using namespace cli_detail;
    ScenarioConfig sc;
    cf.restrict_keys("run", {"mode", "seed", "out"});
    cf.restrict_keys("market", {"r", "alpha", "beta", "sigma", "gamma", "jump_rate", "jump_atoms", "factor",
                                "factor_lipschitz", "factor_lo", "factor_hi", "check_t_count", "check_y_count"},
                     {"r_", "alpha_", "beta_", "sigma_"});
    cf.restrict_keys("actuarial", {"horizon", "lambda", "rho"}, {"eta", "lambda_", "rho_"});
    cf.restrict_keys("preferences", {"delta", "kappa1", "kappa2", "kappa3"});
    cf.restrict_keys("grid", {"t_count", "y_count", "y_lo", "y_hi", "paths", "substeps", "omega", "tol", "max_iters",
                              "terminal", "phi_mode", "pde_form", "target_stderr"});
    cf.restrict_keys("simulation", {"steps", "paths", "x0", "y0", "necessary_steps", "necessary_paths", "fd_epsilon",
                                    "suboptimal_shift", "negative_control_shift", "sufficient_paths"});
    cf.restrict_keys("example", {"alpha0", "alpha1", "gamma", "nu", "b", "y0", "lambda", "rho", "eta", "delta",
                                 "horizon", "y_start", "y_step", "y_count", "adjoint_t", "x0", "n_outer", "n_inner",
                                 "adjoint_steps"});

    sc.mode = cf.get_string("run", "mode", "all");
    if (!run_modes().count(sc.mode)) cf.fail("run", "mode", "unknown mode '" + sc.mode + "'");
    if (cf.find("run", "seed")) sc.seed = cf.get_uint("run", "seed", 0);
    sc.out_dir = cf.get_string("run", "out", "out");

    if (cf.has_section("preferences")) {
        sc.prefs.delta = cf.require_double("preferences", "delta");
        sc.prefs.kappa1 = cf.get_double("preferences", "kappa1", 1.0);
        sc.prefs.kappa2 = cf.get_double("preferences", "kappa2", 1.0);
        sc.prefs.kappa3 = cf.get_double("preferences", "kappa3", 1.0);
        try {
            sc.prefs.validate();
        } catch (const InputError& e) {
            cf.fail("preferences", "delta", e.what());
        }
    }

    if (cf.has_section("market")) {
        sc.cs = CoefficientSet{time_map(cf, "market", "r"),      factor_map(cf, "market", "alpha"),
                               factor_map(cf, "market", "beta"), factor_map(cf, "market", "sigma"),
                               jump_map(cf, "market", "gamma"),  jump_spec(cf)};
        sc.fd = factor(cf);
        sc.check_t_count = positive_count(cf, "market", "check_t_count", 101);
        sc.check_y_count = positive_count(cf, "market", "check_y_count", 101);
    }

    if (cf.has_section("actuarial")) {
        const double T = positive(cf, "actuarial", "horizon", 1.0);
        try {
            sc.am.emplace(time_map(cf, "actuarial", "lambda"), time_map(cf, "actuarial", "rho"), T);
        } catch (const ModelError& e) {
            cf.fail("actuarial", "lambda", e.what());
        }
        std::vector<TimeMap> etas;
        if (cf.find("actuarial", "eta")) etas.push_back(time_map(cf, "actuarial", "eta"));
        for (std::size_t n = 1; cf.find("actuarial", "eta" + std::to_string(n)); ++n)
            etas.push_back(time_map(cf, "actuarial", "eta" + std::to_string(n)));
        if (etas.empty()) cf.fail("actuarial", "eta", "[actuarial] needs eta or eta1..etaM");
        sc.im.emplace(std::move(etas));
        const auto ts = linspace(0.0, T, 101);
        for (std::size_t n = 0; n < sc.im->size(); ++n)
            for (double t : ts)
                if (!(sc.im->eta(n, t) > 0.0)) cf.fail("actuarial", "eta", "premium ratios must be positive");
    }

    const double y_lo_default = sc.fd ? sc.fd->domain.lo : -3.0;
    const double y_hi_default = sc.fd ? sc.fd->domain.hi : 3.0;
    sc.grid.t_count = positive_count(cf, "grid", "t_count", 21);
    sc.grid.y_count = positive_count(cf, "grid", "y_count", 41);
    sc.grid.y_lo = cf.get_double("grid", "y_lo", y_lo_default);
    sc.grid.y_hi = cf.get_double("grid", "y_hi", y_hi_default);
    if (!(sc.grid.y_hi > sc.grid.y_lo)) cf.fail("grid", "y_hi", "grid needs y_lo < y_hi");
    sc.phi.paths = positive_count(cf, "grid", "paths", 256);
    sc.phi.substeps = positive_count(cf, "grid", "substeps", 2);
    sc.phi.target_stderr = positive(cf, "grid", "target_stderr", 5e-3);
    sc.fixed_point.omega = cf.get_double("grid", "omega", 1.0);
    if (!(sc.fixed_point.omega > 0.0 && sc.fixed_point.omega <= 1.0))
        cf.fail("grid", "omega", "omega must lie in (0, 1]");
    sc.fixed_point.tolerance = positive(cf, "grid", "tol", 1e-4);
    sc.fixed_point.max_iters = positive_count(cf, "grid", "max_iters", 60);
    sc.h_options.terminal = enum_value<TerminalMode>(
        cf, "grid", "terminal",
        {{"ansatz", TerminalMode::ansatz}, {"log_discount", TerminalMode::log_discount},
         {"discount_factor", TerminalMode::discount_factor}},
        TerminalMode::ansatz);
    sc.h_options.phi = enum_value<PhiMode>(cf, "grid", "phi_mode",
                                           {{"drift", PhiMode::drift}, {"literal", PhiMode::literal}}, PhiMode::drift);
    sc.h_options.form = enum_value<PdeForm>(cf, "grid", "pde_form",
                                            {{"consistent", PdeForm::consistent}, {"printed", PdeForm::printed}},
                                            PdeForm::consistent);

    auto& s = sc.sim;
    s.steps = positive_count(cf, "simulation", "steps", 2000);
    s.paths = positive_count(cf, "simulation", "paths", 10000);
    if (s.paths < 2) cf.fail("simulation", "paths", "need at least two paths");
    s.x0 = positive(cf, "simulation", "x0", 1.0);
    s.y0 = cf.get_double("simulation", "y0", 0.0);
    s.necessary_steps = positive_count(cf, "simulation", "necessary_steps", 250);
    s.necessary_paths = positive_count(cf, "simulation", "necessary_paths", 10000);
    s.fd_epsilon = positive(cf, "simulation", "fd_epsilon", 1e-2);
    s.suboptimal_shift = cf.get_double("simulation", "suboptimal_shift", 0.2);
    s.negative_control_shift = cf.get_double("simulation", "negative_control_shift", 0.1);
    s.sufficient_paths = positive_count(cf, "simulation", "sufficient_paths", 2000);

    if (cf.has_section("example")) {
        ExampleSettings ex;
        OUParams& p = ex.params;
        p.alpha0 = cf.get_double("example", "alpha0", p.alpha0);
        p.alpha1 = cf.get_double("example", "alpha1", p.alpha1);
        p.gamma = cf.get_double("example", "gamma", p.gamma);
        p.nu = cf.get_double("example", "nu", p.nu);
        p.b = cf.get_double("example", "b", p.b);
        p.y0 = cf.get_double("example", "y0", p.y0);
        p.lambda = cf.get_double("example", "lambda", p.lambda);
        p.rho = cf.get_double("example", "rho", p.rho);
        p.eta = cf.get_double("example", "eta", p.eta);
        p.delta = cf.get_double("example", "delta", p.delta);
        p.horizon = cf.get_double("example", "horizon", p.horizon);
        try {
            p.validate();
        } catch (const InputError& e) {
            cf.fail("example", "delta", e.what());
        }
        ex.y_start = cf.get_double("example", "y_start", ex.y_start);
        ex.y_step = cf.get_double("example", "y_step", ex.y_step);
        ex.y_count = positive_count(cf, "example", "y_count", ex.y_count);
        ex.adjoint_t = cf.get_double("example", "adjoint_t", 0.5 * p.horizon);
        if (!(ex.adjoint_t >= 0.0 && ex.adjoint_t <= p.horizon))
            cf.fail("example", "adjoint_t", "adjoint_t must lie in [0, horizon]");
        ex.x0 = positive(cf, "example", "x0", 1.0);
        ex.nested.n_outer = positive_count(cf, "example", "n_outer", 8);
        ex.nested.n_inner = positive_count(cf, "example", "n_inner", 2000);
        ex.nested.steps = positive_count(cf, "example", "adjoint_steps", 200);
        sc.example = ex;
    }
    sc.file = std::move(cf);
    return sc;
}

struct RunOptions {
    std::string config_path;
    std::optional<std::string> mode;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    bool allow_assumption_failures = false;
};

namespace cli_detail {

inline void require_sections(const ScenarioConfig& sc, const std::string& mode) {
    const ConfigFile& cf = sc.file;
    const std::string why = "mode " + mode;
    if (mode == "example" || mode == "all") cf.require_section("example", why);
    if (mode != "example") {
        for (const char* s : {"market", "actuarial", "preferences", "grid"}) cf.require_section(s, why);
        if (mode != "solve-h") cf.require_section("simulation", why);
    }
}

inline void write_h_grid(const std::string& path, const std::string& stamp, const HGrid& g) {
    CsvWriter w(path, stamp, {"t", "y", "h", "h_y", "pi_star"});
    for (std::size_t i = 0; i < g.nt(); ++i)
        for (std::size_t j = 0; j < g.ny(); ++j) {
            const std::size_t k = g.index(i, j);
            w.row({fmt(g.t_nodes[i]), fmt(g.y_nodes[j]), fmt(g.h[k]), fmt(g.h_y[k]), fmt(g.pi_star[k])});
        }
}

struct Model {
    const Preferences& prefs;
    const CoefficientSet& cs;
    const FactorDynamics& fd;
    const ActuarialModel& am;
    const InsuranceMarket& im;
};

inline void run_simulate(const Model& m, const ScenarioConfig& sc, std::uint64_t seed, const std::string& out,
                         const std::string& stamp, const HGrid& grid) {
    const StrategyRule rule = optimal_rule(m.prefs, m.am, m.im, grid);
    std::vector<PathValue> values;
    const PerformanceEstimate est = estimate_performance(m.prefs, m.am, m.cs, m.fd, rule, sc.sim.x0, sc.sim.y0,
                                                         {sc.sim.steps, sc.sim.paths, seed}, &values);
    {
        CsvWriter w(out + "/paths_summary.csv", stamp,
                    {"path", "ruined", "x_end", "y_end", "consumption", "legacy", "terminal", "total"});
        for (std::size_t i = 0; i < values.size(); ++i) {
            const PathValue& v = values[i];
            const double nan = std::numeric_limits<double>::quiet_NaN();
            w.row({fmt(i), v.ruined ? "1" : "0", fmt(v.x_end), fmt(v.y_end), fmt(v.ruined ? nan : v.consumption),
                   fmt(v.ruined ? nan : v.legacy), fmt(v.ruined ? nan : v.terminal), fmt(v.ruined ? nan : v.total())});
        }
    }
    CsvWriter w(out + "/performance.csv", stamp,
                {"mean", "stderr", "n_paths", "ruined", "consumption", "legacy", "terminal"});
    w.row({fmt(est.mean), fmt(est.stderr_mean), fmt(est.n_paths), fmt(est.ruined), fmt(est.components.consumption),
           fmt(est.components.legacy), fmt(est.components.terminal)});
}

inline std::vector<CheckLine> run_verify(const Model& m, const ScenarioConfig& sc, std::uint64_t seed,
                                         const HGrid& grid, std::ostream& log) {
    std::vector<CheckLine> lines;
    const auto& s = sc.sim;
    const double x0 = s.x0, y0 = s.y0;

    // h-solver diagnostics
    {
        const auto& hist = grid.sup_norm_history;
        lines.push_back({"h fixed point converged", true,
                         "iterations " + std::to_string(grid.iterations) + ", last change " +
                             num(hist.empty() ? 0.0 : hist.back())});
        bool tail = true;
        std::string detail = "history";
        for (double v : hist) detail += " " + num(v);
        if (hist.size() >= 2) tail = hist.back() < hist[hist.size() - 2];
        if (hist.size() >= 3) tail = tail && hist[hist.size() - 2] < hist[hist.size() - 3];
        lines.push_back({"h fixed point contraction tail", tail, detail});
        double worst = 0.0;
        for (std::size_t i = 0; i < grid.nt(); ++i)
            for (std::size_t j = 0; j < grid.ny(); ++j) {
                const std::size_t k = grid.index(i, j);
                worst = std::max(worst, std::abs(portfolio_foc_residual(m.prefs, m.cs, grid.t_nodes[i],
                                                                        grid.y_nodes[j], grid.pi_star[k],
                                                                        grid.h_y[k])));
            }
        lines.push_back({"portfolio FOC at grid nodes", worst < 1e-8, "max |residual| " + num(worst)});
        for (const auto& w : grid.warnings) log << "warning: " << w << "\n";
    }

    log << "adjoint martingale test...\n";
    {
        const SimulationConfig cfg{s.steps, s.paths, seed};
        const AdjointTestReport rep =
            adjoint_residual_test(m.prefs, m.am, m.im, m.cs, m.fd, grid, x0, y0, cfg);
        for (const auto& p : rep.pairs)
            lines.push_back({"adjoint martingale [" + num(p.s) + "," + num(p.t) + "]", p.passed,
                             "mean increment " + num(p.mean) + " stderr " + num(p.stderr_mean) + " ruined " +
                                 std::to_string(rep.ruined)});
        const AdjointTestReport neg = adjoint_residual_test(m.prefs, m.am, m.im, m.cs, m.fd,
                                                            shifted_grid(grid, s.negative_control_shift), x0, y0, cfg);
        std::string d;
        for (const auto& p : neg.pairs) d += (d.empty() ? "" : "; ") + num(p.mean) + " +- " + num(p.stderr_mean);
        lines.push_back({"adjoint negative control (h shifted by " + num(s.negative_control_shift) + ")",
                         !neg.passed, "increments " + d});
    }

    log << "necessary condition test...\n";
    {
        NecessaryConfig cfg;
        cfg.sim = {s.necessary_steps, s.necessary_paths, seed};
        cfg.epsilon = s.fd_epsilon;
        cfg.suboptimal_shift = s.suboptimal_shift;
        const NecessaryConditionReport rep = necessary_condition_test(
            m.prefs, m.am, m.im, m.cs, m.fd, grid, x0, y0, default_perturbations(m.am.horizon()), cfg);
        for (const auto& e : rep.at_optimum) {
            const std::string d = "fd " + num(e.finite_difference.mean) + " +- " +
                                  num(e.finite_difference.stderr_mean) + ", variation " + num(e.variation.mean) +
                                  " +- " + num(e.variation.stderr_mean) + ", dH/dpi " + num(e.hamiltonian.mean) +
                                  " +- " + num(e.hamiltonian.stderr_mean);
            lines.push_back({"necessary condition " + e.name + " zero at optimum", e.fd_zero && e.variation_zero, d});
            lines.push_back({"necessary condition " + e.name + " estimators agree", e.agree, d});
        }
        const auto& sub = rep.at_suboptimal.front().finite_difference;
        lines.push_back({"necessary condition detects pi*+" + num(rep.suboptimal_shift), rep.suboptimal_detected,
                         "fd " + num(sub.mean) + " +- " + num(sub.stderr_mean)});
    }

    log << "perturbation suite...\n";
    {
        const PerturbationReport rep =
            perturbation_suite(m.prefs, m.am, m.im, m.cs, m.fd, grid, x0, y0, {s.steps, s.paths, seed});
        for (const auto& r : rep.results)
            lines.push_back({"perturbation " + r.name, r.passed,
                             "J(opt) - J(perturbed) " + num(r.gain.mean) + " +- " + num(r.gain.stderr_mean)});
    }

    log << "second adjoint check...\n";
    {
        const SecondAdjointReport rep =
            second_adjoint_check(m.prefs, m.am, m.im, m.cs, m.fd, grid, x0, y0, {s.necessary_steps, s.paths, seed});
        lines.push_back({"second adjoint E[int dH/dy dt] = 0", rep.passed,
                         num(rep.dH_dy.mean) + " +- " + num(rep.dH_dy.stderr_mean)});
    }

    log << "sufficient conditions...\n";
    {
        SufficientConfig cfg;
        cfg.sim = {s.necessary_steps, s.sufficient_paths, seed};
        const SufficientReport rep = sufficient_condition_report(m.prefs, m.am, m.im, m.cs, m.fd, grid, x0, y0, cfg);
        for (const auto& l : rep.lines) lines.push_back({"sufficient " + l.name, l.passed, l.detail});
    }
    return lines;
}

inline void run_example(const ExampleSettings& ex, std::uint64_t seed, const std::string& out,
                        const std::string& stamp) {
    const OUParams& p = ex.params;
    const OUModel m = make_ou_model(p);
    {
        CsvWriter w(out + "/example_comparison.csv", stamp,
                    {"y", "pi_foc", "pi_printed", "pi_generic", "abs_generic_minus_foc", "gamma_y_equals_delta"});
        for (std::size_t k = 0; k < ex.y_count; ++k) {
            const double y = ex.y_start + ex.y_step * static_cast<double>(k);
            const double foc = ou_foc_portfolio(p, y);
            const double printed = ou_printed_portfolio(p, y);
            const double generic = solve_portfolio(m.prefs, m.cs, 0.0, y, 0.0).pi;
            w.row({fmt(y), fmt(foc), fmt(printed), fmt(generic), fmt(std::abs(generic - foc)),
                   std::abs(p.gamma * y - p.delta) < 1e-12 ? "1" : "0"});
        }
    }
    // Nested estimate of A1 at adjoint_t under the fixed-proportion rule pi = pi_foc(y0).
    // The printed prefactor differs from the consistent one by e^{lambda T}.
    const double pi0 = ou_foc_portfolio(p, p.y0);
    NestedConfig cfg = ex.nested;
    cfg.seed = seed;
    cfg.form = OUAdjointForm::consistent;
    const auto est = ou_adjoint_a1(p, constant_rule(pi0), ex.x0, ex.adjoint_t, cfg);
    const double printed_scale = std::exp(p.lambda * p.horizon);
    CsvWriter w(out + "/example_adjoint.csv", stamp,
                {"state", "t", "x", "y", "pi", "a1_consistent", "a1_printed", "stderr_consistent", "inner_paths"});
    for (std::size_t i = 0; i < est.size(); ++i) {
        const auto& e = est[i];
        w.row({fmt(i), fmt(ex.adjoint_t), fmt(e.x), fmt(e.y), fmt(pi0), fmt(e.a1), fmt(e.a1 * printed_scale),
               fmt(e.stderr_a1), fmt(e.inner_paths)});
    }
}

}  // namespace cli_detail

// Exit codes: 0 success, 1 failed checks, 2 configuration error, 3 assumption
// failure, 4 convergence failure, 5 other runtime error.
inline int run(const RunOptions& opts, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    using namespace cli_detail;
    try {
        ConfigFile cf = ConfigFile::load(opts.config_path);
        const std::string text = cf.text();
        ScenarioConfig sc = parse_scenario(std::move(cf));
        sc.file.set_text(text);
        if (opts.mode) {
            if (!run_modes().count(*opts.mode)) throw ConfigError("--mode", 0, "unknown mode '" + *opts.mode + "'");
            sc.mode = *opts.mode;
        }
        if (opts.seed) sc.seed = opts.seed;
        if (!sc.seed) throw ConfigError(opts.config_path, 0, "no seed given: set [run] seed or pass --seed");
        if (opts.out_dir) sc.out_dir = *opts.out_dir;
        require_sections(sc, sc.mode);

        const std::uint64_t seed = *sc.seed;
        const std::string stamp = "config_hash=" + hex64(fnv1a(text)) + " seed=" + std::to_string(seed);
        std::filesystem::create_directories(sc.out_dir);
        const std::string& out = sc.out_dir;
        const std::string& mode = sc.mode;
        std::vector<CheckLine> report;
        bool write_report = mode == "verify" || mode == "all";

        if (mode != "example") {
            const Model m{sc.prefs, *sc.cs, *sc.fd, *sc.am, *sc.im};
            const SampleGrid sg = make_sample_grid(m.am.horizon(), m.fd.domain, sc.check_t_count, sc.check_y_count);
            const AssumptionReport ar = check_assumptions(m.cs, m.fd, sg);
            for (const auto& e : ar.entries) {
                std::string d = "value " + num(e.value);
                if (!std::isnan(e.witness_t)) d += " at t=" + num(e.witness_t) + " y=" + num(e.witness_y);
                if (!e.detail.empty()) d += " (" + e.detail + ")";
                report.push_back({"assumption " + e.name, e.passed, d});
            }
            const auto ties = distinctness_violations(m.im, linspace(0.0, m.am.horizon(), 101));
            if (ties > 0) log << "warning: insurer premium ratios coincide at " << ties << " sample times\n";
            if (!ar.all_passed()) {
                if (!opts.allow_assumption_failures) {
                    for (const auto& l : report)
                        if (!l.passed) err << format_check(l) << "\n";
                    err << "assumption check failed; rerun with --allow-assumption-failures to proceed\n";
                    return 3;
                }
                for (auto& l : report)
                    if (!l.passed) {
                        l.passed = true;
                        l.detail += " [allowed failure]";
                    }
            }

            log << "solving h...\n";
            const HEquation eq = make_h_equation(m.prefs, m.am, m.im, m.cs, m.fd, sc.h_options);
            PhiConfig phi = sc.phi;
            phi.seed = seed;
            const HGrid grid = solve_h_fixed_point(eq, sc.grid, phi, sc.fixed_point);
            log << "h converged in " << grid.iterations << " iterations\n";
            write_h_grid(out + "/h_grid.csv", stamp, grid);

            if (mode == "simulate" || mode == "all") {
                log << "simulating...\n";
                run_simulate(m, sc, seed, out, stamp, grid);
            }
            if (write_report) {
                const auto lines = run_verify(m, sc, seed, grid, log);
                report.insert(report.end(), lines.begin(), lines.end());
            }
        }
        if (mode == "example" || mode == "all") {
            log << "example...\n";
            run_example(*sc.example, seed, out, stamp);
        }
        if (write_report) {
            std::ofstream f(out + "/verification_report.txt", std::ios::binary);
            if (!f) throw InputError("cannot write " + out + "/verification_report.txt");
            f << "# " << stamp << "\n";
            bool all = true;
            for (const auto& l : report) {
                f << format_check(l) << "\n";
                all = all && l.passed;
            }
            log << (all ? "all checks passed\n" : "some checks FAILED, see verification_report.txt\n");
            return all ? 0 : 1;
        }
        return 0;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ConvergenceError& e) {
        err << "convergence error: " << e.what() << "\n  history:";
        for (double v : e.history()) err << " " << v;
        err << "\n";
        return 4;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 5;
    }
}

}  // namespace jumpvol
