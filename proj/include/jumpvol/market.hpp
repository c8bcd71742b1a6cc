#pragma once

// Financial-market primitives: bond rate, jump-diffusion risky asset driven by
// an external factor, and the factor itself.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "jumpvol/curves.hpp"
#include "jumpvol/errors.hpp"

namespace jumpvol {

using TimeMap = std::function<double(double t)>;
using FactorMap = std::function<double(double t, double y)>;
using JumpMap = std::function<double(double t, double y, double z)>;

struct JumpAtom {
    double mark;
    double probability;
};

// Compound Poisson jumps with finitely many marks. The Levy measure is
// rate * sum_i p_i delta_{z_i}, so every nu-integral is an exact finite sum.
class JumpSpec {
public:
    JumpSpec() = default;

    JumpSpec(double rate, std::vector<JumpAtom> atoms) : rate_(rate), atoms_(std::move(atoms)) {
        if (!std::isfinite(rate_) || rate_ < 0.0) throw InputError("jump rate must be >= 0");
        if (atoms_.empty()) {
            if (rate_ > 0.0) throw InputError("positive jump rate needs at least one atom");
            return;
        }
        if (rate_ == 0.0) throw InputError("jump atoms given with zero rate");
        double total = 0.0;
        for (const auto& a : atoms_) {
            if (!(a.probability >= 0.0 && a.probability <= 1.0) || !std::isfinite(a.mark))
                throw InputError("jump atom probability must lie in [0,1]");
            total += a.probability;
        }
        if (std::abs(total - 1.0) > 1e-12) throw InputError("jump atom probabilities must sum to 1");
    }

    static JumpSpec none() { return {}; }

    double rate() const { return rate_; }
    const std::vector<JumpAtom>& atoms() const { return atoms_; }
    bool active() const { return rate_ > 0.0; }

    // Levy-measure weight nu({z_i}).
    double weight(std::size_t i) const { return rate_ * atoms_[i].probability; }

    // Exact integral of f against nu.
    template <class F>
    double integrate(F&& f) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < atoms_.size(); ++i) acc += weight(i) * f(atoms_[i].mark);
        return acc;
    }

private:
    double rate_ = 0.0;
    std::vector<JumpAtom> atoms_;
};

struct CoefficientSet {
    TimeMap r;
    FactorMap alpha;
    FactorMap beta;
    FactorMap sigma;
    JumpMap gamma;
    JumpSpec jumps;
};

struct FactorDomain {
    double lo;
    double hi;
    bool contains(double y) const { return y >= lo && y <= hi; }
};

// dY = g(Y) dt + dW_1.
struct FactorDynamics {
    std::function<double(double)> g;
    double g_lipschitz_bound = 1.0;
    FactorDomain domain{-3.0, 3.0};
    // Set when g(y) = -b y, enabling exact Gaussian transitions.
    std::optional<double> ou_reversion;
};

// ---- built-in maps -------------------------------------------------------

inline TimeMap constant_rate(double v) {
    return [v](double) { return v; };
}

inline FactorMap constant_map(double v) {
    return [v](double, double) { return v; };
}

inline FactorMap affine_in_y(double a0, double a1) {
    return [a0, a1](double, double y) { return a0 + a1 * y; };
}

inline FactorMap tabulated_map(BilinearTable table) {
    return [table = std::move(table)](double t, double y) { return table(t, y); };
}

// gamma(t, y, z) = (g0 + g1 y) z. The OU example uses g0 = 0, g1 = gamma, z = 1.
inline JumpMap affine_jump_scale(double g0, double g1) {
    return [g0, g1](double, double y, double z) { return (g0 + g1 * y) * z; };
}

inline FactorDynamics ou_factor(double b, FactorDomain domain = {-3.0, 3.0}) {
    FactorDynamics fd;
    fd.g = [b](double y) { return -b * y; };
    fd.g_lipschitz_bound = std::abs(b);
    fd.domain = domain;
    fd.ou_reversion = b;
    return fd;
}

inline FactorDynamics driftless_factor(FactorDomain domain = {-3.0, 3.0}) {
    FactorDynamics fd;
    fd.g = [](double) { return 0.0; };
    fd.g_lipschitz_bound = 1.0;
    fd.domain = domain;
    fd.ou_reversion = 0.0;
    return fd;
}

// ---- evaluation ----------------------------------------------------------

struct CoefficientValues {
    double r;
    double alpha;
    double mu;
    double beta;
    double sigma;
};

namespace detail {
inline double checked(double v, const char* name) {
    if (!std::isfinite(v)) throw ModelError(std::string("non-finite value from map '") + name + "'");
    return v;
}
}  // namespace detail

inline CoefficientValues eval_coefficients(const CoefficientSet& cs, double t, double y) {
    if (!std::isfinite(t) || t < 0.0 || !std::isfinite(y))
        throw InputError("eval_coefficients: (t, y) outside the admissible domain");
    CoefficientValues v{};
    v.r = detail::checked(cs.r(t), "r");
    v.alpha = detail::checked(cs.alpha(t, y), "alpha");
    v.beta = detail::checked(cs.beta(t, y), "beta");
    v.sigma = detail::checked(cs.sigma(t, y), "sigma");
    v.mu = v.alpha - v.r;
    if (!(v.mu > 0.0)) throw ModelError("mu must be positive");
    return v;
}

// Domain-checked overload: t in [0, horizon], y in the factor domain.
inline CoefficientValues eval_coefficients(const CoefficientSet& cs, const FactorDynamics& fd,
                                           double horizon, double t, double y) {
    if (!(t >= 0.0 && t <= horizon) || !fd.domain.contains(y))
        throw InputError("eval_coefficients: (t, y) outside [0,T] x factor domain");
    return eval_coefficients(cs, t, y);
}

// Unchecked evaluation for simulation hot loops, where paths may leave the
// declared domain and mu positivity is a scenario-level assumption.
inline CoefficientValues eval_coefficients_raw(const CoefficientSet& cs, double t, double y) {
    CoefficientValues v{};
    v.r = cs.r(t);
    v.alpha = cs.alpha(t, y);
    v.beta = cs.beta(t, y);
    v.sigma = cs.sigma(t, y);
    v.mu = v.alpha - v.r;
    return v;
}

// ---- assumption checks ---------------------------------------------------

struct SampleGrid {
    std::vector<double> t;
    std::vector<double> y;
};

inline SampleGrid make_sample_grid(double horizon, FactorDomain domain, std::size_t nt = 101,
                                   std::size_t ny = 101) {
    return {linspace(0.0, horizon, nt), linspace(domain.lo, domain.hi, ny)};
}

struct AssumptionEntry {
    std::string name;
    bool passed = true;
    double witness_t = std::numeric_limits<double>::quiet_NaN();
    double witness_y = std::numeric_limits<double>::quiet_NaN();
    double value = 0.0;
    std::string detail;
};

struct AssumptionReport {
    std::vector<AssumptionEntry> entries;
    double integrability = 0.0;
    double lipschitz_slope = 0.0;

    bool all_passed() const {
        for (const auto& e : entries)
            if (!e.passed) return false;
        return true;
    }

    const AssumptionEntry* find(const std::string& name) const {
        for (const auto& e : entries)
            if (e.name == name) return &e;
        return nullptr;
    }
};

inline AssumptionReport check_assumptions(const CoefficientSet& cs, const FactorDynamics& fd,
                                          const SampleGrid& grid) {
    AssumptionReport rep;
    if (grid.t.empty() || grid.y.empty()) throw InputError("check_assumptions: empty sample grid");

    AssumptionEntry r_pos{"r > 0", true};
    r_pos.value = std::numeric_limits<double>::infinity();
    for (double t : grid.t) {
        const double r = cs.r(t);
        if (!(r < r_pos.value)) continue;
        r_pos.value = r;
        r_pos.witness_t = t;
    }
    r_pos.passed = std::isfinite(r_pos.value) && r_pos.value > 0.0;
    rep.entries.push_back(r_pos);

    struct Bound {
        const char* name;
        const FactorMap* map;
    };
    const Bound bounded[] = {{"alpha bounded", &cs.alpha},
                             {"beta bounded", &cs.beta},
                             {"sigma bounded", &cs.sigma}};
    for (const auto& b : bounded) {
        AssumptionEntry e{b.name, true};
        for (double t : grid.t)
            for (double y : grid.y) {
                const double v = std::abs((*b.map)(t, y));
                if (!std::isfinite(v)) {
                    e.passed = false;
                    e.value = v;
                    e.witness_t = t;
                    e.witness_y = y;
                } else if (e.passed && v >= e.value) {
                    e.value = v;
                    e.witness_t = t;
                    e.witness_y = y;
                }
            }
        rep.entries.push_back(e);
    }

    AssumptionEntry g_bound{"gamma bounded", true};
    AssumptionEntry g_floor{"gamma > -1", true};
    g_floor.value = std::numeric_limits<double>::infinity();
    for (double t : grid.t)
        for (double y : grid.y)
            for (const auto& atom : cs.jumps.atoms()) {
                const double g = cs.gamma(t, y, atom.mark);
                if (!std::isfinite(g)) {
                    g_bound.passed = false;
                    g_bound.witness_t = t;
                    g_bound.witness_y = y;
                } else if (g_bound.passed && std::abs(g) >= g_bound.value) {
                    g_bound.value = std::abs(g);
                    g_bound.witness_t = t;
                    g_bound.witness_y = y;
                }
                if (g < g_floor.value) {
                    g_floor.value = g;
                    g_floor.witness_t = t;
                    g_floor.witness_y = y;
                }
            }
    if (!cs.jumps.active()) g_floor.value = 0.0;
    g_floor.passed = g_floor.value > -1.0;
    if (!g_floor.passed) g_floor.detail = "gamma > -1 violated";
    rep.entries.push_back(g_bound);
    rep.entries.push_back(g_floor);

    AssumptionEntry mu_pos{"mu > 0", true};
    mu_pos.value = std::numeric_limits<double>::infinity();
    for (double t : grid.t)
        for (double y : grid.y) {
            const double mu = cs.alpha(t, y) - cs.r(t);
            if (mu < mu_pos.value) {
                mu_pos.value = mu;
                mu_pos.witness_t = t;
                mu_pos.witness_y = y;
            }
        }
    mu_pos.passed = mu_pos.value > 0.0;
    rep.entries.push_back(mu_pos);

    // Integrability: Simpson over t of the worst case over y of
    // beta^2 + sigma^2 + int |gamma|^2 nu(dz).
    const auto worst_density = [&](double t) {
        double worst = 0.0;
        for (double y : grid.y) {
            const double b = cs.beta(t, y);
            const double s = cs.sigma(t, y);
            const double j = cs.jumps.integrate([&](double z) {
                const double g = cs.gamma(t, y, z);
                return g * g;
            });
            worst = std::max(worst, b * b + s * s + j);
        }
        return worst;
    };
    const double horizon = grid.t.back() - grid.t.front();
    rep.integrability =
        horizon > 0.0 ? simpson(worst_density, grid.t.front(), grid.t.back(), 200) : 0.0;
    AssumptionEntry integ{"square integrability", std::isfinite(rep.integrability)};
    integ.value = rep.integrability;
    rep.entries.push_back(integ);

    AssumptionEntry lip{"g Lipschitz", true};
    for (std::size_t j = 1; j < grid.y.size(); ++j) {
        const double slope =
            std::abs(fd.g(grid.y[j]) - fd.g(grid.y[j - 1])) / (grid.y[j] - grid.y[j - 1]);
        if (slope > lip.value) {
            lip.value = slope;
            lip.witness_y = grid.y[j - 1];
        }
    }
    rep.lipschitz_slope = lip.value;
    lip.passed = lip.value <= fd.g_lipschitz_bound * (1.0 + 1e-6);
    if (!lip.passed) lip.detail = "empirical slope exceeds declared bound";
    rep.entries.push_back(lip);
    return rep;
}

// ---- jump sampling -------------------------------------------------------

struct JumpDraw {
    std::vector<double> marks;
    // rate * dt * sum_i p_i z_i, the compensator of the raw mark sum.
    double compensator = 0.0;
};

template <class Rng>
std::size_t draw_atom(const JumpSpec& js, Rng& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double u = unif(rng);
    double acc = 0.0;
    const auto& atoms = js.atoms();
    for (std::size_t i = 0; i + 1 < atoms.size(); ++i) {
        acc += atoms[i].probability;
        if (u < acc) return i;
    }
    return atoms.size() - 1;
}

template <class Rng>
JumpDraw sample_jump_marks(const JumpSpec& js, double dt, Rng& rng) {
    if (!(dt > 0.0)) throw InputError("sample_jump_marks: dt must be positive");
    JumpDraw out;
    if (!js.active()) return out;
    std::poisson_distribution<int> count(js.rate() * dt);
    const int n = count(rng);
    out.marks.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) out.marks.push_back(js.atoms()[draw_atom(js, rng)].mark);
    out.compensator = dt * js.integrate([](double z) { return z; });
    return out;
}

}  // namespace jumpvol
