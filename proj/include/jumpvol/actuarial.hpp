#pragma once

// Mortality, discounting and the multi-insurer life-insurance market.

#include <atomic>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "jumpvol/curves.hpp"
#include "jumpvol/errors.hpp"
#include "jumpvol/market.hpp"

namespace jumpvol {

// Hazard lambda(t), subjective discount rho(t) on [0, T]. Cumulative integrals
// are tabulated once with a midpoint-Simpson rule per panel; off-node queries
// add one Simpson panel from the nearest node below.
class ActuarialModel {
public:
    ActuarialModel(TimeMap lambda, TimeMap rho, double horizon, std::size_t panels = 10000)
        : lambda_(std::move(lambda)), rho_(std::move(rho)), horizon_(horizon) {
        if (!(horizon_ > 0.0) || !std::isfinite(horizon_))
            throw InputError("actuarial model: horizon must be positive");
        if (panels < 2) panels = 2;
        nodes_ = linspace(0.0, horizon_, panels + 1);
        cum_hazard_.assign(nodes_.size(), 0.0);
        cum_discount_.assign(nodes_.size(), 0.0);
        for (std::size_t k = 0; k < nodes_.size(); ++k) {
            const double l = lambda_(nodes_[k]);
            const double r = rho_(nodes_[k]);
            if (!(l >= 0.0) || !std::isfinite(l))
                throw ModelError("lambda must be finite and nonnegative on [0,T]");
            if (!(r > 0.0) || !std::isfinite(r))
                throw ModelError("rho must be finite and positive on [0,T]");
        }
        for (std::size_t k = 1; k < nodes_.size(); ++k) {
            cum_hazard_[k] = cum_hazard_[k - 1] + panel(lambda_, nodes_[k - 1], nodes_[k]);
            cum_discount_[k] = cum_discount_[k - 1] + panel(rho_, nodes_[k - 1], nodes_[k]);
        }
    }

    double horizon() const { return horizon_; }
    double lambda(double t) const { return lambda_(t); }
    double rho(double t) const { return rho_(t); }

    // int_0^t lambda(s) ds
    double cumulative_hazard(double t) const { return cumulative(cum_hazard_, lambda_, t); }

    // int_0^t rho(s) ds
    double cumulative_discount(double t) const { return cumulative(cum_discount_, rho_, t); }

    // int_0^t (rho + lambda)(s) ds, the exponent of the mortality-adjusted discount.
    double total_discount(double t) const { return cumulative_hazard(t) + cumulative_discount(t); }

    const TimeMap& lambda_map() const { return lambda_; }
    const TimeMap& rho_map() const { return rho_; }

private:
    static double panel(const TimeMap& f, double a, double b) {
        return (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b));
    }

    double cumulative(const std::vector<double>& table, const TimeMap& f, double t) const {
        if (t <= 0.0) return 0.0;
        if (t >= horizon_) return table.back();
        const auto [i, w] = locate_cell(nodes_, t);
        if (w == 0.0) return table[i];
        return table[i] + panel(f, nodes_[i], t);
    }

    TimeMap lambda_;
    TimeMap rho_;
    double horizon_;
    std::vector<double> nodes_;
    std::vector<double> cum_hazard_;
    std::vector<double> cum_discount_;
};

namespace detail {
inline void check_time(const ActuarialModel& am, double t, const char* op) {
    if (!(t >= 0.0 && t <= am.horizon() * (1.0 + 1e-12)))
        throw InputError(std::string(op) + ": t outside [0, T]");
}
}  // namespace detail

inline double survival_probability(const ActuarialModel& am, double t) {
    detail::check_time(am, t, "survival_probability");
    return std::exp(-am.cumulative_hazard(t));
}

inline double death_density(const ActuarialModel& am, double t) {
    detail::check_time(am, t, "death_density");
    return am.lambda(t) * std::exp(-am.cumulative_hazard(t));
}

// M insurers with premium-payout ratios eta_n(t). The tie counter is shared
// between copies and is the only mutable state.
class InsuranceMarket {
public:
    explicit InsuranceMarket(std::vector<TimeMap> etas)
        : etas_(std::move(etas)), ties_(std::make_shared<std::atomic<std::size_t>>(0)) {
        if (etas_.empty()) throw InputError("insurance market needs at least one insurer");
    }

    std::size_t size() const { return etas_.size(); }
    double eta(std::size_t n, double t) const { return etas_[n](t); }
    std::size_t tie_count() const { return ties_->load(); }
    void record_tie() const { ties_->fetch_add(1, std::memory_order_relaxed); }

private:
    std::vector<TimeMap> etas_;
    std::shared_ptr<std::atomic<std::size_t>> ties_;
};

struct InsurerChoice {
    std::size_t index;  // 0-based
    double eta;
    bool tie;
};

// argmin_n eta_n(t); the smallest index wins a tie and the tie counter is bumped.
inline InsurerChoice select_insurer(const InsuranceMarket& im, double t) {
    InsurerChoice best{0, im.eta(0, t), false};
    for (std::size_t n = 1; n < im.size(); ++n) {
        const double e = im.eta(n, t);
        if (e < best.eta) {
            best = {n, e, false};
        } else if (e == best.eta) {
            best.tie = true;
        }
    }
    if (best.tie) im.record_tie();
    return best;
}

// Number of sample times at which two insurers quote the same ratio, or at
// which some ratio is not positive.
inline std::size_t distinctness_violations(const InsuranceMarket& im, std::span<const double> t_grid) {
    std::size_t bad = 0;
    for (double t : t_grid) {
        bool hit = false;
        for (std::size_t a = 0; a < im.size() && !hit; ++a) {
            if (!(im.eta(a, t) > 0.0)) hit = true;
            for (std::size_t b = a + 1; b < im.size() && !hit; ++b)
                if (im.eta(a, t) == im.eta(b, t)) hit = true;
        }
        if (hit) ++bad;
    }
    return bad;
}

// Wealth plus total death benefit, x + sum_n p_n / eta_n(t).
inline double legacy(double x, std::span<const double> premiums, const InsuranceMarket& im, double t) {
    if (premiums.size() != im.size()) throw InputError("legacy: premium vector must have length M");
    double total = x;
    for (std::size_t n = 0; n < premiums.size(); ++n) {
        if (premiums[n] < 0.0) throw InputError("legacy: premiums must be nonnegative");
        if (premiums[n] > 0.0) total += premiums[n] / im.eta(n, t);
    }
    return total;
}

}  // namespace jumpvol
