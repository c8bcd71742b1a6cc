#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "jumpvol/errors.hpp"

namespace jumpvol {

// Locates the cell [nodes[i], nodes[i+1]] containing x (clamped to the ends)
// and the linear weight of the right node.
struct CellLocation {
    std::size_t index;
    double weight;
};

inline CellLocation locate_cell(std::span<const double> nodes, double x) {
    const std::size_t n = nodes.size();
    if (n < 2 || x <= nodes.front()) return {0, 0.0};
    if (x >= nodes.back()) return {n - 2, 1.0};
    const auto it = std::upper_bound(nodes.begin(), nodes.end(), x);
    const std::size_t i = static_cast<std::size_t>(it - nodes.begin()) - 1;
    return {i, (x - nodes[i]) / (nodes[i + 1] - nodes[i])};
}

inline void require_increasing(std::span<const double> nodes, const char* what) {
    if (nodes.empty()) throw InputError(std::string(what) + ": empty node list");
    for (std::size_t i = 1; i < nodes.size(); ++i) {
        if (!(nodes[i] > nodes[i - 1]))
            throw InputError(std::string(what) + ": nodes must be strictly increasing");
    }
}

// Piecewise-linear curve with flat extrapolation beyond the first/last node.
class PiecewiseLinear {
public:
    PiecewiseLinear(std::vector<double> x, std::vector<double> y)
        : x_(std::move(x)), y_(std::move(y)) {
        if (x_.size() != y_.size()) throw InputError("piecewise-linear table: size mismatch");
        require_increasing(x_, "piecewise-linear table");
    }

    double operator()(double x) const {
        if (x_.size() == 1) return y_.front();
        const auto [i, w] = locate_cell(x_, x);
        return (1.0 - w) * y_[i] + w * y_[i + 1];
    }

    const std::vector<double>& nodes() const { return x_; }
    const std::vector<double>& values() const { return y_; }

private:
    std::vector<double> x_;
    std::vector<double> y_;
};

// Row-major table over a (t, y) grid with bilinear interpolation, clamped at
// the grid boundary.
class BilinearTable {
public:
    BilinearTable() = default;
    BilinearTable(std::vector<double> t_nodes, std::vector<double> y_nodes,
                  std::vector<double> values)
        : t_(std::move(t_nodes)), y_(std::move(y_nodes)), v_(std::move(values)) {
        require_increasing(t_, "bilinear table t-nodes");
        require_increasing(y_, "bilinear table y-nodes");
        if (v_.size() != t_.size() * y_.size())
            throw InputError("bilinear table: value count must equal |t| x |y|");
    }

    double at(std::size_t i, std::size_t j) const { return v_[i * y_.size() + j]; }

    double operator()(double t, double y) const {
        const auto ct = t_.size() > 1 ? locate_cell(t_, t) : CellLocation{0, 0.0};
        const auto cy = y_.size() > 1 ? locate_cell(y_, y) : CellLocation{0, 0.0};
        const std::size_t i1 = t_.size() > 1 ? ct.index + 1 : 0;
        const std::size_t j1 = y_.size() > 1 ? cy.index + 1 : 0;
        const double lo = (1.0 - cy.weight) * at(ct.index, cy.index) + cy.weight * at(ct.index, j1);
        const double hi = (1.0 - cy.weight) * at(i1, cy.index) + cy.weight * at(i1, j1);
        return (1.0 - ct.weight) * lo + ct.weight * hi;
    }

    const std::vector<double>& t_nodes() const { return t_; }
    const std::vector<double>& y_nodes() const { return y_; }
    const std::vector<double>& values() const { return v_; }

private:
    std::vector<double> t_;
    std::vector<double> y_;
    std::vector<double> v_;
};

inline std::vector<double> linspace(double a, double b, std::size_t n) {
    if (n == 0) return {};
    if (n == 1) return {a};
    std::vector<double> out(n);
    const double h = (b - a) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) out[i] = a + h * static_cast<double>(i);
    out.back() = b;
    return out;
}

// Composite Simpson rule with an even number of panels (odd n is bumped).
template <class F>
double simpson(F&& f, double a, double b, std::size_t panels = 200) {
    if (b == a) return 0.0;
    if (panels % 2 == 1) ++panels;
    const double h = (b - a) / static_cast<double>(panels);
    double acc = f(a) + f(b);
    for (std::size_t k = 1; k < panels; ++k)
        acc += (k % 2 == 1 ? 4.0 : 2.0) * f(a + h * static_cast<double>(k));
    return acc * h / 3.0;
}

}  // namespace jumpvol
