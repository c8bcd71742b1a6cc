#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace jumpvol {

// Caller supplied an argument outside the operation's stated domain.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Mathematical domain violation (negative base of a power, zero hazard, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// A model map produced a value that breaks a standing assumption.
class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NoInteriorSolution : public std::runtime_error {
public:
    NoInteriorSolution(const std::string& what, double lo, double hi, double residual_lo,
                       double residual_hi)
        : std::runtime_error(what), lo_(lo), hi_(hi), residual_lo_(residual_lo),
          residual_hi_(residual_hi) {}

    double lo() const { return lo_; }
    double hi() const { return hi_; }
    double residual_lo() const { return residual_lo_; }
    double residual_hi() const { return residual_hi_; }

private:
    double lo_, hi_, residual_lo_, residual_hi_;
};

class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, std::vector<double> history)
        : std::runtime_error(what), history_(std::move(history)) {}

    const std::vector<double>& history() const { return history_; }

private:
    std::vector<double> history_;
};

class EstimationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace jumpvol
