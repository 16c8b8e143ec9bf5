#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace tsdd {

/// Invalid user-facing configuration (misaligned widths, k > N, unknown keys).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Internal inconsistency, e.g. a trace index map that cannot be built.
class StructuralError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// A nonlinear or fixed-point solve did not reach its tolerance.
class SolverFailure : public std::runtime_error {
public:
    SolverFailure(const std::string& what, double last_residual, std::vector<double> history = {})
        : std::runtime_error(what), last_residual_(last_residual), history_(std::move(history)) {}

    double last_residual() const noexcept { return last_residual_; }
    const std::vector<double>& history() const noexcept { return history_; }

private:
    double last_residual_;
    std::vector<double> history_;
};

/// Dictionary file could not be decoded (bad magic, version, checksum, shapes).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace tsdd
