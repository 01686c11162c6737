#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace kf {

/// Error taxonomy shared across the library.  Each kind maps to a stable
/// machine-readable slug so the CLI can emit structured error lines.
enum class ErrKind {
    invalid_input,
    parse_error,
    domain_error,
    solver_failure,
    resonant_obstruction,
    divergence_detected,
    hypothesis_violation,
    non_convergence,
};

inline const char* err_slug(ErrKind k) {
    switch (k) {
        case ErrKind::invalid_input: return "invalid-input";
        case ErrKind::parse_error: return "parse-error";
        case ErrKind::domain_error: return "domain-error";
        case ErrKind::solver_failure: return "solver-failure";
        case ErrKind::resonant_obstruction: return "resonant-obstruction";
        case ErrKind::divergence_detected: return "divergence-detected";
        case ErrKind::hypothesis_violation: return "hypothesis-violation";
        case ErrKind::non_convergence: return "non-convergence";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrKind kind, std::string msg)
        : std::runtime_error(std::move(msg)), kind_(kind) {}
    ErrKind kind() const { return kind_; }

private:
    ErrKind kind_;
};

/// Syntax error with source position (1-based line/column).
class ParseError : public Error {
public:
    ParseError(int line, int col, const std::string& msg)
        : Error(ErrKind::parse_error,
                "parse error at " + std::to_string(line) + ":" +
                    std::to_string(col) + ": " + msg),
          line_(line), col_(col) {}
    int line() const { return line_; }
    int col() const { return col_; }

private:
    int line_, col_;
};

/// Homological equation at `degree` is singular with rhs outside the range.
class ResonantObstruction : public Error {
public:
    ResonantObstruction(int degree, std::vector<int> witness, int target_index,
                        const std::string& msg)
        : Error(ErrKind::resonant_obstruction, msg),
          degree_(degree), witness_(std::move(witness)),
          target_index_(target_index) {}
    int degree() const { return degree_; }
    const std::vector<int>& witness() const { return witness_; }
    int target_index() const { return target_index_; }

private:
    int degree_;
    std::vector<int> witness_;
    int target_index_;
};

/// Refinement iteration diverged; carries the tail of the iterate history.
class DivergenceDetected : public Error {
public:
    DivergenceDetected(std::string msg,
                       std::vector<std::complex<double>> history_tail)
        : Error(ErrKind::divergence_detected, std::move(msg)),
          tail_(std::move(history_tail)) {}
    const std::vector<std::complex<double>>& history_tail() const {
        return tail_;
    }

private:
    std::vector<std::complex<double>> tail_;
};

}  // namespace kf
