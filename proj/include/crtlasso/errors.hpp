#pragma once

#include <stdexcept>
#include <string>

namespace crtlasso {

// Input/data problems (bad CSV, schema mismatch, invalid config). CLI exit code 2.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failures (rank deficiency, exhausted degrees of freedom,
// non-convergence). CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

class RankDeficientError : public NumericalError {
public:
    int column;
    explicit RankDeficientError(int col)
        : NumericalError("design matrix is rank deficient at column " + std::to_string(col)),
          column(col) {}
};

class InsufficientDfError : public NumericalError {
public:
    std::string arm;
    double required;
    double available;
    InsufficientDfError(std::string arm_, double required_, double available_)
        : NumericalError("insufficient degrees of freedom in " + arm_ + " arm: need > " +
                         std::to_string(required_) + ", have " + std::to_string(available_)),
          arm(std::move(arm_)), required(required_), available(available_) {}
};

class ZeroVarianceCovariateError : public NumericalError {
public:
    int covariate;
    std::string name;
    ZeroVarianceCovariateError(int covariate_, std::string name_)
        : NumericalError("covariate '" + name_ + "' (index " + std::to_string(covariate_) +
                         ") is constant across clusters"),
          covariate(covariate_), name(std::move(name_)) {}
};

class DegenerateRSquaredError : public NumericalError {
public:
    double r2;
    explicit DegenerateRSquaredError(double r2_)
        : NumericalError("treatment indicator is (near) perfectly predicted by covariates, R^2 = " +
                         std::to_string(r2_)),
          r2(r2_) {}
};

class MaxIterationsExceededError : public NumericalError {
public:
    long iter_limit;
    explicit MaxIterationsExceededError(long iter_limit_)
        : NumericalError("coordinate descent did not converge within " +
                         std::to_string(iter_limit_) + " sweeps"),
          iter_limit(iter_limit_) {}
};

class SingularSupportBlockError : public NumericalError {
public:
    SingularSupportBlockError() : NumericalError("support block of the moment matrix is singular") {}
};

class KktViolationError : public NumericalError {
public:
    double violation;
    double tol;
    KktViolationError(double violation_, double tol_)
        : NumericalError("solution failed KKT stationarity check: violation " +
                         std::to_string(violation_) + " > tol " + std::to_string(tol_)),
          violation(violation_), tol(tol_) {}
};

} // namespace crtlasso
