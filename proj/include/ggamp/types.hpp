#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>

namespace ggamp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Lower bound applied to every learned hyperparameter variance.
inline constexpr double kGammaFloor = 1e-12;

/// NMSE reported for an exact reconstruction (10*log10(0) sentinel).
inline constexpr double kNmseFloorDb = -150.0;

/// A parameter lies outside the domain an operation accepts.
class DomainError : public std::invalid_argument {
public:
    DomainError(std::string field, const std::string& what)
        : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// A linear system that should be positive definite could not be factored.
class LinAlgError : public std::runtime_error {
public:
    LinAlgError(const std::string& what, double condition_estimate)
        : std::runtime_error(what + " (condition estimate " + std::to_string(condition_estimate) + ")"),
          condition_(condition_estimate) {}

    double condition_estimate() const noexcept { return condition_; }

private:
    double condition_;
};

/// NaN or Inf appeared inside an iterative loop.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, int iteration)
        : std::runtime_error(what + " at iteration " + std::to_string(iteration)), iteration_(iteration) {}

protected:
    /// Keeps `message` verbatim (used by wrappers that already include the iteration).
    DivergenceError(int iteration, const std::string& message) : std::runtime_error(message), iteration_(iteration) {}

public:

    int iteration() const noexcept { return iteration_; }

private:
    int iteration_;
};

namespace detail {

inline void require(bool ok, const char* field, const std::string& what) {
    if (!ok) throw DomainError(field, what);
}

/// ||a - b||^2 / ||a||^2 with 0/0 read as 0 (both iterates identically zero).
inline double relative_change(const Vec& next, const Vec& prev) {
    const double num = (next - prev).squaredNorm();
    const double den = next.squaredNorm();
    if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return num / den;
}

inline bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace detail
}  // namespace ggamp
