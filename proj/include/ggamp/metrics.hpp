#pragma once

#include "types.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace ggamp {

/// 10 log10 of a non-negative error ratio, floored at kNmseFloorDb.
inline double to_db(double ratio) {
    if (ratio <= 0.0) return kNmseFloorDb;
    return std::max(10.0 * std::log10(ratio), kNmseFloorDb);
}

/// ||x_hat - x||^2 / ||x||^2 in dB.
inline double nmse_db(const Vec& x_hat, const Vec& x_true) {
    detail::require(x_hat.size() == x_true.size(), "x_hat", "length mismatch");
    const double den = x_true.squaredNorm();
    detail::require(den > 0.0, "x_true", "must be non-zero");
    return to_db((x_hat - x_true).squaredNorm() / den);
}

/// (1/T) sum_t ||x_hat(t) - x(t)||^2 / ||x(t)||^2 in dB; frames are columns.
inline double tnmse_db(const Mat& X_hat, const Mat& X_true) {
    detail::require(X_hat.rows() == X_true.rows() && X_hat.cols() == X_true.cols(), "X_hat", "shape mismatch");
    detail::require(X_true.cols() >= 1, "X_true", "needs at least one frame");
    double acc = 0.0;
    for (Index t = 0; t < X_true.cols(); ++t) {
        const double den = X_true.col(t).squaredNorm();
        detail::require(den > 0.0, "X_true", "frame " + std::to_string(t) + " is zero");
        acc += (X_hat.col(t) - X_true.col(t)).squaredNorm() / den;
    }
    return to_db(acc / static_cast<double>(X_true.cols()));
}

inline double median(std::vector<double> v) {
    detail::require(!v.empty(), "values", "median of an empty set");
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2 == 1) return *mid;
    const double hi = *mid;
    const double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

inline double mean(const std::vector<double>& v) {
    detail::require(!v.empty(), "values", "mean of an empty set");
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

}  // namespace ggamp
