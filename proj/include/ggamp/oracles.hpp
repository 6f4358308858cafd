#pragma once

// Support-aware performance bounds: the genie MMSE estimator for SMV and the
// support-aware Kalman smoother (SKS) for MMV.

#include "ggamp_tsbl.hpp"
#include "matgen.hpp"
#include "types.hpp"

#include <Eigen/Cholesky>

#include <vector>

namespace ggamp {

namespace detail {

inline Mat restrict_columns(const Mat& A, const std::vector<Index>& support) {
    Mat out(A.rows(), static_cast<Index>(support.size()));
    for (std::size_t j = 0; j < support.size(); ++j) {
        require(support[j] >= 0 && support[j] < A.cols(), "support", "index out of range");
        out.col(static_cast<Index>(j)) = A.col(support[j]);
    }
    return out;
}

}  // namespace detail

/// x_hat = Abar^T (Abar Abar^T + sigma^2 I)^{-1} y on the support, zero elsewhere.
inline Vec genie_mmse(const Mat& A, const Vec& y, double sigma2, const std::vector<Index>& support) {
    detail::require(sigma2 > 0.0, "sigma2", "must be positive");
    detail::require(A.rows() == y.size(), "y", "length must be M");
    Vec x = Vec::Zero(A.cols());
    if (support.empty()) return x;
    const Mat Ab = detail::restrict_columns(A, support);
    Mat G = Ab * Ab.transpose();
    G.diagonal().array() += sigma2;
    const Vec on = Ab.transpose() * G.llt().solve(y);
    for (std::size_t j = 0; j < support.size(); ++j) x(support[j]) = on(static_cast<Index>(j));
    return x;
}

inline Vec genie_mmse(const SmvProblem& prob) { return genie_mmse(prob.A, prob.y, prob.sigma2, prob.support); }

struct SksResult {
    Mat X_hat;  ///< N x T, zero off-support
    int iterations = 0;
    bool converged = false;
};

/**
 * Support-aware Kalman smoother: the temporal GAMP E-step run to convergence
 * on the support-restricted matrix with the true sigma^2, gamma and beta.
 * Damping is chosen from the restricted matrix, with the temporal message
 * damping tied to it as in solve_mmv.
 */
inline SksResult sks(const MmvProblem& prob, const Vec& gamma_true, const std::vector<Index>& support,
                     DampingConfig cfg = {1.0, 1.0, 2000, 1e-14}, bool auto_damping = true,
                     double message_damping_ratio = 0.25) {
    detail::require(gamma_true.size() == prob.A.cols(), "gamma_true", "length must be N");
    const Index T = prob.frames();
    SksResult res;
    res.X_hat = Mat::Zero(prob.A.cols(), T);
    if (support.empty()) {
        res.converged = true;
        return res;
    }
    const Mat Ab = detail::restrict_columns(prob.A, support);
    Vec g(static_cast<Index>(support.size()));
    for (std::size_t j = 0; j < support.size(); ++j) g(static_cast<Index>(j)) = gamma_true(support[j]);

    if (auto_damping) {
        const auto choice = choose_damping(Ab, 1.1, cfg);
        cfg = choice.config;
        cfg.theta_m = message_damping_ratio * cfg.theta_x;
    }
    const PrecomputedS S(Ab);
    MmvState state = MmvState::cold_start(g, Ab.rows(), T);
    const auto out = tsbl_e_step(Ab, S, prob.Y, g, prob.beta, prob.sigma2, state, cfg);
    res.iterations = out.iterations;
    res.converged = out.converged;
    for (Index t = 0; t < T; ++t)
        for (std::size_t j = 0; j < support.size(); ++j)
            res.X_hat(support[j], t) = state.frames[static_cast<std::size_t>(t)].x_hat(static_cast<Index>(j));
    return res;
}

inline SksResult sks(const MmvProblem& prob) { return sks(prob, prob.gamma_true, prob.support); }

}  // namespace ggamp
