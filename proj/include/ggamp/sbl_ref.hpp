#pragma once

// Exact EM sparse Bayesian learning: closed-form Gaussian E-step plus the
// maximum-likelihood M-step. Serves as the correctness oracle and the runtime
// baseline for the message-passing solvers.

#include "matgen.hpp"
#include "types.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <optional>
#include <ostream>
#include <vector>

namespace ggamp {

/// Hyperparameters of the Gaussian scale mixture prior plus the working noise variance.
struct SblState {
    Vec gamma;
    double sigma2 = 1.0;
    int em_iter = 0;
};

/// Gaussian posterior N(x_hat, Sigma_x); tau_x is diag(Sigma_x).
struct Posterior {
    Vec x_hat;
    Vec tau_x;
    std::optional<Mat> Sigma_x;
};

/// Which algebraic form of the posterior covariance to evaluate.
enum class EStepForm {
    Auto,    ///< M x M matrix-inversion-lemma form when M < N, else the N x N form.
    Lemma,   ///< Gamma - Gamma A^T (sigma^2 I + A Gamma A^T)^{-1} A Gamma
    Direct,  ///< (sigma^{-2} A^T A + Gamma^{-1})^{-1}
};

namespace detail {

inline double condition_estimate(const Mat& spd) {
    Eigen::SelfAdjointEigenSolver<Mat> es(spd, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    const double lo = ev.minCoeff();
    const double hi = ev.maxCoeff();
    if (lo <= 0.0) return std::numeric_limits<double>::infinity();
    return hi / lo;
}

inline Eigen::LLT<Mat> factor_spd(const Mat& spd, const char* what) {
    Eigen::LLT<Mat> llt(spd);
    if (llt.info() != Eigen::Success) throw LinAlgError(what, condition_estimate(spd));
    return llt;
}

/// Sigma_y = sigma^2 I + A Gamma A^T
inline Mat measurement_covariance(const Mat& A, const Vec& gamma, double sigma2) {
    Mat AG = A * gamma.asDiagonal();
    Mat Sy = AG * A.transpose();
    Sy.diagonal().array() += sigma2;
    return Sy;
}

}  // namespace detail

/**
 * Exact Gaussian E-step.
 *
 * Requires gamma > 0 element-wise and sigma2 > 0. Throws LinAlgError if the
 * system to invert is not numerically positive definite.
 */
inline Posterior e_step_exact(const Mat& A, const Vec& y, const Vec& gamma, double sigma2,
                              EStepForm form = EStepForm::Auto, bool full_covariance = false) {
    detail::require(A.rows() == y.size() && A.cols() == gamma.size(), "A", "shape mismatch");
    detail::require(sigma2 > 0.0, "sigma2", "must be positive");
    detail::require((gamma.array() > 0.0).all(), "gamma", "must be positive (apply the floor first)");

    const Index M = A.rows();
    const Index N = A.cols();
    if (form == EStepForm::Auto) form = M < N ? EStepForm::Lemma : EStepForm::Direct;

    Posterior post;
    if (form == EStepForm::Lemma) {
        const auto llt = detail::factor_spd(detail::measurement_covariance(A, gamma, sigma2), "Sigma_y not positive definite");
        // x_hat = Gamma A^T Sigma_y^{-1} y
        post.x_hat = gamma.cwiseProduct(A.transpose() * llt.solve(y));
        // diag(Gamma A^T Sigma_y^{-1} A Gamma)_n = gamma_n^2 ||L^{-1} a_n||^2
        const Mat W = llt.matrixL().solve(A);
        post.tau_x = gamma - gamma.cwiseAbs2().cwiseProduct(W.colwise().squaredNorm().transpose());
        if (full_covariance) {
            Mat GW = W * gamma.asDiagonal();
            Mat S = -GW.transpose() * GW;
            S.diagonal() += gamma;
            post.Sigma_x = std::move(S);
        }
    } else {
        Mat P = A.transpose() * A / sigma2;
        P.diagonal() += gamma.cwiseInverse();
        const auto llt = detail::factor_spd(P, "posterior precision not positive definite");
        post.x_hat = llt.solve(A.transpose() * y) / sigma2;
        Mat S = llt.solve(Mat::Identity(N, N));
        post.tau_x = S.diagonal();
        if (full_covariance) post.Sigma_x = std::move(S);
    }
    // Rounding can push tiny variances a hair below zero.
    post.tau_x = post.tau_x.cwiseMax(0.0);
    return post;
}

/// gamma_n = x_hat_n^2 + tau_x_n
inline Vec m_step_gamma(const Posterior& post) { return post.x_hat.cwiseAbs2() + post.tau_x; }

/// (||y - A x_hat||^2 + sigma2_old * sum(1 - tau_x/gamma)) / M
inline double m_step_sigma2(const Mat& A, const Vec& y, const Posterior& post, const Vec& gamma, double sigma2_old) {
    detail::require(A.rows() > 0, "A", "needs at least one row");
    double shrink = 0.0;
    for (Index n = 0; n < gamma.size(); ++n) {
        if (gamma(n) == 0.0) {
            detail::require(post.tau_x(n) == 0.0, "gamma", "zero gamma with positive posterior variance");
            continue;  // point-mass prior: posterior variance equals prior variance
        }
        shrink += 1.0 - post.tau_x(n) / gamma(n);
    }
    return ((y - A * post.x_hat).squaredNorm() + sigma2_old * shrink) / static_cast<double>(A.rows());
}

/// chi(gamma) = 0.5 log|Sigma_y| + 0.5 y^T Sigma_y^{-1} y
inline double sbl_cost(const Mat& A, const Vec& y, const Vec& gamma, double sigma2) {
    detail::require(sigma2 > 0.0, "sigma2", "must be positive");
    const auto llt = detail::factor_spd(detail::measurement_covariance(A, gamma, sigma2), "Sigma_y not positive definite");
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const Vec w = llt.matrixL().solve(y);
    return 0.5 * logdet + 0.5 * w.squaredNorm();
}

/// How the working noise variance evolves across EM iterations.
struct NoisePolicy {
    enum class Kind { Fixed, EmUpdate } kind = Kind::Fixed;
    double initial = 0.0;  ///< working sigma^2 (fixed value, or starting point of the EM update)

    static NoisePolicy fixed(double v) { return {Kind::Fixed, v}; }
    static NoisePolicy em_update(double start) { return {Kind::EmUpdate, start}; }
};

struct EmSblOptions {
    int i_max = 1000;
    double eps_em = 1e-10;
    double gamma_init = 1.0;
    NoisePolicy noise = NoisePolicy::fixed(0.0);  ///< initial 0 means 3 * true sigma^2 when solving an SmvProblem
    bool trace_cost = true;
    EStepForm form = EStepForm::Auto;
    const Vec* x_true = nullptr;  ///< when set, the trace also records NMSE
};

struct EmTraceRow {
    int em_iter = 0;
    double chi = 0.0;
    double nmse = std::numeric_limits<double>::quiet_NaN();
    double elapsed_seconds = 0.0;
};

struct EmSblResult {
    Posterior posterior;
    SblState state;
    std::vector<EmTraceRow> trace;  ///< row 0 is the initial gamma
    bool converged = false;
};

/// Exact EM-SBL iterated until the relative change of x_hat drops below eps_em.
inline EmSblResult run_em_sbl(const Mat& A, const Vec& y, const EmSblOptions& opts) {
    detail::require(opts.i_max >= 1, "i_max", "must be >= 1");
    detail::require(opts.eps_em > 0.0, "eps_em", "must be positive");
    detail::require(opts.gamma_init > 0.0, "gamma_init", "must be positive");
    detail::require(opts.noise.initial > 0.0, "sigma2", "must be positive");

    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    const Index N = A.cols();

    EmSblResult res;
    res.state.gamma = Vec::Constant(N, opts.gamma_init);
    res.state.sigma2 = opts.noise.initial;

    auto record = [&](int iter, const Vec* x_hat) {
        if (!opts.trace_cost) return;
        EmTraceRow row;
        row.em_iter = iter;
        row.chi = sbl_cost(A, y, res.state.gamma, res.state.sigma2);
        if (opts.x_true && x_hat) row.nmse = (*x_hat - *opts.x_true).squaredNorm() / opts.x_true->squaredNorm();
        row.elapsed_seconds = std::chrono::duration<double>(clock::now() - start).count();
        res.trace.push_back(row);
    };
    record(0, nullptr);

    Vec x_prev = Vec::Zero(N);
    for (int i = 1; i <= opts.i_max; ++i) {
        res.posterior = e_step_exact(A, y, res.state.gamma, res.state.sigma2, opts.form);
        const Vec gamma_old = res.state.gamma;
        res.state.gamma = m_step_gamma(res.posterior).cwiseMax(kGammaFloor);
        if (opts.noise.kind == NoisePolicy::Kind::EmUpdate)
            res.state.sigma2 = std::max(m_step_sigma2(A, y, res.posterior, gamma_old, res.state.sigma2), kGammaFloor);
        res.state.em_iter = i;
        record(i, &res.posterior.x_hat);
        if (detail::relative_change(res.posterior.x_hat, x_prev) < opts.eps_em) {
            res.converged = true;
            break;
        }
        x_prev = res.posterior.x_hat;
    }
    return res;
}

inline EmSblResult run_em_sbl(const SmvProblem& prob, EmSblOptions opts) {
    if (opts.noise.initial <= 0.0) opts.noise.initial = 3.0 * prob.sigma2;
    if (!opts.x_true) opts.x_true = &prob.x_true;
    return run_em_sbl(prob.A, prob.y, opts);
}

/// CSV with columns em_iter,chi,nmse,elapsed_seconds.
inline void write_em_trace_csv(std::ostream& out, const std::vector<EmTraceRow>& trace) {
    out << "em_iter,chi,nmse,elapsed_seconds\n";
    out << std::setprecision(17);
    for (const auto& r : trace) out << r.em_iter << ',' << r.chi << ',' << r.nmse << ',' << r.elapsed_seconds << '\n';
}

}  // namespace ggamp
