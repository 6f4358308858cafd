#pragma once

// Damped Gaussian GAMP for a N(0, Gamma) prior and an AWGN likelihood.
//
// Conventions: tau_p is a precision (1/tau_p = S tau_x) and p/tau_p is the
// running estimate of z = A x, so s carries the sign of (A x - y). tau_r and
// tau_x are variances. Damping applies to s and x_hat only.

#include "types.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <random>
#include <utility>

namespace ggamp {

/// All inner-loop vectors of one GAMP instance.
struct GampState {
    Vec x_hat;
    Vec tau_x;
    Vec s;
    Vec tau_s;
    Vec r;
    Vec tau_r;
    Vec p;
    Vec tau_p;

    /// x_hat = 0, s = 0, tau_x = gamma (floored); the remaining vectors are sized but unset.
    static GampState cold_start(const Vec& gamma, Index rows) {
        GampState st;
        st.x_hat = Vec::Zero(gamma.size());
        st.tau_x = gamma.cwiseMax(kGammaFloor);
        st.s = Vec::Zero(rows);
        st.tau_s = Vec::Zero(rows);
        st.r = Vec::Zero(gamma.size());
        st.tau_r = Vec::Zero(gamma.size());
        st.p = Vec::Zero(rows);
        st.tau_p = Vec::Zero(rows);
        return st;
    }
};

struct DampingConfig {
    double theta_s = 1.0;
    double theta_x = 1.0;
    int k_max = 200;
    double eps_gamp = 1e-10;
    double theta_m = 1.0;  ///< damping of the r inputs to the temporal message sweeps (MMV only)

    void validate() const {
        detail::require(theta_s > 0.0 && theta_s <= 1.0, "theta_s", "must lie in (0, 1]");
        detail::require(theta_x > 0.0 && theta_x <= 1.0, "theta_x", "must lie in (0, 1]");
        detail::require(k_max >= 1, "k_max", "must be >= 1");
        detail::require(eps_gamp > 0.0, "eps_gamp", "must be positive");
        detail::require(theta_m > 0.0 && theta_m <= 1.0, "theta_m", "must lie in (0, 1]");
    }
};

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/**
 * Entry-wise square of A, computed once per problem.
 *
 * Stored only while A and S fit together in kStoreBudgetBytes. Past that, a
 * row-major copy of A is kept instead and the output half runs as one fused
 * pass over the rows, squaring entries on the fly, so A is streamed once per
 * GAMP iteration rather than A and S twice each.
 */
struct PrecomputedS {
    static constexpr std::size_t kStoreBudgetBytes = std::size_t{2} << 20;

    Mat S;
    RowMat A_rows;  ///< set only when S is not stored

    PrecomputedS() = default;
    explicit PrecomputedS(const Mat& A)
        : PrecomputedS(A, 2 * sizeof(double) * static_cast<std::size_t>(A.size()) <= kStoreBudgetBytes) {}
    PrecomputedS(const Mat& A, bool store) {
        if (store) S = A.cwiseAbs2();
        else A_rows = A;
    }

    bool stored() const noexcept { return S.size() > 0; }
};

/// Posterior mean and variance of x_n from a scalar denoiser.
struct DenoiserOutput {
    Vec mean;
    Vec var;
};

/// g_x(r, tau_r) = gamma/(gamma + tau_r) r and g'_x = gamma/(gamma + tau_r).
struct GxResult {
    Vec x_hat;
    Vec derivative;
};

inline GxResult gx_gaussian(const Vec& r, const Vec& tau_r, const Vec& gamma) {
    GxResult out;
    out.derivative = gamma.array() / (gamma.array() + tau_r.array());
    out.x_hat = out.derivative.cwiseProduct(r);
    return out;
}

/// g_s(p, tau_p) = (p/tau_p - y)/(sigma^2 + 1/tau_p) and tau_s = tau_p g'_s = 1/(sigma^2 + 1/tau_p).
struct GsResult {
    Vec s_raw;
    Vec tau_s;
};

inline GsResult gs_awgn(const Vec& p, const Vec& tau_p, const Vec& y, double sigma2) {
    GsResult out;
    out.tau_s = (sigma2 + tau_p.array().inverse()).inverse();
    out.s_raw = (p.array() / tau_p.array() - y.array()) * out.tau_s.array();
    return out;
}

/// Per-iteration diagnostic: (iteration index, relative change of x_hat, state after the iteration).
using GampTraceHook = std::function<void(int, double, const GampState&)>;

struct GampOutcome {
    int iterations = 0;
    bool converged = false;
    double last_change = std::numeric_limits<double>::infinity();
};

namespace detail {

/// Output side: updates tau_p, p, tau_s, s (damped), tau_r, r.
inline void gamp_output_half(const Mat& A, const PrecomputedS& S, const Vec& y, double sigma2, double theta_s,
                             GampState& st) {
    constexpr double tiny = std::numeric_limits<double>::min();
    if (S.stored()) {
        // A zero row of S (or tau_x) would give an infinite precision.
        st.tau_p = (S.S * st.tau_x).cwiseMax(tiny).cwiseInverse();
        st.p = st.s + st.tau_p.cwiseProduct(A * st.x_hat);
        auto gs = gs_awgn(st.p, st.tau_p, y, sigma2);
        st.tau_s = std::move(gs.tau_s);
        st.s = (1.0 - theta_s) * st.s + theta_s * gs.s_raw;
        st.tau_r = (S.S.transpose() * st.tau_s).cwiseMax(tiny).cwiseInverse();
        st.r = st.x_hat - st.tau_r.cwiseProduct(A.transpose() * st.s);
        return;
    }

    // Same steps, one row at a time: everything up to s is element-wise in the row index,
    // so each row feeds the tau_r and r accumulations while still in cache.
    const RowMat& Ar = S.A_rows;
    Vec q = Vec::Zero(A.cols());
    Vec w = Vec::Zero(A.cols());
    for (Index m = 0; m < Ar.rows(); ++m) {
        const auto a = Ar.row(m).transpose();
        const double tau_p = 1.0 / std::max(a.cwiseAbs2().dot(st.tau_x), tiny);
        const double p = st.s(m) + tau_p * a.dot(st.x_hat);
        const double tau_s = 1.0 / (sigma2 + 1.0 / tau_p);
        const double s_raw = (p / tau_p - y(m)) * tau_s;
        st.tau_p(m) = tau_p;
        st.p(m) = p;
        st.tau_s(m) = tau_s;
        st.s(m) = (1.0 - theta_s) * st.s(m) + theta_s * s_raw;
        q.noalias() += st.s(m) * a;
        w.noalias() += tau_s * a.cwiseAbs2();
    }
    st.tau_r = w.cwiseMax(tiny).cwiseInverse();
    st.r = st.x_hat - st.tau_r.cwiseProduct(q);
}

/// Input side with an arbitrary Gaussian-family denoiser.
template <typename Denoiser>
void gamp_input_half(double theta_x, GampState& st, Denoiser&& denoise) {
    DenoiserOutput d = denoise(st.r, st.tau_r);
    st.tau_x = std::move(d.var);
    st.x_hat = (1.0 - theta_x) * st.x_hat + theta_x * d.mean;
}

inline void check_finite(const GampState& st, int k) {
    if (!st.x_hat.allFinite() || !st.s.allFinite() || !st.tau_x.allFinite() || !st.r.allFinite())
        throw DivergenceError("non-finite GAMP state", k);
}

}  // namespace detail

/// Runs damped GAMP from `state` (cold or warm) with a user denoiser until the relative change of x_hat drops below eps_gamp or k_max.
template <typename Denoiser>
GampOutcome gamp_run(const Mat& A, const PrecomputedS& S, const Vec& y, double sigma2, GampState& state,
                     const DampingConfig& cfg, Denoiser&& denoise, const GampTraceHook& hook = {}) {
    cfg.validate();
    detail::require(sigma2 > 0.0, "sigma2", "must be positive");
    detail::require(A.rows() == y.size(), "y", "length must be M");
    detail::require(S.stored() ? (S.S.rows() == A.rows() && S.S.cols() == A.cols())
                               : (S.A_rows.rows() == A.rows() && S.A_rows.cols() == A.cols()),
                    "S", "shape mismatch");
    detail::require(state.x_hat.size() == A.cols() && state.s.size() == A.rows() && state.tau_x.size() == A.cols(),
                    "state", "shape mismatch");

    GampOutcome out;
    for (int k = 1; k <= cfg.k_max; ++k) {
        const Vec x_prev = state.x_hat;
        detail::gamp_output_half(A, S, y, sigma2, cfg.theta_s, state);
        detail::gamp_input_half(cfg.theta_x, state, denoise);
        detail::check_finite(state, k);
        out.iterations = k;
        out.last_change = detail::relative_change(state.x_hat, x_prev);
        if (hook) hook(k, out.last_change, state);
        if (out.last_change < cfg.eps_gamp) {
            out.converged = true;
            break;
        }
    }
    return out;
}

/// Gaussian-prior denoiser N(0, gamma).
struct GaussianPriorDenoiser {
    const Vec& gamma;

    DenoiserOutput operator()(const Vec& r, const Vec& tau_r) const {
        auto g = gx_gaussian(r, tau_r, gamma);
        return {std::move(g.x_hat), tau_r.cwiseProduct(g.derivative)};
    }
};

/// GGAMP E-step for fixed gamma and sigma2.
inline GampOutcome gamp_iterate(const Mat& A, const PrecomputedS& S, const Vec& y, const Vec& gamma, double sigma2,
                                GampState& state, const DampingConfig& cfg, const GampTraceHook& hook = {}) {
    detail::require(gamma.size() == A.cols(), "gamma", "length must be N");
    detail::require((gamma.array() >= 0.0).all(), "gamma", "must be non-negative");
    return gamp_run(A, S, y, sigma2, state, cfg, GaussianPriorDenoiser{gamma}, hook);
}

/// Omega(theta_s, theta_x) = 2[(2 - theta_x) N + theta_x M] / (theta_x theta_s M N)
inline double damping_threshold(double theta_s, double theta_x, Index M, Index N) {
    detail::require(theta_s > 0.0 && theta_s <= 1.0, "theta_s", "must lie in (0, 1]");
    detail::require(theta_x > 0.0 && theta_x <= 1.0, "theta_x", "must lie in (0, 1]");
    detail::require(M >= 1 && N >= 1, "M", "dimensions must be positive");
    const double m = static_cast<double>(M);
    const double n = static_cast<double>(N);
    return 2.0 * ((2.0 - theta_x) * n + theta_x * m) / (theta_x * theta_s * m * n);
}

/// Largest eigenvalue of A^T A by power iteration (relative tolerance on the estimate).
inline double spectral_norm_sq(const Mat& A, double rel_tol = 1e-4, int max_iter = 1000) {
    const Index N = A.cols();
    std::mt19937_64 rng(0x5eed);
    std::normal_distribution<double> unit(0.0, 1.0);
    Vec v(N);
    for (Index n = 0; n < N; ++n) v(n) = unit(rng);
    v.normalize();
    double est = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        Vec w = A.transpose() * (A * v);
        const double next = v.dot(w);
        const double norm = w.norm();
        if (norm == 0.0) return 0.0;
        v = w / norm;
        if (it > 0 && std::abs(next - est) <= rel_tol * std::abs(next)) return next;
        est = next;
    }
    return est;
}

struct DampingChoice {
    DampingConfig config;
    double spectral_ratio = 0.0;   ///< ||A||_2^2 / ||A||_F^2
    bool threshold_met = true;     ///< false when even the smallest grid theta misses the bound
};

/**
 * Picks theta = theta_s = theta_x as the largest value on {1.0, 0.9, ..., 0.1}
 * with Omega(theta, theta) >= safety * ||A||_2^2 / ||A||_F^2.
 *
 * The spectral norm is estimated once here; the result is meant to be fixed
 * for all EM iterations on this matrix.
 */
inline DampingChoice choose_damping(const Mat& A, double safety = 1.1, DampingConfig base = {}) {
    const double fro = A.squaredNorm();
    detail::require(fro > 0.0, "A", "must be non-zero");
    detail::require(safety >= 0.0, "safety", "must be non-negative");

    DampingChoice out;
    out.config = base;
    out.spectral_ratio = spectral_norm_sq(A) / fro;
    const double bound = safety * out.spectral_ratio;
    for (int step = 10; step >= 1; --step) {
        const double theta = step / 10.0;
        if (damping_threshold(theta, theta, A.rows(), A.cols()) >= bound) {
            out.config.theta_s = out.config.theta_x = theta;
            return out;
        }
    }
    out.config.theta_s = out.config.theta_x = 0.1;
    out.threshold_met = false;
    return out;
}

}  // namespace ggamp
