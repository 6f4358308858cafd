#pragma once

// Independent reference computations for the unit and acceptance tests.
// Nothing here calls into the library's algorithms except decoupled_frames,
// which composes the single-frame GAMP iteration into a reference for the MMV solver.

#include <ggamp/ggamp.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

using ggamp::Index;
using ggamp::Mat;
using ggamp::Vec;

/// Trapezoidal integral of f over [lo, hi]; spectrally accurate for smooth integrands that vanish at both ends.
inline double integrate(const std::function<double(double)>& f, double lo, double hi, int points = 40001) {
    const double h = (hi - lo) / (points - 1);
    double acc = 0.5 * (f(lo) + f(hi));
    for (int i = 1; i < points - 1; ++i) acc += f(lo + i * h);
    return acc * h;
}

inline double gauss_pdf(double x, double mean, double var) {
    return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2.0 * M_PI * var);
}

struct ScalarMoments {
    double mean = 0.0;
    double var = 0.0;
};

/// Posterior of x ~ N(0, gamma) after observing r = x + N(0, tau_r), by numerical integration.
inline ScalarMoments input_channel(double r, double tau_r, double gamma) {
    const double half = 12.0 * std::sqrt(std::max(gamma, tau_r)) + std::abs(r);
    auto w = [&](double x) { return gauss_pdf(x, 0.0, gamma) * gauss_pdf(r, x, tau_r); };
    const double z = integrate(w, -half, half);
    const double m1 = integrate([&](double x) { return x * w(x); }, -half, half) / z;
    const double m2 = integrate([&](double x) { return x * x * w(x); }, -half, half) / z;
    return {m1, m2 - m1 * m1};
}

/// Posterior of z ~ N(zbar, vz) after observing y = z + N(0, sigma2), by numerical integration.
inline ScalarMoments output_channel(double zbar, double vz, double y, double sigma2) {
    const double half = 12.0 * std::sqrt(std::max(vz, sigma2)) + std::abs(zbar) + std::abs(y);
    auto w = [&](double z) { return gauss_pdf(z, zbar, vz) * gauss_pdf(y, z, sigma2); };
    const double norm = integrate(w, -half, half);
    const double m1 = integrate([&](double z) { return z * w(z); }, -half, half) / norm;
    const double m2 = integrate([&](double z) { return z * z * w(z); }, -half, half) / norm;
    return {m1, m2 - m1 * m1};
}

/// Dense posterior N(mean, cov) of x ~ N(0, diag(gamma)) given y = A x + N(0, sigma2 I), via QR least squares.
struct DensePosterior {
    Vec mean;
    Mat cov;
};

inline DensePosterior dense_posterior(const Mat& A, const Vec& y, const Vec& gamma, double sigma2) {
    // Stack the whitened likelihood and prior rows: [A/sigma; diag(1/sqrt(gamma))] x ~ [y/sigma; 0].
    const Index M = A.rows();
    const Index N = A.cols();
    Mat B(M + N, N);
    B.topRows(M) = A / std::sqrt(sigma2);
    B.bottomRows(N) = gamma.cwiseSqrt().cwiseInverse().asDiagonal();
    Vec c = Vec::Zero(M + N);
    c.head(M) = y / std::sqrt(sigma2);
    Eigen::HouseholderQR<Mat> qr(B);
    DensePosterior out;
    out.mean = qr.solve(c);
    const Mat R = qr.matrixQR().topRows(N).triangularView<Eigen::Upper>();
    const Mat Rinv = R.triangularView<Eigen::Upper>().solve(Mat::Identity(N, N));
    out.cov = Rinv * Rinv.transpose();
    return out;
}

/// 0.5 log|Sy| + 0.5 y^T Sy^{-1} y with the log-determinant from an eigen-decomposition.
inline double sbl_cost_eig(const Mat& A, const Vec& y, const Vec& gamma, double sigma2) {
    Mat Sy = A * gamma.asDiagonal() * A.transpose();
    Sy.diagonal().array() += sigma2;
    Eigen::SelfAdjointEigenSolver<Mat> es(Sy);
    const Vec proj = es.eigenvectors().transpose() * y;
    double logdet = 0.0;
    double quad = 0.0;
    for (Index i = 0; i < Sy.rows(); ++i) {
        logdet += std::log(es.eigenvalues()(i));
        quad += proj(i) * proj(i) / es.eigenvalues()(i);
    }
    return 0.5 * logdet + 0.5 * quad;
}

/// E||y - A x||^2 under N(mean, cov) by the symmetric 2N sigma-point rule (exact for quadratics).
inline double expected_residual(const Mat& A, const Vec& y, const Vec& mean, const Mat& cov) {
    const Index N = mean.size();
    const Mat L = cov.llt().matrixL();
    const double spread = std::sqrt(static_cast<double>(N));
    double acc = 0.0;
    for (Index n = 0; n < N; ++n) {
        for (double sign : {-1.0, 1.0}) acc += (y - A * (mean + sign * spread * L.col(n))).squaredNorm();
    }
    return acc / (2.0 * static_cast<double>(N));
}

/// Textbook GAMP for a N(0, gamma) prior and AWGN output, variance form, no damping.
/// Returns x_hat after each iteration from x_hat = 0, s_hat = 0, tau_x = gamma.
inline std::vector<Vec> reference_gamp_trace(const Mat& A, const Vec& y, const Vec& gamma, double sigma2, int iters) {
    const Index M = A.rows();
    const Index N = A.cols();
    Vec x = Vec::Zero(N);
    Vec vx = gamma;
    Vec shat = Vec::Zero(M);
    std::vector<Vec> trace;
    for (int k = 0; k < iters; ++k) {
        Vec vp(M), phat(M), vs(M);
        for (Index m = 0; m < M; ++m) {
            double v = 0.0, z = 0.0;
            for (Index n = 0; n < N; ++n) {
                v += A(m, n) * A(m, n) * vx(n);
                z += A(m, n) * x(n);
            }
            vp(m) = v;
            phat(m) = z - v * shat(m);
            shat(m) = (y(m) - phat(m)) / (v + sigma2);
            vs(m) = 1.0 / (v + sigma2);
        }
        for (Index n = 0; n < N; ++n) {
            double prec = 0.0, corr = 0.0;
            for (Index m = 0; m < M; ++m) {
                prec += A(m, n) * A(m, n) * vs(m);
                corr += A(m, n) * shat(m);
            }
            const double vr = 1.0 / prec;
            const double rhat = x(n) + vr * corr;
            x(n) = gamma(n) * rhat / (gamma(n) + vr);
            vx(n) = gamma(n) * vr / (gamma(n) + vr);
        }
        trace.push_back(x);
    }
    return trace;
}

/// Prior covariance of one AR(1) row over T frames: gamma beta^|a-b|.
inline Mat ar1_covariance(double gamma, double beta, Index T) {
    Mat C(T, T);
    for (Index a = 0; a < T; ++a)
        for (Index b = 0; b < T; ++b) C(a, b) = gamma * std::pow(beta, static_cast<double>(std::abs(a - b)));
    return C;
}

struct ChainMessages {
    Mat eta, psi;               ///< forward mean/variance into each frame (row n, column t)
    Mat theta_info, phi_inv;    ///< backward information and precision into each frame
};

/**
 * Exact messages on each row's chain from dense joint Gaussians.
 * Observations r(t) = x(t) + N(0, 1/r_prec(t)); a zero precision means no observation.
 * Forward into t: marginal of x(t) given r(1..t-1). Backward into t: likelihood of r(t+1..T) as a function of x(t).
 */
inline ChainMessages chain_messages(const Mat& r, const Mat& r_prec, const Vec& gamma, double beta) {
    const Index N = r.rows();
    const Index T = r.cols();
    ChainMessages out{Mat(N, T), Mat(N, T), Mat(N, T), Mat(N, T)};
    for (Index n = 0; n < N; ++n) {
        const Mat C = ar1_covariance(gamma(n), beta, T);
        for (Index t = 0; t < T; ++t) {
            // Forward: condition x(t) on r(0..t-1) with Cov(r) = C + diag(1/prec).
            if (t == 0) {
                out.eta(n, t) = 0.0;
                out.psi(n, t) = C(0, 0);
            } else {
                Mat Crr = C.topLeftCorner(t, t);
                for (Index s = 0; s < t; ++s) Crr(s, s) += 1.0 / r_prec(n, s);
                const Vec cxr = C.block(t, 0, 1, t).transpose();
                const Vec robs = r.block(n, 0, 1, t).transpose();
                const Eigen::LDLT<Mat> ldlt(Crr);
                out.eta(n, t) = cxr.dot(ldlt.solve(robs));
                out.psi(n, t) = C(t, t) - cxr.dot(ldlt.solve(cxr));
            }
            // Backward: r(s) | x(t) for s > t has mean beta^(s-t) x(t) and covariance
            // Cov(x(s), x(s') | x(t)) + diag(1/prec).
            const Index L = T - 1 - t;
            if (L == 0) {
                out.theta_info(n, t) = 0.0;
                out.phi_inv(n, t) = 0.0;
                continue;
            }
            Vec c(L);
            Mat K(L, L);
            for (Index a = 0; a < L; ++a) {
                c(a) = std::pow(beta, static_cast<double>(a + 1));
                for (Index b = 0; b < L; ++b) K(a, b) = C(t + 1 + a, t + 1 + b) - C(t + 1 + a, t) * C(t, t + 1 + b) / C(t, t);
                K(a, a) += 1.0 / r_prec(n, t + 1 + a);
            }
            const Vec robs = r.block(n, t + 1, 1, L).transpose();
            const Eigen::LDLT<Mat> ldlt(K);
            out.phi_inv(n, t) = c.dot(ldlt.solve(c));
            out.theta_info(n, t) = c.dot(ldlt.solve(robs));
        }
    }
    return out;
}

/// Minimizer over gamma of E[-log p(x(1..T); gamma)] for one AR(1) row, by golden-section search on log gamma.
/// `m` holds E[x(t)^2] and `c` holds E[x(t) x(t-1)] (c(0) unused).
inline double ar1_ml_gamma(const Vec& m, const Vec& c, double beta) {
    const Index T = m.size();
    const double innov = 1.0 - beta * beta;
    auto objective = [&](double log_g) {
        const double g = std::exp(log_g);
        double val = 0.5 * std::log(g) + m(0) / (2.0 * g);
        for (Index t = 1; t < T; ++t) {
            const double e2 = m(t) - 2.0 * beta * c(t) + beta * beta * m(t - 1);
            val += 0.5 * std::log(innov * g) + e2 / (2.0 * innov * g);
        }
        return val;
    };
    double lo = std::log(1e-8), hi = std::log(1e8);
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = hi - phi * (hi - lo), b = lo + phi * (hi - lo);
    double fa = objective(a), fb = objective(b);
    for (int it = 0; it < 300; ++it) {
        if (fa < fb) {
            hi = b;
            b = a;
            fb = fa;
            a = hi - phi * (hi - lo);
            fa = objective(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + phi * (hi - lo);
            fb = objective(b);
        }
    }
    return std::exp(0.5 * (lo + hi));
}

/**
 * Exact joint smoother for all frames: x stacked frame by frame, prior from the per-row AR(1)
 * covariances, y(t) = A x(t) + N(0, sigma2 I). Returns the N x T posterior mean.
 */
inline Mat joint_smoother(const Mat& A, const Mat& Y, const Vec& gamma, double beta, double sigma2) {
    const Index N = A.cols();
    const Index T = Y.cols();
    Mat P = Mat::Zero(N * T, N * T);
    for (Index n = 0; n < N; ++n) {
        const Mat C = ar1_covariance(gamma(n), beta, T);
        for (Index a = 0; a < T; ++a)
            for (Index b = 0; b < T; ++b) P(a * N + n, b * N + n) = C(a, b);
    }
    Mat Lam = P.llt().solve(Mat::Identity(N * T, N * T));
    Vec h(N * T);
    const Mat AtA = A.transpose() * A / sigma2;
    for (Index t = 0; t < T; ++t) {
        Lam.block(t * N, t * N, N, N) += AtA;
        h.segment(t * N, N) = A.transpose() * Y.col(t) / sigma2;
    }
    const Vec mu = Lam.llt().solve(h);
    return Eigen::Map<const Mat>(mu.data(), N, T);
}

/// Genie estimate through the N-side normal equations (Abar^T Abar + sigma2 I) x = Abar^T y, solved by QR.
inline Vec genie_normal_equations(const Mat& A, const Vec& y, double sigma2, const std::vector<Index>& support) {
    const Index K = static_cast<Index>(support.size());
    Mat Ab(A.rows(), K);
    for (Index j = 0; j < K; ++j) Ab.col(j) = A.col(support[static_cast<std::size_t>(j)]);
    Mat G = Ab.transpose() * Ab;
    G.diagonal().array() += sigma2;
    const Vec on = G.colPivHouseholderQr().solve(Ab.transpose() * y);
    Vec x = Vec::Zero(A.cols());
    for (Index j = 0; j < K; ++j) x(support[static_cast<std::size_t>(j)]) = on(j);
    return x;
}

/**
 * T independent GAMP chains (one undamped-message iteration per frame per inner step) sharing gamma
 * only through the averaged M-step. Uses the same stop rules as the MMV solver so that, at beta = 0,
 * the two must agree.
 */
struct DecoupledResult {
    Mat X_hat;
    Vec gamma;
    int em_iters = 0;
};

inline DecoupledResult decoupled_frames(const Mat& A, const Mat& Y, double sigma2, const ggamp::GgampSblOptions& o) {
    using namespace ggamp;
    const Index N = A.cols();
    const Index T = Y.cols();
    DampingConfig cfg = choose_damping(A, o.safety, o.inner_config()).config;
    cfg.k_max = 1;
    const PrecomputedS S(A);
    DecoupledResult out;
    out.gamma = Vec::Constant(N, o.gamma_init);
    std::vector<GampState> st(static_cast<std::size_t>(T), GampState::cold_start(out.gamma, A.rows()));
    std::vector<Vec> prev(static_cast<std::size_t>(T), Vec::Zero(N));
    for (int i = 1; i <= o.i_max; ++i) {
        out.em_iters = i;
        for (int k = 1; k <= o.k_max; ++k) {
            double change = 0.0;
            for (Index t = 0; t < T; ++t) {
                auto& f = st[static_cast<std::size_t>(t)];
                const Vec before = f.x_hat;
                gamp_iterate(A, S, Y.col(t), out.gamma, sigma2, f, cfg);
                change += (f.x_hat - before).squaredNorm() / f.x_hat.squaredNorm();
            }
            if (change / static_cast<double>(T) < o.eps_gamp) break;
        }
        Vec acc = Vec::Zero(N);
        double em_change = 0.0;
        for (Index t = 0; t < T; ++t) {
            const auto& f = st[static_cast<std::size_t>(t)];
            acc += f.x_hat.cwiseAbs2() + f.tau_x;
            em_change += (f.x_hat - prev[static_cast<std::size_t>(t)]).squaredNorm() / f.x_hat.squaredNorm();
            prev[static_cast<std::size_t>(t)] = f.x_hat;
        }
        out.gamma = (acc / static_cast<double>(T)).cwiseMax(kGammaFloor);
        if (em_change / static_cast<double>(T) < o.eps_em) break;
    }
    out.X_hat = Mat(N, T);
    for (Index t = 0; t < T; ++t) out.X_hat.col(t) = st[static_cast<std::size_t>(t)].x_hat;
    return out;
}

inline double rel_err(const Vec& a, const Vec& b) { return (a - b).norm() / b.norm(); }
inline double rel_err(const Mat& a, const Mat& b) { return (a - b).norm() / b.norm(); }

}  // namespace oracle
