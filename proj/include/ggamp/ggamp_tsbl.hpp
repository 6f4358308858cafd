#pragma once

// MMV sparse Bayesian learning with AR(1) temporal correlation: per-frame
// damped GAMP "within" updates combined with forward/backward Gaussian
// messages along each row's time chain.
//
// Forward messages N(eta, psi) are always informative (psi is finite since
// frame 1 carries the N(0, gamma) prior), so they are stored in moment form.
// Backward messages are stored in information form (theta/phi, 1/phi) so the
// no-information message into the last frame is simply a zero precision.

#include "gamp.hpp"
#include "ggamp_sbl.hpp"
#include "matgen.hpp"
#include "metrics.hpp"

#include <limits>
#include <ostream>
#include <vector>

namespace ggamp {

struct TemporalMessages {
    Mat eta;         ///< forward means, N x T
    Mat psi;         ///< forward variances, N x T (finite, > 0)
    Mat theta_info;  ///< backward theta/phi, N x T
    Mat phi_inv;     ///< backward precisions 1/phi, N x T; 0 is the no-information message

    static TemporalMessages init(const Vec& gamma, Index T) {
        TemporalMessages m;
        const Index N = gamma.size();
        m.eta = Mat::Zero(N, T);
        m.psi = gamma.replicate(1, T);
        m.theta_info = Mat::Zero(N, T);
        m.phi_inv = Mat::Zero(N, T);
        return m;
    }

    Index frames() const { return eta.cols(); }

    /// Backward mean; 0 where the message carries no information.
    Vec theta(Index t) const {
        Vec out = Vec::Zero(phi_inv.rows());
        for (Index n = 0; n < out.size(); ++n)
            if (phi_inv(n, t) > 0.0) out(n) = theta_info(n, t) / phi_inv(n, t);
        return out;
    }

    /// Backward variance; +inf where the message carries no information.
    Vec phi(Index t) const {
        Vec out(phi_inv.rows());
        for (Index n = 0; n < out.size(); ++n)
            out(n) = phi_inv(n, t) > 0.0 ? 1.0 / phi_inv(n, t) : std::numeric_limits<double>::infinity();
        return out;
    }

    /// Product of the forward and backward messages into frame t: N(mean, var).
    DenoiserOutput combined_prior(Index t) const {
        // var = 1/(1/psi + 1/phi) = psi/(1 + psi/phi); mean = var (eta/psi + theta/phi)
        const auto ps = psi.col(t).array();
        const auto denom = 1.0 + ps * phi_inv.col(t).array();
        DenoiserOutput out;
        out.var = ps / denom;
        out.mean = (eta.col(t).array() + ps * theta_info.col(t).array()) / denom;
        return out;
    }
};

/**
 * Forward sweep (t = 2..T):
 *   eta(t) = beta (r/tau_r + eta/psi)(psi tau_r/(psi + tau_r))
 *   psi(t) = beta^2 (psi tau_r/(psi + tau_r)) + (1 - beta^2) gamma
 * with the frame t-1 quantities on the right. `r_prec` holds 1/tau_r per frame;
 * a zero column means frame t-1 has no measurement message yet.
 */
inline void forward_pass(TemporalMessages& msgs, const Mat& r, const Mat& r_prec, const Vec& gamma, double beta) {
    const Index T = msgs.frames();
    detail::require(r.cols() == T && r_prec.cols() == T, "r", "frame count mismatch");
    msgs.eta.col(0).setZero();
    msgs.psi.col(0) = gamma;
    const double innov = 1.0 - beta * beta;
    for (Index t = 1; t < T; ++t) {
        const auto prec = r_prec.col(t - 1).array() + msgs.psi.col(t - 1).array().inverse();
        const auto info = r.col(t - 1).array() * r_prec.col(t - 1).array() +
                          msgs.eta.col(t - 1).array() / msgs.psi.col(t - 1).array();
        msgs.eta.col(t) = beta * info / prec;
        msgs.psi.col(t) = beta * beta / prec + innov * gamma.array();
    }
}

/**
 * Backward sweep (t = T-1..1):
 *   theta(t) = (1/beta) (r/tau_r + theta/phi)(phi tau_r/(phi + tau_r))
 *   phi(t)   = (1/beta^2) (phi tau_r/(phi + tau_r) + (1 - beta^2) gamma)
 * evaluated in information form, so beta = 0 yields the no-information message.
 */
inline void backward_pass(TemporalMessages& msgs, const Mat& r, const Mat& r_prec, const Vec& gamma, double beta) {
    const Index T = msgs.frames();
    detail::require(r.cols() == T && r_prec.cols() == T, "r", "frame count mismatch");
    msgs.theta_info.col(T - 1).setZero();
    msgs.phi_inv.col(T - 1).setZero();
    const double innov = 1.0 - beta * beta;
    for (Index t = T - 2; t >= 0; --t) {
        const Vec prec = r_prec.col(t + 1) + msgs.phi_inv.col(t + 1);
        const Vec info = r.col(t + 1).cwiseProduct(r_prec.col(t + 1)) + msgs.theta_info.col(t + 1);
        const auto denom = 1.0 + prec.array() * innov * gamma.array();
        msgs.phi_inv.col(t) = beta * beta * prec.array() / denom;
        msgs.theta_info.col(t) = beta * info.array() / denom;
    }
}

/// Per-frame GAMP states plus the temporal messages they exchange.
struct MmvState {
    std::vector<GampState> frames;
    TemporalMessages msgs;
    bool has_r = false;  ///< false until the first within step produced r, tau_r
    Mat r_msg;           ///< damped r per frame feeding the sweeps (N x T), valid once has_r

    static MmvState cold_start(const Vec& gamma, Index rows, Index T) {
        MmvState st;
        for (Index t = 0; t < T; ++t) st.frames.push_back(GampState::cold_start(gamma, rows));
        st.msgs = TemporalMessages::init(gamma.cwiseMax(kGammaFloor), T);
        return st;
    }

    Index T() const { return static_cast<Index>(frames.size()); }

    Mat x_hat() const { return gather([](const GampState& f) -> const Vec& { return f.x_hat; }); }
    Mat tau_x() const { return gather([](const GampState& f) -> const Vec& { return f.tau_x; }); }

    /// Folds the latest per-frame r into r_msg: r_msg = (1 - theta_m) r_msg + theta_m r (plain copy the first time).
    void absorb_r(double theta_m) {
        const Mat r = gather([](const GampState& f) -> const Vec& { return f.r; });
        if (!has_r || theta_m == 1.0) r_msg = r;
        else r_msg = (1.0 - theta_m) * r_msg + theta_m * r;
        has_r = true;
    }

    /// Sweep inputs: r_msg and 1/tau_r per frame (zeros before the first within step).
    std::pair<Mat, Mat> r_messages() const {
        const Index N = frames.front().x_hat.size();
        if (!has_r) return {Mat::Zero(N, T()), Mat::Zero(N, T())};
        Mat prec(N, T());
        for (Index t = 0; t < T(); ++t) prec.col(t) = frames[static_cast<std::size_t>(t)].tau_r.cwiseInverse();
        return {r_msg, std::move(prec)};
    }

private:
    template <typename Get>
    Mat gather(Get get) const {
        Mat out(frames.front().x_hat.size(), T());
        for (Index t = 0; t < T(); ++t) out.col(t) = get(frames[static_cast<std::size_t>(t)]);
        return out;
    }
};

/// Denoiser for one frame: F = (r/tau_r + prior_mean/prior_var)/(1/tau_r + 1/prior_var), G = 1/(...).
struct CombinedPriorDenoiser {
    const DenoiserOutput& prior;

    DenoiserOutput operator()(const Vec& r, const Vec& tau_r) const {
        const Vec gain = prior.var.array() / (prior.var.array() + tau_r.array());
        DenoiserOutput out;
        out.mean = gain.cwiseProduct(r) + (tau_r.array() / (prior.var.array() + tau_r.array()) * prior.mean.array()).matrix();
        out.var = tau_r.cwiseProduct(gain);
        return out;
    }
};

/// One damped GAMP iteration on frame t with the combined temporal prior.
inline void within_update(GampState& frame, const Vec& y, const Mat& A, const PrecomputedS& S,
                          const TemporalMessages& msgs, Index t, double sigma2, const DampingConfig& damping) {
    detail::gamp_output_half(A, S, y, sigma2, damping.theta_s, frame);
    const DenoiserOutput prior = msgs.combined_prior(t);
    detail::gamp_input_half(damping.theta_x, frame, CombinedPriorDenoiser{prior});
}

/**
 * MMV M-step for the AR(1) prior:
 *   gamma_n = (1/T)[ m(1) + 1/(1-beta^2) sum_{t>=2} ( m(t) + beta^2 m(t-1) - 2 beta c(t) ) ]
 * with m(t) = x_hat(t)^2 + tau_x(t) and the cross moment c(t) = x_hat(t) x_hat(t-1) + beta tau_x(t-1).
 */
inline Vec m_step_mmv(const Mat& X_hat, const Mat& Tau_x, double beta) {
    detail::require(std::abs(beta) < 1.0, "beta", "must satisfy |beta| < 1");
    detail::require(X_hat.cols() >= 1, "X_hat", "needs at least one frame");
    detail::require(X_hat.rows() == Tau_x.rows() && X_hat.cols() == Tau_x.cols(), "Tau_x", "shape mismatch");
    const Index T = X_hat.cols();
    const Mat second = X_hat.cwiseAbs2() + Tau_x;
    Vec acc = second.col(0);
    if (T > 1) {
        Vec chain = Vec::Zero(X_hat.rows());
        for (Index t = 1; t < T; ++t) {
            const Vec cross = X_hat.col(t).cwiseProduct(X_hat.col(t - 1)) + beta * Tau_x.col(t - 1);
            chain += second.col(t) + beta * beta * second.col(t - 1) - 2.0 * beta * cross;
        }
        acc += chain / (1.0 - beta * beta);
    }
    return (acc * (1.0 / static_cast<double>(T))).cwiseMax(kGammaFloor);
}

namespace detail {

inline double mean_relative_change(const std::vector<GampState>& frames, const std::vector<Vec>& prev) {
    double acc = 0.0;
    for (std::size_t t = 0; t < frames.size(); ++t) acc += relative_change(frames[t].x_hat, prev[t]);
    return acc / static_cast<double>(frames.size());
}

inline void check_frames_finite(const std::vector<GampState>& frames, int k) {
    for (const auto& f : frames) check_finite(f, k);
}

}  // namespace detail

/**
 * Temporal E-step for fixed gamma: forward messages, within step on every
 * frame, backward messages; stops when the frame-averaged relative change of
 * x_hat drops below eps_gamp.
 */
inline GampOutcome tsbl_e_step(const Mat& A, const PrecomputedS& S, const Mat& Y, const Vec& gamma, double beta,
                               double sigma2, MmvState& state, const DampingConfig& cfg) {
    cfg.validate();
    detail::require(sigma2 > 0.0, "sigma2", "must be positive");
    detail::require(std::abs(beta) < 1.0, "beta", "must satisfy |beta| < 1");
    detail::require(Y.cols() == state.T() && Y.rows() == A.rows(), "Y", "shape mismatch");
    const Index T = state.T();
    const Vec g = gamma.cwiseMax(kGammaFloor);

    // Backward messages from the previous E-step were built with an older gamma.
    if (state.has_r) {
        auto [r, rp] = state.r_messages();
        backward_pass(state.msgs, r, rp, g, beta);
    }

    GampOutcome out;
    std::vector<Vec> prev(static_cast<std::size_t>(T));
    for (int k = 1; k <= cfg.k_max; ++k) {
        {
            auto [r, rp] = state.r_messages();
            forward_pass(state.msgs, r, rp, g, beta);
        }
        for (Index t = 0; t < T; ++t) {
            auto& frame = state.frames[static_cast<std::size_t>(t)];
            prev[static_cast<std::size_t>(t)] = frame.x_hat;
            within_update(frame, Y.col(t), A, S, state.msgs, t, sigma2, cfg);
        }
        detail::check_frames_finite(state.frames, k);
        state.absorb_r(cfg.theta_m);
        {
            auto [r, rp] = state.r_messages();
            backward_pass(state.msgs, r, rp, g, beta);
        }
        out.iterations = k;
        out.last_change = detail::mean_relative_change(state.frames, prev);
        if (out.last_change < cfg.eps_gamp) {
            out.converged = true;
            break;
        }
    }
    return out;
}

struct MmvSolveResult {
    Mat X_hat;  ///< N x T
    Mat Tau_x;  ///< N x T
    Vec gamma;
    double sigma2 = 0.0;
    int em_iters = 0;
    long inner_iters_total = 0;
    std::vector<int> inner_iters;
    std::vector<bool> inner_converged;
    bool converged = false;
    DampingConfig damping;
    bool damping_threshold_met = true;
};

/// MMV EM loop; beta and the working sigma^2 are held fixed (noise policy must be Fixed).
inline MmvSolveResult solve_mmv(const Mat& A, const Mat& Y, double beta, const GgampSblOptions& opts) {
    opts.validate();
    detail::require(opts.noise.kind == NoisePolicy::Kind::Fixed, "sigma2_policy", "MMV supports a fixed sigma^2 only");
    detail::require(opts.noise.initial > 0.0, "sigma2", "working noise variance must be positive");
    detail::require(std::abs(beta) < 1.0, "beta", "must satisfy |beta| < 1");
    detail::require(Y.rows() == A.rows() && Y.cols() >= 1, "Y", "shape mismatch");

    const Index T = Y.cols();
    const PrecomputedS S(A);
    MmvSolveResult res;
    if (opts.damping) {
        res.damping = *opts.damping;
    } else {
        const auto choice = choose_damping(A, opts.safety, opts.inner_config());
        res.damping = choice.config;
        res.damping.theta_m = opts.message_damping_ratio * choice.config.theta_x;
        res.damping_threshold_met = choice.threshold_met;
    }
    res.gamma = Vec::Constant(A.cols(), opts.gamma_init);
    res.sigma2 = opts.noise.initial;
    MmvState state = MmvState::cold_start(res.gamma, A.rows(), T);

    std::vector<Vec> x_prev(static_cast<std::size_t>(T), Vec::Zero(A.cols()));
    for (int i = 1; i <= opts.i_max; ++i) {
        GampOutcome inner;
        try {
            inner = tsbl_e_step(A, S, Y, res.gamma, beta, res.sigma2, state, res.damping);
        } catch (const DivergenceError& e) {
            Mat last(A.cols(), T);
            for (Index t = 0; t < T; ++t) last.col(t) = x_prev[static_cast<std::size_t>(t)];
            throw SolverDivergenceError(e, i, Eigen::Map<const Vec>(last.data(), last.size()), res.gamma);
        }
        res.inner_iters.push_back(inner.iterations);
        res.inner_converged.push_back(inner.converged);
        res.inner_iters_total += inner.iterations;

        res.gamma = m_step_mmv(state.x_hat(), state.tau_x(), beta);
        res.em_iters = i;

        if (detail::mean_relative_change(state.frames, x_prev) < opts.eps_em) {
            res.converged = true;
            break;
        }
        for (Index t = 0; t < T; ++t) x_prev[static_cast<std::size_t>(t)] = state.frames[static_cast<std::size_t>(t)].x_hat;
    }
    res.X_hat = state.x_hat();
    res.Tau_x = state.tau_x();
    return res;
}

inline MmvSolveResult solve_mmv(const MmvProblem& prob, GgampSblOptions opts) {
    if (opts.noise.initial <= 0.0) opts.noise.initial = 3.0 * prob.sigma2;
    return solve_mmv(prob.A, prob.Y, prob.beta, opts);
}

/// CSV rows frame,nmse_db followed by a final "tnmse" row.
inline void write_frame_nmse_csv(std::ostream& out, const Mat& X_hat, const Mat& X_true) {
    out << "frame,nmse_db\n" << std::setprecision(17);
    for (Index t = 0; t < X_true.cols(); ++t) out << t + 1 << ',' << nmse_db(X_hat.col(t), X_true.col(t)) << '\n';
    out << "tnmse," << tnmse_db(X_hat, X_true) << '\n';
}

}  // namespace ggamp
