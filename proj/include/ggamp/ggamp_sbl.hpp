#pragma once

// SMV sparse Bayesian learning with the damped GAMP E-step, warm-started
// across EM iterations.

#include "gamp.hpp"
#include "matgen.hpp"
#include "metrics.hpp"
#include "sbl_ref.hpp"

#include <algorithm>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace ggamp {

struct GgampSblOptions {
    /// Fixed damping; when empty, choose_damping(A, safety) picks theta and k_max/eps_gamp below apply.
    std::optional<DampingConfig> damping;
    int k_max = 200;
    double eps_gamp = 1e-10;
    double safety = 1.1;
    /// MMV only: with automatic damping the temporal sweeps use theta_m = ratio * theta.
    double message_damping_ratio = 0.25;

    int i_max = 1000;
    double eps_em = 1e-10;
    double gamma_init = 1.0;
    NoisePolicy noise = NoisePolicy::fixed(0.0);  ///< initial 0 means 3 * true sigma^2 for an SmvProblem
    bool trace_cost = false;

    DampingConfig inner_config() const { return {1.0, 1.0, k_max, eps_gamp}; }

    void validate() const {
        detail::require(i_max >= 1, "i_max", "must be >= 1");
        detail::require(eps_em > 0.0, "eps_em", "must be positive");
        detail::require(gamma_init > 0.0, "gamma_init", "must be positive");
        detail::require(message_damping_ratio > 0.0 && message_damping_ratio <= 1.0, "message_damping_ratio",
                        "must lie in (0, 1]");
        if (damping) damping->validate();
        else inner_config().validate();
    }
};

struct SolveResult {
    Vec x_hat;
    Vec gamma;
    Vec tau_x;
    double sigma2 = 0.0;
    int em_iters = 0;
    long inner_iters_total = 0;
    std::vector<int> inner_iters;        ///< per EM iteration
    std::vector<bool> inner_converged;   ///< per EM iteration; false when k_max was exhausted
    std::vector<double> cost_trace;      ///< chi(gamma^i), i = 0..em_iters, when requested
    bool converged = false;
    DampingConfig damping;
    bool damping_threshold_met = true;
};

/// Inner numerical divergence, carrying the EM iteration and the last finite iterate.
class SolverDivergenceError : public DivergenceError {
public:
    SolverDivergenceError(const DivergenceError& inner, int em_iter, Vec last_x_hat, Vec last_gamma)
        : DivergenceError(inner.iteration(), std::string(inner.what()) + " (EM iteration " + std::to_string(em_iter) + ")"),
          em_iter_(em_iter), last_x_hat_(std::move(last_x_hat)), last_gamma_(std::move(last_gamma)) {}

    int em_iter() const noexcept { return em_iter_; }
    const Vec& last_x_hat() const noexcept { return last_x_hat_; }
    const Vec& last_gamma() const noexcept { return last_gamma_; }

private:
    int em_iter_;
    Vec last_x_hat_;
    Vec last_gamma_;
};

inline SolveResult solve_smv(const Mat& A, const Vec& y, const GgampSblOptions& opts) {
    opts.validate();
    detail::require(opts.noise.initial > 0.0, "sigma2", "working noise variance must be positive");
    detail::require(A.rows() == y.size(), "y", "length must be M");

    const PrecomputedS S(A);
    SolveResult res;
    if (opts.damping) {
        res.damping = *opts.damping;
    } else {
        const auto choice = choose_damping(A, opts.safety, opts.inner_config());
        res.damping = choice.config;
        res.damping_threshold_met = choice.threshold_met;
    }

    res.gamma = Vec::Constant(A.cols(), opts.gamma_init);
    res.sigma2 = opts.noise.initial;
    GampState state = GampState::cold_start(res.gamma, A.rows());
    if (opts.trace_cost) res.cost_trace.push_back(sbl_cost(A, y, res.gamma, res.sigma2));

    Vec x_prev = Vec::Zero(A.cols());
    for (int i = 1; i <= opts.i_max; ++i) {
        GampOutcome inner;
        try {
            inner = gamp_iterate(A, S, y, res.gamma, res.sigma2, state, res.damping);
        } catch (const DivergenceError& e) {
            throw SolverDivergenceError(e, i, x_prev, res.gamma);
        }
        res.inner_iters.push_back(inner.iterations);
        res.inner_converged.push_back(inner.converged);
        res.inner_iters_total += inner.iterations;

        // gamma update and optionally the noise update; the E-step used the current gamma.
        const Vec gamma_used = res.gamma;
        res.gamma = (state.x_hat.cwiseAbs2() + state.tau_x).cwiseMax(kGammaFloor);
        if (opts.noise.kind == NoisePolicy::Kind::EmUpdate) {
            const Posterior post{state.x_hat, state.tau_x, std::nullopt};
            res.sigma2 = std::max(m_step_sigma2(A, y, post, gamma_used, res.sigma2), kGammaFloor);
        }
        res.em_iters = i;
        if (opts.trace_cost) res.cost_trace.push_back(sbl_cost(A, y, res.gamma, res.sigma2));

        // EM stop rule.
        if (detail::relative_change(state.x_hat, x_prev) < opts.eps_em) {
            res.converged = true;
            break;
        }
        x_prev = state.x_hat;
    }
    res.x_hat = state.x_hat;
    res.tau_x = state.tau_x;
    return res;
}

inline SolveResult solve_smv(const SmvProblem& prob, GgampSblOptions opts) {
    if (opts.noise.initial <= 0.0) opts.noise.initial = 3.0 * prob.sigma2;
    return solve_smv(prob.A, prob.y, opts);
}

struct CostDescentRow {
    int em_iter = 0;
    double chi_ggamp = 0.0;
    double chi_exact = 0.0;
};

struct CostDescentReport {
    std::vector<CostDescentRow> rows;  ///< the shorter trace is held at its final value
    std::vector<double> ggamp_trace;
    std::vector<double> exact_trace;
};

/// Paired chi traces of GGAMP-SBL and exact EM-SBL from the same gamma^0 and sigma^2 on one instance.
inline CostDescentReport cost_descent_report(const SmvProblem& prob, GgampSblOptions opts) {
    if (opts.noise.initial <= 0.0) opts.noise.initial = 3.0 * prob.sigma2;
    opts.trace_cost = true;
    const SolveResult g = solve_smv(prob.A, prob.y, opts);

    EmSblOptions em;
    em.i_max = opts.i_max;
    em.eps_em = opts.eps_em;
    em.gamma_init = opts.gamma_init;
    em.noise = opts.noise;
    em.trace_cost = true;
    const EmSblResult e = run_em_sbl(prob.A, prob.y, em);

    CostDescentReport rep;
    rep.ggamp_trace = g.cost_trace;
    for (const auto& row : e.trace) rep.exact_trace.push_back(row.chi);
    const std::size_t len = std::max(rep.ggamp_trace.size(), rep.exact_trace.size());
    for (std::size_t i = 0; i < len; ++i) {
        rep.rows.push_back({static_cast<int>(i), rep.ggamp_trace[std::min(i, rep.ggamp_trace.size() - 1)],
                            rep.exact_trace[std::min(i, rep.exact_trace.size() - 1)]});
    }
    return rep;
}

/// CSV columns: solver,ensemble,parameter,seed,nmse_db,runtime_s,em_iters,inner_iters_total
inline void write_solve_row_csv(std::ostream& out, const std::string& solver, const std::string& ensemble,
                                double parameter, std::uint64_t seed, double nmse_db_value, double runtime_s,
                                const SolveResult& res) {
    out << std::setprecision(17) << solver << ',' << ensemble << ',' << parameter << ',' << seed << ','
        << nmse_db_value << ',' << runtime_s << ',' << res.em_iters << ',' << res.inner_iters_total << '\n';
}

inline constexpr const char* kSolveRowHeader = "solver,ensemble,parameter,seed,nmse_db,runtime_s,em_iters,inner_iters_total";

}  // namespace ggamp
