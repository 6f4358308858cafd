#pragma once

// Experiment harness: plan files, a seeded sweep over (point, seed) cells run
// in a worker pool, CSV result records and per-point summaries.
//
// Plan file keys (key = value, lists comma separated):
//
//   ensemble   = column_correlated          # one or more ensemble kinds
//   parameters = 0, 0.45, 0.9               # deviation grid
//   n          = 200                        # one or more N
//   m_over_n   = 0.5                        # or: m = 100
//   lambda     = 0.2                        # or: k = 40, or: k_rule = undersampling (K = round(M/3))
//   t = 1, beta = 0, snr_db = 60
//   solvers    = em_sbl, ggamp_sbl, genie   # em_sbl | ggamp_sbl | ggamp_tsbl | genie | sks
//   seeds = 30, seed_base = 1, workers = 1
//   output     = results.csv
//   theta, theta_m, message_damping_ratio, eps_gamp, eps_em, k_max, i_max,
//   sigma2_policy (fixed | em), sigma2_scale

#include "config.hpp"
#include "ggamp_sbl.hpp"
#include "ggamp_tsbl.hpp"
#include "matgen.hpp"
#include "metrics.hpp"
#include "oracles.hpp"
#include "sbl_ref.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace ggamp {

/// Signal seed offset: instance seed s draws A from s and the signal and noise from s + kSignalSeedOffset.
inline constexpr std::uint64_t kSignalSeedOffset = 1000003;

/// One sweep point; each (point, seed) pair is one problem instance shared by all solvers.
struct PlanPoint {
    EnsembleKind kind = EnsembleKind::IidGaussian;
    double parameter = 0.0;
    Index n = 0;
    Index m = 0;
    Index k = 0;
    Index t = 1;
    double beta = 0.0;
    double snr_db = 60.0;

    EnsembleSpec ensemble(std::uint64_t seed) const { return {kind, m, n, parameter, seed}; }
};

struct ExperimentPlan {
    std::vector<EnsembleKind> kinds{EnsembleKind::IidGaussian};
    std::vector<double> parameters{0.0};
    std::vector<long long> ns{200};
    std::vector<long long> ms;          ///< explicit M grid; empty means m_over_n
    std::vector<double> m_over_n{0.5};
    std::optional<long long> k;         ///< explicit K; otherwise lambda or the undersampling rule
    double lambda = 0.2;
    bool undersampling = false;
    long long t = 1;
    double beta = 0.0;
    std::vector<double> snr_db{60.0};
    std::vector<std::string> solvers{"ggamp_sbl"};
    int seeds = 30;
    std::uint64_t seed_base = 1;
    int workers = 1;
    std::string output;
    GgampSblOptions options;
    double sigma2_scale = 3.0;  ///< working sigma^2 = scale * true sigma^2 (also the EM-update initial value)

    static ExperimentPlan from_config(const KeyValueConfig& cfg) {
        ExperimentPlan plan;
        if (cfg.has("ensemble")) {
            plan.kinds.clear();
            for (const auto& name : cfg.get_strings("ensemble")) plan.kinds.push_back(parse_ensemble_kind(name));
        }
        if (cfg.has("parameters")) plan.parameters = cfg.get_doubles("parameters");
        if (cfg.has("n")) plan.ns = cfg.get_ints("n");
        if (cfg.has("m")) plan.ms = cfg.get_ints("m");
        if (cfg.has("m_over_n")) plan.m_over_n = cfg.get_doubles("m_over_n");
        if (cfg.has("k")) plan.k = cfg.get_int("k");
        plan.lambda = cfg.get_double_or("lambda", plan.lambda);
        if (cfg.has("k_rule")) {
            const auto rule = cfg.get("k_rule");
            detail::require(rule == "undersampling" || rule == "lambda", "k_rule", "must be lambda or undersampling");
            plan.undersampling = rule == "undersampling";
        }
        plan.t = cfg.get_int_or("t", plan.t);
        plan.beta = cfg.get_double_or("beta", plan.beta);
        if (cfg.has("snr_db")) plan.snr_db = cfg.get_doubles("snr_db");
        if (cfg.has("solvers")) plan.solvers = cfg.get_strings("solvers");
        plan.seeds = static_cast<int>(cfg.get_int_or("seeds", plan.seeds));
        const auto base = cfg.get_int_or("seed_base", static_cast<long long>(plan.seed_base));
        detail::require(base >= 0, "seed_base", "must be non-negative");
        plan.seed_base = static_cast<std::uint64_t>(base);
        plan.workers = static_cast<int>(cfg.get_int_or("workers", plan.workers));
        plan.output = cfg.get_or("output", plan.output);

        auto& o = plan.options;
        o.message_damping_ratio = cfg.get_double_or("message_damping_ratio", o.message_damping_ratio);
        if (cfg.has("theta")) {
            const double theta = cfg.get_double("theta");
            o.damping = DampingConfig{theta, theta, o.k_max, o.eps_gamp,
                                      cfg.get_double_or("theta_m", o.message_damping_ratio * theta)};
        }
        o.k_max = static_cast<int>(cfg.get_int_or("k_max", o.k_max));
        o.eps_gamp = cfg.get_double_or("eps_gamp", o.eps_gamp);
        o.i_max = static_cast<int>(cfg.get_int_or("i_max", o.i_max));
        o.eps_em = cfg.get_double_or("eps_em", o.eps_em);
        o.gamma_init = cfg.get_double_or("gamma_init", o.gamma_init);
        o.safety = cfg.get_double_or("safety", o.safety);
        if (o.damping) {
            o.damping->k_max = o.k_max;
            o.damping->eps_gamp = o.eps_gamp;
        }
        const auto policy = cfg.get_or("sigma2_policy", "fixed");
        detail::require(policy == "fixed" || policy == "em", "sigma2_policy", "must be fixed or em");
        o.noise.kind = policy == "em" ? NoisePolicy::Kind::EmUpdate : NoisePolicy::Kind::Fixed;
        plan.sigma2_scale = cfg.get_double_or("sigma2_scale", plan.sigma2_scale);
        plan.validate();
        return plan;
    }

    static ExperimentPlan load(const std::string& path) { return from_config(KeyValueConfig::load(path)); }

    /// With `check_solver_names` false, solver names are left for the caller's table to check.
    void validate(bool check_solver_names = true) const {
        detail::require(!kinds.empty(), "ensemble", "grid must be non-empty");
        detail::require(!parameters.empty(), "parameters", "grid must be non-empty");
        detail::require(!ns.empty(), "n", "grid must be non-empty");
        detail::require(!ms.empty() || !m_over_n.empty(), "m", "grid must be non-empty");
        detail::require(!snr_db.empty(), "snr_db", "grid must be non-empty");
        detail::require(!solvers.empty(), "solvers", "list must be non-empty");
        detail::require(seeds >= 1, "seeds", "must be >= 1");
        detail::require(workers >= 1, "workers", "must be >= 1");
        detail::require(t >= 1, "t", "must be >= 1");
        detail::require(std::abs(beta) < 1.0, "beta", "must satisfy |beta| < 1");
        detail::require(sigma2_scale > 0.0, "sigma2_scale", "must be positive");
        if (!k) detail::require(undersampling || (lambda > 0.0 && lambda <= 1.0), "lambda", "must lie in (0, 1]");
        for (const auto& s : solvers) {
            if (!check_solver_names) break;
            const bool smv_only = s == "em_sbl" || s == "ggamp_sbl" || s == "genie";
            detail::require(smv_only || s == "ggamp_tsbl" || s == "sks", "solvers", "unknown solver '" + s + "'");
            detail::require(!smv_only || t == 1, "solvers", s + " needs t = 1");
        }
        options.validate();
        (void)points();  // dimension checks
    }

    /// Points in canonical order: ensemble, parameter, N, M, SNR.
    std::vector<PlanPoint> points() const {
        std::vector<PlanPoint> out;
        for (auto kind : kinds)
            for (double param : parameters)
                for (long long n : ns) {
                    std::vector<Index> mgrid;
                    if (!ms.empty()) {
                        for (long long m : ms) mgrid.push_back(static_cast<Index>(m));
                    } else {
                        for (double r : m_over_n) mgrid.push_back(static_cast<Index>(std::llround(r * static_cast<double>(n))));
                    }
                    for (Index m : mgrid)
                        for (double snr : snr_db) {
                            PlanPoint p{kind, param, static_cast<Index>(n), m, 0, static_cast<Index>(t), beta, snr};
                            if (k) p.k = static_cast<Index>(*k);
                            else if (undersampling) p.k = static_cast<Index>(std::llround(static_cast<double>(m) / 3.0));
                            else p.k = static_cast<Index>(std::llround(lambda * static_cast<double>(n)));
                            detail::require(p.k >= 1 && p.k <= p.n, "k", "must satisfy 1 <= K <= N");
                            p.ensemble(0).validate();
                            out.push_back(p);
                        }
                }
        return out;
    }
};

/// Draws the instance for (point, seed). T = 1 points give the SMV realization of the same seeds.
inline MmvProblem make_instance(const PlanPoint& p, std::uint64_t seed) {
    return generate_mmv(p.ensemble(seed), p.k, p.t, p.beta, Vec(), p.snr_db, seed + kSignalSeedOffset);
}

inline SmvProblem smv_view(const MmvProblem& prob) {
    detail::require(prob.frames() == 1, "t", "SMV solvers need a single frame");
    return {prob.A, prob.Y.col(0), prob.X_true.col(0), prob.sigma2, prob.support};
}

struct SolverOutcome {
    Mat X_hat;
    int em_iters = 0;
    long inner_iters_total = 0;
    bool converged = true;
};

/// A solver maps an instance to an estimate; it is timed as a whole.
using SolverFn = std::function<SolverOutcome(const MmvProblem&)>;
using SolverTable = std::map<std::string, SolverFn>;

inline SolverTable builtin_solvers(const GgampSblOptions& base, double sigma2_scale = 3.0) {
    auto with_noise = [base, sigma2_scale](const MmvProblem& p) {
        GgampSblOptions o = base;
        o.noise.initial = sigma2_scale * p.sigma2;
        return o;
    };
    SolverTable table;
    table["em_sbl"] = [with_noise](const MmvProblem& p) {
        const auto o = with_noise(p);
        EmSblOptions em;
        em.i_max = o.i_max;
        em.eps_em = o.eps_em;
        em.gamma_init = o.gamma_init;
        em.noise = o.noise;
        em.trace_cost = false;
        const auto r = run_em_sbl(p.A, p.Y.col(0), em);
        return SolverOutcome{r.posterior.x_hat, r.state.em_iter, 0, r.converged};
    };
    table["ggamp_sbl"] = [with_noise](const MmvProblem& p) {
        const auto r = solve_smv(p.A, p.Y.col(0), with_noise(p));
        return SolverOutcome{r.x_hat, r.em_iters, r.inner_iters_total, r.converged};
    };
    table["ggamp_tsbl"] = [with_noise](const MmvProblem& p) {
        const auto r = solve_mmv(p.A, p.Y, p.beta, with_noise(p));
        return SolverOutcome{r.X_hat, r.em_iters, r.inner_iters_total, r.converged};
    };
    table["genie"] = [](const MmvProblem& p) {
        return SolverOutcome{genie_mmse(p.A, p.Y.col(0), p.sigma2, p.support), 0, 0, true};
    };
    table["sks"] = [](const MmvProblem& p) {
        const auto r = sks(p);
        return SolverOutcome{r.X_hat, 0, r.iterations, r.converged};
    };
    return table;
}

struct ResultRecord {
    std::string solver;
    std::string ensemble;
    double parameter = 0.0;
    Index n = 0;
    Index m = 0;
    Index k = 0;
    Index t = 1;
    double beta = 0.0;
    double snr_db = 0.0;
    std::uint64_t seed = 0;
    double nmse_db = std::numeric_limits<double>::quiet_NaN();  ///< TNMSE when t > 1; NaN when the solver threw
    double runtime_s = 0.0;
    int em_iters = 0;
    long inner_iters_total = 0;
    bool converged = false;
};

inline constexpr const char* kResultHeader =
    "solver,ensemble,parameter,n,m,k,t,beta,snr_db,seed,nmse_db,runtime_s,em_iters,inner_iters_total,converged";

inline void write_record_csv(std::ostream& out, const ResultRecord& r) {
    out << std::setprecision(17) << r.solver << ',' << r.ensemble << ',' << r.parameter << ',' << r.n << ',' << r.m
        << ',' << r.k << ',' << r.t << ',' << r.beta << ',' << r.snr_db << ',' << r.seed << ',' << r.nmse_db << ','
        << r.runtime_s << ',' << r.em_iters << ',' << r.inner_iters_total << ',' << (r.converged ? 1 : 0) << '\n';
}

inline void write_results_csv(std::ostream& out, const std::vector<ResultRecord>& records) {
    out << kResultHeader << '\n';
    for (const auto& r : records) write_record_csv(out, r);
}

namespace detail {

inline double parse_number(const std::string& field) {
    if (field == "nan" || field == "-nan") return std::numeric_limits<double>::quiet_NaN();
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    require(used == field.size(), "csv", "bad number '" + field + "'");
    return v;
}

}  // namespace detail

inline std::vector<ResultRecord> read_results_csv(std::istream& in) {
    std::string line;
    detail::require(static_cast<bool>(std::getline(in, line)), "csv", "missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    detail::require(line == kResultHeader, "csv", "unexpected header");
    std::vector<ResultRecord> out;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        detail::require(f.size() == 15, "csv", "expected 15 columns in '" + line + "'");
        try {
            ResultRecord r;
            r.solver = f[0];
            r.ensemble = f[1];
            r.parameter = detail::parse_number(f[2]);
            r.n = std::stoll(f[3]);
            r.m = std::stoll(f[4]);
            r.k = std::stoll(f[5]);
            r.t = std::stoll(f[6]);
            r.beta = detail::parse_number(f[7]);
            r.snr_db = detail::parse_number(f[8]);
            r.seed = std::stoull(f[9]);
            r.nmse_db = detail::parse_number(f[10]);
            r.runtime_s = detail::parse_number(f[11]);
            r.em_iters = std::stoi(f[12]);
            r.inner_iters_total = std::stol(f[13]);
            r.converged = f[14] == "1";
            out.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw DomainError("csv", "malformed row '" + line + "'");
        }
    }
    return out;
}

/**
 * Runs every (point, seed) cell through each solver in the plan.
 *
 * Cells are drawn by `plan.workers` threads from a shared counter; each
 * instance is generated once and reused by every solver, and only the solver
 * call is timed. A solver that throws yields a record with converged = false
 * and NaN error. Records come back in canonical (point, solver, seed) order.
 */
inline std::vector<ResultRecord> run_plan(const ExperimentPlan& plan, const SolverTable& table) {
    plan.validate(false);
    for (const auto& s : plan.solvers)
        detail::require(table.count(s) != 0, "solvers", "no implementation for '" + s + "'");

    const auto points = plan.points();
    const std::size_t n_seeds = static_cast<std::size_t>(plan.seeds);
    const std::size_t n_solvers = plan.solvers.size();
    const std::size_t n_cells = points.size() * n_seeds;
    std::vector<ResultRecord> records(n_cells * n_solvers);
    std::atomic<std::size_t> next{0};
    std::mutex sink;

    auto worker = [&] {
        for (std::size_t cell = next++; cell < n_cells; cell = next++) {
            const std::size_t pi = cell / n_seeds;
            const std::size_t si = cell % n_seeds;
            const PlanPoint& p = points[pi];
            const std::uint64_t seed = plan.seed_base + si;
            const MmvProblem prob = make_instance(p, seed);

            std::vector<ResultRecord> local;
            for (const auto& name : plan.solvers) {
                ResultRecord r{name, to_string(p.kind), p.parameter, p.n, p.m, p.k, p.t, p.beta, p.snr_db, seed};
                try {
                    const auto t0 = std::chrono::steady_clock::now();
                    const SolverOutcome out = table.at(name)(prob);
                    const auto t1 = std::chrono::steady_clock::now();
                    r.runtime_s = std::chrono::duration<double>(t1 - t0).count();
                    r.nmse_db = tnmse_db(out.X_hat, prob.X_true);
                    r.em_iters = out.em_iters;
                    r.inner_iters_total = out.inner_iters_total;
                    r.converged = out.converged;
                } catch (const std::exception&) {
                    r.converged = false;
                }
                local.push_back(std::move(r));
            }
            std::lock_guard<std::mutex> lock(sink);
            for (std::size_t j = 0; j < n_solvers; ++j) records[(pi * n_solvers + j) * n_seeds + si] = std::move(local[j]);
        }
    };

    const int n_threads = std::min<int>(plan.workers, static_cast<int>(std::max<std::size_t>(n_cells, 1)));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < n_threads; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return records;
}

inline std::vector<ResultRecord> run_plan(const ExperimentPlan& plan) {
    return run_plan(plan, builtin_solvers(plan.options, plan.sigma2_scale));
}

struct SummaryRow {
    std::string solver;
    std::string ensemble;
    double parameter = 0.0;
    Index n = 0;
    Index m = 0;
    Index k = 0;
    Index t = 1;
    double beta = 0.0;
    double snr_db = 0.0;
    int count = 0;
    int failures = 0;      ///< rows with NaN error (the solver threw)
    int unconverged = 0;
    double median_nmse_db = std::numeric_limits<double>::quiet_NaN();
    double mean_nmse_db = std::numeric_limits<double>::quiet_NaN();
    double median_runtime_s = std::numeric_limits<double>::quiet_NaN();
    double mean_runtime_s = std::numeric_limits<double>::quiet_NaN();
};

/// Per (point, solver) statistics in first-appearance order. Failed rows are counted but excluded from the statistics.
inline std::vector<SummaryRow> summarize(const std::vector<ResultRecord>& records) {
    using Key = std::tuple<std::string, std::string, double, Index, Index, Index, Index, double, double>;
    std::vector<Key> order;
    std::map<Key, std::pair<std::vector<double>, std::vector<double>>> values;
    std::map<Key, SummaryRow> rows;
    for (const auto& r : records) {
        const Key key{r.solver, r.ensemble, r.parameter, r.n, r.m, r.k, r.t, r.beta, r.snr_db};
        auto [it, fresh] = rows.try_emplace(key);
        if (fresh) {
            order.push_back(key);
            it->second = SummaryRow{r.solver, r.ensemble, r.parameter, r.n, r.m, r.k, r.t, r.beta, r.snr_db};
        }
        SummaryRow& row = it->second;
        ++row.count;
        if (!r.converged) ++row.unconverged;
        if (std::isnan(r.nmse_db)) {
            ++row.failures;
            continue;
        }
        values[key].first.push_back(r.nmse_db);
        values[key].second.push_back(r.runtime_s);
    }
    std::vector<SummaryRow> out;
    for (const auto& key : order) {
        SummaryRow row = rows[key];
        const auto& [nm, rt] = values[key];
        if (!nm.empty()) {
            row.median_nmse_db = median(nm);
            row.mean_nmse_db = mean(nm);
            row.median_runtime_s = median(rt);
            row.mean_runtime_s = mean(rt);
        }
        out.push_back(row);
    }
    return out;
}

inline constexpr const char* kSummaryHeader =
    "solver,ensemble,parameter,n,m,k,t,beta,snr_db,count,failures,unconverged,median_nmse_db,mean_nmse_db,"
    "median_runtime_s,mean_runtime_s";

inline void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
    out << kSummaryHeader << '\n' << std::setprecision(10);
    for (const auto& r : rows) {
        out << r.solver << ',' << r.ensemble << ',' << r.parameter << ',' << r.n << ',' << r.m << ',' << r.k << ','
            << r.t << ',' << r.beta << ',' << r.snr_db << ',' << r.count << ',' << r.failures << ',' << r.unconverged
            << ',' << r.median_nmse_db << ',' << r.mean_nmse_db << ',' << r.median_runtime_s << ','
            << r.mean_runtime_s << '\n';
    }
}

/// Fixed-width table for terminals.
inline void write_summary_table(std::ostream& out, const std::vector<SummaryRow>& rows) {
    out << std::left << std::setw(11) << "solver" << std::setw(19) << "ensemble" << std::right << std::setw(8)
        << "param" << std::setw(6) << "N" << std::setw(6) << "M" << std::setw(5) << "K" << std::setw(4) << "T"
        << std::setw(8) << "SNR" << std::setw(6) << "runs" << std::setw(6) << "fail" << std::setw(12) << "med dB"
        << std::setw(12) << "mean dB" << std::setw(12) << "med s" << '\n';
    out << std::fixed;
    for (const auto& r : rows) {
        out << std::left << std::setw(11) << r.solver << std::setw(19) << r.ensemble << std::right
            << std::setprecision(3) << std::setw(8) << r.parameter << std::setw(6) << r.n << std::setw(6) << r.m
            << std::setw(5) << r.k << std::setw(4) << r.t << std::setprecision(1) << std::setw(8) << r.snr_db
            << std::setw(6) << r.count << std::setw(6) << r.failures << std::setprecision(2) << std::setw(12)
            << r.median_nmse_db << std::setw(12) << r.mean_nmse_db << std::setprecision(4) << std::setw(12)
            << r.median_runtime_s << '\n';
    }
    out << std::defaultfloat;
}

}  // namespace ggamp
