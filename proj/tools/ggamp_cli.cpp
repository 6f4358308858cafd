// ggamp_cli: fixtures, single solves, plan sweeps and result summaries.
//
//   ggamp_cli gen    --ensemble column_correlated --param 0.9 --n 200 --seed 3 --out prob.bin
//   ggamp_cli solve  --ensemble column_correlated --param 0.9 --n 200 --solver ggamp_sbl
//   ggamp_cli sweep  --plan plans/rho_sweep.plan --out results.csv
//   ggamp_cli report --in results.csv --format json

#include <ggamp/ggamp.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

struct InstanceFlags {
    std::string ensemble = "iid_gaussian";
    double param = 0.0;
    long long n = 200;
    std::optional<long long> m;
    std::optional<long long> k;
    long long t = 1;
    double beta = 0.0;
    double snr_db = 60.0;
    std::uint64_t seed = 1;

    void add_to(CLI::App& app) {
        app.add_option("--ensemble", ensemble, "iid_gaussian | column_correlated | low_rank_product | ill_conditioned | nonzero_mean");
        app.add_option("--param", param, "Deviation parameter (rho, R/N, kappa or mu)");
        app.add_option("--n", n, "Signal length N");
        app.add_option("--m", m, "Measurements M (default N/2)");
        app.add_option("--k", k, "Non-zeros K (default round(0.2 N))");
        app.add_option("--t", t, "Frames T");
        app.add_option("--beta", beta, "AR(1) correlation across frames");
        app.add_option("--snr-db", snr_db, "Measurement SNR in dB");
        app.add_option("--seed", seed, "Instance seed (matrix; signal uses seed + 1000003)");
    }

    ggamp::PlanPoint point() const {
        ggamp::PlanPoint p;
        p.kind = ggamp::parse_ensemble_kind(ensemble);
        p.parameter = param;
        p.n = n;
        p.m = m ? *m : static_cast<ggamp::Index>(std::llround(0.5 * static_cast<double>(n)));
        p.k = k ? *k : static_cast<ggamp::Index>(std::llround(0.2 * static_cast<double>(n)));
        p.t = t;
        p.beta = beta;
        p.snr_db = snr_db;
        return p;
    }
};

int run_gen(const InstanceFlags& flags, const std::string& out, const std::string& format, const std::string& spec_in,
            const std::string& spec_out) {
    ggamp::PlanPoint p = flags.point();
    std::uint64_t seed = flags.seed;
    if (!spec_in.empty()) {
        const auto spec = ggamp::EnsembleSpec::from_config(ggamp::KeyValueConfig::load(spec_in));
        p.kind = spec.kind;
        p.parameter = spec.parameter;
        p.m = spec.rows;
        p.n = spec.cols;
        seed = spec.seed;
    }
    if (!spec_out.empty()) {
        std::ofstream f(spec_out);
        f << p.ensemble(seed).to_config().serialize();
    }
    const auto prob = ggamp::make_instance(p, seed);
    if (format == "binary") {
        ggamp::write_problem_binary(out, prob);
    } else {
        ggamp::write_problem_csv(out, prob);
    }
    std::cerr << "wrote " << ggamp::to_string(p.kind) << " M=" << p.m << " N=" << p.n << " K=" << p.k << " T=" << p.t
              << " sigma2=" << prob.sigma2 << '\n';
    return 0;
}

int run_solve(const InstanceFlags& flags, const std::string& solver, const std::string& input,
              ggamp::GgampSblOptions opts, std::optional<double> theta, std::optional<double> theta_m,
              double sigma2_scale, const std::string& x_out) {
    if (theta) {
        opts.damping = ggamp::DampingConfig{*theta, *theta, opts.k_max, opts.eps_gamp,
                                            theta_m ? *theta_m : opts.message_damping_ratio * *theta};
    } else if (theta_m) {
        opts.message_damping_ratio = *theta_m;
    }
    ggamp::PlanPoint p = flags.point();
    ggamp::MmvProblem prob;
    if (!input.empty()) {
        prob = ggamp::read_problem_binary(input);
        p.m = prob.A.rows();
        p.n = prob.A.cols();
        p.k = static_cast<ggamp::Index>(prob.support.size());
        p.t = prob.frames();
        p.beta = prob.beta;
    } else {
        prob = ggamp::make_instance(p, flags.seed);
    }

    const auto table = ggamp::builtin_solvers(opts, sigma2_scale);
    const auto it = table.find(solver);
    if (it == table.end()) throw ggamp::DomainError("solver", "unknown solver '" + solver + "'");

    ggamp::ResultRecord r{solver, ggamp::to_string(p.kind), p.parameter, p.n, p.m, p.k, p.t, p.beta, p.snr_db, flags.seed};
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = it->second(prob);
    r.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.nmse_db = ggamp::tnmse_db(out.X_hat, prob.X_true);
    r.em_iters = out.em_iters;
    r.inner_iters_total = out.inner_iters_total;
    r.converged = out.converged;

    std::cout << ggamp::kResultHeader << '\n';
    ggamp::write_record_csv(std::cout, r);
    if (!x_out.empty()) {
        std::ofstream f(x_out);
        ggamp::write_matrix_csv(f, out.X_hat);
    }
    return 0;
}

int run_sweep(const std::string& plan_path, std::string out, std::optional<int> workers) {
    auto plan = ggamp::ExperimentPlan::load(plan_path);
    if (workers) plan.workers = *workers;
    if (out.empty()) out = plan.output;
    const auto records = ggamp::run_plan(plan);
    if (out.empty() || out == "-") {
        ggamp::write_results_csv(std::cout, records);
    } else {
        std::ofstream f(out);
        if (!f) throw ggamp::DomainError("output", "cannot open " + out);
        ggamp::write_results_csv(f, records);
        std::cerr << records.size() << " records written to " << out << '\n';
    }
    ggamp::write_summary_table(std::cerr, ggamp::summarize(records));
    return 0;
}

nlohmann::json to_json(const std::vector<ggamp::SummaryRow>& rows) {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) {
        arr.push_back({{"solver", r.solver},
                       {"ensemble", r.ensemble},
                       {"parameter", r.parameter},
                       {"n", r.n},
                       {"m", r.m},
                       {"k", r.k},
                       {"t", r.t},
                       {"beta", r.beta},
                       {"snr_db", r.snr_db},
                       {"count", r.count},
                       {"failures", r.failures},
                       {"unconverged", r.unconverged},
                       {"median_nmse_db", num(r.median_nmse_db)},
                       {"mean_nmse_db", num(r.mean_nmse_db)},
                       {"median_runtime_s", num(r.median_runtime_s)},
                       {"mean_runtime_s", num(r.mean_runtime_s)}});
    }
    return arr;
}

int run_report(const std::string& in_path, const std::string& format) {
    std::ifstream in(in_path);
    if (!in) throw ggamp::DomainError("in", "cannot open " + in_path);
    const auto rows = ggamp::summarize(ggamp::read_results_csv(in));
    if (format == "csv") ggamp::write_summary_csv(std::cout, rows);
    else if (format == "json") std::cout << to_json(rows).dump(2) << '\n';
    else ggamp::write_summary_table(std::cout, rows);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GGAMP-SBL / GGAMP-TSBL sparse recovery"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen", "Write a problem fixture");
    InstanceFlags gen_flags;
    gen_flags.add_to(*gen);
    std::string gen_out, gen_format = "binary", spec_in, spec_out;
    gen->add_option("--out", gen_out, "Output path (binary) or prefix (csv)")->required();
    gen->add_option("--format", gen_format, "binary | csv")->check(CLI::IsMember({"binary", "csv"}));
    gen->add_option("--spec", spec_in, "Read the ensemble from a key=value spec file");
    gen->add_option("--spec-out", spec_out, "Also write the ensemble spec file");

    auto* solve = app.add_subcommand("solve", "Solve one instance and print a result record");
    InstanceFlags solve_flags;
    solve_flags.add_to(*solve);
    std::string solver = "ggamp_sbl", input, x_out, policy = "fixed";
    ggamp::GgampSblOptions opts;
    std::optional<double> theta, theta_m;
    double sigma2_scale = 3.0;
    solve->add_option("--solver", solver, "em_sbl | ggamp_sbl | ggamp_tsbl | genie | sks")
        ->check(CLI::IsMember({"em_sbl", "ggamp_sbl", "ggamp_tsbl", "genie", "sks"}));
    solve->add_option("--input", input, "Binary fixture instead of generating");
    solve->add_option("--theta", theta, "Fixed damping for both theta_s and theta_x (default: automatic)");
    solve->add_option("--theta-m", theta_m,
                      "Temporal message damping for ggamp_tsbl (with --theta: absolute; without: ratio to the automatic theta)");
    solve->add_option("--eps-gamp", opts.eps_gamp, "Inner tolerance");
    solve->add_option("--eps-em", opts.eps_em, "EM tolerance");
    solve->add_option("--kmax", opts.k_max, "Max inner iterations per E-step");
    solve->add_option("--imax", opts.i_max, "Max EM iterations");
    solve->add_option("--sigma2-policy", policy, "fixed | em")->check(CLI::IsMember({"fixed", "em"}));
    solve->add_option("--sigma2-scale", sigma2_scale, "Working sigma^2 as a multiple of the true value");
    solve->add_option("--x-out", x_out, "Write the estimate (N x T) as CSV");

    auto* sweep = app.add_subcommand("sweep", "Run a plan file");
    std::string plan_path, sweep_out;
    std::optional<int> workers;
    sweep->add_option("--plan", plan_path, "Plan file")->required()->check(CLI::ExistingFile);
    sweep->add_option("--out", sweep_out, "Result CSV (default: plan 'output', '-' for stdout)");
    sweep->add_option("--workers", workers, "Worker threads");

    auto* report = app.add_subcommand("report", "Summarize a result CSV");
    std::string report_in, report_format = "table";
    report->add_option("--in", report_in, "Result CSV")->required()->check(CLI::ExistingFile);
    report->add_option("--format", report_format, "table | csv | json")->check(CLI::IsMember({"table", "csv", "json"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) return run_gen(gen_flags, gen_out, gen_format, spec_in, spec_out);
        if (*solve) {
            opts.noise.kind = policy == "em" ? ggamp::NoisePolicy::Kind::EmUpdate : ggamp::NoisePolicy::Kind::Fixed;
            return run_solve(solve_flags, solver, input, opts, theta, theta_m, sigma2_scale, x_out);
        }
        if (*sweep) return run_sweep(plan_path, sweep_out, workers);
        if (*report) return run_report(report_in, report_format);
    } catch (const ggamp::DomainError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
