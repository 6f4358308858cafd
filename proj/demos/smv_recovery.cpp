// Recover a sparse vector from a column-correlated matrix with GGAMP-SBL and
// compare against exact EM-SBL and the support-aware genie.

#include <ggamp/ggamp.hpp>

#include <chrono>
#include <iostream>

int main() {
    using namespace ggamp;
    const EnsembleSpec spec{EnsembleKind::ColumnCorrelated, 100, 200, 0.9, 7};
    const SmvProblem prob = generate_smv(spec, 40, 60.0, 7 + kSignalSeedOffset);

    auto t0 = std::chrono::steady_clock::now();
    const SolveResult g = solve_smv(prob, {});
    auto t1 = std::chrono::steady_clock::now();
    const EmSblResult e = run_em_sbl(prob, {});
    auto t2 = std::chrono::steady_clock::now();

    std::cout << "damping theta       " << g.damping.theta_x << '\n';
    std::cout << "GGAMP-SBL  NMSE dB  " << nmse_db(g.x_hat, prob.x_true) << "  (" << g.em_iters << " EM, "
              << g.inner_iters_total << " GAMP iterations, " << std::chrono::duration<double>(t1 - t0).count()
              << " s)\n";
    std::cout << "EM-SBL     NMSE dB  " << nmse_db(e.posterior.x_hat, prob.x_true) << "  (" << e.state.em_iter
              << " EM iterations, " << std::chrono::duration<double>(t2 - t1).count() << " s)\n";
    std::cout << "genie      NMSE dB  " << nmse_db(genie_mmse(prob), prob.x_true) << '\n';
}
