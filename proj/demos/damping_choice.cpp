// Shows how the damping factor tightens as the columns of A become more
// correlated, and what undamped GAMP does on the hardest matrix.

#include <ggamp/ggamp.hpp>

#include <iostream>

int main() {
    using namespace ggamp;
    for (double rho : {0.0, 0.3, 0.6, 0.9}) {
        const Mat A = generate_matrix({EnsembleKind::ColumnCorrelated, 100, 200, rho, 5});
        const DampingChoice c = choose_damping(A);
        std::cout << "rho " << rho << "  ||A||_2^2/||A||_F^2 " << c.spectral_ratio << "  theta " << c.config.theta_x
                  << '\n';
    }

    const SmvProblem prob = generate_smv({EnsembleKind::ColumnCorrelated, 100, 200, 0.9, 5}, 40, 60.0, 99);
    const PrecomputedS S(prob.A);
    const Vec gamma = Vec::Ones(200);
    for (double theta : {1.0, choose_damping(prob.A).config.theta_x}) {
        GampState st = GampState::cold_start(gamma, 100);
        try {
            const auto out = gamp_iterate(prob.A, S, prob.y, gamma, 3 * prob.sigma2, st, {theta, theta, 500, 1e-10});
            std::cout << "theta " << theta << ": " << (out.converged ? "converged" : "not converged") << " after "
                      << out.iterations << " iterations\n";
        } catch (const DivergenceError& e) {
            std::cout << "theta " << theta << ": diverged (" << e.what() << ")\n";
        }
    }
}
