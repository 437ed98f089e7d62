#include "fedtd/solve.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>
#include <cmath>
#include <limits>
#include <string>

#include "fedtd/errors.hpp"

namespace fedtd {

namespace {

// Dense LU with one step of iterative refinement.
Vector solve_refined(const Matrix& m, const Vector& rhs) {
    Eigen::PartialPivLU<Matrix> lu(m);
    Vector x = lu.solve(rhs);
    x += lu.solve(rhs - m * x);
    return x;
}

double lambda_min_sym(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m + m.transpose());
    return es.eigenvalues().minCoeff();
}

void check_residual(const Matrix& m, const Vector& x, const Vector& rhs,
                    const std::string& what) {
    double res = (m * x - rhs).norm();
    if (!std::isfinite(res) || res > kFixedPointTol)
        throw NumericalError(what + " residual " + std::to_string(res) +
                             " above tolerance");
}

}  // namespace

AgentSolution solve_agent(const Mdp& mdp, const Policy& policy,
                          const FeatureMatrix& phi, double gamma) {
    if (!(gamma >= 0.0 && gamma < 1.0))
        throw ConfigError("solve_agent: gamma must lie in [0,1)");
    if (phi.n_states() != mdp.n_states)
        throw ConfigError("solve_agent: feature dimensions disagree");
    InducedChain chain = induce_chain(mdp, policy);
    ErgodicityVerdict verdict = check_ergodic(chain);
    if (!verdict.ok())
        throw NumericalError("solve_agent: induced chain is " + verdict.reason());

    AgentSolution sol;
    sol.d_mu = stationary_distribution(chain);
    const Vector& d = sol.d_mu.d;
    const Matrix& p = chain.p_mu;
    const Matrix& f = phi.phi;
    const int n = mdp.n_states;

    Matrix dp = d.asDiagonal() * (Matrix::Identity(n, n) - p);
    sol.a_mat = f.transpose() * dp * f;
    Matrix dgp = d.asDiagonal() * (Matrix::Identity(n, n) - gamma * p);
    sol.ups_mat = f.transpose() * dgp * f;
    sol.v_vec = f.transpose() * d;
    sol.b_vec = f.transpose() * d.cwiseProduct(chain.r_mu);
    sol.r_star = d.dot(chain.r_mu);

    sol.lambda_min_sym_a = lambda_min_sym(sol.a_mat);
    if (sol.lambda_min_sym_a <= 1e-10)
        throw NumericalError("solve_agent: lambda_min(A+A^T) = " +
                             std::to_string(sol.lambda_min_sym_a) +
                             " not positive");
    sol.lambda_min_sym_ups = lambda_min_sym(sol.ups_mat);
    if (sol.lambda_min_sym_ups <= 1e-10)
        throw NumericalError("solve_agent: lambda_min(Ups+Ups^T) = " +
                             std::to_string(sol.lambda_min_sym_ups) +
                             " not positive");

    Vector rhs = sol.b_vec - sol.v_vec * sol.r_star;
    sol.theta_star = solve_refined(sol.a_mat, rhs);
    check_residual(sol.a_mat, sol.theta_star, rhs, "solve_agent: theta_star");
    sol.vartheta_star = solve_refined(sol.ups_mat, sol.b_vec);
    check_residual(sol.ups_mat, sol.vartheta_star, sol.b_vec,
                   "solve_agent: vartheta_star");
    return sol;
}

GlobalSolution solve_global(const std::vector<AgentSolution>& solutions) {
    if (solutions.empty()) throw ConfigError("solve_global: no agents");
    const int d = solutions[0].d();
    GlobalSolution g;
    g.a_bar = Matrix::Zero(d, d);
    g.b_bar = Vector::Zero(d);
    g.v_bar = Vector::Zero(d);
    for (const AgentSolution& sol : solutions) {
        if (sol.d() != d)
            throw ConfigError("solve_global: feature dimensions disagree");
        g.a_bar += sol.a_mat;
        g.b_bar += sol.b_vec;
        g.v_bar += sol.v_vec;
        g.r_star_bar += sol.r_star;
    }
    const double n = static_cast<double>(solutions.size());
    g.a_bar /= n;
    g.b_bar /= n;
    g.v_bar /= n;
    g.r_star_bar /= n;

    g.lambda_min_sym = lambda_min_sym(g.a_bar);
    if (g.lambda_min_sym <= 1e-10)
        throw NumericalError("solve_global: lambda_min(A+A^T) = " +
                             std::to_string(g.lambda_min_sym) + " not positive");
    Vector rhs = g.b_bar - g.v_bar * g.r_star_bar;
    g.theta_star_bar = solve_refined(g.a_bar, rhs);
    check_residual(g.a_bar, g.theta_star_bar, rhs, "solve_global: theta_star");
    return g;
}

namespace {

// One max-over-agents bound term; zero when both amplitudes are zero.
double gap_bound_term(const Matrix& m, const Vector& fixed_point,
                      double rhs_norm, double amp, double b_eps, bool* vacuous) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    Eigen::JacobiSVD<Matrix> svd(m);
    double s_max = svd.singularValues().maxCoeff();
    double s_min = svd.singularValues().minCoeff();
    double kappa = s_max / s_min;
    double denom = s_max - kappa * amp;
    if (denom <= 0.0) {
        *vacuous = true;
        return inf;
    }
    double term = (amp * amp) / (s_max * s_max);
    if (b_eps > 0.0) {
        if (rhs_norm == 0.0) {
            *vacuous = true;
            return inf;
        }
        term += (b_eps * b_eps) / (rhs_norm * rhs_norm);
    }
    double coeff = 2.0 * kappa * kappa * s_max * s_max *
                   fixed_point.squaredNorm() / (denom * denom);
    return coeff * term;
}

}  // namespace

GapConstants gap_constants(const HeterogeneityBudget& budget, int n_states,
                           double r_max,
                           const std::vector<AgentSolution>& solutions) {
    budget.validate();
    if (n_states < 1) throw ConfigError("gap_constants: n_states must be >= 1");
    const double s = static_cast<double>(n_states);
    const double root_s = std::sqrt(s);
    GapConstants g;
    g.c_d = std::pow((1.0 + budget.eps_p) / (1.0 - budget.eps_p), s) - 1.0;
    g.a_eps = budget.eps_p * root_s + g.c_d * (1.0 + root_s);
    g.ups_eps = g.a_eps;
    g.b_eps = root_s * (budget.eps_r + g.c_d * r_max);
    double dev = budget.eps_r + r_max * g.c_d;
    g.h_r = 2.0 * dev * dev;
    for (const AgentSolution& sol : solutions) {
        g.h_theta = std::max(
            g.h_theta,
            gap_bound_term(sol.a_mat, sol.theta_star,
                           (sol.b_vec - sol.v_vec * sol.r_star).norm(), g.a_eps,
                           g.b_eps, &g.h_theta_vacuous));
        g.h_hat = std::max(
            g.h_hat, gap_bound_term(sol.ups_mat, sol.vartheta_star,
                                    sol.b_vec.norm(), g.ups_eps, g.b_eps,
                                    &g.h_hat_vacuous));
    }
    return g;
}

}  // namespace fedtd
