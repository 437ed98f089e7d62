#pragma once

#include <vector>

#include "fedtd/env.hpp"
#include "fedtd/mdp.hpp"

namespace fedtd {

// Fixed-point quantities of one agent under the shared policy and features.
// Average-reward pieces: A = Phi^T D (I - P) Phi, v = Phi^T D 1,
// b = Phi^T D r, r* = d^T r, theta* = A^{-1}(b - v r*).
// Discounted pieces: Ups = Phi^T D (I - gamma P) Phi, vartheta* = Ups^{-1} b.
struct AgentSolution {
    StationaryDistribution d_mu;
    double r_star = 0.0;
    Matrix a_mat;
    Matrix ups_mat;
    Vector b_vec;
    Vector v_vec;
    Vector theta_star;
    Vector vartheta_star;
    double lambda_min_sym_a = 0.0;    // lambda_min(A + A^T)
    double lambda_min_sym_ups = 0.0;  // lambda_min(Ups + Ups^T)

    int d() const { return static_cast<int>(theta_star.size()); }
};

// Means over agents and the fixed point theta* = A^{-1}(b - v r*).
struct GlobalSolution {
    Matrix a_bar;
    Vector b_bar;
    Vector v_bar;
    double r_star_bar = 0.0;
    Vector theta_star_bar;
    double lambda_min_sym = 0.0;
};

// Heterogeneity-gap constants. h_theta / h_hat are +inf with the matching
// vacuous flag set when a denominator ||M|| - kappa(M)*amp is not positive.
struct GapConstants {
    double c_d = 0.0;
    double a_eps = 0.0;
    double b_eps = 0.0;
    double h_r = 0.0;
    double h_theta = 0.0;
    double ups_eps = 0.0;
    double h_hat = 0.0;
    bool h_theta_vacuous = false;
    bool h_hat_vacuous = false;
};

AgentSolution solve_agent(const Mdp& mdp, const Policy& policy,
                          const FeatureMatrix& phi, double gamma);

GlobalSolution solve_global(const std::vector<AgentSolution>& solutions);

// All seven constants from the closed-form expressions, with the max-over-
// agents terms evaluated on the supplied solutions. Spectral norms and
// spectral condition numbers throughout.
GapConstants gap_constants(const HeterogeneityBudget& budget, int n_states,
                           double r_max,
                           const std::vector<AgentSolution>& solutions);

}  // namespace fedtd
