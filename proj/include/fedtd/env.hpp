#pragma once

#include <cstdint>
#include <vector>

#include "fedtd/mdp.hpp"

namespace fedtd {

// Feature matrix Phi (n_states x d). Accepted instances have orthogonal
// columns of norm 1/sqrt(d), so the Frobenius norm is 1.
struct FeatureMatrix {
    Matrix phi;

    int n_states() const { return static_cast<int>(phi.rows()); }
    int d() const { return static_cast<int>(phi.cols()); }

    // Checks full column rank (sigma_min > 1e-8) and unit Frobenius norm;
    // with exclude_ones also that the all-ones vector is not in col(phi).
    void validate(bool exclude_ones = true) const;
};

// Norm of the residual of projecting the all-ones vector onto col(phi).
double ones_residual_norm(const Matrix& phi);

struct HeterogeneityBudget {
    double eps_p = 0.0;  // multiplicative transition-deviation bound, in [0,1)
    double eps_r = 0.0;  // reward-table deviation bound (Euclidean norm)
    double r_max = 1.0;  // entrywise reward magnitude cap

    void validate() const;
};

// N agents sharing a policy and features, with transition/reward tables
// perturbed around a common base MDP within the budget.
struct AgentFamily {
    std::vector<Mdp> mdps;
    Policy policy;
    FeatureMatrix phi;
    HeterogeneityBudget budget;
    std::uint64_t master_seed = 0;

    int n_agents() const { return static_cast<int>(mdps.size()); }
    int n_states() const { return mdps.empty() ? 0 : mdps[0].n_states; }
    int n_actions() const { return mdps.empty() ? 0 : mdps[0].n_actions; }
};

struct HeterogeneityReport {
    double eps_p_achieved = 0.0;
    double eps_r_achieved = 0.0;
    // Chain entries where P_i(s,s2) = 0 but P_j(s,s2) > 0; the relative
    // bound cannot hold for such pairs.
    struct SupportViolation {
        int i = 0, j = 0, s = 0, s2 = 0;
    };
    std::vector<SupportViolation> violations;

    bool feasible() const { return violations.empty(); }
};

// Each policy row is symmetric Dirichlet(1), i.e. uniform on the simplex.
Policy gen_policy(int n_states, int n_actions, std::uint64_t seed);

// Gaussian matrix, orthonormalized, rejected while ones_residual_norm <= 1e-6
// (when exclude_ones), then scaled to unit Frobenius norm.
FeatureMatrix gen_feature_matrix(int n_states, int d, bool exclude_ones,
                                 std::uint64_t seed);

// Base MDP with Dirichlet(1) transition rows and uniform rewards on
// [-r_max/2, r_max/2]; per-agent multiplicative transition noise of amplitude
// eps_p/3 (renormalized) and reward offsets of norm <= eps_r/2 (clipped to
// +-r_max). Families failing verification or ergodicity are redrawn, up to 50
// attempts. Per-agent noise streams are keyed by agent index and scaled by
// the budget, so shrinking the budget or dropping agents leaves the remaining
// draws unchanged.
AgentFamily gen_agent_family(int n_states, int n_actions, int n_agents,
                             const HeterogeneityBudget& budget,
                             const Policy& policy, const FeatureMatrix& phi,
                             std::uint64_t seed);

// Achieved heterogeneity of the induced chains: eps_p over ordered pairs
// (i,j) as max |P_i - P_j| / P_i on the support of P_i, eps_r as the max
// pairwise Euclidean norm of reward-table differences.
HeterogeneityReport verify_heterogeneity(const AgentFamily& family);

}  // namespace fedtd
