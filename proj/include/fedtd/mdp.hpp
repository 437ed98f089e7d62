#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace fedtd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kRowSumTol = 1e-12;    // probability row sums
inline constexpr double kFixedPointTol = 1e-10;  // linear-solve residuals

/// Finite MDP for one agent: per-action transition matrices (row s is the
/// distribution over next states given (s, action)) and an S x A reward table.
struct Mdp {
    int n_states = 0;
    int n_actions = 0;
    std::vector<Matrix> transitions;  // one S x S stochastic matrix per action
    Matrix rewards;                   // S x A

    double transition(int s, int a, int s2) const { return transitions[a](s, s2); }

    /// Throws ConfigError on shape mismatch or broken stochasticity, with
    /// r_max bounding |rewards| when nonnegative.
    void validate(double r_max = -1.0) const;
};

/// Stationary randomized policy; row s is a distribution over actions.
struct Policy {
    Matrix probs;  // S x A

    int n_states() const { return static_cast<int>(probs.rows()); }
    int n_actions() const { return static_cast<int>(probs.cols()); }
    void validate() const;
};

/// Markov chain induced by a policy: state-to-state matrix and the expected
/// one-step reward per state.
struct InducedChain {
    Matrix p_mu;  // S x S
    Vector r_mu;  // S

    int n_states() const { return static_cast<int>(p_mu.rows()); }
};

struct StationaryDistribution {
    Vector d;

    double residual = 0.0;  // achieved max-norm of d'P - d'
};

struct ErgodicityVerdict {
    bool irreducible = false;
    bool aperiodic = false;

    bool ok() const { return irreducible && aperiodic; }
    std::string reason() const;
};

/// Marginalizes actions under the policy: p_mu(s,s') = sum_a mu(a|s) P(s'|s,a),
/// r_mu(s) = sum_a mu(a|s) R(s,a).
InducedChain induce_chain(const Mdp& mdp, const Policy& policy);

/// Solves d'P = d', sum d = 1 by replacing one row of (P' - I) with the
/// all-ones constraint; exact at these sizes. Throws NumericalError if the
/// achieved residual exceeds the fixed-point tolerance.
StationaryDistribution stationary_distribution(const InducedChain& chain);

/// Irreducibility via forward/backward reachability on the support graph,
/// aperiodicity via the gcd of level differences along edges.
ErgodicityVerdict check_ergodic(const InducedChain& chain);

}  // namespace fedtd
