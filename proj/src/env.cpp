#include "fedtd/env.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <string>

#include "fedtd/errors.hpp"
#include "fedtd/rng.hpp"

namespace fedtd {

void FeatureMatrix::validate(bool exclude_ones) const {
    if (phi.rows() < 1 || phi.cols() < 1 || phi.cols() >= phi.rows())
        throw ConfigError("features: need 1 <= d < n_states");
    Eigen::JacobiSVD<Matrix> svd(phi);
    if (svd.singularValues().minCoeff() <= 1e-8)
        throw NumericalError("features: rank deficient (sigma_min <= 1e-8)");
    if (std::abs(phi.norm() - 1.0) > 1e-12)
        throw NumericalError("features: Frobenius norm not 1");
    if (exclude_ones && ones_residual_norm(phi) <= 1e-6)
        throw NumericalError("features: all-ones vector lies in col(phi)");
}

double ones_residual_norm(const Matrix& phi) {
    Vector ones = Vector::Ones(phi.rows());
    // Least-squares projection; phi need not have orthonormal columns here.
    Vector coef = phi.colPivHouseholderQr().solve(ones);
    return (ones - phi * coef).norm();
}

void HeterogeneityBudget::validate() const {
    if (!(eps_p >= 0.0 && eps_p < 1.0))
        throw ConfigError("budget: eps_p must lie in [0,1)");
    if (!(eps_r >= 0.0)) throw ConfigError("budget: eps_r must be >= 0");
    if (!(r_max > 0.0)) throw ConfigError("budget: r_max must be > 0");
}

namespace {

void fill_dirichlet_row(SplitMix64& rng, Matrix& m, int s) {
    for (int k = 0; k < m.cols(); ++k) m(s, k) = rng.exponential();
    m.row(s) /= m.row(s).sum();
}

Mdp gen_base_mdp(int n_states, int n_actions, double r_max, std::uint64_t seed) {
    SplitMix64 rng(seed);
    Mdp mdp;
    mdp.n_states = n_states;
    mdp.n_actions = n_actions;
    mdp.transitions.resize(n_actions, Matrix(n_states, n_states));
    for (int a = 0; a < n_actions; ++a)
        for (int s = 0; s < n_states; ++s)
            fill_dirichlet_row(rng, mdp.transitions[a], s);
    mdp.rewards = Matrix(n_states, n_actions);
    for (int s = 0; s < n_states; ++s)
        for (int a = 0; a < n_actions; ++a)
            mdp.rewards(s, a) = rng.uniform(-r_max / 2.0, r_max / 2.0);
    return mdp;
}

// Draws are consumed regardless of the budget so that streams stay aligned
// across budgets; scaling happens after.
Mdp perturb_agent(const Mdp& base, const HeterogeneityBudget& budget,
                  std::uint64_t seed) {
    SplitMix64 rng(seed);
    Mdp mdp = base;
    const double amp = budget.eps_p / 3.0;
    for (int a = 0; a < base.n_actions; ++a) {
        for (int s = 0; s < base.n_states; ++s) {
            for (int s2 = 0; s2 < base.n_states; ++s2) {
                double u = rng.uniform(-1.0, 1.0);
                if (amp > 0.0)
                    mdp.transitions[a](s, s2) *= 1.0 + amp * u;
            }
            if (amp > 0.0)
                mdp.transitions[a].row(s) /= mdp.transitions[a].row(s).sum();
        }
    }
    Matrix dir(base.n_states, base.n_actions);
    for (int s = 0; s < base.n_states; ++s)
        for (int a = 0; a < base.n_actions; ++a) dir(s, a) = rng.normal();
    double radius = rng.uniform();
    if (budget.eps_r > 0.0) {
        dir *= radius * budget.eps_r / 2.0 / dir.norm();
        mdp.rewards += dir;
        mdp.rewards = mdp.rewards.cwiseMax(-budget.r_max).cwiseMin(budget.r_max);
    }
    return mdp;
}

}  // namespace

Policy gen_policy(int n_states, int n_actions, std::uint64_t seed) {
    if (n_states <= 0 || n_actions <= 0)
        throw ConfigError("gen_policy: counts must be positive");
    SplitMix64 rng(seed);
    Policy policy;
    policy.probs = Matrix(n_states, n_actions);
    for (int s = 0; s < n_states; ++s)
        fill_dirichlet_row(rng, policy.probs, s);
    return policy;
}

FeatureMatrix gen_feature_matrix(int n_states, int d, bool exclude_ones,
                                 std::uint64_t seed) {
    if (d < 1 || d >= n_states)
        throw ConfigError("gen_feature_matrix: need 1 <= d < n_states");
    for (int attempt = 0; attempt < 100; ++attempt) {
        SplitMix64 rng(derive_seed(seed, "features", attempt));
        Matrix g(n_states, d);
        for (int s = 0; s < n_states; ++s)
            for (int k = 0; k < d; ++k) g(s, k) = rng.normal();
        Eigen::HouseholderQR<Matrix> qr(g);
        Matrix q = qr.householderQ() * Matrix::Identity(n_states, d);
        if (exclude_ones && ones_residual_norm(q) <= 1e-6) continue;
        FeatureMatrix out;
        out.phi = q / std::sqrt(static_cast<double>(d));
        return out;
    }
    throw GenerationError(
        "gen_feature_matrix: 100 candidates rejected (all-ones vector keeps "
        "landing in the feature span)");
}

AgentFamily gen_agent_family(int n_states, int n_actions, int n_agents,
                             const HeterogeneityBudget& budget,
                             const Policy& policy, const FeatureMatrix& phi,
                             std::uint64_t seed) {
    budget.validate();
    policy.validate();
    if (policy.n_states() != n_states || policy.n_actions() != n_actions)
        throw ConfigError("gen_agent_family: policy dimensions disagree");
    if (phi.n_states() != n_states)
        throw ConfigError("gen_agent_family: feature dimensions disagree");
    if (n_agents < 1)
        throw ConfigError("gen_agent_family: need at least one agent");
    if (policy.probs.minCoeff() <= 0.0)
        throw ConfigError("gen_agent_family: policy must be strictly positive");

    int fails_eps_p = 0, fails_eps_r = 0, fails_support = 0, fails_ergodic = 0;
    for (int attempt = 0; attempt < 50; ++attempt) {
        std::uint64_t attempt_seed = derive_seed(seed, "family", attempt);
        AgentFamily family;
        family.policy = policy;
        family.phi = phi;
        family.budget = budget;
        family.master_seed = seed;
        Mdp base = gen_base_mdp(n_states, n_actions, budget.r_max,
                                derive_seed(attempt_seed, "base", 0));
        family.mdps.reserve(n_agents);
        for (int i = 0; i < n_agents; ++i)
            family.mdps.push_back(
                perturb_agent(base, budget, derive_seed(attempt_seed, "agent", i)));

        bool ergodic = true;
        for (const Mdp& mdp : family.mdps)
            if (!check_ergodic(induce_chain(mdp, policy)).ok()) ergodic = false;
        if (!ergodic) {
            ++fails_ergodic;
            continue;
        }
        HeterogeneityReport report = verify_heterogeneity(family);
        if (!report.feasible()) {
            ++fails_support;
            continue;
        }
        if (report.eps_p_achieved > budget.eps_p + 1e-12) {
            ++fails_eps_p;
            continue;
        }
        if (report.eps_r_achieved > budget.eps_r + 1e-12) {
            ++fails_eps_r;
            continue;
        }
        return family;
    }

    std::string worst = "transition deviation";
    int count = fails_eps_p;
    if (fails_eps_r > count) worst = "reward deviation", count = fails_eps_r;
    if (fails_support > count) worst = "support mismatch", count = fails_support;
    if (fails_ergodic > count) worst = "ergodicity", count = fails_ergodic;
    throw GenerationError("gen_agent_family: 50 redraws exhausted; most frequent "
                          "failure: " + worst);
}

HeterogeneityReport verify_heterogeneity(const AgentFamily& family) {
    const int n_agents = family.n_agents();
    if (n_agents < 1) throw ConfigError("verify_heterogeneity: empty family");
    std::vector<Matrix> chains;
    chains.reserve(n_agents);
    for (const Mdp& mdp : family.mdps)
        chains.push_back(induce_chain(mdp, family.policy).p_mu);

    HeterogeneityReport report;
    const int n = family.n_states();
    for (int i = 0; i < n_agents; ++i) {
        for (int j = 0; j < n_agents; ++j) {
            if (i == j) continue;
            for (int s = 0; s < n; ++s)
                for (int s2 = 0; s2 < n; ++s2) {
                    double pi = chains[i](s, s2);
                    double pj = chains[j](s, s2);
                    if (pi > 0.0)
                        report.eps_p_achieved = std::max(
                            report.eps_p_achieved, std::abs(pi - pj) / pi);
                    else if (pj > 0.0)
                        report.violations.push_back({i, j, s, s2});
                }
            if (j > i)
                report.eps_r_achieved = std::max(
                    report.eps_r_achieved,
                    (family.mdps[i].rewards - family.mdps[j].rewards).norm());
        }
    }
    return report;
}

}  // namespace fedtd
