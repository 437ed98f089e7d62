#include "fedtd/mdp.hpp"

#include <Eigen/LU>
#include <cmath>
#include <numeric>

#include "fedtd/errors.hpp"

namespace fedtd {

void Mdp::validate(double r_max) const {
    if (n_states <= 0 || n_actions <= 0)
        throw ConfigError("mdp: state/action counts must be positive");
    if (static_cast<int>(transitions.size()) != n_actions)
        throw ConfigError("mdp: transition tensor has wrong action count");
    for (int a = 0; a < n_actions; ++a) {
        const Matrix& pa = transitions[a];
        if (pa.rows() != n_states || pa.cols() != n_states)
            throw ConfigError("mdp: transition matrix shape mismatch");
        for (int s = 0; s < n_states; ++s) {
            double sum = pa.row(s).sum();
            if (std::abs(sum - 1.0) > kRowSumTol || pa.row(s).minCoeff() < 0.0 ||
                pa.row(s).maxCoeff() > 1.0)
                throw ConfigError("mdp: transitions[" + std::to_string(s) + "][" +
                                  std::to_string(a) + "] is not a distribution");
        }
    }
    if (rewards.rows() != n_states || rewards.cols() != n_actions)
        throw ConfigError("mdp: reward table shape mismatch");
    if (r_max >= 0.0 && rewards.cwiseAbs().maxCoeff() > r_max)
        throw ConfigError("mdp: reward magnitude exceeds declared r_max");
}

void Policy::validate() const {
    if (probs.rows() < 1 || probs.cols() < 1)
        throw ConfigError("policy: empty table");
    for (int s = 0; s < probs.rows(); ++s) {
        double sum = probs.row(s).sum();
        if (std::abs(sum - 1.0) > kRowSumTol || probs.row(s).minCoeff() < 0.0)
            throw ConfigError("policy: row " + std::to_string(s) +
                              " is not a distribution");
    }
}

std::string ErgodicityVerdict::reason() const {
    if (ok()) return "irreducible and aperiodic";
    if (!irreducible && !aperiodic) return "reducible and periodic";
    if (!irreducible) return "reducible";
    return "periodic";
}

InducedChain induce_chain(const Mdp& mdp, const Policy& policy) {
    if (policy.n_states() != mdp.n_states || policy.n_actions() != mdp.n_actions)
        throw ConfigError("induce_chain: policy and mdp dimensions disagree");
    InducedChain chain;
    chain.p_mu = Matrix::Zero(mdp.n_states, mdp.n_states);
    for (int a = 0; a < mdp.n_actions; ++a)
        chain.p_mu += policy.probs.col(a).asDiagonal() * mdp.transitions[a];
    chain.r_mu = (policy.probs.cwiseProduct(mdp.rewards)).rowwise().sum();
    return chain;
}

StationaryDistribution stationary_distribution(const InducedChain& chain) {
    const int n = chain.n_states();
    StationaryDistribution out;
    if (n == 1) {
        out.d = Vector::Ones(1);
        out.residual = std::abs(chain.p_mu(0, 0) - 1.0);
        return out;
    }
    Matrix m = chain.p_mu.transpose() - Matrix::Identity(n, n);
    m.row(0).setOnes();
    Vector rhs = Vector::Zero(n);
    rhs(0) = 1.0;
    Eigen::PartialPivLU<Matrix> lu(m);
    Vector d = lu.solve(rhs);
    d /= d.sum();
    out.d = d;
    out.residual = (d.transpose() * chain.p_mu - d.transpose())
                       .cwiseAbs()
                       .maxCoeff();
    if (!std::isfinite(out.residual) || out.residual > kFixedPointTol)
        throw NumericalError("stationary_distribution: residual " +
                             std::to_string(out.residual) + " above tolerance");
    return out;
}

namespace {

// Support graph of the chain: edge (s,s') iff P(s,s') > 0.
std::vector<std::vector<int>> support_edges(const Matrix& p, bool reversed) {
    const int n = static_cast<int>(p.rows());
    std::vector<std::vector<int>> adj(n);
    for (int s = 0; s < n; ++s)
        for (int s2 = 0; s2 < n; ++s2)
            if (p(s, s2) > 0.0) adj[reversed ? s2 : s].push_back(reversed ? s : s2);
    return adj;
}

std::vector<int> bfs_levels(const std::vector<std::vector<int>>& adj, int start) {
    std::vector<int> level(adj.size(), -1);
    std::vector<int> queue{start};
    level[start] = 0;
    for (std::size_t head = 0; head < queue.size(); ++head) {
        int u = queue[head];
        for (int v : adj[u])
            if (level[v] < 0) {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
    }
    return level;
}

}  // namespace

ErgodicityVerdict check_ergodic(const InducedChain& chain) {
    const int n = chain.n_states();
    auto fwd = support_edges(chain.p_mu, false);
    auto bwd = support_edges(chain.p_mu, true);
    auto level = bfs_levels(fwd, 0);
    auto rlevel = bfs_levels(bwd, 0);

    ErgodicityVerdict verdict;
    verdict.irreducible = true;
    for (int s = 0; s < n; ++s)
        if (level[s] < 0 || rlevel[s] < 0) verdict.irreducible = false;

    // gcd of (level(u) + 1 - level(v)) over support edges within the
    // component reachable from state 0; equals the chain period when the
    // graph is strongly connected.
    long long g = 0;
    for (int u = 0; u < n; ++u) {
        if (level[u] < 0) continue;
        for (int v : fwd[u]) {
            if (level[v] < 0) continue;
            g = std::gcd(g, static_cast<long long>(std::abs(level[u] + 1 - level[v])));
        }
    }
    verdict.aperiodic = (g == 1);
    return verdict;
}

}  // namespace fedtd
