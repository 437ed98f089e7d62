#pragma once

#include <cstdint>
#include <vector>

#include "fedtd/mdp.hpp"
#include "fedtd/rng.hpp"

namespace fedtd {

// Inverse-CDF sampler over the rows of a stochastic matrix. Cumulative rows
// are precomputed with the last entry forced to 1, so one uniform draw maps
// to one index.
class CategoricalTable {
  public:
    explicit CategoricalTable(const Matrix& probs);

    int sample(int row, double u) const;
    int n_rows() const { return static_cast<int>(cum_.rows()); }
    int n_cols() const { return static_cast<int>(cum_.cols()); }

  private:
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> cum_;
};

// Immutable per-agent sampling tables (policy row per state, next-state row
// per state for each action). Shared by all runs touching the same agent.
class AgentTables {
  public:
    AgentTables(const Mdp& mdp, const Policy& policy);

    int sample_action(int s, double u) const { return policy_.sample(s, u); }
    int sample_next(int s, int a, double u) const {
        return transitions_[a].sample(s, u);
    }
    double reward(int s, int a) const { return rewards_(s, a); }
    int n_states() const { return policy_.n_rows(); }

  private:
    CategoricalTable policy_;
    std::vector<CategoricalTable> transitions_;
    Matrix rewards_;
};

enum class SamplingMode { markovian, iid };

struct Transition {
    int s = 0;
    int a = 0;
    int s_next = 0;
    double reward = 0.0;
};

// One agent's trajectory source. The RNG stream is a pure function of
// (master_seed, run_index, agent_index); the initial state is uniform and
// consumed at construction. Markovian steps cost exactly two uniform draws.
class AgentStream {
  public:
    AgentStream(const AgentTables& tables, SamplingMode mode,
                std::uint64_t master_seed, std::uint64_t run_index,
                int agent_index);

    Transition step_markov();
    Transition step_iid(const StationaryDistribution& d_mu);

    int current_state() const { return current_state_; }
    int agent_index() const { return agent_index_; }
    SamplingMode mode() const { return mode_; }

  private:
    const AgentTables* tables_;
    SamplingMode mode_;
    int agent_index_;
    int current_state_;
    SplitMix64 rng_;
};

// Empirical geometric-mixing fit: m(t) = max_s TV(P^t(s,.), d) fitted as
// c_e_hat * alpha_hat^t by least squares on log m(t). one_step marks chains
// whose TV floor is reached immediately (alpha_hat reported as 0).
struct MixingEstimate {
    double c_e_hat = 1.0;
    double alpha_hat = 0.0;
    int horizon = 0;
    double fit_residual = 0.0;
    bool one_step = false;
};

MixingEstimate estimate_mixing(const InducedChain& chain, int horizon);

}  // namespace fedtd
