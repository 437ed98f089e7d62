#pragma once

#include <cstdint>
#include <vector>

#include "fedtd/env.hpp"
#include "fedtd/sampling.hpp"
#include "fedtd/solve.hpp"

namespace fedtd {

// Polynomial stepsize beta_t = 1/(t+1)^beta_exponent, so beta_0 = 1 exactly.
struct StepSchedule {
    double beta_exponent = 0.6;

    void validate() const;
    double beta(std::int64_t t) const;
};

enum class UpdateMode { sampled, expected };

// Server-visible state of the average-reward algorithm. theta_bar is the
// running mean of theta_0..theta_{t-1}; r_local holds each agent's running
// reward mean and r_global their average, rebroadcast each round.
struct AvgFedTdState {
    std::int64_t t = 0;
    Vector theta;
    Vector theta_bar;
    double r_global = 0.0;
    std::vector<double> r_local;
};

// Server-visible state of the discounted algorithm.
struct ExpFedTdState {
    std::int64_t t = 0;
    Vector vartheta;
    Vector vartheta_bar;
    double gamma = 0.0;
};

// delta = (reward - r_t) phi(s) + phi(s) (phi(s') - phi(s))^T theta.
Vector avg_td_error(const Vector& phi_s, const Vector& phi_s_next, double reward,
                    double r_t, const Vector& theta);

// r + (reward - r)/(t+1): running mean of the rewards seen through step t.
double avg_local_reward_update(double r_local_i, double reward, std::int64_t t);

// delta = reward phi(s) + phi(s) (gamma phi(s')^T - phi(s)^T) vartheta.
Vector exp_td_error(const Vector& phi_s, const Vector& phi_s_next, double reward,
                    double gamma, const Vector& vartheta);

// theta_{t+1} = theta_t + (beta_t/N) sum(deltas); the Polyak-Ruppert average
// advances with the pre-update theta_t; r_global becomes the mean of the
// freshly updated local estimates; then t advances. Deltas reduce in agent
// order.
void avg_server_step(AvgFedTdState& state, const std::vector<Vector>& deltas,
                     const std::vector<double>& r_locals, double beta_t);

void exp_server_step(ExpFedTdState& state, const std::vector<Vector>& deltas,
                     double beta_t);

// Everything runs of one cell share: the family, its per-agent sampling
// tables, and the ground-truth solutions the error curves are measured
// against.
class CellContext {
  public:
    CellContext(const AgentFamily& family, double gamma, bool build_tables = true);

    const AgentFamily& family() const { return *family_; }
    const std::vector<AgentSolution>& agent_solutions() const {
        return agent_solutions_;
    }
    const GlobalSolution& global() const { return global_; }
    const AgentTables& tables(int i) const { return tables_[i]; }
    // Features stored transposed (d x n_states) so phi(s) is a contiguous
    // column.
    const Matrix& phi_t() const { return phi_t_; }
    const Matrix& ups_bar() const { return ups_bar_; }
    const Vector& vartheta_star_bar() const { return vartheta_star_bar_; }
    double gamma() const { return gamma_; }
    int n_agents() const { return family_->n_agents(); }
    int d() const { return static_cast<int>(phi_t_.rows()); }

  private:
    const AgentFamily* family_;
    double gamma_;
    std::vector<AgentSolution> agent_solutions_;
    GlobalSolution global_;
    std::vector<AgentTables> tables_;
    Matrix phi_t_;
    Matrix ups_bar_;
    Vector vartheta_star_bar_;
};

struct RunOptions {
    std::int64_t horizon = 1000;
    SamplingMode mode = SamplingMode::markovian;
    UpdateMode update_mode = UpdateMode::sampled;
    std::uint64_t master_seed = 0;
    std::uint64_t run_index = 0;
    std::int64_t stride = 1;
    // Error reference: agent 1's fixed point by default, the global one on
    // request.
    bool reference_global = false;
    // Diagnostic: every agent replays stream 0 (identical samples).
    bool shared_stream = false;
    Vector theta0;  // empty means zero
    double r0 = 0.0;
};

// Squared-error series against the reference, recorded at multiples of the
// stride and at the horizon. err_reward stays empty for the discounted
// variant. A trace is diverged when an iterate norm passed 1e12 or went
// non-finite; entries stop at the last finite recording.
struct RunTrace {
    std::vector<std::int64_t> ts;
    std::vector<double> err_primary;
    std::vector<double> err_reward;
    bool diverged = false;
    std::int64_t last_finite_t = 0;
    std::uint64_t run_index = 0;
};

RunTrace run_avgfedtd(const CellContext& ctx, const StepSchedule& schedule,
                      const RunOptions& opts);

RunTrace run_expfedtd(const CellContext& ctx, const StepSchedule& schedule,
                      const RunOptions& opts);

}  // namespace fedtd
