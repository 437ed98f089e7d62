#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedtd/serialize.hpp"

namespace fedtd {

// Resolved experiment configuration. List fields (n_agents, beta, eps_p,
// eps_r) span a sweep; run/solve-style invocations use single-element lists.
// Zero-valued stride / fit window / t_eval mean "derive from the horizon".
struct ExperimentConfig {
    std::string algorithm = "avg";  // "avg" | "exp"
    int n_states = 10;
    int n_actions = 5;
    int d = 3;
    std::vector<int> n_agents = {10};
    std::int64_t horizon = 10000;
    int n_runs = 20;
    std::vector<double> beta = {0.6};
    double gamma = 0.3;
    std::vector<double> eps_p = {0.5};
    std::vector<double> eps_r = {0.5};
    double r_max = 1.0;
    std::string mode = "markovian";       // "markovian" | "iid"
    std::string update_mode = "sampled";  // "sampled" | "expected"
    std::string reference = "agent1";     // "agent1" | "global"
    std::uint64_t master_seed = 1;  // trajectory randomness
    std::uint64_t env_seed = 1;     // environment generation, fixed across runs
    std::int64_t stride = 0;
    std::int64_t fit_window_lo = 0;
    std::int64_t fit_window_hi = 0;
    std::int64_t t_eval = 0;
    int workers = 1;
    std::string out_dir = "out";

    void validate() const;

    std::int64_t resolved_stride() const;
    std::int64_t resolved_fit_lo() const;
    std::int64_t resolved_fit_hi() const;
    std::int64_t resolved_t_eval() const;
};

// Parse with defaults for absent keys; unknown keys are schema errors naming
// the field path.
ExperimentConfig config_from_json(const Json& j);
Json config_to_json(const ExperimentConfig& config);

// Applies one --set key=value override; the value is parsed as JSON (bare
// words fall back to strings).
void apply_override(ExperimentConfig& config, const std::string& key,
                    const std::string& value);

// Scale used in the reference experiments: 100 states and actions, d = 21,
// 20 agents, horizon 1e4, 300 runs.
void apply_paper_scale(ExperimentConfig& config);

// Stable short hash of the canonical JSON form, embedded in artifacts.
std::string config_digest(const ExperimentConfig& config);

}  // namespace fedtd
