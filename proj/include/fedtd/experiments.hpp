#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fedtd/config.hpp"
#include "fedtd/fedtd0.hpp"

namespace fedtd {

// One point of the sweep grid. The tag names files and seeds the cell's
// trajectory streams, so cells never share draws.
struct CellKey {
    int n_agents = 1;
    double beta = 0.6;
    double eps_p = 0.0;
    double eps_r = 0.0;

    std::string tag() const;
};

struct AggregateResult {
    std::vector<std::int64_t> ts;
    std::vector<double> mean;
    std::vector<double> stddev;
    std::vector<double> mean_r;    // reward error, avg variant only
    std::vector<double> stddev_r;
    int n_runs = 0;
    int n_diverged = 0;
};

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    std::int64_t window_lo = 0;
    std::int64_t window_hi = 0;
    bool valid = false;  // false when the window held fewer than two points
};

struct SpeedupEntry {
    int n_agents = 0;
    double scaled_err = 0.0;  // N * mean_err_N(t_eval)
};

struct CellResult {
    CellKey key;
    AggregateResult aggregate;
    RateFit rate;
    GapConstants gaps;
    MixingEstimate mixing;  // agent 1's induced chain
    HeterogeneityReport achieved;
    double lambda_min_sym = 0.0;  // global lambda_min(A + A^T)
    std::vector<RunTrace> traces;  // only when requested
};

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<CellResult> cells;
};

// Environment pieces are derived from env_seed only, so every cell sharing a
// budget sees the same family and the ground-truth reference never depends
// on the trajectory seed.
Policy experiment_policy(const ExperimentConfig& config);
FeatureMatrix experiment_features(const ExperimentConfig& config);
AgentFamily experiment_family(const ExperimentConfig& config, int n_agents,
                              double eps_p, double eps_r);

// Runs the full (n_agents x beta x eps_p x eps_r) grid, n_runs seeded runs
// per cell, aggregation over non-diverged runs. A cell with more than 10%
// diverged runs aborts the experiment.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                bool keep_traces = false);

// Pointwise mean and population standard deviation over non-diverged traces.
AggregateResult aggregate_runs(const std::vector<RunTrace>& traces);

// Least squares of log(mean err) on log(t) over recorded points in
// [window_lo, window_hi].
RateFit fit_loglog_rate(const std::vector<std::int64_t>& ts,
                        const std::vector<double>& means,
                        std::int64_t window_lo, std::int64_t window_hi);

// {N : N * mean_err_N(t_eval)} over aggregates differing only in N; equal
// values mean ideal linear speedup.
std::vector<SpeedupEntry> speedup_table(
    const std::vector<std::pair<int, const AggregateResult*>>& by_n,
    std::int64_t t_eval);

// Writes cell_<tag>.csv per cell (plus trace_<tag>_run<k>.csv when traces
// were kept) and summary.json with the resolved config, digest, rate fits,
// speedup tables, gap constants, and mixing estimates.
void export_results(const ExperimentResult& result, const std::string& out_dir);

// Runs fn(0..n-1) on a pool; results must depend only on the index, which
// makes the outcome identical for any worker count.
void parallel_for(int workers, int n, const std::function<void(int)>& fn);

}  // namespace fedtd
