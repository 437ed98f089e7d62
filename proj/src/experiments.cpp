#include "fedtd/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <map>
#include <mutex>
#include <thread>

#include "fedtd/errors.hpp"
#include "fedtd/rng.hpp"
#include "fedtd/serialize.hpp"

namespace fedtd {

namespace {

constexpr int kMixingHorizon = 100;

SamplingMode parse_mode(const std::string& mode) {
    return mode == "iid" ? SamplingMode::iid : SamplingMode::markovian;
}

UpdateMode parse_update_mode(const std::string& update_mode) {
    return update_mode == "expected" ? UpdateMode::expected
                                     : UpdateMode::sampled;
}

Json finite_or_string(double v) {
    if (std::isfinite(v)) return Json(v);
    return Json(v > 0 ? "inf" : "-inf");
}

}  // namespace

std::string CellKey::tag() const {
    return "N" + std::to_string(n_agents) + "_beta" + format_double(beta) +
           "_ep" + format_double(eps_p) + "_er" + format_double(eps_r);
}

Policy experiment_policy(const ExperimentConfig& config) {
    return gen_policy(config.n_states, config.n_actions,
                      derive_seed(config.env_seed, "policy"));
}

FeatureMatrix experiment_features(const ExperimentConfig& config) {
    return gen_feature_matrix(config.n_states, config.d, true,
                              derive_seed(config.env_seed, "phi"));
}

AgentFamily experiment_family(const ExperimentConfig& config, int n_agents,
                              double eps_p, double eps_r) {
    HeterogeneityBudget budget{eps_p, eps_r, config.r_max};
    return gen_agent_family(config.n_states, config.n_actions, n_agents, budget,
                            experiment_policy(config),
                            experiment_features(config),
                            derive_seed(config.env_seed, "env"));
}

void parallel_for(int workers, int n, const std::function<void(int)>& fn) {
    if (workers < 1) throw ConfigError("parallel_for: workers must be >= 1");
    if (workers == 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto body = [&]() {
        while (true) {
            int i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                next.store(n);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const int count = std::min(workers, n);
    pool.reserve(count);
    for (int w = 0; w < count; ++w) pool.emplace_back(body);
    for (std::thread& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

AggregateResult aggregate_runs(const std::vector<RunTrace>& traces) {
    if (traces.empty()) throw ProtocolError("aggregate_runs: no traces");
    const RunTrace* ref = nullptr;
    int diverged = 0;
    for (const RunTrace& tr : traces) {
        if (tr.diverged)
            ++diverged;
        else if (!ref)
            ref = &tr;
    }
    if (!ref) throw DivergenceError("aggregate_runs: every run diverged");
    for (const RunTrace& tr : traces)
        if (!tr.diverged && tr.ts != ref->ts)
            throw ProtocolError("aggregate_runs: recording grids disagree");

    AggregateResult agg;
    agg.ts = ref->ts;
    agg.n_runs = static_cast<int>(traces.size());
    agg.n_diverged = diverged;
    const std::size_t len = ref->ts.size();
    const double used = static_cast<double>(traces.size() - diverged);
    const bool with_reward = !ref->err_reward.empty();

    agg.mean.assign(len, 0.0);
    agg.stddev.assign(len, 0.0);
    if (with_reward) {
        agg.mean_r.assign(len, 0.0);
        agg.stddev_r.assign(len, 0.0);
    }
    for (const RunTrace& tr : traces) {
        if (tr.diverged) continue;
        for (std::size_t k = 0; k < len; ++k) {
            agg.mean[k] += tr.err_primary[k];
            if (with_reward) agg.mean_r[k] += tr.err_reward[k];
        }
    }
    for (std::size_t k = 0; k < len; ++k) {
        agg.mean[k] /= used;
        if (with_reward) agg.mean_r[k] /= used;
    }
    // Deviations are taken against the first trace, not against the rounded
    // mean, so identical traces (expected mode) give an exact zero spread.
    for (const RunTrace& tr : traces) {
        if (tr.diverged) continue;
        for (std::size_t k = 0; k < len; ++k) {
            double dv = tr.err_primary[k] - ref->err_primary[k];
            agg.stddev[k] += dv * dv;
            if (with_reward) {
                double dr = tr.err_reward[k] - ref->err_reward[k];
                agg.stddev_r[k] += dr * dr;
            }
        }
    }
    for (std::size_t k = 0; k < len; ++k) {
        double shift = agg.mean[k] - ref->err_primary[k];
        agg.stddev[k] =
            std::sqrt(std::max(0.0, agg.stddev[k] / used - shift * shift));
        if (with_reward) {
            double shift_r = agg.mean_r[k] - ref->err_reward[k];
            agg.stddev_r[k] = std::sqrt(
                std::max(0.0, agg.stddev_r[k] / used - shift_r * shift_r));
        }
    }
    return agg;
}

RateFit fit_loglog_rate(const std::vector<std::int64_t>& ts,
                        const std::vector<double>& means,
                        std::int64_t window_lo, std::int64_t window_hi) {
    if (ts.size() != means.size())
        throw ProtocolError("fit_loglog_rate: series lengths disagree");
    if (window_lo < 1 || window_lo >= window_hi)
        throw ConfigError("fit_loglog_rate: need 1 <= window_lo < window_hi");
    std::vector<double> xs, ys;
    for (std::size_t k = 0; k < ts.size(); ++k) {
        if (ts[k] < window_lo || ts[k] > window_hi) continue;
        if (!(means[k] > 0.0))
            throw NumericalError(
                "fit_loglog_rate: nonpositive mean error inside the window");
        xs.push_back(std::log(static_cast<double>(ts[k])));
        ys.push_back(std::log(means[k]));
    }
    if (xs.size() < 2) {
        RateFit fit;
        fit.window_lo = window_lo;
        fit.window_hi = window_hi;
        return fit;  // valid stays false
    }

    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) mx += xs[k], my += ys[k];
    mx /= n, my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        sxx += (xs[k] - mx) * (xs[k] - mx);
        sxy += (xs[k] - mx) * (ys[k] - my);
        syy += (ys[k] - my) * (ys[k] - my);
    }
    RateFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ss_res = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        double r = ys[k] - (fit.intercept + fit.slope * xs[k]);
        ss_res += r * r;
    }
    fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
    fit.window_lo = window_lo;
    fit.window_hi = window_hi;
    fit.valid = true;
    return fit;
}

std::vector<SpeedupEntry> speedup_table(
    const std::vector<std::pair<int, const AggregateResult*>>& by_n,
    std::int64_t t_eval) {
    if (by_n.empty()) throw ConfigError("speedup_table: no aggregates");
    std::vector<SpeedupEntry> table;
    for (const auto& [n_agents, agg] : by_n) {
        for (const SpeedupEntry& e : table)
            if (e.n_agents == n_agents)
                throw ConfigError("speedup_table: duplicate agent count");
        // last recorded point at or before t_eval
        std::ptrdiff_t idx = -1;
        for (std::size_t k = 0; k < agg->ts.size(); ++k)
            if (agg->ts[k] <= t_eval) idx = static_cast<std::ptrdiff_t>(k);
        if (idx < 0)
            throw ConfigError("speedup_table: t_eval precedes every sample");
        table.push_back({n_agents, n_agents * agg->mean[idx]});
    }
    std::sort(table.begin(), table.end(),
              [](const SpeedupEntry& a, const SpeedupEntry& b) {
                  return a.n_agents < b.n_agents;
              });
    return table;
}

ExperimentResult run_experiment(const ExperimentConfig& config,
                                bool keep_traces) {
    config.validate();
    ExperimentResult result;
    result.config = config;
    const bool is_avg = config.algorithm == "avg";
    const bool sampled = config.update_mode == "sampled";
    const std::int64_t stride = config.resolved_stride();

    for (int n_agents : config.n_agents) {
        for (double eps_p : config.eps_p) {
            for (double eps_r : config.eps_r) {
                AgentFamily family =
                    experiment_family(config, n_agents, eps_p, eps_r);
                CellContext ctx(family, config.gamma, sampled);
                GapConstants gaps =
                    gap_constants(family.budget, config.n_states, config.r_max,
                                  ctx.agent_solutions());
                HeterogeneityReport achieved = verify_heterogeneity(family);
                MixingEstimate mixing = estimate_mixing(
                    induce_chain(family.mdps[0], family.policy), kMixingHorizon);

                for (double beta : config.beta) {
                    CellResult cell;
                    cell.key = CellKey{n_agents, beta, eps_p, eps_r};
                    cell.gaps = gaps;
                    cell.achieved = achieved;
                    cell.mixing = mixing;
                    cell.lambda_min_sym = ctx.global().lambda_min_sym;

                    StepSchedule schedule{beta};
                    const std::uint64_t run_master = derive_seed(
                        config.master_seed, "cell:" + cell.key.tag());
                    std::vector<RunTrace> traces(config.n_runs);
                    parallel_for(config.workers, config.n_runs, [&](int r) {
                        RunOptions opts;
                        opts.horizon = config.horizon;
                        opts.mode = parse_mode(config.mode);
                        opts.update_mode = parse_update_mode(config.update_mode);
                        opts.master_seed = run_master;
                        opts.run_index = static_cast<std::uint64_t>(r);
                        opts.stride = stride;
                        opts.reference_global = config.reference == "global";
                        traces[r] = is_avg ? run_avgfedtd(ctx, schedule, opts)
                                           : run_expfedtd(ctx, schedule, opts);
                    });
                    cell.aggregate = aggregate_runs(traces);
                    if (cell.aggregate.n_diverged * 10 > config.n_runs)
                        throw DivergenceError(
                            "cell " + cell.key.tag() + ": " +
                            std::to_string(cell.aggregate.n_diverged) + " of " +
                            std::to_string(config.n_runs) + " runs diverged");

                    const std::int64_t lo = config.resolved_fit_lo();
                    const std::int64_t hi = config.resolved_fit_hi();
                    int usable = 0;
                    bool positive = true;
                    for (std::size_t k = 0; k < cell.aggregate.ts.size(); ++k) {
                        if (cell.aggregate.ts[k] < lo ||
                            cell.aggregate.ts[k] > hi)
                            continue;
                        ++usable;
                        if (!(cell.aggregate.mean[k] > 0.0)) positive = false;
                    }
                    if (usable >= 2 && positive)
                        cell.rate = fit_loglog_rate(cell.aggregate.ts,
                                                    cell.aggregate.mean, lo, hi);
                    if (keep_traces) cell.traces = std::move(traces);
                    result.cells.push_back(std::move(cell));
                }
            }
        }
    }
    return result;
}

namespace {

Json gaps_to_json(const GapConstants& g) {
    Json j;
    j["c_d"] = finite_or_string(g.c_d);
    j["a_eps"] = finite_or_string(g.a_eps);
    j["b_eps"] = finite_or_string(g.b_eps);
    j["h_r"] = finite_or_string(g.h_r);
    j["h_theta"] = finite_or_string(g.h_theta);
    j["ups_eps"] = finite_or_string(g.ups_eps);
    j["h_hat"] = finite_or_string(g.h_hat);
    j["h_theta_vacuous"] = g.h_theta_vacuous;
    j["h_hat_vacuous"] = g.h_hat_vacuous;
    return j;
}

Json mixing_to_json(const MixingEstimate& m) {
    Json j;
    j["c_e_hat"] = m.c_e_hat;
    j["alpha_hat"] = m.alpha_hat;
    j["horizon"] = m.horizon;
    j["fit_residual"] = m.fit_residual;
    j["one_step"] = m.one_step;
    return j;
}

Json rate_to_json(const RateFit& fit) {
    Json j;
    j["valid"] = fit.valid;
    if (fit.valid) {
        j["slope"] = fit.slope;
        j["intercept"] = fit.intercept;
        j["r_squared"] = fit.r_squared;
        j["window_lo"] = fit.window_lo;
        j["window_hi"] = fit.window_hi;
    }
    return j;
}

}  // namespace

void export_results(const ExperimentResult& result, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());

    const Json config_json = config_to_json(result.config);
    const std::string config_line = config_json.dump();
    const std::string digest = config_digest(result.config);
    const bool is_avg = result.config.algorithm == "avg";

    Json summary;
    summary["format_version"] = kFormatVersion;
    summary["config"] = config_json;
    summary["config_digest"] = digest;
    Json cells = Json::array();

    for (const CellResult& cell : result.cells) {
        const std::string tag = cell.key.tag();
        const std::string csv_name = "cell_" + tag + ".csv";

        CsvTable table;
        table.comments = {"config: " + config_line,
                          "config_digest: " + digest,
                          "cell: " + tag,
                          "n_agents: " + std::to_string(cell.key.n_agents),
                          "beta: " + format_double(cell.key.beta),
                          "eps_p: " + format_double(cell.key.eps_p),
                          "eps_r: " + format_double(cell.key.eps_r)};
        table.columns = {"t", "mean", "std"};
        if (is_avg) {
            table.columns.push_back("mean_r");
            table.columns.push_back("std_r");
        }
        for (std::size_t k = 0; k < cell.aggregate.ts.size(); ++k) {
            std::vector<double> row{static_cast<double>(cell.aggregate.ts[k]),
                                    cell.aggregate.mean[k],
                                    cell.aggregate.stddev[k]};
            if (is_avg) {
                row.push_back(cell.aggregate.mean_r[k]);
                row.push_back(cell.aggregate.stddev_r[k]);
            }
            table.rows.push_back(std::move(row));
        }
        write_csv(table, (fs::path(out_dir) / csv_name).string());

        for (const RunTrace& trace : cell.traces) {
            CsvTable tt;
            tt.comments = {"config: " + config_line,
                           "config_digest: " + digest, "cell: " + tag,
                           "run: " + std::to_string(trace.run_index),
                           "diverged: " + std::string(trace.diverged ? "1" : "0")};
            tt.columns = is_avg
                             ? std::vector<std::string>{"t", "err_theta_bar_sq",
                                                        "err_r_sq"}
                             : std::vector<std::string>{"t",
                                                        "err_vartheta_bar_sq"};
            for (std::size_t k = 0; k < trace.ts.size(); ++k) {
                std::vector<double> row{static_cast<double>(trace.ts[k]),
                                        trace.err_primary[k]};
                if (is_avg) row.push_back(trace.err_reward[k]);
                tt.rows.push_back(std::move(row));
            }
            write_csv(tt, (fs::path(out_dir) /
                           ("trace_" + tag + "_run" +
                            std::to_string(trace.run_index) + ".csv"))
                              .string());
        }

        Json cj;
        cj["tag"] = tag;
        cj["n_agents"] = cell.key.n_agents;
        cj["beta"] = cell.key.beta;
        cj["eps_p"] = cell.key.eps_p;
        cj["eps_r"] = cell.key.eps_r;
        cj["csv"] = csv_name;
        cj["n_runs"] = cell.aggregate.n_runs;
        cj["n_diverged"] = cell.aggregate.n_diverged;
        if (!cell.aggregate.mean.empty())
            cj["final_mean_err"] = cell.aggregate.mean.back();
        cj["rate_fit"] = rate_to_json(cell.rate);
        cj["gap_constants"] = gaps_to_json(cell.gaps);
        cj["mixing"] = mixing_to_json(cell.mixing);
        cj["eps_p_achieved"] = cell.achieved.eps_p_achieved;
        cj["eps_r_achieved"] = cell.achieved.eps_r_achieved;
        cj["lambda_min_sym"] = cell.lambda_min_sym;
        cells.push_back(std::move(cj));
    }
    summary["cells"] = std::move(cells);

    // one speedup table per (beta, eps_p, eps_r) group spanning several N
    Json speedups = Json::array();
    std::map<std::string, std::vector<const CellResult*>> groups;
    for (const CellResult& cell : result.cells)
        groups["beta" + format_double(cell.key.beta) + "_ep" +
               format_double(cell.key.eps_p) + "_er" +
               format_double(cell.key.eps_r)]
            .push_back(&cell);
    const std::int64_t t_eval = result.config.resolved_t_eval();
    for (const auto& [group_tag, members] : groups) {
        if (members.size() < 2) continue;
        std::vector<std::pair<int, const AggregateResult*>> by_n;
        for (const CellResult* cell : members)
            by_n.push_back({cell->key.n_agents, &cell->aggregate});
        Json sj;
        sj["group"] = group_tag;
        sj["t_eval"] = t_eval;
        Json rows = Json::array();
        for (const SpeedupEntry& e : speedup_table(by_n, t_eval))
            rows.push_back({{"n_agents", e.n_agents},
                            {"scaled_err", e.scaled_err}});
        sj["table"] = std::move(rows);
        speedups.push_back(std::move(sj));
    }
    summary["speedup"] = std::move(speedups);

    write_json_file(summary, (fs::path(out_dir) / "summary.json").string());
}

}  // namespace fedtd
