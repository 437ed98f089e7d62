#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "doctest.h"

#include "fedtd/errors.hpp"
#include "fedtd/experiments.hpp"
#include "fedtd/rng.hpp"
#include "fedtd/serialize.hpp"

using namespace fedtd;

namespace {

RunTrace make_trace(const std::vector<std::int64_t>& ts,
                    const std::vector<double>& errs) {
    RunTrace trace;
    trace.ts = ts;
    trace.err_primary = errs;
    trace.err_reward = errs;
    return trace;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

ExperimentConfig tiny_config() {
    ExperimentConfig config;
    config.n_states = 6;
    config.n_actions = 2;
    config.d = 2;
    config.n_agents = {2};
    config.horizon = 300;
    config.n_runs = 4;
    config.beta = {0.6};
    config.eps_p = {0.2};
    config.eps_r = {0.2};
    config.stride = 50;
    config.validate();
    return config;
}

}  // namespace

TEST_CASE("cell tags name every swept coordinate") {
    CellKey key{4, 0.6, 0.5, 1.5};
    CHECK(key.tag() == "N4_beta0.6_ep0.5_er1.5");
    CellKey zero{1, 0.2, 0.0, 0.0};
    CHECK(zero.tag() == "N1_beta0.2_ep0_er0");
}

TEST_CASE("aggregation of identical traces has zero spread") {
    std::vector<RunTrace> traces(3, make_trace({1, 2}, {4.0, 2.0}));
    AggregateResult agg = aggregate_runs(traces);
    CHECK(agg.n_runs == 3);
    CHECK(agg.n_diverged == 0);
    CHECK(agg.ts == std::vector<std::int64_t>{1, 2});
    CHECK(agg.mean == std::vector<double>{4.0, 2.0});
    CHECK(agg.stddev == std::vector<double>{0.0, 0.0});
    CHECK(agg.mean_r == std::vector<double>{4.0, 2.0});
}

TEST_CASE("aggregation means and deviations on a hand example") {
    std::vector<RunTrace> traces{make_trace({1, 2}, {1.0, 1.0}),
                                 make_trace({1, 2}, {3.0, 3.0})};
    AggregateResult agg = aggregate_runs(traces);
    CHECK(agg.mean == std::vector<double>{2.0, 2.0});
    CHECK(agg.stddev == std::vector<double>{1.0, 1.0});  // population std
}

TEST_CASE("aggregation matches a straightforward reference") {
    SplitMix64 rng(7);
    std::vector<RunTrace> traces;
    for (int k = 0; k < 100; ++k) {
        std::vector<double> errs(5);
        for (double& e : errs) e = rng.uniform(0.0, 10.0);
        traces.push_back(make_trace({1, 2, 3, 4, 5}, errs));
    }
    AggregateResult agg = aggregate_runs(traces);
    for (int j = 0; j < 5; ++j) {
        double mean = 0.0;
        for (const RunTrace& t : traces) mean += t.err_primary[j];
        mean /= 100.0;
        double var = 0.0;
        for (const RunTrace& t : traces) {
            double d = t.err_primary[j] - mean;
            var += d * d;
        }
        var /= 100.0;
        CHECK(std::abs(agg.mean[j] - mean) <= 1e-12 * std::max(1.0, mean));
        CHECK(std::abs(agg.stddev[j] - std::sqrt(var)) <= 1e-12);
    }
}

TEST_CASE("diverged traces are excluded but counted") {
    RunTrace bad;
    bad.diverged = true;
    std::vector<RunTrace> traces{make_trace({1}, {2.0}), bad,
                                 make_trace({1}, {4.0})};
    AggregateResult agg = aggregate_runs(traces);
    CHECK(agg.n_runs == 3);
    CHECK(agg.n_diverged == 1);
    CHECK(agg.mean == std::vector<double>{3.0});

    std::vector<RunTrace> all_bad{bad, bad};
    CHECK_THROWS_AS(aggregate_runs(all_bad), DivergenceError);
}

TEST_CASE("aggregation rejects mismatched recording grids") {
    std::vector<RunTrace> traces{make_trace({1, 2}, {1.0, 1.0}),
                                 make_trace({1, 3}, {1.0, 1.0})};
    CHECK_THROWS_AS(aggregate_runs(traces), ProtocolError);
}

TEST_CASE("log-log fit recovers exact power laws") {
    std::vector<std::int64_t> ts;
    std::vector<double> inv, inv2;
    for (std::int64_t t = 1; t <= 200; ++t) {
        ts.push_back(t);
        inv.push_back(7.0 / static_cast<double>(t));
        inv2.push_back(3.0 / static_cast<double>(t * t));
    }
    RateFit fit = fit_loglog_rate(ts, inv, 10, 200);
    CHECK(fit.valid);
    CHECK(fit.slope == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(fit.intercept == doctest::Approx(std::log(7.0)).epsilon(1e-9));
    CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(fit.window_lo == 10);
    CHECK(fit.window_hi == 200);

    RateFit fit2 = fit_loglog_rate(ts, inv2, 1, 200);
    CHECK(fit2.slope == doctest::Approx(-2.0).epsilon(1e-9));
}

TEST_CASE("log-log fit tolerates multiplicative noise") {
    int in_range = 0;
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        SplitMix64 rng(seed);
        std::vector<std::int64_t> ts;
        std::vector<double> ys;
        for (std::int64_t t = 10; t <= 1000; t += 10) {
            ts.push_back(t);
            double noise = std::exp(0.05 * rng.normal());
            ys.push_back(5.0 / static_cast<double>(t) * noise);
        }
        RateFit fit = fit_loglog_rate(ts, ys, 10, 1000);
        if (fit.slope >= -1.1 && fit.slope <= -0.9) ++in_range;
    }
    CHECK(in_range >= 295);
}

TEST_CASE("log-log fit flags windows with too few points") {
    std::vector<std::int64_t> ts{1, 2, 50};
    std::vector<double> ys{1.0, 0.5, 0.01};
    RateFit fit = fit_loglog_rate(ts, ys, 10, 40);
    CHECK(!fit.valid);
    CHECK_THROWS_AS(fit_loglog_rate(ts, {1.0}, 1, 50), ProtocolError);
}

TEST_CASE("log-log fit rejects nonpositive means in the window") {
    std::vector<std::int64_t> ts{1, 2, 3};
    std::vector<double> ys{1.0, 0.0, 0.25};
    CHECK_THROWS_AS(fit_loglog_rate(ts, ys, 1, 3), NumericalError);
}

TEST_CASE("speedup table scales terminal errors by the agent count") {
    AggregateResult agg;
    agg.ts = {10, 20};
    agg.mean = {1.0, 0.5};
    std::vector<std::pair<int, const AggregateResult*>> by_n{
        {1, &agg}, {2, &agg}, {4, &agg}};
    std::vector<SpeedupEntry> table = speedup_table(by_n, 20);
    REQUIRE(table.size() == 3);
    CHECK(table[0].n_agents == 1);
    CHECK(table[0].scaled_err == 0.5);
    CHECK(table[1].scaled_err == 1.0);
    CHECK(table[2].scaled_err == 2.0);
}

TEST_CASE("ideal linear speedup gives a flat table") {
    AggregateResult a1, a2, a4;
    for (auto* a : {&a1, &a2, &a4}) a->ts = {100};
    a1.mean = {0.8};
    a2.mean = {0.4};
    a4.mean = {0.2};
    std::vector<SpeedupEntry> table =
        speedup_table({{1, &a1}, {2, &a2}, {4, &a4}}, 100);
    CHECK(table[0].scaled_err == doctest::Approx(0.8));
    CHECK(table[1].scaled_err == doctest::Approx(0.8));
    CHECK(table[2].scaled_err == doctest::Approx(0.8));
}

TEST_CASE("speedup table validates its inputs") {
    AggregateResult agg;
    agg.ts = {10};
    agg.mean = {1.0};
    CHECK_THROWS_AS(speedup_table({{1, &agg}, {1, &agg}}, 10), ConfigError);
    CHECK_THROWS_AS(speedup_table({{1, &agg}}, 5), ConfigError);
}

TEST_CASE("parallel_for covers every index once for any worker count") {
    for (int workers : {1, 3, 8}) {
        std::vector<std::atomic<int>> hits(100);
        for (auto& h : hits) h = 0;
        parallel_for(workers, 100, [&](int i) { ++hits[i]; });
        for (auto& h : hits) CHECK(h == 1);
    }
}

TEST_CASE("parallel_for propagates exceptions") {
    CHECK_THROWS_AS(parallel_for(4, 50,
                                 [](int i) {
                                     if (i == 17)
                                         throw NumericalError("boom");
                                 }),
                    NumericalError);
}

TEST_CASE("environment generation is driven by env_seed, not master_seed") {
    ExperimentConfig config = tiny_config();
    ExperimentConfig other = config;
    other.master_seed = 999;
    AgentFamily a = experiment_family(config, 2, 0.2, 0.2);
    AgentFamily b = experiment_family(other, 2, 0.2, 0.2);
    REQUIRE(a.n_agents() == b.n_agents());
    for (int i = 0; i < a.n_agents(); ++i) {
        CHECK(a.mdps[i].rewards == b.mdps[i].rewards);
        for (int k = 0; k < a.n_actions(); ++k)
            CHECK(a.mdps[i].transitions[k] == b.mdps[i].transitions[k]);
    }
    ExperimentConfig third = config;
    third.env_seed = 42;
    AgentFamily c = experiment_family(third, 2, 0.2, 0.2);
    CHECK(a.mdps[0].rewards != c.mdps[0].rewards);
}

TEST_CASE("run_experiment aggregates every grid cell") {
    ExperimentConfig config = tiny_config();
    config.n_agents = {1, 2};
    config.beta = {0.4, 0.6};
    ExperimentResult result = run_experiment(config);
    CHECK(result.cells.size() == 4);
    for (const CellResult& cell : result.cells) {
        CHECK(cell.aggregate.n_runs == 4);
        CHECK(cell.aggregate.n_diverged == 0);
        CHECK(cell.aggregate.ts.back() == 300);
        CHECK(cell.aggregate.mean.size() == cell.aggregate.ts.size());
        CHECK(cell.lambda_min_sym > 0.0);
        CHECK(cell.mixing.alpha_hat >= 0.0);
        CHECK(cell.achieved.feasible());
        CHECK(cell.traces.empty());
    }
    ExperimentResult with_traces = run_experiment(config, true);
    CHECK(with_traces.cells[0].traces.size() == 4);
}

TEST_CASE("a master_seed change moves the sampled curves but not the truth") {
    ExperimentConfig config = tiny_config();
    ExperimentConfig moved = config;
    moved.master_seed = 555;
    ExperimentResult a = run_experiment(config);
    ExperimentResult b = run_experiment(moved);
    CHECK(a.cells[0].aggregate.mean != b.cells[0].aggregate.mean);
    // Same environment, so the gap/mixing diagnostics coincide exactly.
    CHECK(a.cells[0].gaps.h_r == b.cells[0].gaps.h_r);
    CHECK(a.cells[0].mixing.alpha_hat == b.cells[0].mixing.alpha_hat);
    CHECK(a.cells[0].lambda_min_sym == b.cells[0].lambda_min_sym);
}

TEST_CASE("cells do not depend on the rest of the grid") {
    ExperimentConfig wide = tiny_config();
    wide.n_agents = {1, 2};
    ExperimentConfig narrow = tiny_config();
    narrow.n_agents = {2};
    ExperimentResult a = run_experiment(wide);
    ExperimentResult b = run_experiment(narrow);
    const CellResult* from_wide = nullptr;
    for (const CellResult& cell : a.cells)
        if (cell.key.n_agents == 2) from_wide = &cell;
    REQUIRE(from_wide != nullptr);
    CHECK(from_wide->aggregate.mean == b.cells[0].aggregate.mean);
    CHECK(from_wide->aggregate.stddev == b.cells[0].aggregate.stddev);
}

TEST_CASE("worker count changes nothing but the wall clock") {
    ExperimentConfig config = tiny_config();
    config.n_runs = 8;
    ExperimentConfig pooled = config;
    pooled.workers = 4;
    ExperimentResult a = run_experiment(config);
    ExperimentResult b = run_experiment(pooled);
    REQUIRE(a.cells.size() == b.cells.size());
    for (std::size_t k = 0; k < a.cells.size(); ++k) {
        CHECK(a.cells[k].aggregate.mean == b.cells[k].aggregate.mean);
        CHECK(a.cells[k].aggregate.stddev == b.cells[k].aggregate.stddev);
        CHECK(a.cells[k].aggregate.mean_r == b.cells[k].aggregate.mean_r);
    }
}

TEST_CASE("expected-mode cells have zero spread across runs") {
    ExperimentConfig config = tiny_config();
    config.update_mode = "expected";
    config.n_runs = 3;
    ExperimentResult result = run_experiment(config);
    for (double s : result.cells[0].aggregate.stddev) CHECK(s == 0.0);
}

TEST_CASE("discounted experiments skip the reward-error columns") {
    ExperimentConfig config = tiny_config();
    config.algorithm = "exp";
    ExperimentResult result = run_experiment(config);
    CHECK(result.cells[0].aggregate.mean_r.empty());
    CHECK(!result.cells[0].aggregate.mean.empty());
}

TEST_CASE("export writes parseable, value-exact artifacts") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "fedtd_export_test";
    fs::remove_all(dir);
    ExperimentConfig config = tiny_config();
    config.n_agents = {1, 2};
    ExperimentResult result = run_experiment(config, true);
    export_results(result, dir.string());

    Json summary = read_json_file((dir / "summary.json").string());
    CHECK(summary.at("format_version").get<int>() == 1);
    CHECK(summary.at("cells").size() == 2);
    CHECK(summary.at("config").at("n_states").get<int>() == 6);
    CHECK(summary.at("config_digest").get<std::string>() ==
          config_digest(config));
    REQUIRE(summary.at("speedup").size() == 1);

    for (const CellResult& cell : result.cells) {
        fs::path csv = dir / ("cell_" + cell.key.tag() + ".csv");
        REQUIRE(fs::exists(csv));
        CsvTable table = read_csv(csv.string());
        REQUIRE(table.columns.size() == 5);  // t, mean, std, mean_r, std_r
        REQUIRE(table.rows.size() == cell.aggregate.ts.size());
        for (std::size_t j = 0; j < table.rows.size(); ++j) {
            CHECK(table.rows[j][0] ==
                  static_cast<double>(cell.aggregate.ts[j]));
            CHECK(table.rows[j][1] == cell.aggregate.mean[j]);
            CHECK(table.rows[j][2] == cell.aggregate.stddev[j]);
        }
        fs::path trace0 = dir / ("trace_" + cell.key.tag() + "_run0.csv");
        CHECK(fs::exists(trace0));
    }

    // A second export produces byte-identical artifacts.
    fs::path dir2 = fs::temp_directory_path() / "fedtd_export_test2";
    fs::remove_all(dir2);
    export_results(result, dir2.string());
    CHECK(slurp(dir / "summary.json") == slurp(dir2 / "summary.json"));
    for (const CellResult& cell : result.cells) {
        std::string name = "cell_" + cell.key.tag() + ".csv";
        CHECK(slurp(dir / name) == slurp(dir2 / name));
    }
    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST_CASE("run_experiment validates the config first") {
    ExperimentConfig config = tiny_config();
    config.gamma = 1.5;
    CHECK_THROWS_AS(run_experiment(config), ConfigError);
}
