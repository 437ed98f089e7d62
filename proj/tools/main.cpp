#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fedtd/errors.hpp"
#include "fedtd/experiments.hpp"
#include "fedtd/serialize.hpp"

namespace fs = std::filesystem;
using namespace fedtd;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int workers = 0;
    std::int64_t stride = -1;
    bool paper_scale = false;
};

void attach_common(CLI::App* cmd, CommonOpts* opts) {
    cmd->add_option("--config", opts->config_path, "JSON config file");
    cmd->add_option("--out", opts->out_dir, "output directory");
    cmd->add_option("--set", opts->sets,
                    "config override key=value (value parsed as JSON)")
        ->take_all();
    cmd->add_option("--seed", opts->seed, "trajectory master seed")
        ->each([opts](const std::string&) { opts->seed_set = true; });
    cmd->add_option("--workers", opts->workers, "worker thread count");
    cmd->add_option("--stride", opts->stride, "trace recording stride");
    cmd->add_flag("--paper-scale", opts->paper_scale,
                  "preset: 100 states/actions, d=21, 20 agents, 300 runs");
}

ExperimentConfig load_config(const CommonOpts& opts) {
    ExperimentConfig config;
    if (!opts.config_path.empty())
        config = config_from_json(read_json_file(opts.config_path));
    if (opts.paper_scale) apply_paper_scale(config);
    for (const std::string& kv : opts.sets) {
        auto pos = kv.find('=');
        if (pos == std::string::npos || pos == 0)
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        apply_override(config, kv.substr(0, pos), kv.substr(pos + 1));
    }
    if (opts.seed_set) config.master_seed = opts.seed;
    if (opts.workers > 0) config.workers = opts.workers;
    if (opts.stride >= 0) config.stride = opts.stride;
    if (!opts.out_dir.empty()) config.out_dir = opts.out_dir;
    config.validate();
    return config;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
}

Json vector_to_json(const Vector& v) {
    Json arr = Json::array();
    for (int k = 0; k < v.size(); ++k) arr.push_back(v(k));
    return arr;
}

Json finite_or_string(double v) {
    if (std::isfinite(v)) return Json(v);
    return Json(v > 0 ? "inf" : "-inf");
}

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

std::string family_file_name(int n_agents, double eps_p, double eps_r) {
    return "family_N" + std::to_string(n_agents) + "_ep" + format_double(eps_p) +
           "_er" + format_double(eps_r) + ".json";
}

int cmd_gen_env(const ExperimentConfig& config) {
    ensure_dir(config.out_dir);
    Json manifest;
    manifest["format_version"] = kFormatVersion;
    manifest["config"] = config_to_json(config);
    manifest["config_digest"] = config_digest(config);
    Json families = Json::array();
    for (int n_agents : config.n_agents) {
        for (double eps_p : config.eps_p) {
            for (double eps_r : config.eps_r) {
                AgentFamily family =
                    experiment_family(config, n_agents, eps_p, eps_r);
                const std::string file =
                    family_file_name(n_agents, eps_p, eps_r);
                write_json_file(family_to_json(family),
                                (fs::path(config.out_dir) / file).string());
                HeterogeneityReport achieved = verify_heterogeneity(family);
                Json fj;
                fj["file"] = file;
                fj["n_agents"] = n_agents;
                fj["eps_p"] = eps_p;
                fj["eps_r"] = eps_r;
                fj["family_seed"] = family.master_seed;
                fj["eps_p_achieved"] = achieved.eps_p_achieved;
                fj["eps_r_achieved"] = achieved.eps_r_achieved;
                Json verdicts = Json::array();
                for (const Mdp& mdp : family.mdps) {
                    ErgodicityVerdict verdict =
                        check_ergodic(induce_chain(mdp, family.policy));
                    verdicts.push_back({{"irreducible", verdict.irreducible},
                                        {"aperiodic", verdict.aperiodic}});
                }
                fj["ergodicity"] = std::move(verdicts);
                fj["ones_residual"] = ones_residual_norm(family.phi.phi);
                families.push_back(std::move(fj));
                std::cout << "gen-env: wrote " << file << " (eps_p_achieved="
                          << format_double(achieved.eps_p_achieved)
                          << ", eps_r_achieved="
                          << format_double(achieved.eps_r_achieved) << ")\n";
            }
        }
    }
    manifest["families"] = std::move(families);
    write_json_file(manifest,
                    (fs::path(config.out_dir) / "manifest.json").string());
    return 0;
}

Json solve_cell(const AgentFamily& family, double gamma, int n_states,
                double r_max) {
    CellContext ctx(family, gamma, false);
    Json cj;
    cj["n_agents"] = family.n_agents();
    cj["eps_p"] = family.budget.eps_p;
    cj["eps_r"] = family.budget.eps_r;
    cj["gamma"] = gamma;
    Json agents = Json::array();
    for (const AgentSolution& sol : ctx.agent_solutions()) {
        Json aj;
        aj["r_star"] = sol.r_star;
        aj["theta_star"] = vector_to_json(sol.theta_star);
        aj["vartheta_star"] = vector_to_json(sol.vartheta_star);
        aj["lambda_min_sym_a"] = sol.lambda_min_sym_a;
        aj["lambda_min_sym_ups"] = sol.lambda_min_sym_ups;
        agents.push_back(std::move(aj));
    }
    cj["agents"] = std::move(agents);
    cj["theta_star_global"] = vector_to_json(ctx.global().theta_star_bar);
    cj["vartheta_star_global"] = vector_to_json(ctx.vartheta_star_bar());
    cj["r_star_global"] = ctx.global().r_star_bar;
    cj["lambda_min_sym"] = ctx.global().lambda_min_sym;
    cj["gap_constants"] = gaps_to_json(
        gap_constants(family.budget, n_states, r_max, ctx.agent_solutions()));
    return cj;
}

int cmd_solve(const ExperimentConfig& config, const std::string& family_path) {
    ensure_dir(config.out_dir);
    Json report;
    report["format_version"] = kFormatVersion;
    report["config"] = config_to_json(config);
    report["config_digest"] = config_digest(config);
    Json cells = Json::array();
    if (!family_path.empty()) {
        AgentFamily family = family_from_json(read_json_file(family_path));
        cells.push_back(solve_cell(family, config.gamma, family.n_states(),
                                   family.budget.r_max));
    } else {
        for (int n_agents : config.n_agents)
            for (double eps_p : config.eps_p)
                for (double eps_r : config.eps_r)
                    cells.push_back(solve_cell(
                        experiment_family(config, n_agents, eps_p, eps_r),
                        config.gamma, config.n_states, config.r_max));
    }
    report["cells"] = std::move(cells);
    const std::string path =
        (fs::path(config.out_dir) / "solve_report.json").string();
    write_json_file(report, path);
    std::cout << "solve: wrote " << path << "\n";
    return 0;
}

int cmd_run(const ExperimentConfig& config, bool sweep) {
    if (!sweep && (config.n_agents.size() != 1 || config.beta.size() != 1 ||
                   config.eps_p.size() != 1 || config.eps_r.size() != 1))
        throw ConfigError(
            "config.n_agents/beta/eps_p/eps_r: run expects single values; use "
            "sweep for grids");
    ExperimentResult result = run_experiment(config, !sweep);
    export_results(result, config.out_dir);
    for (const CellResult& cell : result.cells) {
        std::cout << (sweep ? "sweep" : "run") << ": cell " << cell.key.tag()
                  << " final mean err "
                  << format_double(cell.aggregate.mean.empty()
                                       ? 0.0
                                       : cell.aggregate.mean.back())
                  << " (" << cell.aggregate.n_diverged << "/"
                  << cell.aggregate.n_runs << " diverged)\n";
    }
    std::cout << "wrote " << (fs::path(config.out_dir) / "summary.json").string()
              << "\n";
    return 0;
}

int cmd_rate(const std::string& dir) {
    std::vector<fs::path> files;
    if (!fs::is_directory(dir)) throw IoError(dir + " is not a directory");
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("cell_", 0) == 0 &&
            name.size() > 9 && name.substr(name.size() - 4) == ".csv")
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no cell_*.csv files under " + dir);

    Json report;
    report["format_version"] = kFormatVersion;
    Json cells = Json::array();
    struct Member {
        int n_agents;
        AggregateResult agg;
        std::int64_t t_eval;
    };
    std::map<std::string, std::vector<Member>> groups;

    for (const fs::path& file : files) {
        CsvTable table = read_csv(file.string());
        std::map<std::string, std::string> meta;
        for (const std::string& comment : table.comments) {
            auto pos = comment.find(": ");
            if (pos != std::string::npos)
                meta[comment.substr(0, pos)] = comment.substr(pos + 2);
        }
        if (!meta.count("config"))
            throw ConfigError(file.string() + ": no embedded config comment");
        ExperimentConfig config =
            config_from_json(Json::parse(meta.at("config")));
        AggregateResult agg;
        for (const std::vector<double>& row : table.rows) {
            agg.ts.push_back(static_cast<std::int64_t>(row[0]));
            agg.mean.push_back(row[1]);
            agg.stddev.push_back(row[2]);
        }
        RateFit fit = fit_loglog_rate(agg.ts, agg.mean, config.resolved_fit_lo(),
                                      config.resolved_fit_hi());
        Json cj;
        cj["file"] = file.filename().string();
        cj["cell"] = meta.count("cell") ? meta.at("cell") : "";
        cj["slope"] = fit.slope;
        cj["intercept"] = fit.intercept;
        cj["r_squared"] = fit.r_squared;
        cj["window_lo"] = fit.window_lo;
        cj["window_hi"] = fit.window_hi;
        cells.push_back(std::move(cj));
        std::cout << "rate: " << file.filename().string() << " slope "
                  << format_double(fit.slope) << " r2 "
                  << format_double(fit.r_squared) << "\n";

        if (meta.count("n_agents") && meta.count("beta") &&
            meta.count("eps_p") && meta.count("eps_r")) {
            const std::string group = "beta" + meta.at("beta") + "_ep" +
                                      meta.at("eps_p") + "_er" +
                                      meta.at("eps_r");
            groups[group].push_back(Member{std::stoi(meta.at("n_agents")),
                                           std::move(agg),
                                           config.resolved_t_eval()});
        }
    }
    report["cells"] = std::move(cells);

    Json speedups = Json::array();
    for (const auto& [group, members] : groups) {
        if (members.size() < 2) continue;
        std::vector<std::pair<int, const AggregateResult*>> by_n;
        for (const Member& m : members) by_n.push_back({m.n_agents, &m.agg});
        Json sj;
        sj["group"] = group;
        sj["t_eval"] = members[0].t_eval;
        Json rows = Json::array();
        for (const SpeedupEntry& e : speedup_table(by_n, members[0].t_eval))
            rows.push_back(
                {{"n_agents", e.n_agents}, {"scaled_err", e.scaled_err}});
        sj["table"] = std::move(rows);
        speedups.push_back(std::move(sj));
    }
    report["speedup"] = std::move(speedups);

    const std::string path = (fs::path(dir) / "rate_report.json").string();
    write_json_file(report, path);
    std::cout << "rate: wrote " << path << "\n";
    return 0;
}

int cmd_verify(const ExperimentConfig& config, const std::string& family_path) {
    AgentFamily family = family_from_json(read_json_file(family_path));
    family.phi.validate(true);
    for (const Mdp& mdp : family.mdps) mdp.validate(family.budget.r_max);
    family.policy.validate();

    ensure_dir(config.out_dir);
    Json report;
    report["format_version"] = kFormatVersion;
    report["family_file"] = family_path;
    report["n_agents"] = family.n_agents();
    report["budget"] = {{"eps_p", family.budget.eps_p},
                        {"eps_r", family.budget.eps_r},
                        {"r_max", family.budget.r_max}};

    HeterogeneityReport achieved = verify_heterogeneity(family);
    report["eps_p_achieved"] = achieved.eps_p_achieved;
    report["eps_r_achieved"] = achieved.eps_r_achieved;
    Json violations = Json::array();
    for (const auto& v : achieved.violations)
        violations.push_back(
            {{"i", v.i}, {"j", v.j}, {"s", v.s}, {"s_next", v.s2}});
    report["support_violations"] = std::move(violations);

    Json verdicts = Json::array();
    Json mixing = Json::array();
    bool all_ergodic = true;
    for (const Mdp& mdp : family.mdps) {
        InducedChain chain = induce_chain(mdp, family.policy);
        ErgodicityVerdict verdict = check_ergodic(chain);
        all_ergodic = all_ergodic && verdict.ok();
        verdicts.push_back({{"irreducible", verdict.irreducible},
                            {"aperiodic", verdict.aperiodic}});
        if (verdict.ok()) {
            MixingEstimate est = estimate_mixing(chain, 100);
            mixing.push_back({{"c_e_hat", est.c_e_hat},
                              {"alpha_hat", est.alpha_hat},
                              {"fit_residual", est.fit_residual},
                              {"one_step", est.one_step}});
        } else {
            mixing.push_back(nullptr);
        }
    }
    report["ergodicity"] = std::move(verdicts);
    report["mixing"] = std::move(mixing);
    report["ones_residual"] = ones_residual_norm(family.phi.phi);

    const std::string path =
        (fs::path(config.out_dir) / "verify_report.json").string();
    write_json_file(report, path);
    std::cout << "verify: eps_p_achieved "
              << format_double(achieved.eps_p_achieved) << ", eps_r_achieved "
              << format_double(achieved.eps_r_achieved) << ", "
              << (all_ergodic ? "all chains ergodic" : "NON-ERGODIC chain found")
              << "\n";
    std::cout << "verify: wrote " << path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated TD(0) policy-evaluation simulator"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string family_path;

    CLI::App* gen = app.add_subcommand(
        "gen-env", "generate agent families and a manifest");
    attach_common(gen, &opts);
    CLI::App* solve = app.add_subcommand(
        "solve", "fixed points, lambda_min, and gap constants");
    attach_common(solve, &opts);
    solve->add_option("--family", family_path, "existing family JSON file");
    CLI::App* run =
        app.add_subcommand("run", "one cell: per-run traces + aggregate");
    attach_common(run, &opts);
    CLI::App* sweep =
        app.add_subcommand("sweep", "full (N, beta, eps_p, eps_r) grid");
    attach_common(sweep, &opts);
    CLI::App* rate = app.add_subcommand(
        "rate", "rate fits + speedup tables from existing aggregates");
    attach_common(rate, &opts);
    CLI::App* verify = app.add_subcommand(
        "verify", "heterogeneity/ergodicity/mixing diagnostics of a family");
    attach_common(verify, &opts);
    verify->add_option("--family", family_path, "existing family JSON file")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (rate->parsed()) {
            std::string dir = !opts.out_dir.empty() ? opts.out_dir : "out";
            return cmd_rate(dir);
        }
        ExperimentConfig config = load_config(opts);
        if (gen->parsed()) return cmd_gen_env(config);
        if (solve->parsed()) return cmd_solve(config, family_path);
        if (run->parsed()) return cmd_run(config, false);
        if (sweep->parsed()) return cmd_run(config, true);
        if (verify->parsed()) return cmd_verify(config, family_path);
        throw ProtocolError("no subcommand dispatched");
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const GenerationError& e) {
        std::cerr << "generation error: " << e.what() << "\n";
        return 3;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
