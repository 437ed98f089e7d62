#include "fedtd/config.hpp"

#include <algorithm>
#include <cstdio>

#include "fedtd/errors.hpp"
#include "fedtd/rng.hpp"

namespace fedtd {

namespace {

template <typename T>
T get_as(const Json& v, const std::string& path) {
    try {
        return v.get<T>();
    } catch (const Json::exception&) {
        throw ConfigError("config." + path + ": wrong type");
    }
}

// Accept both a scalar and a list for the sweep fields.
template <typename T>
std::vector<T> get_list(const Json& v, const std::string& path) {
    std::vector<T> out;
    if (v.is_array()) {
        for (const Json& e : v) out.push_back(get_as<T>(e, path));
    } else {
        out.push_back(get_as<T>(v, path));
    }
    return out;
}

void set_field(ExperimentConfig& c, const std::string& key, const Json& v) {
    if (key == "algorithm") c.algorithm = get_as<std::string>(v, key);
    else if (key == "n_states") c.n_states = get_as<int>(v, key);
    else if (key == "n_actions") c.n_actions = get_as<int>(v, key);
    else if (key == "d") c.d = get_as<int>(v, key);
    else if (key == "n_agents") c.n_agents = get_list<int>(v, key);
    else if (key == "horizon") c.horizon = get_as<std::int64_t>(v, key);
    else if (key == "n_runs") c.n_runs = get_as<int>(v, key);
    else if (key == "beta") c.beta = get_list<double>(v, key);
    else if (key == "gamma") c.gamma = get_as<double>(v, key);
    else if (key == "eps_p") c.eps_p = get_list<double>(v, key);
    else if (key == "eps_r") c.eps_r = get_list<double>(v, key);
    else if (key == "r_max") c.r_max = get_as<double>(v, key);
    else if (key == "mode") c.mode = get_as<std::string>(v, key);
    else if (key == "update_mode") c.update_mode = get_as<std::string>(v, key);
    else if (key == "reference") c.reference = get_as<std::string>(v, key);
    else if (key == "master_seed") c.master_seed = get_as<std::uint64_t>(v, key);
    else if (key == "env_seed") c.env_seed = get_as<std::uint64_t>(v, key);
    else if (key == "stride") c.stride = get_as<std::int64_t>(v, key);
    else if (key == "fit_window_lo") c.fit_window_lo = get_as<std::int64_t>(v, key);
    else if (key == "fit_window_hi") c.fit_window_hi = get_as<std::int64_t>(v, key);
    else if (key == "t_eval") c.t_eval = get_as<std::int64_t>(v, key);
    else if (key == "workers") c.workers = get_as<int>(v, key);
    else if (key == "out_dir") c.out_dir = get_as<std::string>(v, key);
    else if (key == "format_version") {
        if (get_as<int>(v, key) != kFormatVersion)
            throw ConfigError("config.format_version: unsupported version");
    } else {
        throw ConfigError("config." + key + ": unknown field");
    }
}

void check_choice(const std::string& value, const char* field,
                  std::initializer_list<const char*> allowed) {
    for (const char* a : allowed)
        if (value == a) return;
    std::string msg = std::string("config.") + field + ": '" + value +
                      "' is not one of {";
    bool first = true;
    for (const char* a : allowed) {
        if (!first) msg += ", ";
        msg += a;
        first = false;
    }
    throw ConfigError(msg + "}");
}

}  // namespace

namespace {

template <typename T>
bool has_duplicates(std::vector<T> values) {
    std::sort(values.begin(), values.end());
    return std::adjacent_find(values.begin(), values.end()) != values.end();
}

}  // namespace

void ExperimentConfig::validate() const {
    check_choice(algorithm, "algorithm", {"avg", "exp"});
    check_choice(mode, "mode", {"markovian", "iid"});
    check_choice(update_mode, "update_mode", {"sampled", "expected"});
    check_choice(reference, "reference", {"agent1", "global"});
    if (n_states < 2) throw ConfigError("config.n_states: must be >= 2");
    if (n_actions < 1) throw ConfigError("config.n_actions: must be >= 1");
    if (d < 1 || d >= n_states)
        throw ConfigError("config.d: need 1 <= d < n_states");
    if (n_agents.empty()) throw ConfigError("config.n_agents: empty list");
    for (int n : n_agents)
        if (n < 1) throw ConfigError("config.n_agents: entries must be >= 1");
    if (has_duplicates(n_agents))
        throw ConfigError("config.n_agents: duplicate entries");
    if (horizon < 1) throw ConfigError("config.horizon: must be >= 1");
    if (n_runs < 1) throw ConfigError("config.n_runs: must be >= 1");
    if (beta.empty()) throw ConfigError("config.beta: empty list");
    for (double b : beta)
        if (!(b > 0.0 && b <= 1.0))
            throw ConfigError("config.beta: entries must lie in (0,1]");
    if (has_duplicates(beta))
        throw ConfigError("config.beta: duplicate entries");
    if (!(gamma >= 0.0 && gamma < 1.0))
        throw ConfigError("config.gamma: must lie in [0,1)");
    if (eps_p.empty()) throw ConfigError("config.eps_p: empty list");
    for (double e : eps_p)
        if (!(e >= 0.0 && e < 1.0))
            throw ConfigError("config.eps_p: entries must lie in [0,1)");
    if (has_duplicates(eps_p))
        throw ConfigError("config.eps_p: duplicate entries");
    if (eps_r.empty()) throw ConfigError("config.eps_r: empty list");
    for (double e : eps_r)
        if (!(e >= 0.0)) throw ConfigError("config.eps_r: entries must be >= 0");
    if (has_duplicates(eps_r))
        throw ConfigError("config.eps_r: duplicate entries");
    if (!(r_max > 0.0)) throw ConfigError("config.r_max: must be > 0");
    if (stride < 0) throw ConfigError("config.stride: must be >= 0");
    if (fit_window_lo < 0 || fit_window_hi < 0)
        throw ConfigError("config.fit_window_lo/hi: must be >= 0");
    if (fit_window_lo > 0 || fit_window_hi > 0) {
        if (!(fit_window_lo >= 1 && fit_window_lo < fit_window_hi &&
              fit_window_hi <= horizon))
            throw ConfigError(
                "config.fit_window_lo/hi: need 1 <= lo < hi <= horizon");
    }
    if (t_eval < 0 || t_eval > horizon)
        throw ConfigError("config.t_eval: must lie in [0, horizon]");
    if (workers < 1) throw ConfigError("config.workers: must be >= 1");
    if (out_dir.empty()) throw ConfigError("config.out_dir: empty path");
}

std::int64_t ExperimentConfig::resolved_stride() const {
    if (stride > 0) return stride;
    if (horizon >= 100000) return 100;
    if (horizon >= 10000) return 10;
    return 1;
}

std::int64_t ExperimentConfig::resolved_fit_lo() const {
    return fit_window_lo > 0 ? fit_window_lo : std::max<std::int64_t>(1, horizon / 10);
}

std::int64_t ExperimentConfig::resolved_fit_hi() const {
    return fit_window_hi > 0 ? fit_window_hi : horizon;
}

std::int64_t ExperimentConfig::resolved_t_eval() const {
    return t_eval > 0 ? t_eval : horizon;
}

ExperimentConfig config_from_json(const Json& j) {
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    ExperimentConfig c;
    for (const auto& item : j.items()) set_field(c, item.key(), item.value());
    return c;
}

Json config_to_json(const ExperimentConfig& c) {
    Json j;
    j["format_version"] = kFormatVersion;
    j["algorithm"] = c.algorithm;
    j["n_states"] = c.n_states;
    j["n_actions"] = c.n_actions;
    j["d"] = c.d;
    j["n_agents"] = c.n_agents;
    j["horizon"] = c.horizon;
    j["n_runs"] = c.n_runs;
    j["beta"] = c.beta;
    j["gamma"] = c.gamma;
    j["eps_p"] = c.eps_p;
    j["eps_r"] = c.eps_r;
    j["r_max"] = c.r_max;
    j["mode"] = c.mode;
    j["update_mode"] = c.update_mode;
    j["reference"] = c.reference;
    j["master_seed"] = c.master_seed;
    j["env_seed"] = c.env_seed;
    j["stride"] = c.stride;
    j["fit_window_lo"] = c.fit_window_lo;
    j["fit_window_hi"] = c.fit_window_hi;
    j["t_eval"] = c.t_eval;
    j["workers"] = c.workers;
    j["out_dir"] = c.out_dir;
    return j;
}

void apply_override(ExperimentConfig& config, const std::string& key,
                    const std::string& value) {
    Json v = Json::parse(value, nullptr, false);
    if (v.is_discarded()) v = Json(value);  // bare word -> string
    set_field(config, key, v);
}

void apply_paper_scale(ExperimentConfig& config) {
    config.n_states = 100;
    config.n_actions = 100;
    config.d = 21;
    config.n_agents = {20};
    config.horizon = 10000;
    config.n_runs = 300;
    config.beta = {0.6};
    config.gamma = 0.3;
    config.eps_p = {0.5};
    config.eps_r = {0.5};
    config.r_max = 1.0;
}

std::string config_digest(const ExperimentConfig& config) {
    std::uint64_t h = fnv1a64(config_to_json(config).dump());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace fedtd
