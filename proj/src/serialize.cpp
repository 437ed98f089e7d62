#include "fedtd/serialize.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <system_error>

#include "fedtd/errors.hpp"

namespace fedtd {

std::string format_double(double v) {
    if (std::isfinite(v) && v == std::floor(v) && std::abs(v) <= 1e15 &&
        !(v == 0.0 && std::signbit(v)))
        return std::to_string(static_cast<long long>(v));
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw IoError("not a number: '" + s + "'");
    return v;
}

namespace {

Json matrix_to_json(const Matrix& m) {
    Json rows = Json::array();
    for (int r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const Json& j, const std::string& what) {
    if (!j.is_array() || j.empty() || !j[0].is_array())
        throw ConfigError(what + ": expected an array of rows");
    const int rows = static_cast<int>(j.size());
    const int cols = static_cast<int>(j[0].size());
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        if (static_cast<int>(j[r].size()) != cols)
            throw ConfigError(what + ": ragged rows");
        for (int c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
}

void check_version(const Json& j, const std::string& what) {
    if (!j.contains("format_version"))
        throw ConfigError(what + ".format_version: missing");
    if (j["format_version"].get<int>() != kFormatVersion)
        throw ConfigError(what + ".format_version: unsupported version");
}

// Missing keys and wrong JSON types surface as nlohmann exceptions; report
// them as schema errors.
template <typename Fn>
auto as_schema(const std::string& what, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Json::exception& e) {
        throw ConfigError(what + ": " + e.what());
    }
}

}  // namespace

Json mdp_to_json(const Mdp& mdp) {
    Json j;
    j["format_version"] = kFormatVersion;
    j["n_states"] = mdp.n_states;
    j["n_actions"] = mdp.n_actions;
    // indexed [s][a][s']
    Json tensor = Json::array();
    for (int s = 0; s < mdp.n_states; ++s) {
        Json per_action = Json::array();
        for (int a = 0; a < mdp.n_actions; ++a) {
            Json row = Json::array();
            for (int s2 = 0; s2 < mdp.n_states; ++s2)
                row.push_back(mdp.transitions[a](s, s2));
            per_action.push_back(std::move(row));
        }
        tensor.push_back(std::move(per_action));
    }
    j["transitions"] = std::move(tensor);
    j["rewards"] = matrix_to_json(mdp.rewards);
    return j;
}

Mdp mdp_from_json(const Json& j) {
    return as_schema("mdp", [&] {
        check_version(j, "mdp");
        Mdp mdp;
        mdp.n_states = j.at("n_states").get<int>();
        mdp.n_actions = j.at("n_actions").get<int>();
        if (mdp.n_states <= 0 || mdp.n_actions <= 0)
            throw ConfigError("mdp.n_states/n_actions: must be positive");
        const Json& tensor = j.at("transitions");
        if (static_cast<int>(tensor.size()) != mdp.n_states)
            throw ConfigError("mdp.transitions: wrong state count");
        mdp.transitions.assign(mdp.n_actions, Matrix(mdp.n_states, mdp.n_states));
        for (int s = 0; s < mdp.n_states; ++s) {
            if (static_cast<int>(tensor[s].size()) != mdp.n_actions)
                throw ConfigError("mdp.transitions: wrong action count");
            for (int a = 0; a < mdp.n_actions; ++a) {
                const Json& row = tensor[s][a];
                if (static_cast<int>(row.size()) != mdp.n_states)
                    throw ConfigError("mdp.transitions: wrong row length");
                for (int s2 = 0; s2 < mdp.n_states; ++s2)
                    mdp.transitions[a](s, s2) = row[s2].get<double>();
            }
        }
        mdp.rewards = matrix_from_json(j.at("rewards"), "mdp.rewards");
        if (mdp.rewards.rows() != mdp.n_states || mdp.rewards.cols() != mdp.n_actions)
            throw ConfigError("mdp.rewards: shape mismatch");
        return mdp;
    });
}

Json policy_to_json(const Policy& policy) {
    Json j;
    j["format_version"] = kFormatVersion;
    j["probs"] = matrix_to_json(policy.probs);
    return j;
}

Policy policy_from_json(const Json& j) {
    return as_schema("policy", [&] {
        check_version(j, "policy");
        Policy policy;
        policy.probs = matrix_from_json(j.at("probs"), "policy.probs");
        return policy;
    });
}

Json features_to_json(const FeatureMatrix& phi) {
    Json j;
    j["format_version"] = kFormatVersion;
    j["phi"] = matrix_to_json(phi.phi);
    return j;
}

FeatureMatrix features_from_json(const Json& j) {
    return as_schema("features", [&] {
        check_version(j, "features");
        FeatureMatrix out;
        out.phi = matrix_from_json(j.at("phi"), "features.phi");
        return out;
    });
}

Json family_to_json(const AgentFamily& family) {
    Json j;
    j["format_version"] = kFormatVersion;
    j["n_states"] = family.n_states();
    j["n_actions"] = family.n_actions();
    j["n_agents"] = family.n_agents();
    j["master_seed"] = family.master_seed;
    j["budget"] = {{"eps_p", family.budget.eps_p},
                   {"eps_r", family.budget.eps_r},
                   {"r_max", family.budget.r_max}};
    j["policy"] = policy_to_json(family.policy);
    j["features"] = features_to_json(family.phi);
    Json mdps = Json::array();
    for (const Mdp& mdp : family.mdps) mdps.push_back(mdp_to_json(mdp));
    j["mdps"] = std::move(mdps);
    return j;
}

AgentFamily family_from_json(const Json& j) {
    return as_schema("family", [&] {
        check_version(j, "family");
        AgentFamily family;
        family.master_seed = j.at("master_seed").get<std::uint64_t>();
        const Json& budget = j.at("budget");
        family.budget.eps_p = budget.at("eps_p").get<double>();
        family.budget.eps_r = budget.at("eps_r").get<double>();
        family.budget.r_max = budget.at("r_max").get<double>();
        family.budget.validate();
        family.policy = policy_from_json(j.at("policy"));
        family.phi = features_from_json(j.at("features"));
        for (const Json& m : j.at("mdps"))
            family.mdps.push_back(mdp_from_json(m));
        if (family.mdps.empty()) throw ConfigError("family.mdps: empty");
        const int n_agents = j.at("n_agents").get<int>();
        if (n_agents != family.n_agents())
            throw ConfigError("family.n_agents: count disagrees with mdps");
        for (const Mdp& mdp : family.mdps)
            if (mdp.n_states != family.n_states() ||
                mdp.n_actions != family.n_actions())
                throw ConfigError("family.mdps: dimensions disagree");
        return family;
    });
}

void write_json_file(const Json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + path);
}

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    Json j = Json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError(path + ": invalid JSON");
    return j;
}

void write_csv(const CsvTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    for (const std::string& line : table.comments) out << "# " << line << '\n';
    for (std::size_t c = 0; c < table.columns.size(); ++c)
        out << (c ? "," : "") << table.columns[c];
    out << '\n';
    for (const std::vector<double>& row : table.rows) {
        if (row.size() != table.columns.size())
            throw IoError(path + ": row width disagrees with header");
        for (std::size_t c = 0; c < row.size(); ++c)
            out << (c ? "," : "") << format_double(row[c]);
        out << '\n';
    }
    if (!out) throw IoError("write failed for " + path);
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    CsvTable table;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::size_t start = line.size() > 1 && line[1] == ' ' ? 2 : 1;
            table.comments.push_back(line.substr(start));
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!have_header) {
            table.columns = cells;
            have_header = true;
            continue;
        }
        if (cells.size() != table.columns.size())
            throw IoError(path + ": row width disagrees with header");
        std::vector<double> row;
        row.reserve(cells.size());
        for (const std::string& c : cells) row.push_back(parse_double(c));
        table.rows.push_back(std::move(row));
    }
    if (!have_header) throw IoError(path + ": no header row");
    return table;
}

}  // namespace fedtd
