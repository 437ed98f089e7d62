#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "fedtd/env.hpp"
#include "fedtd/mdp.hpp"

namespace fedtd {

using Json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

// Shortest decimal string that parses back to exactly v; integral values
// within 1e15 print without exponent or decimal point.
std::string format_double(double v);
double parse_double(const std::string& s);

Json mdp_to_json(const Mdp& mdp);
Mdp mdp_from_json(const Json& j);
Json policy_to_json(const Policy& policy);
Policy policy_from_json(const Json& j);
Json features_to_json(const FeatureMatrix& phi);
FeatureMatrix features_from_json(const Json& j);
Json family_to_json(const AgentFamily& family);
AgentFamily family_from_json(const Json& j);

void write_json_file(const Json& j, const std::string& path);
Json read_json_file(const std::string& path);

// Comma-separated table with '#'-prefixed comment lines before the header.
// Numbers are written via format_double, so a read-back is value-exact.
struct CsvTable {
    std::vector<std::string> comments;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

void write_csv(const CsvTable& table, const std::string& path);
CsvTable read_csv(const std::string& path);

}  // namespace fedtd
