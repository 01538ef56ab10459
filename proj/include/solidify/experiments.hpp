#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "solidify/geometry.hpp"

namespace solidify {

inline constexpr const char* kVersion = "0.1.0";

// Scalar cells under fixed columns.  The first `keys` columns are inputs;
// rows that agree on them describe the same measurement.
struct Table {
    std::vector<std::string> columns;
    std::size_t keys = 0;
    std::vector<std::vector<nlohmann::json>> rows;

    void add(std::vector<nlohmann::json> row);
    std::size_t column(const std::string& name) const; // npos when absent
    std::string csv() const;
    nlohmann::json to_json() const;
    static Table from_json(const nlohmann::json& j);
};

struct RunContext {
    std::uint64_t seed = 1;
    std::size_t replicas = 1;
};

struct ExperimentResult {
    Table table;
    nlohmann::json params;                             // with defaults filled in
    nlohmann::json artifacts = nlohmann::json::object();
    std::vector<std::string> violations;               // invariants broken during the run
};

// Kinds are "group" or "group/name", e.g. "capacity/discrete".  Parameters
// absent from the defaults throw SchemaError, as do module preconditions.
std::vector<std::string> experiment_kinds();
nlohmann::json experiment_defaults(const std::string& kind);
std::string experiment_help(const std::string& kind);
ExperimentResult run_experiment(const std::string& kind, const nlohmann::json& params, const RunContext& ctx);

// 16 hex digits over the canonical dump
std::string config_hash(const nlohmann::json& j);
nlohmann::json make_manifest(const std::string& kind, const ExperimentResult& r, const RunContext& ctx,
                             double wall_seconds, const std::string& csv_path);

// Rows of all manifests with equal keys are pooled: estimates weighted by
// n, se = sqrt(sum n_i^2 se_i^2) / sum n_i, n summed, other numbers
// n-weighted, flags and-ed.  Manifests must share kind, columns and d.
Table report_merge(const std::vector<nlohmann::json>& manifests);
// manifest, row, column, value
Table report_long(const std::vector<nlohmann::json>& manifests);

// {"boxes": [{"lo": [..], "hi": [..]}], "balls": [{"center": [..], "r": r}]}
CompactSetSpec compact_from_json(const nlohmann::json& j);
nlohmann::json compact_to_json(const CompactSetSpec& s);
// a fixture by name ({"kind": "cube", ...}) or the domain JSON format
DyadicIndicator domain_param(const nlohmann::json& j);

} // namespace solidify
