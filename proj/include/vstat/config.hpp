#pragma once

// Experiment configuration files: a TOML subset (tables, arrays of tables,
// dotted headers, inline tables, strings, numbers, booleans, nested arrays,
// comments) read into JSON, plus the typed views the commands use.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vstat/errors.hpp"
#include "vstat/montecarlo.hpp"

namespace vstat {

/// Configuration error anchored at a source line (0 when not attributable).
class ConfigError : public InvalidInput {
public:
    ConfigError(int line, const std::string& msg)
        : InvalidInput(line > 0 ? "config line " + std::to_string(line) + ": " + msg : "config: " + msg), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

struct ParsedToml {
    nlohmann::json data;
    std::map<std::string, int> lines;  // dotted key path -> defining line
    int line_of(const std::string& path) const;
};

ParsedToml parse_toml(const std::string& text);
/// Canonical TOML text for a JSON object tree (sorted keys, tables after values).
std::string to_toml(const nlohmann::json& data);

struct RunConfig {
    ParsedToml source;
    int dim = 1;
    Density density = Density::uniform(1);
    KernelConfig kernel;
    std::vector<double> t_list;
    JTermSchedule jterm;
    ExperimentConfig experiment;
    std::string experiment_kind = "mean";  // clt command: mean | variance | function
    int grid_res = 64;                     // F^t evaluation grid of the varadhan command
    std::optional<Point> base;             // evaluation point of jterm / asymptotics
    int workers = 0;                       // 0 = all available cores
    std::string out_dir = "out";
    std::string format = "both";  // csv | json | both

    /// FNV-1a of the canonical configuration, excluding [output] and the worker count.
    std::string hash() const;
};

/// Builds a typed configuration; seed/R overrides are written into the tree first.
RunConfig build_config(ParsedToml parsed, std::optional<std::uint64_t> seed_override = std::nullopt,
                       std::optional<std::size_t> reps_override = std::nullopt);

Density density_from_json(const nlohmann::json& j, int dim, const ParsedToml& src, const std::string& path);

}  // namespace vstat
