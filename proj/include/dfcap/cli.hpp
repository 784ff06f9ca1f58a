// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dfcap/capacity.hpp"
#include "dfcap/channel_model.hpp"

namespace dfc::cli {

enum class Command { capacity, rate, riccati, simulate, sweep, verify };
enum class OutputFormat { json, csv };
enum class RateUnit { nats, bits };

/// Configuration problems; all map to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// A channel or option value is out of range. `field()` names the offending key.
class ValidationError : public ConfigError {
public:
    ValidationError(std::string field, const std::string& what)
        : ConfigError("invalid `" + field + "`: " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// An option contradicts (or is missing for) the selected command.
class ConflictError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// Values given on the command line. Each one, when set, replaces the config file's value.
struct FlagOverrides {
    std::optional<std::string> command;
    std::optional<std::vector<double>> d;
    std::optional<double> e;
    std::optional<long> n;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> axis;
    std::optional<std::vector<double>> values;
    std::optional<std::string> unit;
    std::optional<std::string> format;
    std::optional<std::string> out;
    std::optional<int> threads;
    std::optional<std::vector<std::string>> oracles;
};

struct RunConfig {
    ArmaNoiseSpec<double> channel;
    Command command = Command::capacity;
    std::optional<std::vector<double>> d;
    std::optional<double> e;
    long n = 10000;
    std::uint64_t seed = 1;
    SweepAxis axis = SweepAxis::nu;
    std::vector<double> values;
    std::vector<std::string> oracles;
    std::string output_path;  // empty: stdout
    OutputFormat format = OutputFormat::json;
    RateUnit unit = RateUnit::nats;
    int threads = 1;
};

RunConfig parse_config(std::string_view file_text, const FlagOverrides& flags = {});

/// Result of executing a config: the artifact text and the exit code it implies.
struct RunOutcome {
    int exit_code = 0;
    std::string artifact;
    std::string message;
};

/// Runs the command and renders its artifact without touching the filesystem.
RunOutcome execute(const RunConfig& config);

/// execute() plus emission: the artifact goes to config.output_path (written to a
/// temporary file and renamed into place) or to `out`; diagnostics go to `err`.
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

nlohmann::json to_json(const CapacityResult<double>& result, RateUnit unit = RateUnit::nats);
CapacityResult<double> capacity_result_from_json(const nlohmann::json& j);

struct OracleReport {
    std::string name;
    bool pass = false;
    double max_deviation = 0.0;
    double tolerance = 0.0;
};

/// Oracle names: "szego", "batch", "markov", "equivalence". Empty selects all four.
std::vector<OracleReport> run_oracles(const ArmaNoiseSpec<double>& spec, std::uint64_t seed,
                                      const std::vector<std::string>& selection = {});

std::vector<double> parse_number_list(std::string_view text, const std::string& field);

}  // namespace dfc::cli
