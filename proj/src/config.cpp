// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <string>
#include <thread>

#include "dfcap/cli.hpp"

namespace dfc::cli {
namespace {

using nlohmann::json;

const std::set<std::string> kKnownKeys = {"a",    "c_ar", "sigma_w2", "nu",     "power",  "label",  "command",
                                          "d",    "e",    "n",        "seed",   "axis",   "values", "unit",
                                          "format", "out", "threads", "oracles"};

template <typename T>
T get_field(const json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& ex) {
        throw ParseError(std::string("field `") + key + "`: " + ex.what());
    }
}

std::vector<double> get_reals(const json& j, const char* key) {
    if (!j.at(key).is_array()) throw ParseError(std::string("field `") + key + "` must be an array of reals");
    for (const auto& v : j.at(key))
        if (!v.is_number()) throw ParseError(std::string("field `") + key + "` must be an array of reals");
    return get_field<std::vector<double>>(j, key);
}

Command parse_command(const std::string& s) {
    if (s == "capacity") return Command::capacity;
    if (s == "rate") return Command::rate;
    if (s == "riccati") return Command::riccati;
    if (s == "simulate") return Command::simulate;
    if (s == "sweep") return Command::sweep;
    if (s == "verify") return Command::verify;
    throw ParseError("unknown command `" + s + "` (expected capacity|rate|riccati|simulate|sweep|verify)");
}

}  // namespace

std::vector<double> parse_number_list(std::string_view text, const std::string& field) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t comma = std::min(text.find(',', pos), text.size());
        std::string_view item = text.substr(pos, comma - pos);
        while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
        while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
        if (item.empty()) {
            if (text.empty()) break;
            throw ParseError("`" + field + "`: empty list element");
        }
        double v = 0;
        auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc() || ptr != item.data() + item.size())
            throw ParseError("`" + field + "`: cannot parse `" + std::string(item) + "` as a real");
        out.push_back(v);
        pos = comma + 1;
    }
    return out;
}

RunConfig parse_config(std::string_view file_text, const FlagOverrides& flags) {
    json j;
    try {
        j = json::parse(file_text, nullptr, true, true);
    } catch (const json::parse_error& ex) {
        throw ParseError(std::string("malformed config file: ") + ex.what());
    }
    if (!j.is_object()) throw ParseError("config file must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (!kKnownKeys.contains(key)) throw ParseError("unknown config key `" + key + "`");
    for (const char* key : {"a", "c_ar", "sigma_w2", "nu", "power"})
        if (!j.contains(key)) throw ParseError(std::string("missing required field `") + key + "`");

    RunConfig cfg;
    auto& ch = cfg.channel;
    ch.a = get_reals(j, "a");
    ch.c_ar = get_reals(j, "c_ar");
    ch.sigma_w2 = get_field<double>(j, "sigma_w2");
    {
        const double nu = get_field<double>(j, "nu");
        if (nu != std::floor(nu) || std::abs(nu) > 1e6) throw ValidationError("nu", "must be an integer >= 1");
        ch.nu = static_cast<int>(nu);
    }
    ch.power = get_field<double>(j, "power");
    if (j.contains("label")) ch.label = get_field<std::string>(j, "label");

    // File-level options, then flag overrides.
    std::optional<std::string> command, axis, unit, format;
    std::optional<std::vector<double>> values;
    std::optional<long> n;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::vector<std::string>> oracles;
    if (j.contains("command")) command = get_field<std::string>(j, "command");
    if (j.contains("d")) cfg.d = get_reals(j, "d");
    if (j.contains("e")) cfg.e = get_field<double>(j, "e");
    if (j.contains("n")) n = get_field<long>(j, "n");
    if (j.contains("seed")) seed = get_field<std::uint64_t>(j, "seed");
    if (j.contains("axis")) axis = get_field<std::string>(j, "axis");
    if (j.contains("values")) values = get_reals(j, "values");
    if (j.contains("unit")) unit = get_field<std::string>(j, "unit");
    if (j.contains("format")) format = get_field<std::string>(j, "format");
    if (j.contains("out")) cfg.output_path = get_field<std::string>(j, "out");
    if (j.contains("threads")) threads = get_field<int>(j, "threads");
    if (j.contains("oracles")) oracles = get_field<std::vector<std::string>>(j, "oracles");

    if (flags.command) command = flags.command;
    if (flags.d) cfg.d = flags.d;
    if (flags.e) cfg.e = flags.e;
    if (flags.n) n = flags.n;
    if (flags.seed) seed = flags.seed;
    if (flags.axis) axis = flags.axis;
    if (flags.values) values = flags.values;
    if (flags.unit) unit = flags.unit;
    if (flags.format) format = flags.format;
    if (flags.out) cfg.output_path = *flags.out;
    if (flags.threads) threads = flags.threads;
    if (flags.oracles) oracles = flags.oracles;

    if (!command) throw ConflictError("no command given (use --command or the `command` key)");
    cfg.command = parse_command(*command);

    try {
        cfg.channel = validate_arma_spec(cfg.channel);
    } catch (const InvalidScalar& ex) {
        throw ValidationError(ex.field(), ex.what());
    } catch (const NonMinimumPhase& ex) {
        throw ValidationError(ex.polynomial().starts_with("MA") ? "a" : "c_ar", ex.what());
    }

    const Command cmd = cfg.command;
    auto reject = [&](bool present, const char* option) {
        if (present)
            throw ConflictError(std::string("option `") + option + "` does not apply to command `" + *command + "`");
    };
    const bool uses_policy = cmd == Command::rate || cmd == Command::riccati || cmd == Command::simulate;
    reject(!uses_policy && cfg.d.has_value(), "d");
    reject(!uses_policy && cfg.e.has_value(), "e");
    reject(cmd != Command::simulate && n.has_value(), "n");
    reject(cmd != Command::simulate && cmd != Command::verify && seed.has_value(), "seed");
    reject(cmd != Command::sweep && axis.has_value(), "axis");
    reject(cmd != Command::sweep && values.has_value(), "values");
    reject(cmd != Command::verify && oracles.has_value(), "oracles");
    reject(cmd != Command::capacity && cmd != Command::sweep && threads.has_value(), "threads");

    const std::size_t M = static_cast<std::size_t>(pad_orders(cfg.channel).M);
    if (uses_policy) {
        if (!cfg.e) throw ConflictError("command `" + *command + "` requires the innovation gain `e`");
        if (!(*cfg.e >= 0) || !std::isfinite(*cfg.e)) throw ValidationError("e", "must be a finite value >= 0");
        if (!cfg.d) cfg.d = std::vector<double>(M, 0.0);
        if (cfg.d->size() != M)
            throw ValidationError("d", "expected " + std::to_string(M) + " gains (state dimension), got " +
                                           std::to_string(cfg.d->size()));
        for (double v : *cfg.d)
            if (!std::isfinite(v)) throw ValidationError("d", "gains must be finite");
    }
    if (cmd == Command::capacity && !(cfg.channel.power > 0))
        throw ValidationError("power", "capacity requires power > 0");

    if (n) {
        if (*n < 1) throw ValidationError("n", "must be >= 1");
        cfg.n = *n;
    }
    if (seed) cfg.seed = *seed;

    if (cmd == Command::sweep) {
        if (!axis) throw ConflictError("command `sweep` requires `axis` (nu or power)");
        if (!values || values->empty()) throw ConflictError("command `sweep` requires a nonempty `values` list");
        if (*axis == "nu")
            cfg.axis = SweepAxis::nu;
        else if (*axis == "power")
            cfg.axis = SweepAxis::power;
        else
            throw ValidationError("axis", "must be `nu` or `power`");
        cfg.values = *values;
    }

    if (oracles) {
        for (const auto& name : *oracles)
            if (name != "szego" && name != "batch" && name != "markov" && name != "equivalence")
                throw ValidationError("oracles", "unknown oracle `" + name + "`");
        cfg.oracles = *oracles;
    }

    if (unit) {
        if (*unit == "nats")
            cfg.unit = RateUnit::nats;
        else if (*unit == "bits")
            cfg.unit = RateUnit::bits;
        else
            throw ValidationError("unit", "must be `nats` or `bits`");
    }

    const bool csv_default = cmd == Command::sweep || cmd == Command::simulate;
    cfg.format = csv_default ? OutputFormat::csv : OutputFormat::json;
    if (format) {
        if (*format == "json")
            cfg.format = OutputFormat::json;
        else if (*format == "csv")
            cfg.format = OutputFormat::csv;
        else
            throw ValidationError("format", "must be `json` or `csv`");
        if (cfg.format == OutputFormat::csv && !csv_default)
            throw ConflictError("csv output is only available for `sweep` and `simulate`");
    }

    if (threads) {
        if (*threads < 1) throw ValidationError("threads", "must be >= 1");
        cfg.threads = *threads;
    } else {
        cfg.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    }
    return cfg;
}

}  // namespace dfc::cli
