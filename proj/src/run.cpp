// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "dfcap/cli.hpp"
#include "dfcap/kalman.hpp"
#include "dfcap/simulator.hpp"

namespace dfc::cli {
namespace {

using nlohmann::json;

double in_unit(double nats, RateUnit unit) { return unit == RateUnit::bits ? nats / std::numbers::ln2 : nats; }
const char* unit_name(RateUnit unit) { return unit == RateUnit::bits ? "bits" : "nats"; }

json vector_json(const Vector<double>& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json matrix_json(const Matrix<double>& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const Vector<double> row = m.row(i).transpose();
        rows.push_back(vector_json(row));
    }
    return rows;
}

Vector<double> vector_from(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vector<double>>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Matrix<double> matrix_from(const json& j) {
    const auto n = static_cast<Eigen::Index>(j.size());
    Matrix<double> m(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = j.at(static_cast<std::size_t>(i));
        if (static_cast<Eigen::Index>(row.size()) != n) throw std::invalid_argument("K_opt must be square");
        for (Eigen::Index k = 0; k < n; ++k) m(i, k) = row.at(static_cast<std::size_t>(k)).get<double>();
    }
    return m;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

SourcePolicy<double> policy_of(const RunConfig& cfg) {
    const auto& d = *cfg.d;
    return {Eigen::Map<const Vector<double>>(d.data(), static_cast<Eigen::Index>(d.size())), *cfg.e};
}

json header(const RunConfig& cfg, const char* command) {
    json j;
    j["command"] = command;
    if (!cfg.channel.label.empty()) j["label"] = cfg.channel.label;
    return j;
}

OptimizerOptions optimizer_options(const RunConfig& cfg) {
    OptimizerOptions opts;
    opts.threads = cfg.threads;
    return opts;
}

RunOutcome run_capacity(const RunConfig& cfg) {
    const auto ch = build_state_space(cfg.channel);
    const auto result = optimize_capacity(ch, cfg.channel.power, optimizer_options(cfg));
    json j = header(cfg, "capacity");
    j.update(to_json(result, cfg.unit));
    return {0, j.dump(2) + "\n", {}};
}

RunOutcome run_rate(const RunConfig& cfg) {
    const auto ch = build_state_space(cfg.channel);
    const auto policy = policy_of(cfg);
    const auto sol = solve_riccati(ch, policy);
    json j = header(cfg, "rate");
    j["unit"] = unit_name(cfg.unit);
    j["rate"] = in_unit(innovation_stats(ch, sol.K).rate_increment, cfg.unit);
    j["d"] = vector_json(policy.d);
    j["e"] = policy.e;
    j["K"] = matrix_json(sol.K);
    j["achieved_power"] = stationary_power(policy, sol.K);
    j["riccati_residual"] = riccati_residual(ch, policy, sol.K);
    j["doublings"] = sol.doublings;
    return {0, j.dump(2) + "\n", {}};
}

RunOutcome run_riccati(const RunConfig& cfg) {
    const auto ch = build_state_space(cfg.channel);
    const auto policy = policy_of(cfg);
    const auto sol = solve_riccati(ch, policy);
    const auto stats = innovation_stats(ch, sol.K);
    json j = header(cfg, "riccati");
    j["A"] = matrix_json(ch.A);
    j["b"] = vector_json(ch.b);
    j["c"] = vector_json(ch.c);
    j["K"] = matrix_json(sol.K);
    j["doublings"] = sol.doublings;
    j["riccati_residual"] = riccati_residual(ch, policy, sol.K);
    j["innovation_variance"] = stats.innovation_variance;
    return {0, j.dump(2) + "\n", {}};
}

RunOutcome run_simulate(const RunConfig& cfg) {
    const auto ch = build_state_space(cfg.channel);
    const auto policy = policy_of(cfg);
    const auto sim = simulate_closed_loop(ch, policy, cfg.n, cfg.seed);
    if (cfg.format == OutputFormat::csv) {
        std::ostringstream os;
        write_trajectory_csv(os, sim.trajectory, spec_hash(cfg.channel));
        return {0, os.str(), {}};
    }
    const auto sol = solve_riccati(ch, policy);
    const auto stats = innovation_stats(ch, sol.K);
    json j = header(cfg, "simulate");
    j["n"] = cfg.n;
    j["seed"] = cfg.seed;
    j["unit"] = unit_name(cfg.unit);
    j["empirical_power"] = sim.stats.input_power;
    j["empirical_input_mean"] = sim.stats.input_mean;
    j["empirical_innovation_variance"] = sim.stats.innovation_variance;
    j["empirical_rate"] = in_unit(sim.stats.information_density, cfg.unit);
    j["predicted_power"] = stationary_power(policy, sol.K);
    j["predicted_innovation_variance"] = stats.innovation_variance;
    j["predicted_rate"] = in_unit(stats.rate_increment, cfg.unit);
    return {0, j.dump(2) + "\n", {}};
}

RunOutcome run_sweep(const RunConfig& cfg) {
    const auto rows = sweep(cfg.channel, cfg.axis, cfg.values, optimizer_options(cfg));
    const char* axis = cfg.axis == SweepAxis::nu ? "nu" : "power";
    bool any_error = false;
    for (const auto& r : rows) any_error |= !r.result.has_value();

    if (cfg.format == OutputFormat::csv) {
        std::string out = std::string(axis) + ",rate_" + unit_name(cfg.unit) + ",achieved_power,riccati_residual,status\n";
        for (const auto& r : rows) {
            out += num(r.value);
            if (r.result)
                out += "," + num(in_unit(r.result->rate_nats, cfg.unit)) + "," + num(r.result->achieved_power) + "," +
                       num(r.result->riccati_residual) + ",ok\n";
            else
                out += ",,,,\"error: " + r.error + "\"\n";
        }
        return {any_error ? 1 : 0, out, {}};
    }
    json j = header(cfg, "sweep");
    j["axis"] = axis;
    j["unit"] = unit_name(cfg.unit);
    j["rows"] = json::array();
    for (const auto& r : rows) {
        json row;
        row["value"] = r.value;
        if (r.result)
            row["result"] = to_json(*r.result, cfg.unit);
        else
            row["error"] = r.error;
        j["rows"].push_back(row);
    }
    return {any_error ? 1 : 0, j.dump(2) + "\n", {}};
}

RunOutcome run_verify(const RunConfig& cfg) {
    const auto reports = run_oracles(cfg.channel, cfg.seed, cfg.oracles);
    json j = header(cfg, "verify");
    j["seed"] = cfg.seed;
    j["oracles"] = json::array();
    bool all = true;
    for (const auto& r : reports) {
        j["oracles"].push_back(
            {{"name", r.name}, {"pass", r.pass}, {"max_deviation", r.max_deviation}, {"tolerance", r.tolerance}});
        all = all && r.pass;
    }
    j["all_pass"] = all;
    return {all ? 0 : 1, j.dump(2) + "\n", all ? "" : "verify: at least one oracle failed"};
}

}  // namespace

json to_json(const CapacityResult<double>& r, RateUnit unit) {
    json j;
    j["unit"] = unit_name(unit);
    j["rate"] = in_unit(r.rate_nats, unit);
    j["d_opt"] = vector_json(r.d_opt);
    j["e_opt"] = r.e_opt;
    j["K_opt"] = matrix_json(r.K_opt);
    j["achieved_power"] = r.achieved_power;
    j["riccati_residual"] = r.riccati_residual;
    j["optimizer_evaluations"] = r.optimizer_evaluations;
    j["restarts_used"] = r.restarts_used;
    return j;
}

CapacityResult<double> capacity_result_from_json(const json& j) {
    CapacityResult<double> r;
    r.rate_nats = j.at("rate").get<double>();
    if (j.value("unit", std::string("nats")) == "bits") r.rate_nats *= std::numbers::ln2;
    r.d_opt = vector_from(j.at("d_opt"));
    r.e_opt = j.at("e_opt").get<double>();
    r.K_opt = matrix_from(j.at("K_opt"));
    r.achieved_power = j.at("achieved_power").get<double>();
    r.riccati_residual = j.at("riccati_residual").get<double>();
    r.optimizer_evaluations = j.at("optimizer_evaluations").get<long>();
    r.restarts_used = j.at("restarts_used").get<int>();
    return r;
}

RunOutcome execute(const RunConfig& cfg) {
    switch (cfg.command) {
        case Command::capacity: return run_capacity(cfg);
        case Command::rate: return run_rate(cfg);
        case Command::riccati: return run_riccati(cfg);
        case Command::simulate: return run_simulate(cfg);
        case Command::sweep: return run_sweep(cfg);
        case Command::verify: return run_verify(cfg);
    }
    return {2, {}, "unknown command"};
}

int run(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    RunOutcome outcome;
    try {
        outcome = execute(cfg);
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << '\n';
        return 1;
    }

    if (cfg.output_path.empty()) {
        out << outcome.artifact;
    } else {
        namespace fs = std::filesystem;
        const fs::path target(cfg.output_path);
        fs::path tmp = target;
        tmp += ".tmp";
        {
            std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
            f << outcome.artifact;
            if (!f) {
                err << "error: cannot write " << tmp << '\n';
                return 1;
            }
        }
        std::error_code ec;
        fs::rename(tmp, target, ec);
        if (ec) {
            err << "error: cannot move " << tmp << " to " << target << ": " << ec.message() << '\n';
            return 1;
        }
    }
    if (!outcome.message.empty()) err << outcome.message << '\n';
    return outcome.exit_code;
}

}  // namespace dfc::cli
