// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "dfcap/cli.hpp"

namespace {

template <typename T>
void bind(CLI::App& app, const char* name, std::optional<T>& target, const char* help) {
    app.add_option_function<T>(name, [&target](const T& v) { target = v; }, help);
}

}  // namespace

int main(int argc, char** argv) {
    using namespace dfc::cli;

    CLI::App app{"Maximal stationary-source information rate of ARMA-noise Gaussian channels with delayed feedback"};
    std::string config_path;
    std::string d_text, values_text, oracles_text;
    FlagOverrides flags;

    app.add_option("--config", config_path, "Channel spec / run config (JSON)")->required();
    bind(app, "--command", flags.command, "capacity | rate | riccati | simulate | sweep | verify");
    app.add_option("--d", d_text, "Feedback gains d, comma separated");
    bind(app, "--e", flags.e, "Innovation gain e >= 0");
    bind(app, "--n", flags.n, "Simulation length");
    bind(app, "--seed", flags.seed, "PRNG seed");
    bind(app, "--axis", flags.axis, "Sweep axis: nu | power");
    app.add_option("--values", values_text, "Sweep values, comma separated");
    bind(app, "--unit", flags.unit, "nats | bits");
    bind(app, "--format", flags.format, "json | csv");
    bind(app, "--out", flags.out, "Output path (default: stdout)");
    bind(app, "--threads", flags.threads, "Optimizer threads (default: hardware concurrency)");
    app.add_option("--oracles", oracles_text, "verify: szego,batch,markov,equivalence (default: all)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    RunConfig config;
    try {
        if (app.count("--d")) flags.d = parse_number_list(d_text, "d");
        if (app.count("--values")) flags.values = parse_number_list(values_text, "values");
        if (app.count("--oracles")) {
            std::vector<std::string> names;
            std::stringstream ss(oracles_text);
            for (std::string item; std::getline(ss, item, ',');) names.push_back(item);
            flags.oracles = names;
        }
        std::ifstream in(config_path, std::ios::binary);
        if (!in) throw ParseError("cannot open config file " + config_path);
        std::stringstream text;
        text << in.rdbuf();
        config = parse_config(text.str(), flags);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    }
    return run(config, std::cout, std::cerr);
}
