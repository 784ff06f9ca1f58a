// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dfcap/cli.hpp"

using namespace dfc;
using namespace dfc::cli;
using nlohmann::json;

namespace {

const char* kMa1 = R"({"a": [0.5], "c_ar": [], "sigma_w2": 1.0, "nu": 1, "power": 1.0})";

FlagOverrides command(const char* name) {
    FlagOverrides f;
    f.command = name;
    return f;
}

}  // namespace

TEST_CASE("parse_config: minimal valid file") {
    const auto cfg = parse_config(kMa1, command("capacity"));
    CHECK(cfg.command == Command::capacity);
    CHECK(cfg.channel.a == std::vector<double>{0.5});
    CHECK(cfg.channel.nu == 1);
    CHECK(cfg.format == OutputFormat::json);
    CHECK(cfg.unit == RateUnit::nats);
}

TEST_CASE("parse_config: validation and conflicts") {
    try {
        parse_config(R"({"a": [0.5], "c_ar": [], "sigma_w2": 1.0, "nu": 0, "power": 1.0})", command("capacity"));
        FAIL("expected ValidationError");
    } catch (const ValidationError& ex) {
        CHECK(ex.field() == "nu");
    }
    try {
        parse_config(R"({"a": [1.5], "c_ar": [], "sigma_w2": 1.0, "nu": 1, "power": 1.0})", command("capacity"));
        FAIL("expected ValidationError");
    } catch (const ValidationError& ex) {
        CHECK(ex.field() == "a");
    }
    CHECK_THROWS_AS(parse_config(kMa1, command("sweep")), ConflictError);
    CHECK_THROWS_AS(parse_config(kMa1), ConflictError);
    CHECK_THROWS_AS(parse_config(kMa1, command("rate")), ConflictError);  // no e

    auto bad_d = command("rate");
    bad_d.e = 1.0;
    bad_d.d = std::vector<double>{0.1, 0.2};
    CHECK_THROWS_AS(parse_config(kMa1, bad_d), ValidationError);

    auto csv_capacity = command("capacity");
    csv_capacity.format = "csv";
    CHECK_THROWS_AS(parse_config(kMa1, csv_capacity), ConflictError);
}

TEST_CASE("parse_config: malformed input") {
    CHECK_THROWS_AS(parse_config("{not json", command("capacity")), ParseError);
    CHECK_THROWS_AS(parse_config(R"({"a": [0.5], "sigma_w2": 1.0, "nu": 1, "power": 1.0, "bogus": 3})",
                                 command("capacity")),
                    ParseError);
    CHECK_THROWS_AS(parse_config(R"({"a": [0.5], "c_ar": [], "sigma_w2": 1.0, "nu": 1.5, "power": 1.0})",
                                 command("capacity")),
                    ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"a": ["x"], "c_ar": [], "sigma_w2": 1.0, "nu": 1, "power": 1.0})",
                                 command("capacity")),
                    ParseError);
    CHECK_THROWS_AS(parse_number_list("1,,2", "values"), ParseError);
    CHECK(parse_number_list("1, 2.5,3", "values") == std::vector<double>{1.0, 2.5, 3.0});
}

TEST_CASE("parse_config: flags override the file") {
    const char* text = R"({"a": [0.5], "c_ar": [], "sigma_w2": 1.0, "nu": 1, "power": 1.0,
                           "command": "simulate", "e": 0.5, "seed": 3})";
    const auto from_file = parse_config(text);
    CHECK(from_file.command == Command::simulate);
    CHECK(from_file.e == 0.5);
    CHECK(from_file.seed == 3);

    FlagOverrides f;
    f.e = 0.75;
    f.seed = 11;
    const auto overridden = parse_config(text, f);
    CHECK(overridden.e == 0.75);
    CHECK(overridden.seed == 11);
}

TEST_CASE("CapacityResult JSON round trip is exact") {
    const auto cfg = parse_config(R"({"a": [0.3, -0.2], "c_ar": [0.4], "sigma_w2": 1.3, "nu": 2, "power": 1.5})",
                                  command("capacity"));
    const auto result = optimize_capacity(build_state_space(cfg.channel), cfg.channel.power);
    const auto text = to_json(result).dump();
    const auto back = capacity_result_from_json(json::parse(text));
    CHECK(back.rate_nats == result.rate_nats);
    CHECK(back.d_opt == result.d_opt);
    CHECK(back.e_opt == result.e_opt);
    CHECK(back.K_opt == result.K_opt);
    CHECK(back.achieved_power == result.achieved_power);
    CHECK(back.riccati_residual == result.riccati_residual);
    CHECK(back.optimizer_evaluations == result.optimizer_evaluations);
    CHECK(back.restarts_used == result.restarts_used);
}

TEST_CASE("execute: commands") {
    SUBCASE("rate on MA(1) with d = 0, e = 1") {
        auto f = command("rate");
        f.e = 1.0;
        const auto out = execute(parse_config(kMa1, f));
        CHECK(out.exit_code == 0);
        const auto j = json::parse(out.artifact);
        CHECK(std::abs(j["rate"].get<double>() - 0.37870) < 1e-4);
    }
    SUBCASE("capacity of white noise in bits, deterministic") {
        auto f = command("capacity");
        f.unit = "bits";
        const auto cfg = parse_config(R"({"a": [], "c_ar": [], "sigma_w2": 1.0, "nu": 1, "power": 1.0})", f);
        const auto first = execute(cfg);
        const auto second = execute(cfg);
        CHECK(first.exit_code == 0);
        CHECK(first.artifact == second.artifact);
        CHECK(std::abs(json::parse(first.artifact)["rate"].get<double>() - 0.5) < 1e-3);
    }
    SUBCASE("simulate csv has one row per step") {
        auto f = command("simulate");
        f.e = 1.0;
        f.n = 25;
        const auto out = execute(parse_config(kMa1, f));
        CHECK(out.exit_code == 0);
        std::istringstream in(out.artifact);
        std::string line;
        int lines = 0;
        while (std::getline(in, line)) ++lines;
        CHECK(lines == 27);
    }
    SUBCASE("sweep reports failing rows with exit 1") {
        auto f = command("sweep");
        f.axis = "power";
        f.values = std::vector<double>{1.0, -1.0};
        f.format = "json";
        const auto out = execute(parse_config(kMa1, f));
        CHECK(out.exit_code == 1);
        const auto j = json::parse(out.artifact);
        CHECK(j["rows"].size() == 2);
        CHECK(j["rows"][0].contains("result"));
        CHECK(j["rows"][1].contains("error"));
    }
    SUBCASE("verify passes on an ARMA channel") {
        auto f = command("verify");
        f.seed = 7;
        const auto out = execute(parse_config(R"({"a": [0.6, -0.2], "c_ar": [0.3], "sigma_w2": 1.5, "nu": 2,
                                                  "power": 2.0})",
                                              f));
        CHECK(out.exit_code == 0);
        CHECK(json::parse(out.artifact)["all_pass"].get<bool>());
    }
}

TEST_CASE("run writes the artifact atomically") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "dfcap_cli_test";
    fs::create_directories(dir);
    const fs::path target = dir / "result.json";
    fs::remove(target);

    auto f = command("rate");
    f.e = 1.0;
    f.out = target.string();
    const auto cfg = parse_config(kMa1, f);
    std::ostringstream out, err;
    CHECK(run(cfg, out, err) == 0);
    CHECK(out.str().empty());
    CHECK(fs::exists(target));
    CHECK_FALSE(fs::exists(fs::path(target.string() + ".tmp")));
    std::ifstream in(target);
    const auto j = json::parse(in);
    CHECK(j["command"] == "rate");
    fs::remove_all(dir);
}
