#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "calderon/harness.hpp"

using namespace calderon;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("calderon_harness_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

RunConfig calculus_config(const fs::path& out) {
    auto c = parse_config({{"command", "verify-calculus"},
                           {"seed", 7},
                           {"deterministic", true},
                           {"calculus", {{"d", {2}}, {"N", {3}}, {"samples", 20}}}});
    c.out = out;
    return c;
}

// q1 = q2: a degenerate stability run on the smallest grid.
RunConfig equal_potentials_config(const fs::path& out) {
    const nlohmann::json bump = {{"kind", "bump"}, {"radius", 0.3}, {"amplitude", 5.0}};
    auto c = parse_config({{"command", "run-stability"},
                           {"seed", 3},
                           {"deterministic", true},
                           {"stability", {{"N_ladder", {5}}, {"q1", bump}, {"q2", bump}}}});
    c.out = out;
    return c;
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream is(text);
    for (std::string l; std::getline(is, l);) out.push_back(l);
    return out;
}

}  // namespace

TEST_CASE("verify-calculus on d = 2, N = 3, seed 7 passes at 1e-12") {
    const auto dir = scratch("calculus");
    const auto record = run(calculus_config(dir));
    CHECK(record.passed);
    CHECK(record.metrics.at("max_relative") <= 1e-12);
    CHECK(record.anchor == "discrete-calculus-identities");
    CHECK(record.timestamp.empty());
    CHECK(fs::exists(dir / "calculus.csv"));
}

TEST_CASE("run-stability with equal potentials yields delta = 0 rows") {
    const auto dir = scratch("stability");
    const auto config = equal_potentials_config(dir);
    const auto record = run(config);
    CHECK(record.passed);

    const auto csv = lines(slurp(dir / "stability.csv"));
    REQUIRE(csv.size() == 3);
    CHECK(csv[0] == csv_header_comment(config));
    CHECK(csv[1] == "N,h,eps_d,eps_a,delta_full,delta_gamma,mu,a,err_Hminus_r,bound_value,alpha");
    std::vector<std::string> cells;
    std::istringstream row(csv[2]);
    for (std::string cell; std::getline(row, cell, ',');) cells.push_back(cell);
    REQUIRE(cells.size() == 11);
    CHECK(std::stod(cells[4]) == 0.0);
    CHECK(std::stod(cells[5]) == 0.0);
    CHECK(std::stod(cells[8]) == 0.0);

    const auto point = nlohmann::json::parse(slurp(dir / "stability_point_000.json"));
    CHECK(point["branch"] == "exact");
    CHECK(point["metadata"]["anchor"] == "logarithmic-stability");
    CHECK(point["metadata"]["config_hash"] == config_hash(config));
}

TEST_CASE("unknown commands and missing seeds are rejected") {
    CHECK_THROWS_AS(parse_config({{"command", "verify-everything"}, {"seed", 1}}), SchemaError);
    CHECK_THROWS_AS(anchor("verify-everything"), SchemaError);

    auto c = parse_config({{"command", "verify-calculus"}});
    CHECK_FALSE(c.seed_given);
    CHECK_THROWS_WITH_AS(run(c), doctest::Contains("seed"), SchemaError);
}

TEST_CASE("schema errors name the field, the expectation and the value") {
    auto message = [](const nlohmann::json& j) {
        try {
            parse_config(j);
        } catch (const SchemaError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    const auto wrong_type = message({{"stability", {{"r", "one"}}}});
    CHECK(wrong_type.find("stability.r") != std::string::npos);
    CHECK(wrong_type.find("expected number") != std::string::npos);
    CHECK(wrong_type.find("\"one\"") != std::string::npos);

    CHECK(message({{"ucp", {{"tau", 3}}}}).find("ucp.tau") != std::string::npos);
    CHECK(message({{"cgo", {{"instances", {{{"xi", {1, 0}}, {"a", "x"}}}}}}}).find("cgo.instances[0].a") !=
          std::string::npos);
    CHECK(message({{"stability", {{"q2", {{"kind", "gaussian"}}}}}}).find("stability.q2.kind") != std::string::npos);
    CHECK(message({{"seed", -4}}).find("seed") != std::string::npos);
    CHECK(message({{"schema_version", 2}}).find("schema_version") != std::string::npos);
    CHECK(message({{"threads", 0}}).find("threads") != std::string::npos);
}

TEST_CASE("config JSON round-trips and the hash ignores output-only fields") {
    auto c = parse_config({{"command", "run-cgo"}, {"seed", 42}, {"cgo", {{"N", 5}}}});
    const auto j = to_json(c);
    const auto back = parse_config(nlohmann::json::parse(j.dump()));
    CHECK(to_json(back) == j);
    CHECK(config_hash(back) == config_hash(c));
    CHECK(config_hash(c).size() == 16);

    auto moved = c;
    moved.out = "elsewhere";
    moved.threads = 4;
    moved.formats = {"csv"};
    CHECK(config_hash(moved) == config_hash(c));

    auto changed = c;
    changed.cgo.q_amplitude = 5.5;
    CHECK(config_hash(changed) != config_hash(c));
    changed = c;
    changed.seed = 43;
    CHECK(config_hash(changed) != config_hash(c));
}

TEST_CASE("records round-trip through JSON and every CSV carries the hash comment") {
    const auto dir = scratch("records");
    const auto config = calculus_config(dir);
    const auto record = run(config);
    const auto json_path = emit_report(record, "json", dir, config);
    const auto csv_path = emit_report(record, "csv", dir, config);

    const auto parsed = nlohmann::json::parse(slurp(json_path));
    CHECK(parsed["config_hash"] == record.config_hash);
    CHECK(parse_config(parsed["config"]).seed == 7);
    for (const auto& [k, v] : record.metrics) CHECK(parsed["metrics"][k].get<double>() == v);
    CHECK(nlohmann::json::parse(parsed.dump()) == parsed);

    const std::string comment = csv_header_comment(config);
    CHECK(comment.find(record.config_hash) != std::string::npos);
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".csv") CHECK(lines(slurp(entry.path())).front() == comment);
    CHECK(lines(slurp(csv_path)).at(1) == "key,value");
    CHECK_THROWS_AS(emit_report(record, "xml", dir, config), SchemaError);
}

TEST_CASE("deterministic reruns are byte-identical") {
    for (const auto& make : {calculus_config, equal_potentials_config}) {
        const auto a = scratch("det_a"), b = scratch("det_b");
        auto ca = make(a), cb = make(b);
        const auto ra = run(ca), rb = run(cb);
        emit_report(ra, "json", a, ca);
        emit_report(rb, "json", b, cb);
        REQUIRE(ra.artifacts.size() == rb.artifacts.size());
        for (const auto& entry : fs::directory_iterator(a))
            CHECK_MESSAGE(slurp(entry.path()) == slurp(b / entry.path().filename()), entry.path().filename());
    }
}

TEST_CASE("export-operator writes laplacian and DtN with provenance") {
    const auto dir = scratch("export");
    auto c = parse_config({{"command", "export-operator"}, {"seed", 1}, {"deterministic", true}});
    c.out = dir;
    const auto record = run(c);
    CHECK(record.metrics.at("dtn_asymmetry") < 1e-12);
    for (const char* f : {"laplacian.txt", "dtn.txt"}) {
        const auto text = slurp(dir / f);
        CHECK(text.find(record.config_hash) != std::string::npos);
        CHECK(text.find("discrete-operators") != std::string::npos);
    }
}

TEST_CASE("downstream failures carry a stage label") {
    auto c = parse_config({{"command", "run-cgo"}, {"seed", 1}, {"cgo", {{"instances", {{{"xi", {0, 0, 0}}, {"a", 0.5}}}}}}});
    c.out = scratch("stage");
    CHECK_THROWS_WITH_AS(run(c), doctest::Contains("run-cgo/"), StageError);
}
