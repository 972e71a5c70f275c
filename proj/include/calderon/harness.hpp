#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "calderon/reconstruct.hpp"

namespace calderon {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kVersion = "1.0.0";

/// Config violates the schema; the message names the field and the expected
/// and actual values.
class SchemaError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A module pipeline failed; the message starts with "<command>/<stage>: ".
class StageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CalculusSection {
    std::vector<int> d{1, 2, 3};
    std::vector<int> N{2, 3, 4};
    int samples = 100;
    double tolerance = 1e-12;
};

struct CarlemanSection {
    int d = 2;
    double lambda = 2.0, s = 2.0, eps0 = 0.5, s0 = 2.0, sh = 0.25;
    std::vector<int> probe_ladder{7, 15, 31, 63};
    std::vector<int> fit_ladder{7, 11, 15};
    int samples = 100;
    double order_tolerance = 0.3;
    double spread_limit = 3.0;
};

struct UcpSection {
    int d = 2, N = 15;
    double rho = 0.05;
    int solutions = 20;
    double eps0 = 0.5, eps_tilde_factor = 0.25;
    int tau_count = 20;
    GammaBox gamma{0, -1, {0.0, 0.25, 0.25}, {0.0, 0.75, 0.75}};
    double alpha_min = 0.01, alpha_max = 10.0;
    int alpha_steps = 31;
    double C_cap = 10.0;
};

struct CgoInstance {
    Frequency xi{};
    double a = 4.0;
};

struct CgoSection {
    int N = 7;
    double sigma_amplitude = 0.0;
    double q_amplitude = 5.0;
    double a0 = 2.0, c = 3.0;  // regime used by the instances
    std::vector<CgoInstance> instances{{{0, 0, 0}, 4.0}, {{1, 0, 0}, 4.0}, {{1, 1, 0}, 6.0}};
    std::vector<int> probe_ladder{5, 7, 9, 11};
    double probe_a_scale = 1.0;
    double probe_a0 = 2.0, probe_c = 1.0;
    double tolerance = 1e-12;
    int max_iterations = 200;
    double threshold_factor = 0.1;
};

struct PotentialSpec {
    std::string kind = "zero";  // zero | constant | bump
    double value = 0.0;         // constant
    Point centre{0.5, 0.5, 0.5};
    double radius = 0.3, amplitude = 1.0;

    [[nodiscard]] PotentialDescription describe() const;
};

struct StabilitySection {
    std::vector<int> N_ladder{5, 7, 9};
    double sigma_amplitude = 0.0;
    PotentialSpec q1{};
    PotentialSpec q2{"bump", 0.0, {0.5, 0.5, 0.5}, 0.3, 5.0};
    double collar_rho = 0.02;
    GammaBox gamma{0, -1, {0.0, 0.25, 0.25}, {0.0, 0.75, 0.75}};
    double r = 1.0;
    ConstantsBox constants;
    std::vector<double> perturbation{0.0};
    std::string method = "dirichlet";
};

struct ExportSection {
    int d = 2, N = 3;
    double sigma_amplitude = 0.0;
    PotentialSpec q{};
};

struct RunConfig {
    std::string command;
    std::uint64_t seed = 0;
    bool seed_given = false;
    int threads = 1;
    bool deterministic = false;
    std::filesystem::path out = "out";
    std::vector<std::string> formats{"csv", "json"};
    CalculusSection calculus;
    CarlemanSection carleman;
    UcpSection ucp;
    CgoSection cgo;
    StabilitySection stability;
    ExportSection export_op;
};

const std::vector<std::string>& commands();

/// Strict parse: unknown keys, wrong types and out-of-range values raise SchemaError.
RunConfig parse_config(const nlohmann::json& j);
/// Canonical form with every default spelled out.
nlohmann::json to_json(const RunConfig& config);
/// FNV-1a of the canonical dump without "out", "formats" and "threads",
/// which do not change any number. 16 hex digits.
std::string config_hash(const RunConfig& config);

/// Paper anchor probed by a command, e.g. "carleman-estimate".
std::string anchor(const std::string& command);

struct RunRecord {
    std::string command;
    std::string config_hash;
    std::string anchor;
    std::string timestamp;  // empty in deterministic mode
    std::map<std::string, std::string> versions;
    std::vector<std::filesystem::path> artifacts;
    std::map<std::string, double> metrics;
    bool passed = true;  // verification verdict; run-* commands always pass
};

/// Executes the command's pipeline and writes its outputs under config.out.
/// Throws SchemaError for a missing seed or unknown command, StageError otherwise.
RunRecord run(const RunConfig& config);

/// Writes record.<format> (csv: "key,value" rows; json: full record) and
/// returns its path.
std::filesystem::path emit_report(const RunRecord& record, const std::string& format,
                                  const std::filesystem::path& dir, const RunConfig& config);

nlohmann::json to_json(const RunRecord& record);

/// "# config_hash=<hash> anchor=<anchor> command=<command>".
std::string csv_header_comment(const RunConfig& config);

}  // namespace calderon
