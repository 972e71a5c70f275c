// calderon: batch front end for the numerical lab.
//   calderon <command> [--config file.json] [--out dir] [--seed n] [--threads n] [--deterministic]
// Exit codes: 0 success, 1 error, 2 verification failed; CLI11 usage errors are nonzero.
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "calderon/harness.hpp"

namespace {

int execute(const std::string& command, const std::string& config_path, const std::string& out,
            const std::optional<std::uint64_t>& seed, const std::optional<int>& threads, bool deterministic) {
    using calderon::RunConfig;
    nlohmann::json j = nlohmann::json::object();
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw std::runtime_error("cannot read config " + config_path);
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw calderon::SchemaError(config_path + ": " + e.what());
        }
    }
    if (j.is_object() && j.contains("command") && j["command"] != command)
        throw calderon::SchemaError("field 'command': config says " + j["command"].dump() + " but CLI asked for \"" +
                                    command + "\"");
    RunConfig config = calderon::parse_config(j);
    config.command = command;
    if (seed) {
        config.seed = *seed;
        config.seed_given = true;
    }
    if (threads) config.threads = *threads;
    if (!out.empty()) config.out = out;
    config.deterministic = config.deterministic || deterministic;

    const auto record = calderon::run(config);
    for (const auto& f : config.formats) calderon::emit_report(record, f, config.out, config);

    std::cout << command << " [" << record.anchor << "] config_hash=" << record.config_hash << '\n';
    for (const auto& [k, v] : record.metrics) std::cout << "  " << k << " = " << v << '\n';
    std::cout << (record.passed ? "PASSED" : "FAILED") << " -> " << config.out.string() << '\n';
    return record.passed ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Discrete Calderon problem lab"};
    app.require_subcommand(1);

    std::string config_path, out;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    bool deterministic = false;

    for (const auto& name : calderon::commands()) {
        auto* sub = app.add_subcommand(name, "anchor: " + calderon::anchor(name));
        sub->add_option("--config", config_path, "JSON config")->check(CLI::ExistingFile);
        sub->add_option("--out", out, "output directory");
        sub->add_option("--seed", seed, "RNG seed (required here or in the config)");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_flag("--deterministic", deterministic, "omit timestamps; outputs are byte-identical across runs");
    }

    CLI11_PARSE(app, argc, argv);
    const std::string command = app.get_subcommands().front()->get_name();
    try {
        return execute(command, config_path, out, seed, threads, deterministic);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
