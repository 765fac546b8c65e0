// Command-line front end: one subcommand per experiment kind.

#include "cemf/harness.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::string format = "json";
    std::optional<unsigned> threads;
    bool timing = false;
    bool dump_config = false;
};

cemf::ExperimentConfig load_config(cemf::ExperimentKind kind, const Options& o) {
    cemf::ExperimentConfig c = cemf::default_config(kind);
    if (!o.config_path.empty()) {
        std::ifstream in(o.config_path);
        if (!in) throw cemf::Error("cannot read config '" + o.config_path + "'");
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw cemf::Error("config '" + o.config_path + "' is not valid JSON: " + e.what());
        }
        if (!j.contains("kind")) j["kind"] = cemf::to_string(kind);
        if (j["kind"] != cemf::to_string(kind))
            throw cemf::Error("config kind '" + j["kind"].get<std::string>() + "' does not match subcommand '" +
                              cemf::to_string(kind) + "'");
        c = j.get<cemf::ExperimentConfig>();
    }
    if (o.seed) c.seed = *o.seed;
    if (o.out) c.out = *o.out;
    if (o.threads) c.threads = *o.threads;
    return c;
}

int run(cemf::ExperimentKind kind, const Options& o) {
    const cemf::ExperimentConfig config = load_config(kind, o);
    if (o.dump_config) {
        std::cout << nlohmann::json(config).dump(2) << '\n';
        return 0;
    }
    const cemf::ExperimentReport report = cemf::run_experiment(config);
    const auto format = o.format == "csv" ? cemf::ReportFormat::csv : cemf::ReportFormat::json;
    const auto files = cemf::emit_report(report, format, config.out, o.timing);
    int failed = 0;
    for (const auto& c : report.checks) {
        std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << " value=" << cemf::format_number(c.value)
                  << " target=" << cemf::format_number(c.target) << " tol=" << cemf::format_number(c.tol) << '\n';
        failed += !c.pass;
    }
    for (const auto& f : files) std::cout << "wrote " << f << '\n';
    std::cout << (failed ? std::to_string(failed) + " check(s) failed" : "all checks passed") << '\n';
    return failed ? 1 : 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Colored eigenvector moment flow laboratory"};
    app.require_subcommand(1);
    Options o;
    int status = 0;
    std::string csv_help = "CSV tables written with --format csv:\n";
    for (auto kind : cemf::all_experiment_kinds()) csv_help += cemf::describe_tables(kind);
    app.footer(csv_help);

    for (auto kind : cemf::all_experiment_kinds()) {
        auto* sub = app.add_subcommand(cemf::to_string(kind), "Run the " + cemf::to_string(kind) + " experiment");
        sub->add_option("--config", o.config_path, "JSON experiment config")->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "Override the config seed");
        sub->add_option("--out", o.out, "Output directory");
        sub->add_option("--format", o.format, "json (summary) or csv (raw tables)")
            ->check(CLI::IsMember({"json", "csv"}));
        sub->add_option("--threads", o.threads, "Worker threads (0 = all cores)");
        sub->add_flag("--timing", o.timing, "Include wall-clock time in the JSON summary");
        sub->add_flag("--dump-config", o.dump_config, "Print the effective config and exit");
        sub->footer("CSV columns:\n" + cemf::describe_tables(kind));
        sub->callback([&o, &status, kind] {
            try {
                status = run(kind, o);
            } catch (const std::exception& e) {
                std::cerr << "error: " << e.what() << '\n';
                status = 1;
            }
        });
    }
    CLI11_PARSE(app, argc, argv);
    return status;
}
