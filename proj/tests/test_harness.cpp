#include "cemf/harness.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace cemf;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("cemf_harness_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("experiment kinds round-trip through their names") {
    for (auto k : all_experiment_kinds()) CHECK(experiment_kind_from_string(to_string(k)) == k);
    CHECK(to_string(ExperimentKind::generator_validate) == "generator-validate");
    CHECK_THROWS_AS(experiment_kind_from_string("nope"), Error);
}

TEST_CASE("config JSON round trip and validation") {
    auto c = default_config(ExperimentKind::mixing);
    c.seed = 42;
    c.K = 3.5;
    const nlohmann::json j = c;
    const auto back = j.get<ExperimentConfig>();
    CHECK(nlohmann::json(back) == j);
    CHECK(back.K == 3.5);

    const auto partial = nlohmann::json{{"kind", "fsp"}, {"ell", 3}}.get<ExperimentConfig>();
    CHECK(partial.ell == 3);
    CHECK(partial.ensemble.N == 40);

    auto bad = default_config(ExperimentKind::operator_suite);
    bad.particles = 3;
    CHECK_THROWS_AS(validate_config(bad), Error);
    bad = default_config(ExperimentKind::operator_suite);
    bad.ensemble.N = 400;
    bad.particles = 6;
    CHECK_THROWS_AS(validate_config(bad), Error);
    bad = default_config(ExperimentKind::generator_validate);
    bad.convention = "other";
    CHECK_THROWS_AS(validate_config(bad), Error);
}

TEST_CASE("check helpers") {
    CHECK(check_close("a", 1.0, 1.1, 0.2).pass);
    CHECK_FALSE(check_close("a", 1.0, 1.5, 0.2).pass);
    CHECK(check_at_most("b", 1.0, 1.0).pass);
    CHECK_FALSE(check_at_least("c", 0.5, 1.0).pass);
    CHECK(format_number(0.1) == "0.1");
    CHECK(format_number(1.0 / 3.0) == "0.3333333333333333");
    CHECK(std::stod(format_number(1e-17 / 3)) == 1e-17 / 3);
}

TEST_CASE("empty report serializes to valid JSON with an empty check array") {
    ExperimentReport r;
    r.config = nlohmann::json::object();
    const auto j = report_summary(r);
    CHECK(j.at("checks").is_array());
    CHECK(j.at("checks").empty());
    CHECK(j.at("runtime").contains("threads"));
    CHECK_FALSE(j.at("runtime").contains("wall_seconds"));
    CHECK(report_summary(r, true).at("runtime").contains("wall_seconds"));
    CHECK(nlohmann::json::parse(j.dump()) == j);
}

TEST_CASE("operator suite passes at n=4, N=8") {
    const auto report = run_experiment(default_config(ExperimentKind::operator_suite));
    for (const auto& c : report.checks) {
        INFO(c.name << " = " << c.value);
        CHECK(c.pass);
    }
    CHECK(report.find("reversibility") != nullptr);
    CHECK(report.find("kernel_annihilation") != nullptr);
    CHECK(report.find("l1_bound") != nullptr);
    std::set<std::string> names;
    for (const auto& c : report.checks) CHECK(names.insert(c.name).second);
}

TEST_CASE("reruns are byte-identical and CSV headers match the documentation") {
    auto cfg = default_config(ExperimentKind::ansatz_compare);
    cfg.seed = 9;
    const auto a = fresh_dir("a"), b = fresh_dir("b");
    emit_report(run_experiment(cfg), ReportFormat::json, a.string());
    emit_report(run_experiment(cfg), ReportFormat::json, b.string());
    CHECK(slurp(a / "ansatz-compare.json") == slurp(b / "ansatz-compare.json"));

    for (auto kind : {ExperimentKind::ansatz_compare, ExperimentKind::operator_suite, ExperimentKind::fsp}) {
        auto c = default_config(kind);
        if (kind == ExperimentKind::fsp) c.ensemble.N = 16;
        const auto report = run_experiment(c);
        const auto dir = fresh_dir("csv");
        const auto written = emit_report(report, ReportFormat::csv, dir.string());
        const auto& docs = documented_tables(kind);
        CHECK(written.size() == docs.size());
        for (const auto& schema : docs) {
            std::ifstream in(dir / (to_string(kind) + "_" + schema.name + ".csv"));
            REQUIRE(in.good());
            std::string header;
            std::getline(in, header);
            std::string expect;
            for (std::size_t k = 0; k < schema.columns.size(); ++k) expect += (k ? "," : "") + schema.columns[k];
            CHECK(header == expect);
        }
        CHECK(describe_tables(kind).find(docs.front().columns.front()) != std::string::npos);
    }
}

TEST_CASE("joint normality for pure GOE matches the inner product") {
    auto cfg = default_config(ExperimentKind::joint_normality);
    cfg.base = "zero";
    cfg.t = 1.0;
    cfg.ensemble.N = 60;
    cfg.trials = 1500;
    cfg.pairs = 2;
    cfg.seed = 5;
    const auto report = run_experiment(cfg);
    for (const auto& c : report.checks) {
        INFO(c.name << " = " << c.value << " target " << c.target << " tol " << c.tol);
        if (c.name.rfind("mixed_moment", 0) == 0 || c.name == "second_moment") CHECK(c.pass);
    }
}

TEST_CASE("test vector helpers") {
    const auto V = make_test_vectors(20, 4, VectorMode::orthonormal, 1, true);
    REQUIRE(V.size() == 4);
    for (std::size_t a = 0; a < 4; ++a) {
        CHECK(V[a].norm() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::abs(V[a].sum()) <= 1e-12);
        for (std::size_t b = 0; b < a; ++b) CHECK(std::abs(V[a].dot(V[b])) <= 1e-12);
    }
    const auto E = make_test_vectors(5, 3, VectorMode::equal, 2, false);
    CHECK((E[0] - E[2]).norm() == 0.0);
    const auto c = location_coefficients({-1.0, 0.0, 2.0}, 0.5);
    CHECK(c(0, 1) == doctest::Approx(0.5 / 3.0));
    CHECK(c(1, 2) == doctest::Approx(0.5 / 12.0));
}
