#pragma once

#include "cemf/configspace.hpp"
#include "cemf/ensembles.hpp"
#include "cemf/spectral.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cemf {

enum class ExperimentKind { assumptions, generator_validate, operator_suite, mixing, fsp, joint_normality, ansatz_compare };

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& s);
const std::vector<ExperimentKind>& all_experiment_kinds();

// How test vectors are chosen: independent Gaussian directions, an
// orthonormal set, one repeated direction, or explicit vectors.
enum class VectorMode { random, orthonormal, equal, explicit_list };

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::operator_suite;
    EnsembleSpec ensemble;
    RegularityWindow window;

    // Configuration space Lambda^n_N; sites defaults to ensemble.N.
    int sites = 0;
    int particles = 2;
    std::vector<Configuration> configurations;
    // Eigenvector indices (0-based) for moment experiments; empty picks the
    // middle of the spectrum.
    std::vector<int> indices;
    VectorMode vectors = VectorMode::orthonormal;
    std::vector<Vector> explicit_vectors;
    // Project test vectors orthogonal to the all-ones vector.  Defaults to on
    // for the sparse-graph ensembles.
    std::optional<bool> orthogonal_to_ones;
    int pairs = 5;

    // "ensemble" draws a base matrix, "zero" uses H = 0.
    std::string base = "ensemble";
    // Eigenvector-flow coefficient scale: "ito" (1/(2N gap^2)) or "printed" (1/(N gap^2)).
    std::string convention = "ito";
    // Explicit spectrum for generator validation (Haar-rotated).
    std::vector<double> spectrum;

    // Times and scales of the mixing construction; unset values follow the
    // default proportions in the sites count.
    double t = 0.0;
    std::optional<double> t0, t1, K, ell1, ell2, T1, T2;
    double delta_exponent = 0.2;
    bool scale_chain = false;
    double omega_c = 0.1;

    int ell = 4;
    double upsilon = 1.0;
    double fsp_threshold = 1e-6;
    // "semicircle" flow coefficients at classical locations, or "inverse-square".
    std::string coefficients = "semicircle";
    std::vector<int> fsp_window;
    std::vector<double> s_grid;
    double fit_lo = 0.2;
    double fit_hi = 0.5;

    double delta = 1e-3;
    int substeps = 10;
    std::size_t paths = 20000;
    std::size_t trials = 1000;
    double exponent = 0.5;
    double fourth_moment_tolerance = 0.1;

    FreeConvolutionSettings free_convolution;

    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::string out = ".";

    int space_sites() const { return sites > 0 ? sites : ensemble.N; }
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);
ExperimentConfig default_config(ExperimentKind kind);
// Throws a structured Error naming the violated guard.
void validate_config(const ExperimentConfig& c);

struct Check {
    std::string name;
    double value = 0.0;
    double target = 0.0;
    double tol = 0.0;
    bool pass = false;
};

// |value - target| <= tol
Check check_close(std::string name, double value, double target, double tol);
// value <= bound
Check check_at_most(std::string name, double value, double bound);
// value >= bound
Check check_at_least(std::string name, double value, double bound);

struct Table {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
    void add(std::vector<std::string> row);
};

// Shortest round-trip text for a double.
std::string format_number(double v);

struct TableSchema {
    std::string name;
    std::vector<std::string> columns;
};
// Documented CSV tables per experiment.
const std::vector<TableSchema>& documented_tables(ExperimentKind kind);
std::string describe_tables(ExperimentKind kind);

struct ExperimentReport {
    ExperimentKind kind = ExperimentKind::operator_suite;
    nlohmann::json config;
    std::vector<Check> checks;
    std::vector<Table> tables;
    unsigned threads = 1;
    double wall_seconds = 0.0;
    bool all_pass() const;
    const Check* find(const std::string& name) const;
};

ExperimentReport run_experiment(const ExperimentConfig& config);

enum class ReportFormat { json, csv };

// {config, checks:[{name, value, target, tol, pass}], runtime}; wall-clock is
// included only when asked for so that reruns stay byte-identical.
nlohmann::json report_summary(const ExperimentReport& report, bool timing = false);
// Writes <kind>.json or one <kind>_<table>.csv per table into out_dir and
// returns the paths written.
std::vector<std::string> emit_report(const ExperimentReport& report, ReportFormat format, const std::string& out_dir,
                                     bool timing = false);

// Shared pieces used by the acceptance suite.
std::vector<Vector> make_test_vectors(int N, int count, VectorMode mode, std::uint64_t seed, bool orthogonal_to_ones);
CoefficientMatrix random_coefficients(int N, std::uint64_t seed);
// scale / (N (gamma_i - gamma_j)^2) at the given locations.
CoefficientMatrix location_coefficients(const std::vector<double>& gamma, double scale);

} // namespace cemf
