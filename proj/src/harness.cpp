#include "cemf/harness.hpp"

#include "cemf/ansatz.hpp"
#include "cemf/flow.hpp"
#include "cemf/relaxation.hpp"
#include "cemf/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace cemf {

// ---------------------------------------------------------------- names

namespace {

const std::vector<std::pair<ExperimentKind, std::string>>& kind_names() {
    static const std::vector<std::pair<ExperimentKind, std::string>> names = {
        {ExperimentKind::assumptions, "assumptions"},
        {ExperimentKind::generator_validate, "generator-validate"},
        {ExperimentKind::operator_suite, "operator-suite"},
        {ExperimentKind::mixing, "mixing"},
        {ExperimentKind::fsp, "fsp"},
        {ExperimentKind::joint_normality, "joint-normality"},
        {ExperimentKind::ansatz_compare, "ansatz-compare"},
    };
    return names;
}

} // namespace

std::string to_string(ExperimentKind kind) {
    for (const auto& [k, s] : kind_names())
        if (k == kind) return s;
    throw Error("unknown experiment kind");
}

ExperimentKind experiment_kind_from_string(const std::string& s) {
    for (const auto& [k, name] : kind_names())
        if (name == s) return k;
    throw Error("unknown experiment kind '" + s + "'");
}

const std::vector<ExperimentKind>& all_experiment_kinds() {
    static const std::vector<ExperimentKind> kinds = [] {
        std::vector<ExperimentKind> out;
        for (const auto& [k, s] : kind_names()) out.push_back(k);
        return out;
    }();
    return kinds;
}

namespace {

std::string to_string(VectorMode m) {
    switch (m) {
    case VectorMode::random: return "random";
    case VectorMode::orthonormal: return "orthonormal";
    case VectorMode::equal: return "equal";
    case VectorMode::explicit_list: return "explicit";
    }
    return "orthonormal";
}

VectorMode vector_mode_from_string(const std::string& s) {
    if (s == "random") return VectorMode::random;
    if (s == "orthonormal") return VectorMode::orthonormal;
    if (s == "equal") return VectorMode::equal;
    throw Error("vectors must be random, orthonormal, equal or a list of vectors");
}

std::string config_label(const Configuration& x) {
    std::string s;
    for (std::size_t a = 0; a < x.size(); ++a) {
        if (a) s += '-';
        s += std::to_string(x[a]);
    }
    return s;
}

} // namespace

// ---------------------------------------------------------------- config

ExperimentConfig default_config(ExperimentKind kind) {
    ExperimentConfig c;
    c.kind = kind;
    c.ensemble.kind = EnsembleKind::goe;
    switch (kind) {
    case ExperimentKind::assumptions:
        c.ensemble.N = 200;
        c.particles = 2;
        c.t = 0.0;
        break;
    case ExperimentKind::generator_validate:
        c.ensemble.N = 5;
        c.particles = 2;
        c.vectors = VectorMode::random;
        c.spectrum = {-2.0, -1.0, 0.0, 1.0, 2.0};
        break;
    case ExperimentKind::operator_suite:
        c.ensemble.N = 8;
        c.particles = 4;
        c.s_grid = {0.1, 0.5, 1.0};
        break;
    case ExperimentKind::mixing:
        c.ensemble.N = 40;
        c.particles = 2;
        c.t = 0.3;
        c.window = RegularityWindow{0.0, 2.0, 0.01, 0.25, 4.0};
        break;
    case ExperimentKind::fsp:
        c.ensemble.N = 40;
        c.particles = 2;
        c.ell = 4;
        break;
    case ExperimentKind::joint_normality:
        c.ensemble.N = 200;
        c.particles = 2;
        c.trials = 2000;
        break;
    case ExperimentKind::ansatz_compare:
        c.ensemble.N = 6;
        c.particles = 4;
        c.base = "zero";
        c.t = 1.0;
        c.vectors = VectorMode::random;
        break;
    }
    return c;
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    j = nlohmann::json::object();
    j["kind"] = to_string(c.kind);
    j["ensemble"] = c.ensemble;
    j["window"] = c.window;
    j["sites"] = c.space_sites();
    j["particles"] = c.particles;
    j["configurations"] = c.configurations;
    j["indices"] = c.indices;
    if (c.vectors == VectorMode::explicit_list) {
        auto arr = nlohmann::json::array();
        for (const auto& v : c.explicit_vectors) arr.push_back(std::vector<double>(v.data(), v.data() + v.size()));
        j["vectors"] = arr;
    } else {
        j["vectors"] = to_string(c.vectors);
    }
    if (c.orthogonal_to_ones) j["orthogonal_to_ones"] = *c.orthogonal_to_ones;
    j["pairs"] = c.pairs;
    j["base"] = c.base;
    j["convention"] = c.convention;
    j["spectrum"] = c.spectrum;
    j["t"] = c.t;
    auto opt = [&](const char* key, const std::optional<double>& v) {
        if (v) j[key] = *v;
    };
    opt("t0", c.t0);
    opt("t1", c.t1);
    opt("K", c.K);
    opt("ell1", c.ell1);
    opt("ell2", c.ell2);
    opt("T1", c.T1);
    opt("T2", c.T2);
    j["delta_exponent"] = c.delta_exponent;
    j["scale_chain"] = c.scale_chain;
    j["omega_c"] = c.omega_c;
    j["ell"] = c.ell;
    j["upsilon"] = c.upsilon;
    j["fsp_threshold"] = c.fsp_threshold;
    j["coefficients"] = c.coefficients;
    j["fsp_window"] = c.fsp_window;
    j["s_grid"] = c.s_grid;
    j["fit"] = {c.fit_lo, c.fit_hi};
    j["delta"] = c.delta;
    j["substeps"] = c.substeps;
    j["paths"] = c.paths;
    j["trials"] = c.trials;
    j["exponent"] = c.exponent;
    j["fourth_moment_tolerance"] = c.fourth_moment_tolerance;
    j["free_convolution"] = {{"damping", c.free_convolution.damping},
                             {"tolerance", c.free_convolution.tolerance},
                             {"max_iterations", c.free_convolution.max_iterations},
                             {"grid_subdivisions", c.free_convolution.grid_subdivisions},
                             {"density_floor", c.free_convolution.density_floor}};
    j["seed"] = c.seed;
    j["out"] = c.out;
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    require(j.is_object(), "experiment config must be a JSON object");
    c = default_config(experiment_kind_from_string(j.at("kind").get<std::string>()));
    if (j.contains("ensemble")) c.ensemble = j["ensemble"].get<EnsembleSpec>();
    if (j.contains("window")) c.window = j["window"].get<RegularityWindow>();
    c.sites = j.value("sites", c.sites);
    c.particles = j.value("particles", c.particles);
    if (j.contains("configurations")) c.configurations = j["configurations"].get<std::vector<Configuration>>();
    if (j.contains("indices")) c.indices = j["indices"].get<std::vector<int>>();
    if (j.contains("vectors")) {
        const auto& v = j["vectors"];
        if (v.is_string()) {
            c.vectors = vector_mode_from_string(v.get<std::string>());
        } else {
            c.vectors = VectorMode::explicit_list;
            c.explicit_vectors.clear();
            for (const auto& row : v) {
                const auto values = row.get<std::vector<double>>();
                c.explicit_vectors.push_back(Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size())));
            }
        }
    }
    if (j.contains("orthogonal_to_ones")) c.orthogonal_to_ones = j["orthogonal_to_ones"].get<bool>();
    c.pairs = j.value("pairs", c.pairs);
    c.base = j.value("base", c.base);
    c.convention = j.value("convention", c.convention);
    if (j.contains("spectrum")) c.spectrum = j["spectrum"].get<std::vector<double>>();
    c.t = j.value("t", c.t);
    auto opt = [&](const char* key, std::optional<double>& v) {
        if (j.contains(key) && !j[key].is_null()) v = j[key].get<double>();
    };
    opt("t0", c.t0);
    opt("t1", c.t1);
    opt("K", c.K);
    opt("ell1", c.ell1);
    opt("ell2", c.ell2);
    opt("T1", c.T1);
    opt("T2", c.T2);
    c.delta_exponent = j.value("delta_exponent", c.delta_exponent);
    c.scale_chain = j.value("scale_chain", c.scale_chain);
    c.omega_c = j.value("omega_c", c.omega_c);
    c.ell = j.value("ell", c.ell);
    c.upsilon = j.value("upsilon", c.upsilon);
    c.fsp_threshold = j.value("fsp_threshold", c.fsp_threshold);
    c.coefficients = j.value("coefficients", c.coefficients);
    if (j.contains("fsp_window")) c.fsp_window = j["fsp_window"].get<std::vector<int>>();
    if (j.contains("s_grid")) c.s_grid = j["s_grid"].get<std::vector<double>>();
    if (j.contains("fit")) {
        const auto fit = j["fit"].get<std::vector<double>>();
        require(fit.size() == 2, "fit must be [lo, hi]");
        c.fit_lo = fit[0];
        c.fit_hi = fit[1];
    }
    c.delta = j.value("delta", c.delta);
    c.substeps = j.value("substeps", c.substeps);
    c.paths = j.value("paths", c.paths);
    c.trials = j.value("trials", c.trials);
    c.exponent = j.value("exponent", c.exponent);
    c.fourth_moment_tolerance = j.value("fourth_moment_tolerance", c.fourth_moment_tolerance);
    if (j.contains("free_convolution")) {
        const auto& f = j["free_convolution"];
        c.free_convolution.damping = f.value("damping", c.free_convolution.damping);
        c.free_convolution.tolerance = f.value("tolerance", c.free_convolution.tolerance);
        c.free_convolution.max_iterations = f.value("max_iterations", c.free_convolution.max_iterations);
        c.free_convolution.grid_subdivisions = f.value("grid_subdivisions", c.free_convolution.grid_subdivisions);
        c.free_convolution.density_floor = f.value("density_floor", c.free_convolution.density_floor);
    }
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    c.out = j.value("out", c.out);
}

void validate_config(const ExperimentConfig& c) {
    const int N = c.space_sites();
    require(N >= 2, "config: need at least two sites");
    require(c.particles >= 2 && c.particles % 2 == 0, "config: particles must be even and at least 2");
    const bool uses_space = c.kind == ExperimentKind::operator_suite || c.kind == ExperimentKind::mixing ||
                            c.kind == ExperimentKind::fsp || c.kind == ExperimentKind::ansatz_compare;
    if (uses_space) {
        const std::uint64_t count = count_even_configurations(N, c.particles);
        if (count > kMaxSpaceSize) {
            std::ostringstream os;
            os << "config: configuration space of " << count << " states exceeds the limit " << kMaxSpaceSize;
            throw Error(os.str());
        }
    }
    for (const auto& x : c.configurations) {
        require(static_cast<int>(x.size()) == c.particles, "config: configuration length must equal particles");
        for (int s : x) require(s >= 0 && s < N, "config: configuration site out of range");
    }
    for (int i : c.indices) require(i >= 0 && i < N, "config: eigenvector index out of range");
    require(c.convention == "ito" || c.convention == "printed", "config: convention must be ito or printed");
    require(c.base == "ensemble" || c.base == "zero", "config: base must be ensemble or zero");
    require(c.t >= 0.0, "config: t must be nonnegative");
    require(c.trials >= 2 && c.paths >= 4, "config: too few trials or paths");
    require(c.ell >= 0 && c.upsilon > 0.0, "config: need ell >= 0 and upsilon > 0");
    require(c.pairs >= 1, "config: need at least one vector pair");
    if (c.kind == ExperimentKind::joint_normality || c.kind == ExperimentKind::assumptions ||
        (c.kind == ExperimentKind::generator_validate && c.spectrum.empty()))
        require(c.ensemble.N >= 2, "config: ensemble needs N >= 2");
    if (c.kind == ExperimentKind::generator_validate && !c.spectrum.empty())
        require(static_cast<int>(c.spectrum.size()) == N, "config: spectrum length must equal sites");
    if (c.vectors == VectorMode::explicit_list)
        for (const auto& v : c.explicit_vectors) require(v.size() == N, "config: explicit vector has wrong length");
    if (c.scale_chain) {
        const double margin = std::pow(static_cast<double>(N), c.omega_c);
        if (!(c.window.eta_star * margin < c.t && c.t < c.window.r / margin)) {
            std::ostringstream os;
            os << "config: scale chain eta* N^w < t < r N^-w violated (eta*=" << c.window.eta_star << ", t=" << c.t
               << ", r=" << c.window.r << ", N^w=" << margin << ")";
            throw Error(os.str());
        }
    }
}

// ---------------------------------------------------------------- checks and tables

Check check_close(std::string name, double value, double target, double tol) {
    return {std::move(name), value, target, tol, std::abs(value - target) <= tol};
}

Check check_at_most(std::string name, double value, double bound) {
    return {std::move(name), value, bound, 0.0, value <= bound};
}

Check check_at_least(std::string name, double value, double bound) {
    return {std::move(name), value, bound, 0.0, value >= bound};
}

void Table::add(std::vector<std::string> row) {
    require(row.size() == columns.size(), "table '" + name + "': row width does not match header");
    rows.push_back(std::move(row));
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    for (int prec = 6; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

namespace {

const std::vector<std::string> kRelaxationMeta = {"N", "n", "ell", "upsilon", "schedule"};

std::vector<std::string> with_meta(std::vector<std::string> cols) {
    cols.insert(cols.end(), kRelaxationMeta.begin(), kRelaxationMeta.end());
    return cols;
}

} // namespace

const std::vector<TableSchema>& documented_tables(ExperimentKind kind) {
    static const std::vector<TableSchema> assumptions = {{"assumptions", {"quantity", "value"}}};
    static const std::vector<TableSchema> generator = {
        {"drift", {"config", "observable", "fd", "fd_std_error", "drift_ito", "drift_printed"}}};
    static const std::vector<TableSchema> suite = {{"spectrum", {"k", "eigenvalue"}},
                                                   {"l1", with_meta({"s", "value"})}};
    static const std::vector<TableSchema> mixing = {
        {"stages", with_meta({"stage", "s", "l1", "l2", "kernel_deviation", "value_at_y"})}};
    static const std::vector<TableSchema> fsp = {{"profile", with_meta({"source", "config", "dist", "value"})}};
    static const std::vector<TableSchema> joint = {{"summary", {"observable", "estimate", "std_error", "target"}},
                                                   {"trials", {"observable", "trial", "value"}}};
    static const std::vector<TableSchema> ansatz = {{"ansatz", {"config", "ansatz_identity", "wick", "ansatz_profile"}}};
    switch (kind) {
    case ExperimentKind::assumptions: return assumptions;
    case ExperimentKind::generator_validate: return generator;
    case ExperimentKind::operator_suite: return suite;
    case ExperimentKind::mixing: return mixing;
    case ExperimentKind::fsp: return fsp;
    case ExperimentKind::joint_normality: return joint;
    case ExperimentKind::ansatz_compare: return ansatz;
    }
    return assumptions;
}

std::string describe_tables(ExperimentKind kind) {
    std::string s;
    for (const auto& t : documented_tables(kind)) {
        s += "  " + to_string(kind) + "_" + t.name + ".csv:";
        for (std::size_t k = 0; k < t.columns.size(); ++k) s += (k ? "," : " ") + t.columns[k];
        s += "\n";
    }
    return s;
}

bool ExperimentReport::all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

const Check* ExperimentReport::find(const std::string& name) const {
    for (const auto& c : checks)
        if (c.name == name) return &c;
    return nullptr;
}

// ---------------------------------------------------------------- shared helpers

std::vector<Vector> make_test_vectors(int N, int count, VectorMode mode, std::uint64_t seed, bool orthogonal_to_ones) {
    require(mode != VectorMode::explicit_list, "make_test_vectors: explicit vectors are passed directly");
    rng::Stream gen(seed, rng::streams::generic);
    const Vector ones = Vector::Ones(N) / std::sqrt(static_cast<double>(N));
    auto draw = [&] {
        Vector v(N);
        for (int k = 0; k < N; ++k) v[k] = gen.normal();
        if (orthogonal_to_ones) v -= ones.dot(v) * ones;
        return v;
    };
    std::vector<Vector> out;
    if (mode == VectorMode::equal) {
        const Vector v = draw().normalized();
        out.assign(count, v);
        return out;
    }
    const int limit = N - (orthogonal_to_ones ? 1 : 0);
    if (mode == VectorMode::orthonormal) require(count <= limit, "make_test_vectors: too many orthonormal vectors");
    for (int a = 0; a < count; ++a) {
        Vector v = draw();
        if (mode == VectorMode::orthonormal)
            for (int pass = 0; pass < 2; ++pass)
                for (const auto& u : out) v -= u.dot(v) * u;
        out.push_back(v.normalized());
    }
    return out;
}

CoefficientMatrix random_coefficients(int N, std::uint64_t seed) {
    rng::Stream gen(seed, rng::streams::generic);
    CoefficientMatrix c = CoefficientMatrix::Zero(N, N);
    for (int i = 0; i < N; ++i)
        for (int j = i + 1; j < N; ++j) c(i, j) = c(j, i) = 0.1 + gen.uniform();
    return c;
}

CoefficientMatrix location_coefficients(const std::vector<double>& gamma, double scale) {
    const int N = static_cast<int>(gamma.size());
    CoefficientMatrix c = CoefficientMatrix::Zero(N, N);
    for (int i = 0; i < N; ++i)
        for (int j = i + 1; j < N; ++j) {
            const double d = gamma[i] - gamma[j];
            require(d != 0.0, "location_coefficients: coincident locations");
            c(i, j) = c(j, i) = scale / (N * d * d);
        }
    return c;
}

namespace {

std::vector<Vector> config_vectors(const ExperimentConfig& c, int N, int count, std::uint64_t seed) {
    if (c.vectors == VectorMode::explicit_list) {
        require(static_cast<int>(c.explicit_vectors.size()) >= count, "config: not enough explicit vectors");
        std::vector<Vector> v(c.explicit_vectors.begin(), c.explicit_vectors.begin() + count);
        for (auto& x : v) x.normalize();
        return v;
    }
    const bool sparse = c.ensemble.kind == EnsembleKind::p_regular || c.ensemble.kind == EnsembleKind::erdos_renyi;
    return make_test_vectors(N, count, c.vectors, seed, c.orthogonal_to_ones.value_or(sparse));
}

double coefficient_scale(const std::string& convention) {
    return convention_scale(convention == "ito" ? CoefficientConvention::ito : CoefficientConvention::printed);
}

// Classical locations of the semicircle (reference H = 0, t = 1).
std::vector<double> semicircle_locations(int N, const FreeConvolutionSettings& settings) {
    SpectralDecomposition ref;
    ref.eigenvalues = Vector::Zero(N);
    ref.frame = Matrix::Identity(N, N);
    return FreeConvolutionProfile(ref, 1.0, settings).classical_locations();
}

double max_sym_eigenvalue(const WeightedOperator& A, const Vector& pi) {
    Matrix S = pi_symmetrize(A.dense(), pi);
    S = 0.5 * (S + S.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(S, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().maxCoeff();
}

// ---------------------------------------------------------------- suites

void run_assumptions(const ExperimentConfig& c, ExperimentReport& r) {
    EnsembleSpec spec = c.ensemble;
    const SymmetricMatrix H = sample(spec);
    const SpectralDecomposition dec = eig_sym(H);
    const auto S = config_vectors(c, H.size(), c.particles, rng::derive(c.seed, 1));
    const AssumptionReport rep = verify_assumptions(dec, c.window, S, c.exponent);
    r.checks.push_back(check_at_least("im_m_lower", rep.im_m_inf, 1.0 / c.window.C));
    r.checks.push_back(check_at_most("im_m_upper", rep.im_m_sup, c.window.C));
    r.checks.push_back(check_at_most("green_form", rep.form_sup, rep.form_budget));
    Table t{"assumptions", documented_tables(c.kind)[0].columns, {}};
    t.add({"im_m_inf", format_number(rep.im_m_inf)});
    t.add({"im_m_sup", format_number(rep.im_m_sup)});
    t.add({"form_sup", format_number(rep.form_sup)});
    t.add({"form_budget", format_number(rep.form_budget)});
    if (c.t > 0.0) {
        FreeConvolutionProfile prof(dec, c.t, c.free_convolution);
        const auto& gamma = prof.classical_locations();
        t.add({"classical_min", format_number(gamma.front())});
        t.add({"classical_max", format_number(gamma.back())});
        r.checks.push_back(check_at_most("fixed_point_residual", prof.max_cached_residual(), c.free_convolution.tolerance));
    }
    r.tables.push_back(std::move(t));
}

void run_generator_validate(const ExperimentConfig& c, ExperimentReport& r) {
    const int N = c.space_sites();
    SymmetricMatrix H;
    if (!c.spectrum.empty()) {
        rng::Stream gen(rng::derive(c.seed, 2), rng::streams::haar);
        const Matrix Q = sample_haar(N, gen);
        const Vector d = Eigen::Map<const Vector>(c.spectrum.data(), N);
        H = SymmetricMatrix::from_upper(Q * d.asDiagonal() * Q.transpose());
    } else {
        H = sample(c.ensemble);
    }
    const auto V = config_vectors(c, N, c.particles, rng::derive(c.seed, 1));
    const GeneratorValidation g = validate_generator(H, V, c.delta, c.paths, c.substeps, rng::derive(c.seed, 3), c.threads);
    const bool ito = c.convention == "ito";
    Table t{"drift", documented_tables(c.kind)[0].columns, {}};
    for (Eigen::Index k = 0; k < g.fd.size(); ++k) {
        const std::string label = config_label(g.space.config(static_cast<std::size_t>(k)));
        const double target = ito ? g.drift_ito[k] : g.drift_printed[k];
        r.checks.push_back(check_close("drift[" + label + "]", g.fd[k], target, 3.0 * g.fd_std_error[k]));
        t.add({label, format_number(g.observable[k]), format_number(g.fd[k]), format_number(g.fd_std_error[k]),
               format_number(g.drift_ito[k]), format_number(g.drift_printed[k])});
    }
    r.tables.push_back(std::move(t));
}

void run_operator_suite(const ExperimentConfig& c, ExperimentReport& r) {
    const int N = c.space_sites();
    const int n = c.particles;
    const ConfigurationSpace space(N, n);
    const Vector& pi = space.pi();
    const CoefficientMatrix coeffs = random_coefficients(N, rng::derive(c.seed, 4));
    const WeightedOperator B = assemble_generator(space, coeffs);
    const auto ms = matchings(n);

    r.checks.push_back(check_at_most("reversibility", B.reversibility_defect(pi), 1e-12));
    r.checks.push_back(check_at_most("row_sums", B.generator_defect(), 1e-12));
    double kernel = 0.0;
    for (const auto& s : ms) kernel = std::max(kernel, B.apply(chi_indicator(space, s)).cwiseAbs().maxCoeff());
    r.checks.push_back(check_at_most("kernel_annihilation", kernel, 1e-12));

    Matrix S = pi_symmetrize(B.dense(), pi);
    S = 0.5 * (S + S.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(S, Eigen::EigenvaluesOnly);
    const Vector& ev = eig.eigenvalues();
    const double cut = 1e-9 * ev.cwiseAbs().maxCoeff();
    const auto nullity = std::count_if(ev.data(), ev.data() + ev.size(), [&](double v) { return std::abs(v) <= cut; });
    r.checks.push_back(check_close("nullspace_dimension", static_cast<double>(nullity),
                                   static_cast<double>(matching_count(n)), 0.0));
    r.checks.push_back(check_at_most("max_symmetrized_eigenvalue", ev.maxCoeff(), 1e-10));
    Table spec{"spectrum", documented_tables(c.kind)[0].columns, {}};
    for (Eigen::Index k = 0; k < ev.size(); ++k) spec.add({std::to_string(k), format_number(ev[k])});
    r.tables.push_back(std::move(spec));

    // Per-pair semidefiniteness and commutation with every conditional expectation.
    const auto partitions = all_partitions(n);
    std::vector<WeightedOperator::Sparse> cond;
    for (const auto& P : partitions) cond.push_back(conditional_expectation(space, P).sparse());
    double exchange_top = -INFINITY, difference_top = -INFINITY, commutator = 0.0;
    for (int i = 0; i < N; ++i)
        for (int j = i + 1; j < N; ++j) {
            const WeightedOperator E = assemble_pair_generator(space, i, j, GeneratorPart::exchange_only);
            const WeightedOperator Bij = assemble_pair_generator(space, i, j, GeneratorPart::full);
            exchange_top = std::max(exchange_top, max_sym_eigenvalue(E, pi));
            // B_ij = M_ij - E_ij, so E_ij - M_ij = -B_ij.
            difference_top = std::max(difference_top, max_sym_eigenvalue(Bij, pi));
            const auto b = Bij.sparse();
            for (const auto& Ep : cond) {
                const WeightedOperator::Sparse d = b * Ep - Ep * b;
                for (Eigen::Index k = 0; k < d.outerSize(); ++k)
                    for (WeightedOperator::Sparse::InnerIterator it(d, k); it; ++it)
                        commutator = std::max(commutator, std::abs(it.value()));
            }
        }
    r.checks.push_back(check_at_most("exchange_nonpositive", exchange_top, 1e-10));
    r.checks.push_back(check_at_most("exchange_dominates_move", difference_top, 1e-10));
    r.checks.push_back(check_at_most("conditional_expectation_commutes", commutator, 1e-12));

    // Dirichlet form against its pair-sum representation.
    rng::Stream gen(rng::derive(c.seed, 5), rng::streams::generic);
    double dirichlet_gap = 0.0, dirichlet_min = INFINITY;
    for (int trial = 0; trial < 20; ++trial) {
        Vector f(static_cast<Eigen::Index>(space.size()));
        for (Eigen::Index k = 0; k < f.size(); ++k) f[k] = gen.normal();
        const double D = dirichlet_form(space, B, f);
        dirichlet_gap = std::max(dirichlet_gap, std::abs(D - dirichlet_form_pairs(space, B, f)) / std::max(1.0, std::abs(D)));
        dirichlet_min = std::min(dirichlet_min, D);
    }
    r.checks.push_back(check_at_most("dirichlet_pair_form", dirichlet_gap, 1e-10));
    r.checks.push_back(check_at_least("dirichlet_nonnegative", dirichlet_min, 0.0));

    // L1 growth along the grid.
    std::vector<double> grid = c.s_grid;
    grid.insert(grid.begin(), 0.0);
    const auto sched = CoefficientSchedule::constant(coeffs, "random");
    const L1Growth growth = l1_growth(space, sched, grid);
    double worst = 0.0;
    Table l1{"l1", documented_tables(c.kind)[1].columns, {}};
    for (std::size_t k = 0; k < growth.s.size(); ++k) {
        worst = std::max(worst, growth.norm[k]);
        l1.add({format_number(growth.s[k]), format_number(growth.norm[k]), std::to_string(N), std::to_string(n), "",
                "", sched.tag()});
    }
    r.tables.push_back(std::move(l1));
    r.checks.push_back(check_at_most("l1_bound", worst, static_cast<double>(matching_count(n)) + 1e-9));
}

struct MixingScales {
    double K, T1, T2, ell1, ell2, t0, t1;
};

MixingScales mixing_scales(const ExperimentConfig& c) {
    const double N = c.space_sites();
    const double d = c.delta_exponent;
    const double n = c.particles;
    MixingScales s{};
    s.K = c.K.value_or(std::pow(N, 1.0 - d) * c.t);
    s.T2 = c.T2.value_or(s.K / N * std::pow(s.K / (std::pow(N, 1.0 + d) * c.t), 1.0 / (n + 2.0)));
    s.ell2 = c.ell2.value_or(std::sqrt(s.K * N * s.T2));
    s.ell1 = c.ell1.value_or(std::pow(s.K, 0.75));
    s.T1 = c.T1.value_or(std::sqrt(s.K) / N);
    s.t0 = c.t0.value_or(c.t - s.T2 - s.T1);
    s.t1 = c.t1.value_or(c.t - s.T2);
    return s;
}

void run_mixing(const ExperimentConfig& c, ExperimentReport& r) {
    const int N = c.space_sites();
    const int n = c.particles;
    require(c.t > 0.0, "mixing: t must be positive");
    const MixingScales sc = mixing_scales(c);
    r.checks.push_back(check_at_least("schedule_t0_positive", sc.t0, 0.0));
    r.checks.push_back(check_at_most("schedule_order", sc.t0, sc.t1));
    if (c.scale_chain) {
        const double margin = std::pow(static_cast<double>(N), c.omega_c);
        r.checks.push_back(check_at_least("scale_chain_lower", c.t, c.window.eta_star * margin));
        r.checks.push_back(check_at_most("scale_chain_upper", c.t, c.window.r / margin));
    }
    if (!(sc.t0 > 0.0 && sc.t0 <= sc.t1 && sc.t1 <= c.t)) return;

    EnsembleSpec spec = c.ensemble;
    spec.N = N;
    const SymmetricMatrix H = c.base == "zero" ? SymmetricMatrix(N) : sample(spec);
    FreeConvolutionProfile prof(eig_sym(H), c.t, c.free_convolution);
    const auto& gamma = prof.classical_locations();
    const auto base = CoefficientSchedule::constant(location_coefficients(gamma, coefficient_scale(c.convention)),
                                                    "flow-" + c.convention);
    std::vector<int> window;
    for (int i = 0; i < N; ++i)
        if (c.window.contains(gamma[i])) window.push_back(i);
    require(!window.empty(), "mixing: regular window contains no classical location");

    const ConfigurationSpace space(N, n);
    Configuration y = c.configurations.empty() ? Configuration(n, window[window.size() / 2]) : c.configurations.front();
    for (int s : y) require(std::binary_search(window.begin(), window.end(), s), "mixing: y must lie in the regular window");
    const auto V = config_vectors(c, N, n, rng::derive(c.seed, 1));

    const SymmetricMatrix Ht0 = perturb_gaussian(H, sc.t0, rng::derive(c.seed, 6));
    const Vector f = moment_observable(space, eig_sym(Ht0).frame, V);
    const int K = std::max(1, static_cast<int>(std::lround(sc.K)));
    const Vector h0 = averaging_coefficients(space, K, y).apply(f);

    const int ell1 = std::max(1, static_cast<int>(std::lround(sc.ell1)));
    const int ell2 = std::max(1, static_cast<int>(std::lround(sc.ell2)));
    const auto S1 = base.short_range(ell1, window);
    const auto S2 = base.lattice(ell2, window);
    const Vector h1 = propagate(space, S1, h0, sc.t0, sc.t1, 1).snapshots.back();
    const Vector h2 = propagate(space, S2, h1, sc.t1, c.t, 1).snapshots.back();

    const Vector& pi = space.pi();
    const auto ms = matchings(n);
    const WeightedOperator Kp = kernel_projection(space);
    auto kernel_dev = [&](const Vector& g) {
        double dev = 0.0;
        for (const auto& s : ms) {
            const Vector chi = chi_indicator(space, s);
            dev = std::max(dev, std::abs(chi.dot(pi.cwiseProduct(g)) - chi.dot(pi.cwiseProduct(h0))));
        }
        return dev;
    };
    const double scale = std::max(1.0, norm_l1(h0, pi));
    const double dev = std::max(kernel_dev(h1), kernel_dev(h2));
    r.checks.push_back(check_at_most("kernel_pairing_conserved", dev / scale, 1e-10));
    r.checks.push_back(check_at_most("l1_bound", norm_l1(h2, pi),
                                     static_cast<double>(matching_count(n)) * norm_l1(h0, pi) + 1e-9));
    const double before = norm_l2(h0 - Kp.apply(h0), pi);
    const double after = norm_l2(h2 - Kp.apply(h2), pi);
    r.checks.push_back(check_at_most("l2_relaxation", after, before * (1 + 1e-12)));

    const std::size_t yi = space.index(y);
    Table t{"stages", documented_tables(c.kind)[0].columns, {}};
    auto row = [&](const std::string& stage, double s, const Vector& g, int ell, const std::string& tag) {
        t.add({stage, format_number(s), format_number(norm_l1(g, pi)), format_number(norm_l2(g, pi)),
               format_number(kernel_dev(g)), format_number(g[static_cast<Eigen::Index>(yi)]), std::to_string(N),
               std::to_string(n), std::to_string(ell), "", tag});
    };
    row("initial", sc.t0, h0, 0, base.tag());
    row("short-range", sc.t1, h1, ell1, S1.tag());
    row("lattice", c.t, h2, ell2, S2.tag());
    t.add({"ansatz", format_number(c.t), "", "", "", format_number(ansatz_F(y, y, V, prof)), std::to_string(N),
           std::to_string(n), "", "", "ansatz"});
    r.tables.push_back(std::move(t));
}

void run_fsp(const ExperimentConfig& c, ExperimentReport& r) {
    const int N = c.space_sites();
    const int n = c.particles;
    const ConfigurationSpace space(N, n);
    std::vector<int> window = c.fsp_window;
    if (window.empty()) {
        window.resize(N);
        std::iota(window.begin(), window.end(), 0);
    }
    CoefficientSchedule base = c.coefficients == "inverse-square"
                                   ? CoefficientSchedule::inverse_square(N, c.upsilon)
                                   : CoefficientSchedule::constant(location_coefficients(
                                                                       semicircle_locations(N, c.free_convolution),
                                                                       coefficient_scale(c.convention)),
                                                                   "semicircle-" + c.convention);
    require(c.coefficients == "inverse-square" || c.coefficients == "semicircle",
            "fsp: coefficients must be semicircle or inverse-square");
    std::vector<Configuration> sources = c.configurations;
    if (sources.empty()) {
        require(space.size() <= 200, "fsp: list source configurations explicitly for spaces above 200 states");
        for (std::size_t k = 0; k < space.size(); ++k) sources.push_back(space.config(k));
    }
    const double span = static_cast<double>(c.ell) / N;
    double worst = 0.0;
    bool monotone = true;
    Table t{"profile", documented_tables(c.kind)[0].columns, {}};
    for (const auto& y : sources) {
        const FspProfile p = fsp_profile(space, y, c.ell, window, 0.0, span, base);
        worst = std::max(worst, p.max_beyond(4 * c.ell));
        monotone = monotone && p.envelope_monotone();
        for (const auto& e : p.entries)
            t.add({config_label(y), config_label(space.config(e.index)), std::to_string(e.distance),
                   format_number(e.value), std::to_string(N), std::to_string(n), std::to_string(c.ell),
                   base.rate() ? format_number(*base.rate()) : "", base.tag()});
    }
    r.checks.push_back(check_at_most("far_entries", worst, c.fsp_threshold));
    r.checks.push_back(check_close("envelope_monotone", monotone ? 1.0 : 0.0, 1.0, 0.0));
    r.tables.push_back(std::move(t));
}

void run_joint_normality(const ExperimentConfig& c, ExperimentReport& r) {
    EnsembleSpec spec = c.ensemble;
    const int N = spec.N;
    std::vector<int> idx = c.indices;
    if (idx.empty()) idx = {N / 2, N / 2 + 1};
    if (idx.size() == 1) idx.push_back(idx[0] + 1 < N ? idx[0] + 1 : idx[0] - 1);
    require(idx[0] != idx[1], "joint-normality: need two distinct indices for factorization");

    const int count = 2 * c.pairs;
    const auto V = config_vectors(c, N, count, rng::derive(c.seed, 1));
    std::optional<SymmetricMatrix> base;
    std::optional<FreeConvolutionProfile> prof;
    if (c.t > 0.0) {
        base = c.base == "zero" ? SymmetricMatrix(N) : sample(spec);
        prof.emplace(eig_sym(*base), c.t, c.free_convolution);
    }
    const OverlapSamples s =
        sample_overlaps(spec, base, c.t, c.trials, rng::derive(c.seed, 7), idx, V, c.threads);
    const std::size_t T = s.trials;
    const double dN = N;
    // <v, Lambda_i w> with Lambda = I at t = 0 (Wick target).
    auto cov = [&](int i, const Vector& v, const Vector& w) { return prof ? prof->covariance_form(i, v, w) : v.dot(w); };

    Table summary{"summary", documented_tables(c.kind)[0].columns, {}};
    Table trials{"trials", documented_tables(c.kind)[1].columns, {}};
    auto record = [&](const std::string& name, const std::vector<double>& values, double target) {
        const MomentEstimate e = summarize(values);
        summary.add({name, format_number(e.estimate), format_number(e.std_error), format_number(target)});
        for (std::size_t k = 0; k < values.size(); ++k) trials.add({name, std::to_string(k), format_number(values[k])});
        return e;
    };
    const int i = idx[0];
    for (int p = 0; p < c.pairs; ++p) {
        std::vector<double> vals(T);
        for (std::size_t k = 0; k < T; ++k) vals[k] = dN * s.overlap(k, 0, 2 * p) * s.overlap(k, 0, 2 * p + 1);
        const double target = cov(i, V[2 * p], V[2 * p + 1]);
        const auto e = record("mixed[" + std::to_string(p) + "]", vals, target);
        r.checks.push_back(check_close("mixed_moment[" + std::to_string(p) + "]", e.estimate, target, 3.0 * e.std_error));
    }
    std::vector<double> second(T), fourth(T), X(T), Y(T);
    for (std::size_t k = 0; k < T; ++k) {
        const double a = s.overlap(k, 0, 0);
        second[k] = dN * a * a;
        fourth[k] = dN * dN * a * a * a * a;
        X[k] = second[k];
        const double b = s.overlap(k, 1, 1);
        Y[k] = dN * b * b;
    }
    const double lam = cov(i, V[0], V[0]);
    const auto e2 = record("second", second, lam);
    r.checks.push_back(check_close("second_moment", e2.estimate, lam, 3.0 * e2.std_error));
    const auto e4 = record("fourth", fourth, 3.0 * lam * lam);
    r.checks.push_back(check_close("fourth_moment", e4.estimate, 3.0 * lam * lam,
                                   c.fourth_moment_tolerance * 3.0 * lam * lam));
    const double mx = std::accumulate(X.begin(), X.end(), 0.0) / T;
    const double my = std::accumulate(Y.begin(), Y.end(), 0.0) / T;
    std::vector<double> prod(T);
    for (std::size_t k = 0; k < T; ++k) prod[k] = (X[k] - mx) * (Y[k] - my);
    const auto ec = record("factorization", prod, 0.0);
    r.checks.push_back(check_close("factorization", ec.estimate, 0.0, 3.0 * ec.std_error));
    r.tables.push_back(std::move(summary));
    r.tables.push_back(std::move(trials));
}

void run_ansatz_compare(const ExperimentConfig& c, ExperimentReport& r) {
    const int N = c.space_sites();
    const int n = c.particles;
    const ConfigurationSpace space(N, n);
    const auto V = config_vectors(c, N, n, rng::derive(c.seed, 1));
    require(c.t > 0.0, "ansatz-compare: t must be positive");
    EnsembleSpec spec = c.ensemble;
    spec.N = N;
    const SymmetricMatrix H = c.base == "zero" ? SymmetricMatrix(N) : sample(spec);
    const FreeConvolutionProfile prof(eig_sym(H), c.t, c.free_convolution);
    const CovarianceForm id = identity_covariance();
    const CovarianceForm pc = profile_covariance(prof);

    double wick_gap = 0.0;
    bool negative = false;
    Table t{"ansatz", documented_tables(c.kind)[0].columns, {}};
    for (std::size_t k = 0; k < space.size(); ++k) {
        const Configuration x = space.config(k);
        const double a = ansatz_F(x, x, V, N, id);
        const double w = gaussian_wick_moment(x, V, N);
        const AnsatzEvaluation ap = ansatz_evaluate(x, x, V, N, pc);
        negative = negative || ap.negative_pair_factor;
        wick_gap = std::max(wick_gap, std::abs(a - w));
        t.add({config_label(x), format_number(a), format_number(w), format_number(ap.value)});
    }
    r.checks.push_back(check_at_most("identity_matches_wick", wick_gap, 1e-12));

    // Kernel membership and chi-expansion from the perspective of several y.
    std::vector<Configuration> ys = c.configurations;
    if (ys.empty()) {
        rng::Stream gen(rng::derive(c.seed, 8), rng::streams::generic);
        const std::size_t count = std::min<std::size_t>(space.size(), 20);
        for (std::size_t k = 0; k < count; ++k)
            ys.push_back(space.config(space.size() <= 20 ? k : gen.below(space.size())));
    }
    double annihilation = 0.0, expansion = 0.0, invariance = 0.0;
    std::vector<WeightedOperator> pair_ops;
    for (int i = 0; i < N; ++i)
        for (int j = i + 1; j < N; ++j) pair_ops.push_back(assemble_pair_generator(space, i, j));
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    std::vector<Vector> Vp(n);
    for (int a = 0; a < n; ++a) Vp[a] = V[perm[a]];
    for (const auto& y : ys) {
        const Vector F = ansatz_function(space, y, V, pc);
        for (const auto& Bij : pair_ops) annihilation = std::max(annihilation, Bij.apply(F).cwiseAbs().maxCoeff());
        const Vector rebuilt = chi_combination(space, ansatz_coefficients(y, V, N, pc));
        expansion = std::max(expansion, (rebuilt - F).cwiseAbs().maxCoeff());
        for (std::size_t k = 0; k < space.size(); ++k) {
            const Configuration x = space.config(k);
            invariance = std::max(invariance, std::abs(ansatz_F(act(perm, x), act(perm, y), Vp, N, pc) -
                                                       F[static_cast<Eigen::Index>(k)]));
        }
    }
    r.checks.push_back(check_at_most("kernel_membership", annihilation, 1e-12));
    r.checks.push_back(check_at_most("chi_expansion", expansion, 1e-12));
    r.checks.push_back(check_at_most("label_invariance", invariance, 1e-12));
    t.add({"negative_pair_factor", negative ? "1" : "0", "", ""});
    r.tables.push_back(std::move(t));
}

} // namespace

ExperimentReport run_experiment(const ExperimentConfig& config) {
    validate_config(config);
    ExperimentReport r;
    r.kind = config.kind;
    r.config = config;
    r.threads = config.threads;
    const auto start = std::chrono::steady_clock::now();
    switch (config.kind) {
    case ExperimentKind::assumptions: run_assumptions(config, r); break;
    case ExperimentKind::generator_validate: run_generator_validate(config, r); break;
    case ExperimentKind::operator_suite: run_operator_suite(config, r); break;
    case ExperimentKind::mixing: run_mixing(config, r); break;
    case ExperimentKind::fsp: run_fsp(config, r); break;
    case ExperimentKind::joint_normality: run_joint_normality(config, r); break;
    case ExperimentKind::ansatz_compare: run_ansatz_compare(config, r); break;
    }
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

// ---------------------------------------------------------------- emission

nlohmann::json report_summary(const ExperimentReport& report, bool timing) {
    nlohmann::json j;
    j["config"] = report.config;
    j["checks"] = nlohmann::json::array();
    for (const auto& c : report.checks)
        j["checks"].push_back({{"name", c.name}, {"value", c.value}, {"target", c.target}, {"tol", c.tol}, {"pass", c.pass}});
    j["runtime"] = {{"threads", report.threads}};
    if (timing) j["runtime"]["wall_seconds"] = report.wall_seconds;
    return j;
}

std::vector<std::string> emit_report(const ExperimentReport& report, ReportFormat format, const std::string& out_dir,
                                     bool timing) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw Error("cannot create output directory '" + out_dir + "': " + ec.message());
    std::vector<std::string> written;
    auto open = [&](const fs::path& path) {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw Error("cannot open '" + path.string() + "' for writing");
        written.push_back(path.string());
        return os;
    };
    const std::string kind = to_string(report.kind);
    if (format == ReportFormat::json) {
        auto os = open(fs::path(out_dir) / (kind + ".json"));
        os << report_summary(report, timing).dump(2) << '\n';
        if (!os) throw Error("write failed for '" + written.back() + "'");
    } else {
        for (const auto& t : report.tables) {
            auto os = open(fs::path(out_dir) / (kind + "_" + t.name + ".csv"));
            for (std::size_t k = 0; k < t.columns.size(); ++k) os << (k ? "," : "") << t.columns[k];
            os << '\n';
            for (const auto& row : t.rows) {
                for (std::size_t k = 0; k < row.size(); ++k) os << (k ? "," : "") << row[k];
                os << '\n';
            }
            if (!os) throw Error("write failed for '" + written.back() + "'");
        }
    }
    return written;
}

} // namespace cemf
