// Acceptance suite: one PASS/FAIL line per criterion.  Runtime budgets are
// part of each criterion and are checked against the measured wall clock.

#include "cemf/ansatz.hpp"
#include "cemf/configspace.hpp"
#include "cemf/ensembles.hpp"
#include "cemf/flow.hpp"
#include "cemf/harness.hpp"
#include "cemf/relaxation.hpp"
#include "cemf/rng.hpp"
#include "cemf/spectral.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <numbers>
#include <numeric>
#include <sstream>

using namespace cemf;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string name;
    double budget_seconds;
    std::function<Outcome()> run;
};

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

double max_sym_eigenvalue(const Matrix& A, const Vector& pi) {
    return Eigen::SelfAdjointEigenSolver<Matrix>(pi_symmetrize(A, pi), Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
}

// ---------------------------------------------------------------- 1

Outcome algebraic_suite() {
    bool ok = true;
    std::ostringstream detail;
    double rev = 0, kern = 0, top = -1e300, psd = -1e300, comm = 0;
    for (int n : {2, 4})
        for (int N : {6, 10}) {
            const ConfigurationSpace space(N, n);
            const Vector& pi = space.pi();
            const auto c = random_coefficients(N, static_cast<std::uint64_t>(100 * n + N));
            const auto B = assemble_generator(space, c);
            rev = std::max(rev, B.reversibility_defect(pi));
            for (const auto& m : matchings(n)) kern = std::max(kern, B.apply(chi_indicator(space, m)).cwiseAbs().maxCoeff());
            const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(pi_symmetrize(B.dense(), pi), Eigen::EigenvaluesOnly).eigenvalues();
            const double scale = ev.cwiseAbs().maxCoeff();
            long long null = 0;
            for (Eigen::Index k = 0; k < ev.size(); ++k) null += std::abs(ev[k]) <= 1e-9 * scale;
            top = std::max(top, ev.maxCoeff());
            if (null != matching_count(n)) {
                ok = false;
                detail << " nullspace(n=" << n << ",N=" << N << ")=" << null;
            }
            std::vector<WeightedOperator::Sparse> pairs;
            for (int i = 0; i < N; ++i)
                for (int j = i + 1; j < N; ++j) {
                    const Matrix E = assemble_pair_generator(space, i, j, GeneratorPart::exchange_only).dense();
                    const Matrix M = assemble_pair_generator(space, i, j, GeneratorPart::move_only).dense();
                    psd = std::max({psd, max_sym_eigenvalue(E, pi), max_sym_eigenvalue(M - E, pi)});
                    pairs.push_back(assemble_pair_generator(space, i, j).sparse());
                }
            if (n != 4) continue;
            for (const auto& P : all_partitions(4)) {
                const auto EP = conditional_expectation(space, P).sparse();
                for (const auto& Bij : pairs) {
                    const WeightedOperator::Sparse d = Bij * EP - EP * Bij;
                    for (Eigen::Index k = 0; k < d.outerSize(); ++k)
                        for (WeightedOperator::Sparse::InnerIterator it(d, k); it; ++it) comm = std::max(comm, std::abs(it.value()));
                }
            }
        }
    ok = ok && rev <= 1e-12 && kern <= 1e-12 && top <= 1e-10 && psd <= 1e-10 && comm <= 1e-12;
    return {ok, "reversibility " + fmt(rev) + ", B chi " + fmt(kern) + ", top eigenvalue " + fmt(top) +
                    ", pair forms " + fmt(psd) + ", commutators " + fmt(comm) + detail.str()};
}

// ---------------------------------------------------------------- 2

Outcome l1_bound() {
    const int N = 6;
    const ConfigurationSpace space(N, 4);
    double worst = 0;
    rng::Stream gen(2024, rng::streams::generic);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t x = gen.below(space.size());
        const double s = gen.uniform();
        Matrix a(N, N), b(N, N), phase(N, N);
        for (int i = 0; i < N; ++i)
            for (int j = i; j < N; ++j) {
                a(i, j) = a(j, i) = 0.1 + gen.uniform();
                b(i, j) = b(j, i) = a(i, j) * gen.uniform();
                phase(i, j) = phase(j, i) = 2 * std::numbers::pi * gen.uniform();
            }
        const double omega = 1 + 5 * gen.uniform();
        // Even trials use frozen coefficients, odd ones oscillate in time.
        const bool moving = trial % 2;
        const CoefficientSchedule sched(
            N,
            [=](double t, int i, int j) { return moving ? a(i, j) + b(i, j) * std::sin(omega * t + phase(i, j)) : a(i, j); },
            !moving, moving ? "oscillating" : "frozen");
        Vector delta = Vector::Zero(static_cast<Eigen::Index>(space.size()));
        delta[static_cast<Eigen::Index>(x)] = 1.0 / space.pi()[static_cast<Eigen::Index>(x)];
        const int steps = sched.time_constant() ? 8 : std::max(8, stable_steps(space, sched, 0.0, s));
        const auto res = propagate(space, sched, delta, 0.0, s, steps);
        for (double v : res.l1) worst = std::max(worst, v);
    }
    return {worst <= 3.0 + 1e-9, "max |U(0,s) delta_x|_1 = " + fmt(worst) + " (bound 3)"};
}

// ---------------------------------------------------------------- 3

Outcome haar_cross_check() {
    bool ok = true;
    double worst_z = 0, n2_gap = 0;
    std::size_t compared = 0;
    auto compare = [&](const ConfigurationSpace& space, const std::vector<std::pair<std::size_t, std::size_t>>& idx,
                       std::uint64_t seed) {
        const auto K = kernel_projection(space);
        std::vector<std::pair<Configuration, Configuration>> pairs;
        for (auto [x, y] : idx) pairs.emplace_back(space.config(x), space.config(y));
        const auto est = haar_kernel_entries(pairs, space.sites(), 1000000, seed);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const auto [x, y] = idx[k];
            const double norm = std::sqrt(space.pi()[static_cast<Eigen::Index>(x)] * space.pi()[static_cast<Eigen::Index>(y)]);
            const double exact = K.delta_pairing(x, y, space.pi());
            const double diff = std::abs(exact - est[k].mean / norm);
            const double se = est[k].std_error / norm;
            ok = ok && diff <= 4 * se;
            if (se > 0) worst_z = std::max(worst_z, diff / se);
            ++compared;
        }
        return K;
    };
    const ConfigurationSpace two(5, 2);
    std::vector<std::pair<std::size_t, std::size_t>> all;
    for (std::size_t x = 0; x < two.size(); ++x)
        for (std::size_t y = 0; y < two.size(); ++y) all.emplace_back(x, y);
    const auto K2 = compare(two, all, 31);
    for (auto [x, y] : all) n2_gap = std::max(n2_gap, std::abs(K2.delta_pairing(x, y, two.pi()) - 1.0 / 5));

    const ConfigurationSpace four(6, 4);
    rng::Stream gen(32, rng::streams::generic);
    std::vector<std::pair<std::size_t, std::size_t>> picks;
    while (picks.size() < 20) picks.emplace_back(gen.below(four.size()), gen.below(four.size()));
    compare(four, picks, 33);
    ok = ok && n2_gap <= 1e-12;
    return {ok, std::to_string(compared) + " entries, worst |exact - MC| = " + fmt(worst_z) +
                    " stderr; n=2 entries differ from 1/N by " + fmt(n2_gap)};
}

// ---------------------------------------------------------------- 4

Outcome generator_validation() {
    auto cfg = default_config(ExperimentKind::generator_validate);
    cfg.paths = 100000;
    cfg.delta = 1e-3;
    cfg.seed = 4;
    cfg.convention = "ito";
    const auto ito = run_experiment(cfg);
    cfg.convention = "printed";
    const auto printed = run_experiment(cfg);
    int failed = 0, printed_failed = 0;
    for (const auto& c : ito.checks) failed += !c.pass;
    for (const auto& c : printed.checks) printed_failed += !c.pass;
    return {failed == 0 && !ito.checks.empty(),
            std::to_string(ito.checks.size() - failed) + "/" + std::to_string(ito.checks.size()) +
                " drifts within 3 stderr with c = 1/(2N gap^2); info: c = 1/(N gap^2) fails " +
                std::to_string(printed_failed) + "/" + std::to_string(printed.checks.size())};
}

// ---------------------------------------------------------------- 5

double semicircle_cdf(double x) {
    x = std::clamp(x, -2.0, 2.0);
    return 0.5 + x * std::sqrt(4.0 - x * x) / (4.0 * std::numbers::pi) + std::asin(x / 2.0) / std::numbers::pi;
}

Outcome free_convolution() {
    const int N = 1000;
    FreeConvolutionProfile prof(eig_sym(SymmetricMatrix(N)), 1.0);
    const double center = std::abs(prof.m({0.0, 0.0}).m - Complex(0, 1));
    const auto& g = prof.classical_locations();
    double worst = 0;
    for (int i = 0; i < N; ++i) {
        double lo = -2, hi = 2;
        const double level = (i + 0.5) / N;
        for (int k = 0; k < 200; ++k) {
            const double mid = 0.5 * (lo + hi);
            (semicircle_cdf(mid) < level ? lo : hi) = mid;
        }
        worst = std::max(worst, std::abs(g[i] - 0.5 * (lo + hi)));
    }
    for (int k = 0; k <= 40; ++k) prof.m({-2.5 + 0.125 * k, k % 2 ? 0.0 : 1e-3});
    const double residual = prof.max_cached_residual();
    return {center <= 1e-8 && worst <= 1e-4 && residual <= 1e-12,
            "|m(0) - i| = " + fmt(center) + ", quantile error " + fmt(worst) + ", max residual " + fmt(residual)};
}

// ---------------------------------------------------------------- 6

Outcome poincare_scaling() {
    const int N = 160;
    const ConfigurationSpace space(N, 2);
    const auto sched = CoefficientSchedule::inverse_square(N);
    std::vector<double> ratios;
    std::string detail = "C/ell:";
    for (int ell : {8, 16, 32, 64}) {
        const auto res = poincare_constant(space, {80, 80}, ell, sched);
        ratios.push_back(res.constant / ell);
        detail += " " + fmt(ratios.back());
    }
    const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
    return {*lo > 0 && *hi <= 4 * *lo, detail + " (spread " + fmt(*hi / *lo) + ")"};
}

// ---------------------------------------------------------------- 7

Outcome ultracontractivity() {
    const ConfigurationSpace space(10, 4);
    std::vector<double> grid;
    for (double s = 0.02; s <= 0.5 + 1e-12; s += 0.02) grid.push_back(s);
    const auto curve = ultracontractivity_curve(space, CoefficientSchedule::inverse_square(10), 1.0, grid, 0.2, 0.5);
    return {curve.applicable && curve.fit.slope <= -0.7,
            "slope on [0.2, 0.5] = " + fmt(curve.fit.slope) + " over " + std::to_string(curve.fit.points) + " points"};
}

// ---------------------------------------------------------------- 8

Outcome finite_speed() {
    auto cfg = default_config(ExperimentKind::fsp);
    cfg.convention = "ito";
    const auto ito = run_experiment(cfg);
    cfg.convention = "printed";
    const auto printed = run_experiment(cfg);
    const Check* far = ito.find("far_entries");
    const Check* far_printed = printed.find("far_entries");
    return {far && far->pass && ito.all_pass(),
            "max entry at dist >= 16 over all sources = " + fmt(far->value) +
                " with c = 1/(2N gap^2); info: c = 1/(N gap^2) gives " + fmt(far_printed->value)};
}

// ---------------------------------------------------------------- 9, 11

Outcome moment_checks(ExperimentConfig cfg) {
    const auto report = run_experiment(cfg);
    std::string failed;
    std::string fourth;
    for (const auto& c : report.checks) {
        if (!c.pass) failed += " " + c.name;
        if (c.name == "fourth_moment") fourth = fmt(c.value);
    }
    return {report.all_pass(), std::to_string(report.checks.size()) + " checks, fourth moment " + fourth +
                                   (failed.empty() ? "" : "; failed:" + failed)};
}

Outcome wigner_normality() {
    auto cfg = default_config(ExperimentKind::joint_normality);
    cfg.ensemble.kind = EnsembleKind::generalized_wigner;
    cfg.ensemble.entry_law = EntryLaw::bernoulli;
    cfg.ensemble.N = 200;
    cfg.trials = 10000;
    cfg.pairs = 5;
    cfg.seed = 9;
    return moment_checks(cfg);
}

Outcome sparse_normality() {
    auto cfg = default_config(ExperimentKind::joint_normality);
    cfg.ensemble.kind = EnsembleKind::erdos_renyi;
    cfg.ensemble.N = 500;
    cfg.ensemble.p = 50;
    cfg.orthogonal_to_ones = true;
    cfg.trials = 10000;
    cfg.pairs = 5;
    cfg.seed = 11;
    return moment_checks(cfg);
}

// ---------------------------------------------------------------- 10

Outcome ansatz_consistency() {
    auto cfg = default_config(ExperimentKind::ansatz_compare);
    cfg.seed = 10;
    const auto report = run_experiment(cfg);
    const Check* wick = report.find("identity_matches_wick");
    const Check* kern = report.find("kernel_membership");
    return {report.all_pass(), "|F - Wick| = " + fmt(wick->value) + ", max |B_ij F| = " + fmt(kern->value)};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    int only = 0;
    app.add_option("--only", only, "Run a single criterion (1-11)");
    CLI11_PARSE(app, argc, argv);

    const std::vector<Criterion> criteria = {
        {1, "algebraic suite", 60, algebraic_suite},
        {2, "L1 bound", 120, l1_bound},
        {3, "Haar kernel cross-check", 300, haar_cross_check},
        {4, "generator validation against SEE", 600, generator_validation},
        {5, "free convolution", 60, free_convolution},
        {6, "Poincare scaling", 120, poincare_scaling},
        {7, "ultracontractivity", 180, ultracontractivity},
        {8, "finite speed of propagation", 120, finite_speed},
        {9, "joint normality, generalized Wigner", 1200, wigner_normality},
        {10, "ansatz consistency", 600, ansatz_consistency},
        {11, "joint normality, Erdos-Renyi", 1800, sparse_normality},
    };
    int failures = 0, ran = 0;
    for (const auto& c : criteria) {
        if (only && c.id != only) continue;
        ++ran;
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.run();
        } catch (const std::exception& e) {
            out = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = secs <= c.budget_seconds;
        const bool pass = out.pass && in_time;
        failures += !pass;
        std::cout << (pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << out.detail << " ["
                  << fmt(secs) << " s of " << c.budget_seconds << " s" << (in_time ? "" : ", over budget") << "]"
                  << std::endl;
    }
    if (!ran) {
        std::cerr << "no criterion with id " << only << '\n';
        return 2;
    }
    return failures ? 1 : 0;
}
