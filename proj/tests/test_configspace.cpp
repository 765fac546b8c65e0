#include "cemf/configspace.hpp"
#include "cemf/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

using namespace cemf;

namespace {

std::vector<Configuration> brute_force_space(int N, int n) {
    std::vector<Configuration> out;
    Configuration x(n, 0);
    while (true) {
        std::vector<int> occ(N, 0);
        for (int s : x) ++occ[s];
        if (std::all_of(occ.begin(), occ.end(), [](int k) { return k % 2 == 0; })) out.push_back(x);
        int a = n - 1;
        while (a >= 0 && x[a] == N - 1) x[a--] = 0;
        if (a < 0) break;
        ++x[a];
    }
    return out;
}

CoefficientMatrix random_coefficients(int N, std::uint64_t seed) {
    rng::Stream gen(seed, 7);
    CoefficientMatrix c = CoefficientMatrix::Zero(N, N);
    for (int i = 0; i < N; ++i)
        for (int j = i + 1; j < N; ++j) c(i, j) = c(j, i) = 0.1 + gen.uniform();
    return c;
}

// Generator built directly from the jump maps: for each unordered label pair,
// moves carry 2 c (n_j + 1) / (n_i - 1) and swaps carry -2 c.
Matrix oracle_generator(const ConfigurationSpace& space, const CoefficientMatrix& c) {
    const int N = space.sites(), n = space.particles();
    Matrix B = Matrix::Zero(static_cast<Eigen::Index>(space.size()), static_cast<Eigen::Index>(space.size()));
    for (std::size_t r = 0; r < space.size(); ++r) {
        const Configuration x = space.config(r);
        const auto occ = occupancy(x, N);
        for (int a = 0; a < n; ++a)
            for (int b = a + 1; b < n; ++b)
                for (int i = 0; i < N; ++i)
                    for (int j = 0; j < N; ++j) {
                        if (i == j) continue;
                        const auto moved = jump(x, JumpKind::move, a, b, i, j);
                        if (moved != x) {
                            const double w = 2 * c(i, j) * (occ[j] + 1.0) / (occ[i] - 1.0);
                            B(r, space.index(moved)) += w;
                            B(r, r) -= w;
                        }
                        const auto swapped = jump(x, JumpKind::swap, a, b, i, j);
                        if (swapped != x) {
                            B(r, space.index(swapped)) -= 2 * c(i, j);
                            B(r, r) += 2 * c(i, j);
                        }
                    }
    }
    return B;
}

double max_sym_eigenvalue(const Matrix& A, const Vector& pi) {
    return Eigen::SelfAdjointEigenSolver<Matrix>(pi_symmetrize(A, pi), Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
}

} // namespace

TEST_CASE("double factorial conventions") {
    CHECK(occupancy_weight(0) == 1);
    CHECK(occupancy_weight(2) == 1);
    CHECK(occupancy_weight(4) == 3);
    CHECK(occupancy_weight(6) == 15);
    CHECK(matching_count(2) == 1);
    CHECK(matching_count(4) == 3);
    CHECK(matching_count(6) == 15);
    CHECK_THROWS_AS(occupancy_weight(3), Error);
}

TEST_CASE("enumeration matches brute force") {
    const ConfigurationSpace two(2, 2);
    REQUIRE(two.size() == 2);
    CHECK(two.config(0) == Configuration{0, 0});
    CHECK(two.config(1) == Configuration{1, 1});
    CHECK(two.pi()[0] == 1.0);

    for (auto [N, n] : {std::pair{10, 4}, std::pair{5, 2}, std::pair{4, 6}, std::pair{6, 4}}) {
        const ConfigurationSpace space(N, n);
        const auto brute = brute_force_space(N, n);
        CHECK(space.size() == brute.size());
        CHECK(count_even_configurations(N, n) == brute.size());
        std::set<Configuration> seen;
        for (std::size_t k = 0; k < space.size(); ++k) {
            const auto x = space.config(k);
            CHECK(space.index(x) == k);
            CHECK(space.pi()[static_cast<Eigen::Index>(k)] == pi_weight(x, N));
            seen.insert(x);
        }
        CHECK(seen == std::set<Configuration>(brute.begin(), brute.end()));
    }
    CHECK(ConfigurationSpace(10, 4).size() == 280);
    CHECK(pi_weight({3, 3, 3, 3}, 10) == 9.0);
    CHECK_THROWS_AS(ConfigurationSpace(10, 3), Error);
    CHECK_THROWS_AS(ConfigurationSpace(400, 6), Error); // size guard
    CHECK(count_even_configurations(400, 6) > kMaxSpaceSize);
    CHECK_THROWS_AS(ConfigurationSpace(5, 2).index({0, 1}), Error);
}

TEST_CASE("jump semantics") {
    const int i = 2, j = 5;
    CHECK(jump({i, i, j, j}, JumpKind::move, 0, 1, i, j) == Configuration{j, j, j, j});
    CHECK(jump({i, i, j, j}, JumpKind::swap, 0, 2, i, j) == Configuration{j, i, i, j});
    CHECK(jump({i, j, j, i}, JumpKind::move, 0, 1, i, j) == Configuration{i, j, j, i});
    CHECK(jump({i, i, j, j}, JumpKind::swap, 0, 1, i, j) == Configuration{i, i, j, j});
    CHECK_THROWS_AS(jump({i, i}, JumpKind::move, 0, 0, i, j), Error);
}

TEST_CASE("two-site generator") {
    const ConfigurationSpace space(2, 2);
    CoefficientMatrix c(2, 2);
    c << 0, 1, 1, 0;
    const Matrix B = assemble_generator(space, c).dense();
    Matrix expected(2, 2);
    expected << -2, 2, 2, -2;
    CHECK((B - expected).cwiseAbs().maxCoeff() == 0.0);
    CHECK(assemble_generator(space, c).apply(Vector::Ones(2)).cwiseAbs().maxCoeff() == 0.0);
    c(0, 1) = -1;
    c(1, 0) = -1;
    CHECK_THROWS_AS(assemble_generator(space, c), Error);
}

TEST_CASE("assembled generator matches the jump-map oracle") {
    for (auto [N, n] : {std::pair{5, 4}, std::pair{6, 2}, std::pair{3, 6}}) {
        const ConfigurationSpace space(N, n);
        const auto c = random_coefficients(N, static_cast<std::uint64_t>(N * 10 + n));
        const Matrix B = assemble_generator(space, c).dense();
        CHECK((B - oracle_generator(space, c)).cwiseAbs().maxCoeff() <= 1e-13);
        const Matrix M = assemble_generator(space, c, GeneratorPart::move_only).dense();
        const Matrix E = assemble_generator(space, c, GeneratorPart::exchange_only).dense();
        CHECK((B - (M - E)).cwiseAbs().maxCoeff() <= 1e-13);
    }
}

TEST_CASE("exchange part on a doubly occupied pair") {
    const ConfigurationSpace space(4, 4);
    const int i = 1, j = 3;
    const auto E = assemble_pair_generator(space, i, j, GeneratorPart::exchange_only).dense();
    const auto r = static_cast<Eigen::Index>(space.index({i, i, j, j}));
    int active = 0;
    for (Eigen::Index col = 0; col < E.cols(); ++col) {
        if (col == r || E(r, col) == 0.0) continue;
        ++active;
        CHECK(E(r, col) == 2.0);
    }
    CHECK(active == 4);
    CHECK(E(r, r) == -8.0);
}

TEST_CASE("generator invariants for random coefficients") {
    for (auto [N, n] : {std::pair{6, 2}, std::pair{6, 4}, std::pair{5, 6}}) {
        const ConfigurationSpace space(N, n);
        const auto c = random_coefficients(N, 3);
        const auto B = assemble_generator(space, c);
        const Vector& pi = space.pi();
        CHECK(B.reversibility_defect(pi) <= 1e-12);
        CHECK(B.generator_defect() <= 1e-12);
        CHECK(max_sym_eigenvalue(B.dense(), pi) <= 1e-10);
        for (const auto& sigma : matchings(n)) CHECK(B.apply(chi_indicator(space, sigma)).cwiseAbs().maxCoeff() <= 1e-12);

        const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(pi_symmetrize(B.dense(), pi)).eigenvalues();
        int null = 0;
        for (Eigen::Index k = 0; k < ev.size(); ++k) null += std::abs(ev[k]) <= 1e-9 * ev.cwiseAbs().maxCoeff();
        CHECK(null == matching_count(n));

        for (int a = 0; a < N; ++a)
            for (int b = a + 1; b < N; ++b) {
                const Matrix E = assemble_pair_generator(space, a, b, GeneratorPart::exchange_only).dense();
                const Matrix M = assemble_pair_generator(space, a, b, GeneratorPart::move_only).dense();
                CHECK(max_sym_eigenvalue(E, pi) <= 1e-10);
                CHECK(max_sym_eigenvalue(M - E, pi) <= 1e-10);
            }
    }
}

TEST_CASE("matchings and stabilizers") {
    CHECK(matchings(4).size() == 3);
    const auto stab = matchings(4, Configuration{1, 1, 2, 2});
    REQUIRE(stab.size() == 1);
    CHECK(stab[0].partner == std::vector<int>{1, 0, 3, 2});
    const ConfigurationSpace space(6, 4);
    for (std::size_t k = 0; k < space.size(); ++k) {
        const auto x = space.config(k);
        CHECK(static_cast<double>(matchings(4, x).size()) == std::sqrt(space.pi()[static_cast<Eigen::Index>(k)]));
    }
    for (const auto& m : matchings(6)) CHECK_NOTHROW(m.validate());
    CHECK_THROWS_AS((PerfectMatching{{0, 1}}.validate()), Error);
    CHECK_THROWS_AS((PerfectMatching{{1, 2, 0}}.validate()), Error);
}

TEST_CASE("stratum indicators") {
    const ConfigurationSpace space(5, 4);
    const auto ms = matchings(4);
    const auto find = [&](std::vector<int> p) {
        return *std::find_if(ms.begin(), ms.end(), [&](const PerfectMatching& m) { return m.partner == p; });
    };
    const auto k1 = static_cast<Eigen::Index>(space.index({1, 1, 3, 3}));
    CHECK(chi_indicator(space, find({1, 0, 3, 2}))[k1] == 1.0);
    CHECK(chi_indicator(space, find({2, 3, 0, 1}))[k1] == 0.0);
    const auto k4 = static_cast<Eigen::Index>(space.index({2, 2, 2, 2}));
    for (const auto& m : ms) CHECK(chi_indicator(space, m)[k4] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("kernel projection") {
    for (int N : {3, 5, 8}) {
        const ConfigurationSpace space(N, 2);
        const auto K = kernel_projection(space);
        for (std::size_t x = 0; x < space.size(); ++x)
            for (std::size_t y = 0; y < space.size(); ++y) CHECK(std::abs(K.delta_pairing(x, y, space.pi()) - 1.0 / N) <= 1e-12);
    }
    const ConfigurationSpace space(6, 4);
    const auto K = kernel_projection(space);
    const Matrix Kd = K.dense();
    CHECK((Kd * Kd - Kd).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(K.reversibility_defect(space.pi()) <= 1e-12);
    for (const auto& m : matchings(4)) {
        const Vector chi = chi_indicator(space, m);
        CHECK((K.apply(chi) - chi).cwiseAbs().maxCoeff() <= 1e-12);
    }
    CHECK((K.apply(Vector::Ones(static_cast<Eigen::Index>(space.size()))) - Vector::Ones(static_cast<Eigen::Index>(space.size()))).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("kernel projection is invariant under site permutations") {
    const ConfigurationSpace space(6, 4);
    const Matrix K = kernel_projection(space).dense();
    const Vector& pi = space.pi();
    rng::Stream gen(8, 8);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<int> tau(6);
        std::iota(tau.begin(), tau.end(), 0);
        std::shuffle(tau.begin(), tau.end(), gen);
        const auto x = static_cast<Eigen::Index>(gen.below(space.size()));
        Configuration tx = space.config(static_cast<std::size_t>(x));
        for (int& s : tx) s = tau[s];
        const auto y = static_cast<Eigen::Index>(space.index(tx));
        CHECK((K.col(x) / pi[x] - K.col(y) / pi[y]).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("kernel entries scale like N^(-n/2)") {
    std::vector<double> scaled;
    for (int N : {4, 6, 8, 10}) {
        const ConfigurationSpace space(N, 4);
        const auto K = kernel_projection(space);
        double worst = 0;
        for (std::size_t x = 0; x < space.size(); ++x)
            for (std::size_t y = 0; y < space.size(); ++y) worst = std::max(worst, std::abs(K.delta_pairing(x, y, space.pi())));
        scaled.push_back(worst * N * N);
    }
    const auto [lo, hi] = std::minmax_element(scaled.begin(), scaled.end());
    CHECK(*hi <= 3.0 * *lo);
}

TEST_CASE("Haar Monte Carlo agrees with the exact kernel") {
    const int N = 4;
    const ConfigurationSpace space(N, 2);
    const auto K = kernel_projection(space);
    std::vector<std::pair<Configuration, Configuration>> pairs{{{0, 0}, {1, 1}}, {{0, 0}, {0, 0}}, {{2, 2}, {3, 3}}};
    const auto est = haar_kernel_entries(pairs, N, 200000, 4);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto x = space.index(pairs[k].first), y = space.index(pairs[k].second);
        const double exact = K.delta_pairing(x, y, space.pi()) * std::sqrt(space.pi()[x] * space.pi()[y]);
        CHECK(std::abs(est[k].mean - exact) <= 4 * est[k].std_error);
    }

    const auto four = haar_kernel_entry({1, 1, 1, 1}, {1, 1, 1, 1}, N, 200000, 5);
    CHECK(std::abs(four.mean - 3.0 / (N * (N + 2.0))) <= 4 * four.std_error);

    rng::Stream gen(3, 3);
    const Matrix O = sample_haar(7, gen);
    CHECK((O.transpose() * O - Matrix::Identity(7, 7)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("partitions and refinement") {
    CHECK(all_partitions(4).size() == 15);
    CHECK(all_partitions(3).size() == 5);
    const Partition fine{{{0}, {1}, {2}, {3}}};
    const Partition coarse{{{0, 1, 2, 3}}};
    const Partition mid{{{0, 1}, {2, 3}}};
    CHECK(refines(fine, mid, 4));
    CHECK(refines(mid, coarse, 4));
    CHECK_FALSE(refines(coarse, mid, 4));
    CHECK(position_partition({4, 4, 1, 1}).labels(4) == mid.labels(4));
    CHECK_THROWS_AS((Partition{{{0, 1}, {1, 2}}}.validate(3)), Error);
}

TEST_CASE("conditional expectations") {
    const ConfigurationSpace space(5, 4);
    const auto id = conditional_expectation(space, Partition{{{0}, {1}, {2}, {3}}});
    CHECK((id.dense() - Matrix::Identity(static_cast<Eigen::Index>(space.size()), static_cast<Eigen::Index>(space.size()))).cwiseAbs().maxCoeff() == 0.0);

    // Coarsest partition: average over all 24 label permutations, computed directly.
    const auto full = conditional_expectation(space, Partition{{{0, 1, 2, 3}}});
    rng::Stream gen(2, 2);
    Vector f(static_cast<Eigen::Index>(space.size()));
    for (Eigen::Index k = 0; k < f.size(); ++k) f[k] = gen.normal();
    const Vector Ef = full.apply(f);
    for (std::size_t k = 0; k < space.size(); ++k) {
        auto x = space.config(k);
        std::vector<int> perm{0, 1, 2, 3};
        double sum = 0;
        do {
            sum += f[static_cast<Eigen::Index>(space.index(act(perm, x)))];
        } while (std::next_permutation(perm.begin(), perm.end()));
        CHECK(Ef[static_cast<Eigen::Index>(k)] == doctest::Approx(sum / 24).epsilon(1e-13));
    }

    const auto c = random_coefficients(5, 4);
    for (const auto& P : all_partitions(4)) {
        const auto EP = conditional_expectation(space, P);
        const Matrix Ed = EP.dense();
        CHECK((Ed * Ed - Ed).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(EP.reversibility_defect(space.pi()) <= 1e-12);
        for (int i = 0; i < 5; ++i)
            for (int j = i + 1; j < 5; ++j) {
                const Matrix Bij = assemble_pair_generator(space, i, j).dense();
                CHECK((Bij * Ed - Ed * Bij).cwiseAbs().maxCoeff() <= 1e-12);
            }
    }
}

TEST_CASE("local projection") {
    {
        // n = 2: pi-weighted mean over the neighbourhood.
        const ConfigurationSpace space(12, 2);
        const Configuration y{5, 5};
        const auto P = local_projection(space, y, 2);
        const auto nb = local_neighborhood(space, y, 2);
        CHECK(nb.members.size() == 5);
        rng::Stream gen(1, 1);
        Vector f(static_cast<Eigen::Index>(space.size()));
        for (Eigen::Index k = 0; k < f.size(); ++k) f[k] = gen.normal();
        double num = 0, den = 0;
        for (auto m : nb.members) {
            num += space.pi()[static_cast<Eigen::Index>(m)] * f[static_cast<Eigen::Index>(m)];
            den += space.pi()[static_cast<Eigen::Index>(m)];
        }
        const Vector Pf = P.apply(f);
        for (auto m : nb.members) CHECK(Pf[static_cast<Eigen::Index>(m)] == doctest::Approx(num / den).epsilon(1e-13));
        const auto outside = static_cast<Eigen::Index>(space.index({0, 0}));
        CHECK(Pf[outside] == 0.0);
        CHECK(local_neighborhood(space, y, 0).members.size() == 1);
    }
    // A single class holding every particle mixes position partitions, so
    // coarse configurations average over finer ones but not conversely.
    const ConfigurationSpace space(8, 4);
    const Configuration y{2, 2, 2, 2};
    const auto P = local_projection(space, y, 1);
    const auto nb = local_neighborhood(space, y, 1);
    for (const auto& m : matchings(4)) {
        Vector chi = chi_indicator(space, m);
        for (std::size_t k = 0; k < space.size(); ++k)
            if (!nb.contains[k]) chi[static_cast<Eigen::Index>(k)] = 0;
        CHECK((P.apply(chi) - chi).cwiseAbs().maxCoeff() <= 1e-12);
    }
    CHECK(P.reversibility_defect(space.pi()) > 1e-6);
}

TEST_CASE("local projection annihilates the complement of the kernel at global range") {
    std::vector<double> scaled;
    for (int N : {4, 6, 8, 10, 12}) {
        const ConfigurationSpace space(N, 4);
        const Matrix P = local_projection(space, {0, 0, 0, 0}, N).dense();
        const Matrix K = kernel_projection(space).dense();
        const Matrix A = pi_symmetrize(P * (Matrix::Identity(K.rows(), K.cols()) - K), space.pi());
        const double norm = Eigen::JacobiSVD<Matrix>(A).singularValues()[0];
        scaled.push_back(norm * std::sqrt(N));
    }
    const auto [lo, hi] = std::minmax_element(scaled.begin(), scaled.end());
    MESSAGE("sqrt(N) |P(1-K)|: " << *lo << " .. " << *hi);
    CHECK(*hi <= 4.0 * std::max(*lo, 1e-12));
}

TEST_CASE("averaging coefficients and distances") {
    CHECK(averaging_value(4, 3) == 1.0);
    CHECK(averaging_value(4, 5) == 0.5);
    CHECK(averaging_value(4, 8) == 0.0);
    CHECK(averaging_value(4, 100) == 0.0);
    for (int d = 0; d < 20; ++d) {
        int active = 0;
        for (int alpha = 5; alpha <= 9; ++alpha) active += d < alpha;
        CHECK(averaging_value(5, d) == doctest::Approx(active / 5.0));
    }
    const ConfigurationSpace space(10, 2);
    const auto Av = averaging_coefficients(space, 3, {4, 4});
    CHECK(Av.entry(space.index({4, 4}), space.index({4, 4})) == 1.0);
    CHECK(Av.entry(space.index({2, 2}), space.index({2, 2})) == doctest::Approx(1.0 / 3.0));
    CHECK(Av.entry(space.index({0, 0}), space.index({0, 0})) == 0.0);

    std::vector<int> window(10);
    std::iota(window.begin(), window.end(), 0);
    CHECK(config_distance({3, 3}, {3, 3}, window) == 0);
    CHECK(config_distance({3, 3}, {7, 7}, window) == 4);
    CHECK(config_distance({7, 7}, {3, 3}, window) == 4);
    CHECK(config_distance({3, 3}, {7, 7}, {8, 9}) == 0);
    rng::Stream gen(6, 6);
    for (int k = 0; k < 200; ++k) {
        Configuration a(4), b(4), c(4);
        for (int s = 0; s < 4; ++s) {
            a[s] = static_cast<int>(gen.below(10));
            b[s] = static_cast<int>(gen.below(10));
            c[s] = static_cast<int>(gen.below(10));
        }
        CHECK(config_distance(a, c, window) <= config_distance(a, b, window) + config_distance(b, c, window));
    }
}

TEST_CASE("colorblind map") {
    const ConfigurationSpace space(5, 4);
    const ColorblindMap map(space);
    const auto k = space.index({1, 1, 3, 3});
    CHECK(map.image(map.image_of(k)) == std::vector<int>{0, 1, 0, 1, 0});
    const Vector c = Vector::Constant(static_cast<Eigen::Index>(space.size()), 2.5);
    CHECK((map.pushforward(c).array() - 2.5).abs().maxCoeff() <= 1e-14);
    CHECK((colorblind_transport(space, TransportDirection::pushforward, c).array() - 2.5).abs().maxCoeff() <= 1e-14);

    const Matrix Q = map.projection().dense();
    CHECK((Q * Q - Q).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(map.projection().reversibility_defect(space.pi()) <= 1e-12);
    const Matrix B = assemble_generator(space, random_coefficients(5, 9)).dense();
    CHECK((B * Q - Q * B).cwiseAbs().maxCoeff() <= 1e-12);

    rng::Stream gen(2, 5);
    Vector g(static_cast<Eigen::Index>(map.image_size()));
    for (Eigen::Index i = 0; i < g.size(); ++i) g[i] = gen.normal();
    CHECK((map.pushforward(map.pullback(g)) - g).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("operator export formats") {
    const ConfigurationSpace space(2, 2);
    std::ostringstream csv, trip;
    space.write_csv(csv);
    CHECK(csv.str().find("1,1,1,1") != std::string::npos);
    assemble_pair_generator(space, 0, 1).write_triplets(trip);
    CHECK(trip.str() == "0 0 -2\n0 1 2\n1 0 2\n1 1 -2\n");
}
