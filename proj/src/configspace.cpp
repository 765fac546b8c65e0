#include "cemf/configspace.hpp"

#include "cemf/parallel.hpp"
#include "cemf/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <map>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

namespace cemf {

long long occupancy_weight(int k) {
    require(k >= 0 && k % 2 == 0, "occupancy_weight: occupancy must be even");
    long long w = 1;
    for (int odd = k - 1; odd > 1; odd -= 2) w *= odd;
    return w;
}

long long matching_count(int n) {
    require(n >= 0 && n % 2 == 0, "matching_count: n must be even");
    return occupancy_weight(n);
}

std::vector<int> occupancy(const Configuration& x, int N) {
    std::vector<int> occ(N, 0);
    for (int site : x) {
        require(site >= 0 && site < N, "configuration site out of range");
        ++occ[site];
    }
    return occ;
}

bool is_even(const Configuration& x, int N) {
    for (int c : occupancy(x, N))
        if (c % 2) return false;
    return true;
}

double pi_weight(const Configuration& x, int N) {
    double w = 1.0;
    for (int c : occupancy(x, N)) {
        const double d = static_cast<double>(occupancy_weight(c));
        w *= d * d;
    }
    return w;
}

namespace {

long double binomial(int n, int k) {
    if (k < 0 || k > n) return 0.0L;
    long double r = 1.0L;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

// Set partitions of an m-element set into k blocks of even size.
long double even_partitions(int m, int k) {
    if (m == 0) return k == 0 ? 1.0L : 0.0L;
    if (k <= 0) return 0.0L;
    long double total = 0.0L;
    for (int size = 2; size <= m; size += 2) total += binomial(m - 1, size - 1) * even_partitions(m - size, k - 1);
    return total;
}

} // namespace

std::uint64_t count_even_configurations(int N, int n) {
    long double total = 0.0L;
    for (int k = 1; k <= n / 2; ++k) {
        long double falling = 1.0L;
        for (int r = 0; r < k; ++r) falling *= (N - r);
        if (falling <= 0) continue;
        total += even_partitions(n, k) * falling;
    }
    if (n == 0) total = 1.0L;
    if (total > 1.8e19L) return UINT64_MAX;
    return static_cast<std::uint64_t>(std::llround(static_cast<double>(total)));
}

ConfigurationSpace::ConfigurationSpace(int N, int n) : N_(N), n_(n) {
    require(N >= 1, "configuration space needs N >= 1");
    require(n >= 2 && n % 2 == 0, "configuration space needs an even particle number n >= 2");
    require(n * std::log2(static_cast<double>(N) + 1.0) < 63.0, "configuration space key overflow");
    const std::uint64_t expected = count_even_configurations(N, n);
    if (expected > kMaxSpaceSize) {
        std::ostringstream os;
        os << "configuration space too large: |Lambda^" << n << "| over " << N << " sites is " << expected
           << " > " << kMaxSpaceSize;
        throw Error(os.str());
    }
    flat_.reserve(expected * n);
    std::vector<double> weights;
    weights.reserve(expected);

    Configuration x(n, 0);
    std::vector<int> occ(N, 0);
    int odd = 0;
    // Depth-first in lexicographic order, pruning branches that cannot pair up
    // the odd sites with the labels left.
    auto recurse = [&](auto&& self, int a) -> void {
        if (a == n) {
            if (odd != 0) return;
            flat_.insert(flat_.end(), x.begin(), x.end());
            double w = 1.0;
            for (int c : occ)
                if (c > 2) {
                    const double d = static_cast<double>(occupancy_weight(c));
                    w *= d * d;
                }
            weights.push_back(w);
            return;
        }
        const int remaining = n - a - 1;
        for (int site = 0; site < N; ++site) {
            const int delta = (occ[site] % 2) ? -1 : 1;
            if (odd + delta > remaining) continue;
            x[a] = site;
            ++occ[site];
            odd += delta;
            self(self, a + 1);
            odd -= delta;
            --occ[site];
        }
    };
    recurse(recurse, 0);
    pi_ = Eigen::Map<Vector>(weights.data(), static_cast<Eigen::Index>(weights.size()));
    index_.reserve(weights.size());
    for (std::size_t k = 0; k < weights.size(); ++k) index_.emplace(key(data(k)), k);
}

std::uint64_t ConfigurationSpace::key(const int* x) const {
    std::uint64_t k = 0;
    for (int a = 0; a < n_; ++a) k = k * static_cast<std::uint64_t>(N_) + static_cast<std::uint64_t>(x[a]);
    return k;
}

Configuration ConfigurationSpace::config(std::size_t idx) const {
    require(idx < size(), "configuration index out of range");
    return Configuration(data(idx), data(idx) + n_);
}

std::optional<std::size_t> ConfigurationSpace::find(const Configuration& x) const {
    if (static_cast<int>(x.size()) != n_) return std::nullopt;
    for (int s : x)
        if (s < 0 || s >= N_) return std::nullopt;
    auto it = index_.find(key(x.data()));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::size_t ConfigurationSpace::index(const Configuration& x) const {
    auto idx = find(x);
    if (!idx) throw Error("configuration is not an even configuration of this space");
    return *idx;
}

void ConfigurationSpace::write_csv(std::ostream& os) const {
    os << "index";
    for (int a = 0; a < n_; ++a) os << ",x" << a;
    os << ",pi\n";
    for (std::size_t k = 0; k < size(); ++k) {
        os << k;
        for (int a = 0; a < n_; ++a) os << ',' << data(k)[a];
        os << ',' << pi_[static_cast<Eigen::Index>(k)] << '\n';
    }
}

ConfigurationSpace enumerate_space(int N, int n) { return ConfigurationSpace(N, n); }

Configuration jump(const Configuration& x, JumpKind kind, int a, int b, int i, int j) {
    require(a != b, "jump requires distinct labels");
    const int n = static_cast<int>(x.size());
    require(a >= 0 && a < n && b >= 0 && b < n, "jump label out of range");
    Configuration y = x;
    if (kind == JumpKind::move) {
        if (x[a] == i && x[b] == i) y[a] = y[b] = j;
    } else {
        if (x[a] == i && x[b] == j) std::swap(y[a], y[b]);
    }
    return y;
}

// ---------------------------------------------------------------- operators

WeightedOperator::WeightedOperator(Matrix dense, Flags flags) : data_(std::move(dense)), flags_(flags) {
    const auto& m = std::get<Matrix>(data_);
    require(m.rows() == m.cols(), "operator must be square");
}

WeightedOperator::WeightedOperator(Sparse sparse, Flags flags) : data_(std::move(sparse)), flags_(flags) {
    auto& m = std::get<Sparse>(data_);
    require(m.rows() == m.cols(), "operator must be square");
    m.makeCompressed();
}

WeightedOperator WeightedOperator::from_triplets(std::size_t size, const std::vector<Eigen::Triplet<double>>& t,
                                                 Flags flags) {
    const auto n = static_cast<Eigen::Index>(size);
    if (size <= kDenseLimit) {
        Matrix m = Matrix::Zero(n, n);
        for (const auto& e : t) m(e.row(), e.col()) += e.value();
        return WeightedOperator(std::move(m), flags);
    }
    Sparse s(n, n);
    s.setFromTriplets(t.begin(), t.end());
    return WeightedOperator(std::move(s), flags);
}

std::size_t WeightedOperator::size() const {
    return std::visit([](const auto& m) { return static_cast<std::size_t>(m.rows()); }, data_);
}

Vector WeightedOperator::apply(const Vector& f) const {
    require(static_cast<std::size_t>(f.size()) == size(), "operator/function size mismatch");
    return std::visit([&](const auto& m) -> Vector { return m * f; }, data_);
}

Matrix WeightedOperator::dense() const {
    if (is_dense()) return std::get<Matrix>(data_);
    return Matrix(std::get<Sparse>(data_));
}

WeightedOperator::Sparse WeightedOperator::sparse() const {
    if (!is_dense()) return std::get<Sparse>(data_);
    return std::get<Matrix>(data_).sparseView();
}

double WeightedOperator::entry(std::size_t r, std::size_t c) const {
    if (is_dense()) return std::get<Matrix>(data_)(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    return std::get<Sparse>(data_).coeff(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

double WeightedOperator::generator_defect() const {
    return std::visit([](const auto& m) -> double {
        Vector sums = m * Vector::Ones(m.cols());
        return sums.size() ? sums.cwiseAbs().maxCoeff() : 0.0;
    }, data_);
}

double WeightedOperator::reversibility_defect(const Vector& pi) const {
    require(static_cast<std::size_t>(pi.size()) == size(), "reversibility_defect: weight size mismatch");
    if (is_dense()) {
        const Matrix& A = std::get<Matrix>(data_);
        const Matrix PA = pi.asDiagonal() * A;
        return (PA - PA.transpose()).cwiseAbs().maxCoeff();
    }
    const Sparse PA = pi.asDiagonal() * std::get<Sparse>(data_);
    const Sparse diff = PA - Sparse(PA.transpose());
    double worst = 0.0;
    for (Eigen::Index k = 0; k < diff.outerSize(); ++k)
        for (Sparse::InnerIterator it(diff, k); it; ++it) worst = std::max(worst, std::abs(it.value()));
    return worst;
}

double WeightedOperator::inf_norm() const {
    return std::visit([](const auto& m) -> double {
        double worst = 0.0;
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, Matrix>) {
            if (m.size()) worst = m.cwiseAbs().rowwise().sum().maxCoeff();
        } else {
            for (Eigen::Index k = 0; k < m.outerSize(); ++k) {
                double row = 0.0;
                for (typename std::decay_t<decltype(m)>::InnerIterator it(m, k); it; ++it) row += std::abs(it.value());
                worst = std::max(worst, row);
            }
        }
        return worst;
    }, data_);
}

void WeightedOperator::write_triplets(std::ostream& os) const {
    const Sparse s = sparse();
    os.precision(17);
    for (Eigen::Index k = 0; k < s.outerSize(); ++k)
        for (Sparse::InnerIterator it(s, k); it; ++it)
            if (it.value() != 0.0) os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

void validate_coefficients(const CoefficientMatrix& c, int N) {
    require(c.rows() == N && c.cols() == N, "coefficient matrix must be N x N");
    for (int i = 0; i < N; ++i) {
        require(c(i, i) == 0.0, "coefficient matrix must have zero diagonal");
        for (int j = i + 1; j < N; ++j) {
            if (!(c(i, j) >= 0.0)) {
                std::ostringstream os;
                os << "negative coefficient c(" << i << "," << j << ") = " << c(i, j);
                throw Error(os.str());
            }
            require(std::isfinite(c(i, j)), "coefficients must be finite");
            require(std::abs(c(i, j) - c(j, i)) <= 1e-14 * std::max(1.0, std::abs(c(i, j))),
                    "coefficient matrix must be symmetric");
        }
    }
}

WeightedOperator assemble_generator(const ConfigurationSpace& space, const CoefficientMatrix& c, GeneratorPart part) {
    const int N = space.sites();
    const int n = space.particles();
    validate_coefficients(c, N);
    const bool with_move = part != GeneratorPart::exchange_only;
    const bool with_exchange = part != GeneratorPart::move_only;
    // Exchange enters the full generator with a minus sign, and on its own as E.
    const double exchange_sign = part == GeneratorPart::full ? -1.0 : 1.0;

    std::vector<Eigen::Triplet<double>> trip;
    std::vector<int> occ(N, 0);
    std::vector<std::vector<int>> at(N);
    Configuration y(n);
    for (std::size_t r = 0; r < space.size(); ++r) {
        const int* x = space.data(r);
        std::vector<int> sites;
        for (int a = 0; a < n; ++a) {
            if (occ[x[a]] == 0) sites.push_back(x[a]);
            ++occ[x[a]];
            at[x[a]].push_back(a);
        }
        double diag = 0.0;
        if (with_move) {
            for (int i : sites) {
                const auto& labels = at[i];
                for (int j = 0; j < N; ++j) {
                    if (j == i || c(i, j) == 0.0) continue;
                    // Each unordered label pair {a,b} at i is hit by both (a,b)
                    // and (b,a), hence the factor 2.
                    const double w = 2.0 * c(i, j) * (occ[j] + 1.0) / (occ[i] - 1.0);
                    for (std::size_t p = 0; p < labels.size(); ++p)
                        for (std::size_t q = p + 1; q < labels.size(); ++q) {
                            std::copy(x, x + n, y.begin());
                            y[labels[p]] = y[labels[q]] = j;
                            trip.emplace_back(static_cast<int>(r), static_cast<int>(space.index(y)), w);
                            diag -= w;
                        }
                }
            }
        }
        if (with_exchange) {
            for (int i : sites)
                for (int j : sites) {
                    if (j <= i || c(i, j) == 0.0) continue;
                    const double w = 2.0 * c(i, j) * exchange_sign;
                    for (int a : at[i])
                        for (int b : at[j]) {
                            std::copy(x, x + n, y.begin());
                            std::swap(y[a], y[b]);
                            trip.emplace_back(static_cast<int>(r), static_cast<int>(space.index(y)), w);
                            diag -= w;
                        }
                }
        }
        trip.emplace_back(static_cast<int>(r), static_cast<int>(r), diag);
        for (int s : sites) {
            occ[s] = 0;
            at[s].clear();
        }
    }
    return WeightedOperator::from_triplets(space.size(), trip, {true, true});
}

WeightedOperator assemble_pair_generator(const ConfigurationSpace& space, int i, int j, GeneratorPart part) {
    const int N = space.sites();
    require(i >= 0 && j >= 0 && i < N && j < N && i != j, "pair generator needs distinct sites");
    CoefficientMatrix c = CoefficientMatrix::Zero(N, N);
    c(i, j) = c(j, i) = 1.0;
    return assemble_generator(space, c, part);
}

Matrix pi_symmetrize(const Matrix& A, const Vector& pi) {
    const Vector s = pi.cwiseSqrt();
    return s.asDiagonal() * A * s.cwiseInverse().asDiagonal();
}

// ---------------------------------------------------------------- matchings

void PerfectMatching::validate() const {
    const int n = size();
    for (int a = 0; a < n; ++a) {
        const int b = partner[a];
        require(b >= 0 && b < n, "matching partner out of range");
        require(b != a, "perfect matching must be fixed-point free");
        require(partner[b] == a, "perfect matching must be an involution");
    }
}

std::vector<PerfectMatching> matchings(int n, const std::optional<Configuration>& stabilizing) {
    require(n >= 0 && n % 2 == 0, "matchings: n must be even");
    if (stabilizing) require(static_cast<int>(stabilizing->size()) == n, "matchings: configuration length mismatch");
    std::vector<PerfectMatching> out;
    std::vector<int> partner(n, -1);
    auto recurse = [&](auto&& self) -> void {
        int a = 0;
        while (a < n && partner[a] >= 0) ++a;
        if (a == n) {
            out.push_back({partner});
            return;
        }
        for (int b = a + 1; b < n; ++b) {
            if (partner[b] >= 0) continue;
            if (stabilizing && (*stabilizing)[a] != (*stabilizing)[b]) continue;
            partner[a] = b;
            partner[b] = a;
            self(self);
            partner[a] = partner[b] = -1;
        }
    };
    recurse(recurse);
    return out;
}

Configuration act(const std::vector<int>& sigma, const Configuration& x) {
    require(sigma.size() == x.size(), "act: permutation length mismatch");
    Configuration y(x.size());
    for (std::size_t a = 0; a < x.size(); ++a) y[a] = x[sigma[a]];
    return y;
}

Vector chi_indicator(const ConfigurationSpace& space, const PerfectMatching& sigma) {
    sigma.validate();
    require(sigma.size() == space.particles(), "chi_indicator: matching size mismatch");
    const int n = space.particles();
    Vector chi(static_cast<Eigen::Index>(space.size()));
    for (std::size_t k = 0; k < space.size(); ++k) {
        const int* x = space.data(k);
        bool fixed = true;
        for (int a = 0; a < n && fixed; ++a) fixed = x[sigma.partner[a]] == x[a];
        chi[static_cast<Eigen::Index>(k)] = fixed ? 1.0 / std::sqrt(space.pi()[static_cast<Eigen::Index>(k)]) : 0.0;
    }
    return chi;
}

WeightedOperator kernel_projection(const ConfigurationSpace& space) {
    require(space.size() <= 5 * kDenseLimit, "kernel_projection: space too large for a dense projection");
    const auto ms = matchings(space.particles());
    Matrix X(static_cast<Eigen::Index>(space.size()), static_cast<Eigen::Index>(ms.size()));
    for (std::size_t s = 0; s < ms.size(); ++s) X.col(static_cast<Eigen::Index>(s)) = chi_indicator(space, ms[s]);
    const Vector& pi = space.pi();
    const Matrix G = X.transpose() * pi.asDiagonal() * X;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(G);
    const Vector& ev = eig.eigenvalues();
    const double cut = 1e-12 * ev.cwiseAbs().maxCoeff();
    Vector inv = Vector::Zero(ev.size());
    for (Eigen::Index k = 0; k < ev.size(); ++k)
        if (ev[k] > cut) inv[k] = 1.0 / ev[k];
    const Matrix Gplus = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
    Matrix K = X * Gplus * X.transpose() * pi.asDiagonal();
    return WeightedOperator(std::move(K), {false, true});
}

// ---------------------------------------------------------------- Haar

Matrix sample_haar(int N, rng::Stream& gen) {
    Matrix g(N, N);
    for (int j = 0; j < N; ++j)
        for (int i = 0; i < N; ++i) g(i, j) = gen.normal();
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix Q = qr.householderQ();
    const Matrix& R = qr.matrixQR();
    for (int k = 0; k < N; ++k)
        if (R(k, k) < 0.0) Q.col(k) *= -1.0;
    return Q;
}

std::vector<Estimate> haar_kernel_entries(const std::vector<std::pair<Configuration, Configuration>>& pairs, int N,
                                          std::size_t samples, std::uint64_t seed, unsigned threads) {
    require(samples >= 2, "haar_kernel_entries: need at least two samples");
    for (const auto& [x, y] : pairs) {
        require(x.size() == y.size(), "haar pair length mismatch");
        for (std::size_t a = 0; a < x.size(); ++a)
            require(x[a] >= 0 && x[a] < N && y[a] >= 0 && y[a] < N, "haar pair site out of range");
    }
    // Fixed-size blocks with their own stream keep the result independent of
    // the thread count.
    constexpr std::size_t kBlock = 4096;
    const std::size_t blocks = (samples + kBlock - 1) / kBlock;
    const std::size_t P = pairs.size();
    std::vector<std::vector<double>> sum(blocks, std::vector<double>(P, 0.0));
    std::vector<std::vector<double>> sumsq(blocks, std::vector<double>(P, 0.0));
    parallel_for(blocks, threads, [&](std::size_t b) {
        rng::Stream gen(rng::derive(seed, rng::streams::haar, b), rng::streams::haar);
        const std::size_t count = std::min(kBlock, samples - b * kBlock);
        for (std::size_t s = 0; s < count; ++s) {
            const Matrix O = sample_haar(N, gen);
            for (std::size_t p = 0; p < P; ++p) {
                double prod = 1.0;
                const auto& [x, y] = pairs[p];
                for (std::size_t a = 0; a < x.size(); ++a) prod *= O(x[a], y[a]);
                sum[b][p] += prod;
                sumsq[b][p] += prod * prod;
            }
        }
    });
    std::vector<Estimate> out(P);
    for (std::size_t p = 0; p < P; ++p) {
        double s = 0.0, s2 = 0.0;
        for (std::size_t b = 0; b < blocks; ++b) {
            s += sum[b][p];
            s2 += sumsq[b][p];
        }
        const double n = static_cast<double>(samples);
        const double mean = s / n;
        const double var = std::max(0.0, (s2 - n * mean * mean) / (n - 1.0));
        out[p] = {mean, std::sqrt(var / n)};
    }
    return out;
}

Estimate haar_kernel_entry(const Configuration& x, const Configuration& y, int N, std::size_t samples,
                           std::uint64_t seed) {
    return haar_kernel_entries({{x, y}}, N, samples, seed).front();
}

// ---------------------------------------------------------------- partitions

void Partition::validate(int n) const {
    std::vector<int> seen(n, 0);
    for (const auto& block : blocks) {
        require(!block.empty(), "partition blocks must be nonempty");
        for (int a : block) {
            require(a >= 0 && a < n, "partition label out of range");
            require(seen[a]++ == 0, "partition blocks must be disjoint");
        }
    }
    for (int a = 0; a < n; ++a) require(seen[a] == 1, "partition must cover every label");
}

std::vector<int> Partition::labels(int n) const {
    validate(n);
    std::vector<int> id(n);
    for (std::size_t k = 0; k < blocks.size(); ++k)
        for (int a : blocks[k]) id[a] = static_cast<int>(k);
    return id;
}

std::vector<Partition> all_partitions(int n) {
    std::vector<Partition> out;
    std::vector<int> id(n, 0);
    // Restricted growth strings.
    auto recurse = [&](auto&& self, int a, int used) -> void {
        if (a == n) {
            Partition P;
            P.blocks.resize(used);
            for (int b = 0; b < n; ++b) P.blocks[id[b]].push_back(b);
            out.push_back(std::move(P));
            return;
        }
        for (int k = 0; k <= used; ++k) {
            id[a] = k;
            self(self, a + 1, std::max(used, k + 1));
        }
    };
    if (n > 0) recurse(recurse, 0, 0);
    return out;
}

Partition position_partition(const Configuration& x) {
    Partition P;
    std::vector<int> seen_site;
    for (std::size_t a = 0; a < x.size(); ++a) {
        auto it = std::find(seen_site.begin(), seen_site.end(), x[a]);
        if (it == seen_site.end()) {
            seen_site.push_back(x[a]);
            P.blocks.push_back({static_cast<int>(a)});
        } else {
            P.blocks[static_cast<std::size_t>(it - seen_site.begin())].push_back(static_cast<int>(a));
        }
    }
    return P;
}

bool refines(const Partition& P, const Partition& Q, int n) {
    const auto q = Q.labels(n);
    for (const auto& block : P.blocks)
        for (int a : block)
            if (q[a] != q[block.front()]) return false;
    return true;
}

namespace {

std::vector<std::vector<int>> compatible_permutations(const Partition& P, int n) {
    const auto id = P.labels(n);
    std::vector<int> sigma(n);
    std::iota(sigma.begin(), sigma.end(), 0);
    std::vector<std::vector<int>> out;
    do {
        bool ok = true;
        for (int a = 0; a < n && ok; ++a) ok = id[sigma[a]] == id[a];
        if (ok) out.push_back(sigma);
    } while (std::next_permutation(sigma.begin(), sigma.end()));
    return out;
}

} // namespace

WeightedOperator conditional_expectation(const ConfigurationSpace& space, const Partition& P) {
    const int n = space.particles();
    require(n <= 8, "conditional_expectation: n too large for permutation enumeration");
    const auto group = compatible_permutations(P, n);
    const double w = 1.0 / static_cast<double>(group.size());
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(space.size() * group.size());
    Configuration y(n);
    for (std::size_t r = 0; r < space.size(); ++r) {
        const int* x = space.data(r);
        for (const auto& sigma : group) {
            for (int a = 0; a < n; ++a) y[a] = x[sigma[a]];
            trip.emplace_back(static_cast<int>(r), static_cast<int>(space.index(y)), w);
        }
    }
    return WeightedOperator::from_triplets(space.size(), trip, {false, true});
}

// ---------------------------------------------------------------- local operators

LocalNeighborhood local_neighborhood(const ConfigurationSpace& space, const Configuration& y, int ell) {
    const int N = space.sites();
    require(static_cast<int>(y.size()) == space.particles(), "local neighborhood: center length mismatch");
    require(is_even(y, N), "local neighborhood: center must be even");
    require(ell >= 0, "local neighborhood: length must be nonnegative");
    std::vector<int> parent(N);
    std::iota(parent.begin(), parent.end(), 0);
    auto root = [&](int i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    for (int c : y) {
        const int lo = std::max(0, c - ell);
        const int hi = std::min(N - 1, c + ell);
        for (int i = lo + 1; i <= hi; ++i) parent[root(i)] = root(lo);
    }
    LocalNeighborhood nb;
    nb.site_class.resize(N);
    for (int i = 0; i < N; ++i) nb.site_class[i] = root(i);
    nb.contains.assign(space.size(), 0);
    const int n = space.particles();
    for (std::size_t k = 0; k < space.size(); ++k) {
        const int* x = space.data(k);
        bool in = true;
        for (int a = 0; a < n && in; ++a) in = nb.site_class[x[a]] == nb.site_class[y[a]];
        if (in) {
            nb.members.push_back(k);
            nb.contains[k] = 1;
        }
    }
    return nb;
}

WeightedOperator local_projection(const ConfigurationSpace& space, const Configuration& y, int ell) {
    const auto nb = local_neighborhood(space, y, ell);
    const int n = space.particles();
    // Position partitions encoded as an n x n equality pattern.
    std::vector<std::vector<char>> same(nb.members.size(), std::vector<char>(n * n));
    for (std::size_t m = 0; m < nb.members.size(); ++m) {
        const int* x = space.data(nb.members[m]);
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) same[m][a * n + b] = x[a] == x[b];
    }
    auto finer = [&](std::size_t z, std::size_t x) {
        for (int k = 0; k < n * n; ++k)
            if (same[z][k] && !same[x][k]) return false;
        return true;
    };
    const Vector& pi = space.pi();
    std::vector<Eigen::Triplet<double>> trip;
    for (std::size_t xm = 0; xm < nb.members.size(); ++xm) {
        double total = 0.0;
        const std::size_t start = trip.size();
        for (std::size_t zm = 0; zm < nb.members.size(); ++zm) {
            if (!finer(zm, xm)) continue;
            const double w = pi[static_cast<Eigen::Index>(nb.members[zm])];
            trip.emplace_back(static_cast<int>(nb.members[xm]), static_cast<int>(nb.members[zm]), w);
            total += w;
        }
        for (std::size_t k = start; k < trip.size(); ++k)
            trip[k] = Eigen::Triplet<double>(trip[k].row(), trip[k].col(), trip[k].value() / total);
    }
    return WeightedOperator::from_triplets(space.size(), trip, {false, false});
}

int l1_distance(const Configuration& x, const Configuration& y) {
    require(x.size() == y.size(), "l1_distance: length mismatch");
    int d = 0;
    for (std::size_t a = 0; a < x.size(); ++a) d += std::abs(x[a] - y[a]);
    return d;
}

double averaging_value(int K, int d) {
    require(K >= 1, "averaging scale K must be positive");
    // Number of alpha in [K, 2K-1] with d < alpha.
    const int active = std::clamp(2 * K - 1 - std::max(d, K - 1), 0, K);
    return static_cast<double>(active) / K;
}

WeightedOperator averaging_coefficients(const ConfigurationSpace& space, int K, const Configuration& y) {
    require(K >= 1, "averaging scale K must be positive");
    require(static_cast<int>(y.size()) == space.particles(), "averaging center length mismatch");
    std::vector<Eigen::Triplet<double>> trip;
    for (std::size_t k = 0; k < space.size(); ++k) {
        const Configuration x = space.config(k);
        const double v = averaging_value(K, l1_distance(x, y));
        if (v != 0.0) trip.emplace_back(static_cast<int>(k), static_cast<int>(k), v);
    }
    return WeightedOperator::from_triplets(space.size(), trip, {false, true});
}

int config_distance(const Configuration& x, const Configuration& y, const std::vector<int>& window) {
    require(x.size() == y.size(), "config_distance: length mismatch");
    require(std::is_sorted(window.begin(), window.end()), "config_distance: window must be sorted");
    int best = 0;
    for (std::size_t a = 0; a < x.size(); ++a) {
        const int lo = std::min(x[a], y[a]);
        const int hi = std::max(x[a], y[a]);
        const auto count = std::lower_bound(window.begin(), window.end(), hi) -
                           std::lower_bound(window.begin(), window.end(), lo);
        best = std::max(best, static_cast<int>(count));
    }
    return best;
}

// ---------------------------------------------------------------- colorblind map

ColorblindMap::ColorblindMap(const ConfigurationSpace& space) : space_(&space) {
    const int N = space.sites();
    std::map<std::vector<int>, std::size_t> lookup;
    fiber_.resize(space.size());
    for (std::size_t k = 0; k < space.size(); ++k) {
        std::vector<int> eta = occupancy(space.config(k), N);
        for (int& e : eta) e /= 2;
        auto [it, inserted] = lookup.emplace(eta, images_.size());
        if (inserted) images_.push_back(eta);
        fiber_[k] = it->second;
    }
    fiber_mass_ = Vector::Zero(static_cast<Eigen::Index>(images_.size()));
    for (std::size_t k = 0; k < space.size(); ++k)
        fiber_mass_[static_cast<Eigen::Index>(fiber_[k])] += space.pi()[static_cast<Eigen::Index>(k)];
}

Vector ColorblindMap::pullback(const Vector& g) const {
    require(static_cast<std::size_t>(g.size()) == images_.size(), "pullback: function size mismatch");
    Vector f(static_cast<Eigen::Index>(fiber_.size()));
    for (std::size_t k = 0; k < fiber_.size(); ++k) f[static_cast<Eigen::Index>(k)] = g[static_cast<Eigen::Index>(fiber_[k])];
    return f;
}

Vector ColorblindMap::pushforward(const Vector& f) const {
    require(static_cast<std::size_t>(f.size()) == fiber_.size(), "pushforward: function size mismatch");
    Vector g = Vector::Zero(static_cast<Eigen::Index>(images_.size()));
    const Vector& pi = space_->pi();
    for (std::size_t k = 0; k < fiber_.size(); ++k)
        g[static_cast<Eigen::Index>(fiber_[k])] += pi[static_cast<Eigen::Index>(k)] * f[static_cast<Eigen::Index>(k)];
    return g.cwiseQuotient(fiber_mass_);
}

WeightedOperator ColorblindMap::projection() const {
    std::vector<std::vector<std::size_t>> members(images_.size());
    for (std::size_t k = 0; k < fiber_.size(); ++k) members[fiber_[k]].push_back(k);
    const Vector& pi = space_->pi();
    std::vector<Eigen::Triplet<double>> trip;
    for (std::size_t k = 0; k < fiber_.size(); ++k) {
        const auto e = fiber_[k];
        for (std::size_t m : members[e])
            trip.emplace_back(static_cast<int>(k), static_cast<int>(m),
                              pi[static_cast<Eigen::Index>(m)] / fiber_mass_[static_cast<Eigen::Index>(e)]);
    }
    return WeightedOperator::from_triplets(fiber_.size(), trip, {false, true});
}

Vector colorblind_transport(const ConfigurationSpace& space, TransportDirection direction, const Vector& f) {
    const ColorblindMap map(space);
    return direction == TransportDirection::pushforward ? map.pushforward(f) : map.pullback(f);
}

} // namespace cemf
