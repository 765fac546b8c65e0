#pragma once

#include "cemf/common.hpp"

#include <Eigen/SparseCore>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <unordered_map>
#include <variant>
#include <vector>

namespace cemf {

// Sites are 0-based in [0, N); entry a is the site of the particle labeled a.
using Configuration = std::vector<int>;

// Odd double factorial of k-1 for even k: 1, 1, 3, 15, 105, ...
long long occupancy_weight(int k);
// |M_n| = 1*3*5*...*(n-1).
long long matching_count(int n);

std::vector<int> occupancy(const Configuration& x, int N);
bool is_even(const Configuration& x, int N);
// prod_i occupancy_weight(n_i)^2
double pi_weight(const Configuration& x, int N);

class ConfigurationSpace {
public:
    ConfigurationSpace(int N, int n);

    int sites() const { return N_; }
    int particles() const { return n_; }
    std::size_t size() const { return pi_.size(); }

    Configuration config(std::size_t idx) const;
    const int* data(std::size_t idx) const { return flat_.data() + idx * static_cast<std::size_t>(n_); }
    std::optional<std::size_t> find(const Configuration& x) const;
    // Throws when x is not a member.
    std::size_t index(const Configuration& x) const;
    const Vector& pi() const { return pi_; }

    // One line per configuration: index, x_1..x_n, pi.
    void write_csv(std::ostream& os) const;

private:
    std::uint64_t key(const int* x) const;

    int N_;
    int n_;
    std::vector<int> flat_;
    Vector pi_;
    std::unordered_map<std::uint64_t, std::size_t> index_;
};

ConfigurationSpace enumerate_space(int N, int n);
// Exact |Lambda^n| without enumerating (sum over even set partitions).
std::uint64_t count_even_configurations(int N, int n);

inline constexpr std::size_t kMaxSpaceSize = 1000000;
inline constexpr std::size_t kDenseLimit = 2000;

enum class JumpKind { move, swap };
// move: if x_a = x_b = i both go to j.  swap: if x_a = i and x_b = j they
// trade places.  Otherwise x is returned unchanged.
Configuration jump(const Configuration& x, JumpKind kind, int a, int b, int i, int j);

// Linear operator on functions over a configuration space, in the function
// representation: (A f)(x) = sum_y A[x,y] f(y).  The delta-pairing entry is
// <delta_x, A delta_y> = A[x,y] / pi(y).
class WeightedOperator {
public:
    using Sparse = Eigen::SparseMatrix<double, Eigen::RowMajor>;

    struct Flags {
        bool generator = false;
        bool pi_self_adjoint = false;
    };

    WeightedOperator() = default;
    WeightedOperator(Matrix dense, Flags flags);
    WeightedOperator(Sparse sparse, Flags flags);
    // Dense storage up to kDenseLimit rows, sparse above.
    static WeightedOperator from_triplets(std::size_t size, const std::vector<Eigen::Triplet<double>>& triplets,
                                          Flags flags);

    std::size_t size() const;
    bool is_dense() const { return std::holds_alternative<Matrix>(data_); }
    const Flags& flags() const { return flags_; }
    bool is_generator() const { return flags_.generator; }
    bool is_pi_self_adjoint() const { return flags_.pi_self_adjoint; }

    Vector apply(const Vector& f) const;
    Matrix dense() const;
    Sparse sparse() const;
    double entry(std::size_t row, std::size_t col) const;
    double delta_pairing(std::size_t x, std::size_t y, const Vector& pi) const { return entry(x, y) / pi[y]; }

    // Largest |row sum|.
    double generator_defect() const;
    // max |Pi A - A^T Pi|.
    double reversibility_defect(const Vector& pi) const;
    // max_x sum_y |A[x,y]|
    double inf_norm() const;

    // "row col value" lines for nonzero entries.
    void write_triplets(std::ostream& os) const;

private:
    std::variant<Matrix, Sparse> data_;
    Flags flags_;
};

enum class GeneratorPart { full, move_only, exchange_only };

// Symmetric, nonnegative, zero-diagonal N x N matrix c_ij.
using CoefficientMatrix = Matrix;
void validate_coefficients(const CoefficientMatrix& c, int N);

// sum_{i<j} c_ij X_ij with X the chosen part of B_ij = M_ij - E_ij.
WeightedOperator assemble_generator(const ConfigurationSpace& space, const CoefficientMatrix& coeffs,
                                    GeneratorPart part = GeneratorPart::full);
// Single-pair operator with c_ij = 1.
WeightedOperator assemble_pair_generator(const ConfigurationSpace& space, int i, int j,
                                         GeneratorPart part = GeneratorPart::full);

// Pi^{1/2} A Pi^{-1/2}; symmetric when A is pi-self-adjoint.
Matrix pi_symmetrize(const Matrix& A, const Vector& pi);

struct PerfectMatching {
    // partner[a] = sigma(a)
    std::vector<int> partner;
    void validate() const;
    int size() const { return static_cast<int>(partner.size()); }
};

// All perfect matchings of [n] in a fixed order, optionally only those with
// x_{sigma(a)} = x_a for every a.
std::vector<PerfectMatching> matchings(int n, const std::optional<Configuration>& stabilizing = std::nullopt);

// (sigma . x)_a = x_{sigma(a)} for a permutation given as an index map.
Configuration act(const std::vector<int>& sigma, const Configuration& x);

// 1{sigma . x = x} / sqrt(pi(x))
Vector chi_indicator(const ConfigurationSpace& space, const PerfectMatching& sigma);

// Pi-orthogonal projection onto span{chi_sigma}.
WeightedOperator kernel_projection(const ConfigurationSpace& space);

struct Estimate {
    double mean = 0.0;
    double std_error = 0.0;
};

// Haar orthogonal matrix: QR of a Gaussian matrix with R's diagonal made
// positive.
namespace rng { class Stream; }
Matrix sample_haar(int N, rng::Stream& gen);
// Monte Carlo E[prod_a O_{x_a y_a}].
Estimate haar_kernel_entry(const Configuration& x, const Configuration& y, int N, std::size_t samples,
                           std::uint64_t seed);
// Several pairs estimated from the same Haar draws.
std::vector<Estimate> haar_kernel_entries(const std::vector<std::pair<Configuration, Configuration>>& pairs, int N,
                                          std::size_t samples, std::uint64_t seed, unsigned threads = 1);

struct Partition {
    std::vector<std::vector<int>> blocks;
    void validate(int n) const;
    // block id per label
    std::vector<int> labels(int n) const;
};

std::vector<Partition> all_partitions(int n);
// Position partition of x: labels grouped by site.
Partition position_partition(const Configuration& x);
// P <= Q in the refinement order (every block of P inside a block of Q).
bool refines(const Partition& P, const Partition& Q, int n);

// E^P f(x) = |S_P|^{-1} sum_{sigma in S_P} f(sigma . x)
WeightedOperator conditional_expectation(const ConfigurationSpace& space, const Partition& P);

struct LocalNeighborhood {
    std::vector<int> site_class;        // equivalence class id per site
    std::vector<std::size_t> members;   // indices of configurations in the neighborhood
    std::vector<char> contains;         // membership flag per configuration index
};

LocalNeighborhood local_neighborhood(const ConfigurationSpace& space, const Configuration& y, int ell);
WeightedOperator local_projection(const ConfigurationSpace& space, const Configuration& y, int ell);

// Diagonal Av(x; K, y) = (1/K) sum_{alpha=K}^{2K-1} 1{|x - y|_1 < alpha}.
WeightedOperator averaging_coefficients(const ConfigurationSpace& space, int K, const Configuration& y);
double averaging_value(int K, int l1_distance);
int l1_distance(const Configuration& x, const Configuration& y);

// sup_a |window ∩ [min(x_a,y_a), max(x_a,y_a))| for a sorted window.
int config_distance(const Configuration& x, const Configuration& y, const std::vector<int>& window);

// Map from labeled configurations to unlabeled occupations eta_i = n_i / 2.
class ColorblindMap {
public:
    explicit ColorblindMap(const ConfigurationSpace& space);

    std::size_t image_size() const { return images_.size(); }
    const std::vector<int>& image(std::size_t k) const { return images_[k]; }
    std::size_t image_of(std::size_t config_index) const { return fiber_[config_index]; }

    Vector pullback(const Vector& g) const;
    Vector pushforward(const Vector& f) const;
    WeightedOperator projection() const;

private:
    const ConfigurationSpace* space_;
    std::vector<std::vector<int>> images_;
    std::vector<std::size_t> fiber_;
    Vector fiber_mass_;
};

enum class TransportDirection { pushforward, pullback };
Vector colorblind_transport(const ConfigurationSpace& space, TransportDirection direction, const Vector& f);

} // namespace cemf
