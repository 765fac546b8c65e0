#pragma once

#include "cemf/common.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <optional>
#include <string>

namespace cemf {

// Dense real symmetric matrix.  Construction mirrors the upper triangle, so
// entry(i,j) == entry(j,i) holds bit-exactly afterwards.
class SymmetricMatrix {
public:
    SymmetricMatrix() = default;
    explicit SymmetricMatrix(int N);
    // Mirrors the upper triangle of m; rejects non-square or non-finite input.
    static SymmetricMatrix from_upper(const Matrix& m);
    // Rejects input that is not already exactly symmetric.
    static SymmetricMatrix from_symmetric(const Matrix& m);

    int size() const { return static_cast<int>(m_.rows()); }
    double operator()(int i, int j) const { return m_(i, j); }
    void set(int i, int j, double v) {
        m_(i, j) = v;
        m_(j, i) = v;
    }
    const Matrix& matrix() const { return m_; }
    double max_abs() const { return m_.size() ? m_.cwiseAbs().maxCoeff() : 0.0; }

private:
    Matrix m_;
};

enum class EnsembleKind { goe, generalized_wigner, erdos_renyi, p_regular, levy };
enum class EntryLaw { bernoulli, gaussian };

std::string to_string(EnsembleKind kind);
EnsembleKind ensemble_kind_from_string(const std::string& s);

struct EnsembleSpec {
    EnsembleKind kind = EnsembleKind::goe;
    int N = 0;
    double p = 0.0;
    double alpha = 0.0;
    // Entry variances s_ij; absent means the flat profile 1/N.
    std::optional<Matrix> variance_profile;
    std::uint64_t seed = 0;
    // Generalized Wigner only: entry law and the declared bound C with
    // C^-1 <= N s_ij <= C.
    EntryLaw entry_law = EntryLaw::bernoulli;
    double profile_bound = 10.0;
};

void to_json(nlohmann::json& j, const EnsembleSpec& spec);
void from_json(const nlohmann::json& j, EnsembleSpec& spec);

// Off-diagonal variance 1/N, diagonal 2/N.
SymmetricMatrix sample_goe(int N, std::uint64_t seed);
// Scaled GOE entry (i,j) without materializing the matrix.
double goe_entry(int N, std::uint64_t seed, int i, int j);

SymmetricMatrix sample_generalized_wigner(const EnsembleSpec& spec);
SymmetricMatrix sample_sparse_graph(const EnsembleSpec& spec);
SymmetricMatrix sample_levy(const EnsembleSpec& spec);
SymmetricMatrix sample(const EnsembleSpec& spec);

// H + sqrt(t) * GOE(seed); t == 0 returns H unchanged.
SymmetricMatrix perturb_gaussian(const SymmetricMatrix& H, double t, std::uint64_t seed);

// Flat generalized Wigner profile s_ij = 1/N.
Matrix flat_profile(int N);
// Throws with a diagnostic when columns do not sum to one or the bound fails.
void validate_profile(const Matrix& profile, double C);

// Scale of the symmetric stable law with characteristic function
// exp(-sigma^alpha |t|^alpha) used for the heavy-tailed ensemble.
double levy_scale(double alpha);

namespace rng { class Stream; }
// One Chambers-Mallows-Stuck draw with characteristic function
// exp(-|scale * t|^alpha).
double sample_symmetric_stable(double alpha, double scale, rng::Stream& gen);

} // namespace cemf
