#pragma once

#include "cemf/configspace.hpp"
#include "cemf/ensembles.hpp"
#include "cemf/spectral.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cemf {

struct EigenPath {
    std::vector<double> times;
    std::vector<Vector> eigenvalues;
    std::vector<Matrix> frames;
    // Diagnostics: messages about small initial gaps or step halving.
    std::vector<std::string> log;
    int halvings = 0;
};

struct SeeOptions {
    double gap_floor = 1e-8;
    // A substep h is accepted when sqrt(h/N) <= step_gap_ratio * min gap.
    double step_gap_ratio = 0.1;
    // Flip the sign of every Brownian increment (antithetic partner path).
    bool negate_noise = false;
    // Keep only the final snapshot (besides the initial one).
    bool endpoints_only = false;
};

// Euler-Maruyama for Dyson Brownian motion coupled to the eigenvector
// equation, with the diagonal noise scaled so that the endpoint has the law of
// the spectrum of H + sqrt(t) GOE.  Frames are re-orthonormalized by modified
// Gram-Schmidt each step and kept sign-aligned with the previous step.
EigenPath integrate_see(const SpectralDecomposition& dec0, double t, double dt, std::uint64_t seed,
                        const SeeOptions& options = {});

struct AlignedFrame {
    Matrix frame;
    std::vector<int> permutation; // result column k = current column permutation[k]
    bool ambiguous = false;
};

// Reorders and sign-flips the columns of `current` to best match `previous`.
AlignedFrame align_frames(const Matrix& previous, const Matrix& current);

// Scale convention for the eigenvector-flow coefficients c_ij = scale / (N (l_i - l_j)^2).
// `printed` is scale 1; `ito` is scale 1/2, which is the drift the SDE actually produces.
enum class CoefficientConvention { printed, ito };
double convention_scale(CoefficientConvention c);
CoefficientMatrix see_coefficients(const Vector& eigenvalues, CoefficientConvention convention);

// pi(x)^{-1/2} N^{n/2} prod_a <u_{x_a}, v_a> for every x in the space.
Vector moment_observable(const ConfigurationSpace& space, const Matrix& frame, const std::vector<Vector>& V);

struct MomentRequest {
    Configuration x;
    std::vector<Vector> vectors;
    EnsembleSpec ensemble;
    double t = 0.0;
    std::size_t trials = 1000;
    std::uint64_t seed = 0;
    // When set, every trial perturbs this matrix instead of a fresh ensemble draw.
    std::optional<SymmetricMatrix> base;
};

struct MomentEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
    std::vector<double> values;
};

void to_json(nlohmann::json& j, const MomentRequest& r);
void from_json(const nlohmann::json& j, MomentRequest& r);

// Per-trial overlaps <u_i, v_k> for a set of eigenvector indices, drawn from
// independent matrices H + sqrt(t) GOE.
struct OverlapSamples {
    std::vector<int> indices;
    std::size_t vectors = 0;
    std::size_t trials = 0;
    std::vector<double> data; // [trial][index][vector]
    double overlap(std::size_t trial, std::size_t index_pos, std::size_t vector) const {
        return data[(trial * indices.size() + index_pos) * vectors + vector];
    }
};

OverlapSamples sample_overlaps(const EnsembleSpec& ensemble, const std::optional<SymmetricMatrix>& base, double t,
                               std::size_t trials, std::uint64_t seed, const std::vector<int>& indices,
                               const std::vector<Vector>& V, unsigned threads = 1);

// Moment values per trial from overlap samples (x uses sites from `indices`).
std::vector<double> moment_values(const OverlapSamples& samples, const Configuration& x, int N);

MomentEstimate estimate_moment(const MomentRequest& request, unsigned threads = 1);

// Mean and standard error of a sample.
MomentEstimate summarize(std::vector<double> values);

struct GeneratorValidation {
    ConfigurationSpace space;
    Vector observable;     // f_0 on the space
    Vector fd;             // finite-difference drift estimate
    Vector fd_std_error;
    Vector drift_ito;      // B f_0 with c = 1/(2N gap^2)
    Vector drift_printed;  // B f_0 with c = 1/(N gap^2)
    std::size_t paths = 0;
};

// Antithetic SEE pairs over [0, delta] from the fixed spectrum of H; compares
// (E f_delta - f_0)/delta with the generator applied to f_0.
GeneratorValidation validate_generator(const SymmetricMatrix& H, const std::vector<Vector>& V, double delta,
                                       std::size_t paths, int substeps, std::uint64_t seed, unsigned threads = 1);

// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::vector<double> a, std::vector<double> b);

} // namespace cemf
