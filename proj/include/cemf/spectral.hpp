#pragma once

#include "cemf/common.hpp"
#include "cemf/ensembles.hpp"

#include <nlohmann/json_fwd.hpp>

#include <complex>
#include <map>
#include <mutex>
#include <optional>
#include <utility>
#include <vector>

namespace cemf {

using Complex = std::complex<double>;

// Ascending eigenvalues and an orthonormal frame whose columns are the
// eigenvectors.  Each column's largest-magnitude coordinate is positive.
struct SpectralDecomposition {
    Vector eigenvalues;
    Matrix frame;
    int size() const { return static_cast<int>(eigenvalues.size()); }
};

SpectralDecomposition eig_sym(const SymmetricMatrix& H);
// Eigenpairs with 0-based indices lo..hi inclusive (LAPACK dsyevr), same sign
// convention.  Cheap when only a few eigenvectors are needed.
SpectralDecomposition eig_sym_range(const SymmetricMatrix& H, int lo, int hi);
void apply_sign_convention(Matrix& frame);

struct HalfPlanePoint {
    double E = 0.0;
    double eta = 0.0;
    Complex z() const { return {E, eta}; }
};

// (1/N) sum_k 1/(lambda_k - z); requires eta > 0.
Complex stieltjes(const SpectralDecomposition& dec, HalfPlanePoint z);
// Same sum at an arbitrary complex point (no half-plane check).
Complex stieltjes_at(const Vector& eigenvalues, Complex zeta);
// sum_k <v,u_k><u_k,w> / (lambda_k - z) for unit v, w.
Complex green_form(const SpectralDecomposition& dec, HalfPlanePoint z, const Vector& v, const Vector& w);

struct RegularityWindow {
    double E0 = 0.0;
    double r = 1.0;
    double eta_star = 0.01;
    double kappa = 0.5;
    double C = 4.0;

    void validate(int N) const;
    // Truncated interval [E0 - (1-kappa) r, E0 + (1-kappa) r].
    double lower() const { return E0 - (1.0 - kappa) * r; }
    double upper() const { return E0 + (1.0 - kappa) * r; }
    bool contains(double E) const { return E >= lower() && E <= upper(); }
};

void to_json(nlohmann::json& j, const RegularityWindow& w);
void from_json(const nlohmann::json& j, RegularityWindow& w);

struct FreeConvolutionSettings {
    double damping = 0.5;
    double tolerance = 1e-12;
    int max_iterations = 10000;
    double restart_eta = 1e-8;
    // Grid spacing for quantile inversion is min(t,1)/grid_subdivisions.
    int grid_subdivisions = 4096;
    double bisection_tolerance = 1e-10;
    // Im m_fc below this at a classical location counts as outside the
    // regular spectrum.
    double density_floor = 1e-6;
};

struct FixedPoint {
    Complex m;
    double residual = 0.0;
    int iterations = 0;
    bool restarted = false;
};

// Solves m = m_N(z + t m) for the reference spectrum.  Damped iteration from
// m_N(z + i t), finished by guarded Newton steps.
FixedPoint solve_free_convolution(const Vector& eigenvalues, double t, HalfPlanePoint z,
                                  const FreeConvolutionSettings& settings = {},
                                  std::optional<Complex> warm_start = std::nullopt);

class FreeConvolutionProfile {
public:
    FreeConvolutionProfile(SpectralDecomposition reference, double t, FreeConvolutionSettings settings = {});

    const SpectralDecomposition& reference() const { return ref_; }
    double t() const { return t_; }
    const FreeConvolutionSettings& settings() const { return settings_; }
    int size() const { return ref_.size(); }

    // Cached fixed point; throws if the iteration does not converge.
    FixedPoint m(HalfPlanePoint z) const;
    // Quantiles of the free-convolution density at levels (i - 1/2)/N.
    const std::vector<double>& classical_locations() const;
    // Integrated density up to E on the quadrature grid (piecewise-linear
    // density between nodes).
    double cumulative(double E) const;
    // <v, Lambda_i w> with Lambda_i the normalized Im G_fc at the i-th
    // classical location (0-based i).
    double covariance_form(int i, const Vector& v, const Vector& w) const;
    Matrix covariance_matrix(int i) const;
    // Shifted spectral parameter gamma_i + t m_fc(gamma_i).
    Complex shifted_point(int i) const;
    // Largest fixed-point residual among cached values.
    double max_cached_residual() const;

private:
    struct Quadrature {
        double start = 0.0;
        double step = 0.0;
        std::vector<double> density;
        std::vector<double> cumulative;
    };
    struct Shift {
        Complex zeta;
        Vector weights; // Im 1/(lambda_k - zeta) / Im m_N(zeta)
    };

    const Quadrature& quadrature_locked() const;
    const Shift& shift_locked(int i) const;
    double cumulative_locked(double E) const;

    SpectralDecomposition ref_;
    double t_;
    FreeConvolutionSettings settings_;

    mutable std::recursive_mutex mutex_;
    mutable std::map<std::pair<double, double>, FixedPoint> cache_;
    mutable std::optional<Quadrature> quad_;
    mutable std::optional<std::vector<double>> gamma_;
    mutable std::map<int, Shift> shifts_;
};

Complex free_convolution_m(const FreeConvolutionProfile& profile, HalfPlanePoint z);
std::vector<double> classical_locations(const FreeConvolutionProfile& profile);
double covariance_form(const FreeConvolutionProfile& profile, int i, const Vector& v, const Vector& w);

struct AssumptionReport {
    double im_m_inf = 0.0;
    double im_m_sup = 0.0;
    double form_sup = 0.0;
    double form_budget = 0.0; // N^exponent
    double exponent = 0.0;
    double C = 0.0;
    int energies = 0;
    int scales = 0;
    bool lower_ok = false;
    bool upper_ok = false;
    bool form_ok = false;
    bool pass() const { return lower_ok && upper_ok && form_ok; }
};

void to_json(nlohmann::json& j, const AssumptionReport& r);

// Scans E in the truncated window and eta log-spaced in [eta_star, 1].
AssumptionReport verify_assumptions(const SpectralDecomposition& dec, const RegularityWindow& window,
                                    const std::vector<Vector>& S, double exponent, int energies = 41,
                                    int scales = 25);

} // namespace cemf
