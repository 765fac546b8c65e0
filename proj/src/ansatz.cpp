#include "cemf/ansatz.hpp"

#include <cmath>

namespace cemf {

void validate_test_vectors(const TestVectors& V, int N) {
    for (std::size_t a = 0; a < V.size(); ++a) {
        require(V[a].size() == N, "test vector dimension must equal N");
        require(std::abs(V[a].norm() - 1.0) <= 1e-10, "test vectors must have unit norm");
    }
}

CovarianceForm identity_covariance() {
    return [](int, const Vector& v, const Vector& w) { return v.dot(w); };
}

CovarianceForm profile_covariance(const FreeConvolutionProfile& profile) {
    return [&profile](int i, const Vector& v, const Vector& w) { return profile.covariance_form(i, v, w); };
}

namespace {

void check_inputs(const Configuration& x, const TestVectors& V, int N) {
    require(x.size() == V.size(), "one test vector per particle required");
    require(is_even(x, N), "configuration must have even occupations");
    validate_test_vectors(V, N);
}

// Pair factor for matching sigma seen from y.
double pair_factor(int a, int b, const Configuration& y, const TestVectors& V, const CovarianceForm& cov) {
    if (y[a] == y[b]) return cov(y[a], V[a], V[b]);
    return 0.5 * (cov(y[a], V[a], V[b]) + cov(y[b], V[a], V[b]));
}

double matching_product(const PerfectMatching& s, const Configuration& y, const TestVectors& V,
                        const CovarianceForm& cov, bool* negative) {
    double prod = 1.0;
    for (int a = 0; a < s.size(); ++a) {
        const int b = s.partner[a];
        if (b < a) continue;
        const double f = pair_factor(a, b, y, V, cov);
        if (f < 0.0 && negative) *negative = true;
        prod *= f;
    }
    return prod;
}

} // namespace

double gaussian_wick_moment(const Configuration& x, const TestVectors& V, int N) {
    check_inputs(x, V, N);
    double sum = 0.0;
    for (const auto& s : matchings(static_cast<int>(x.size()), x)) {
        double prod = 1.0;
        for (int a = 0; a < s.size(); ++a)
            if (s.partner[a] > a) prod *= V[a].dot(V[s.partner[a]]);
        sum += prod;
    }
    return sum / std::sqrt(pi_weight(x, N));
}

AnsatzEvaluation ansatz_evaluate(const Configuration& x, const Configuration& y, const TestVectors& V, int N,
                                 const CovarianceForm& cov) {
    check_inputs(x, V, N);
    require(y.size() == x.size(), "ansatz: x and y must have the same length");
    require(is_even(y, N), "ansatz: y must have even occupations");
    AnsatzEvaluation out;
    for (const auto& s : matchings(static_cast<int>(x.size()), x))
        out.value += matching_product(s, y, V, cov, &out.negative_pair_factor);
    out.value /= std::sqrt(pi_weight(x, N));
    return out;
}

double ansatz_F(const Configuration& x, const Configuration& y, const TestVectors& V, int N,
                const CovarianceForm& cov) {
    return ansatz_evaluate(x, y, V, N, cov).value;
}

double ansatz_F(const Configuration& x, const Configuration& y, const TestVectors& V,
                const FreeConvolutionProfile& profile) {
    return ansatz_F(x, y, V, profile.size(), profile_covariance(profile));
}

std::vector<double> ansatz_coefficients(const Configuration& y, const TestVectors& V, int N,
                                        const CovarianceForm& cov) {
    require(y.size() == V.size(), "one test vector per particle required");
    require(is_even(y, N), "ansatz: y must have even occupations");
    validate_test_vectors(V, N);
    std::vector<double> coef;
    for (const auto& s : matchings(static_cast<int>(y.size()))) coef.push_back(matching_product(s, y, V, cov, nullptr));
    return coef;
}

Vector ansatz_function(const ConfigurationSpace& space, const Configuration& y, const TestVectors& V,
                       const CovarianceForm& cov) {
    Vector f(static_cast<Eigen::Index>(space.size()));
    for (std::size_t k = 0; k < space.size(); ++k)
        f[static_cast<Eigen::Index>(k)] = ansatz_F(space.config(k), y, V, space.sites(), cov);
    return f;
}

Vector chi_combination(const ConfigurationSpace& space, const std::vector<double>& coef) {
    const auto ms = matchings(space.particles());
    require(coef.size() == ms.size(), "one coefficient per perfect matching required");
    Vector f = Vector::Zero(static_cast<Eigen::Index>(space.size()));
    for (std::size_t s = 0; s < ms.size(); ++s) f += coef[s] * chi_indicator(space, ms[s]);
    return f;
}

} // namespace cemf
