#pragma once

#include "cemf/configspace.hpp"
#include "cemf/spectral.hpp"

#include <functional>
#include <vector>

namespace cemf {

// n unit vectors v_1..v_n in dimension N.
using TestVectors = std::vector<Vector>;
void validate_test_vectors(const TestVectors& V, int N);

// <v, Lambda_i w> for a 0-based index i.
using CovarianceForm = std::function<double(int i, const Vector& v, const Vector& w)>;
CovarianceForm identity_covariance();
CovarianceForm profile_covariance(const FreeConvolutionProfile& profile);

// pi(x)^{-1/2} sum over stabilizing matchings of prod_{pairs} <v_a, v_sigma(a)>.
double gaussian_wick_moment(const Configuration& x, const TestVectors& V, int N);

struct AnsatzEvaluation {
    double value = 0.0;
    // Some stabilizing matching had a negative pair factor, where the signed
    // product and a literal square root of the full product disagree.
    bool negative_pair_factor = false;
};

// Signed pair-product form of F(x; y) with pair covariance
// (Lambda_{y_a} + Lambda_{y_sigma(a)}) / 2.
AnsatzEvaluation ansatz_evaluate(const Configuration& x, const Configuration& y, const TestVectors& V, int N,
                                 const CovarianceForm& cov);
double ansatz_F(const Configuration& x, const Configuration& y, const TestVectors& V, int N, const CovarianceForm& cov);
double ansatz_F(const Configuration& x, const Configuration& y, const TestVectors& V,
                const FreeConvolutionProfile& profile);

// coef(sigma, y) for every perfect matching in matchings(n) order, so that
// F(.; y) = sum_sigma coef(sigma, y) chi_sigma.
std::vector<double> ansatz_coefficients(const Configuration& y, const TestVectors& V, int N,
                                        const CovarianceForm& cov);
// x -> F(x; y) over the whole space.
Vector ansatz_function(const ConfigurationSpace& space, const Configuration& y, const TestVectors& V,
                       const CovarianceForm& cov);
// sum_sigma coef[sigma] chi_sigma
Vector chi_combination(const ConfigurationSpace& space, const std::vector<double>& coef);

} // namespace cemf
