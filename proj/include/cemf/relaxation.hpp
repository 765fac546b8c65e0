#pragma once

#include "cemf/configspace.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace cemf {

enum class ScheduleVariant { full, short_range, lattice };
std::string to_string(ScheduleVariant v);

// Time-dependent jump coefficients c(s, i, j) for the configuration-space
// generator, plus the decay rate upsilon when the heavy-tail lower bound
// c >= upsilon |i-j|^-2 is claimed.
class CoefficientSchedule {
public:
    using Evaluator = std::function<double(double s, int i, int j)>;

    CoefficientSchedule(int N, Evaluator evaluator, bool time_constant, std::string tag);

    static CoefficientSchedule constant(const CoefficientMatrix& c, std::string tag = "constant");
    // upsilon / |i-j|^2, with the rate declared.
    static CoefficientSchedule inverse_square(int N, double upsilon = 1.0);

    // c inside the window with |i-j| <= ell, zero otherwise.
    CoefficientSchedule short_range(int ell, const std::vector<int>& window) const;
    // c inside the window with |i-j| <= ell, N/|i-j|^2 otherwise.
    CoefficientSchedule lattice(int ell, const std::vector<int>& window) const;
    CoefficientSchedule scaled(double factor) const;
    CoefficientSchedule with_rate(double upsilon) const;

    double operator()(double s, int i, int j) const;
    CoefficientMatrix at(double s) const;

    int sites() const { return N_; }
    bool time_constant() const { return time_constant_; }
    const std::string& tag() const { return tag_; }
    ScheduleVariant variant() const { return variant_; }
    int ell() const { return ell_; }
    const std::optional<double>& rate() const { return rate_; }

    // Checks c(s,i,j) >= upsilon |i-j|^-2 on all pairs at the given times.
    // False when no rate is declared.
    bool heavytail_holds(const std::vector<double>& times) const;

private:
    int N_;
    Evaluator eval_;
    bool time_constant_;
    std::string tag_;
    ScheduleVariant variant_ = ScheduleVariant::full;
    int ell_ = 0;
    std::optional<double> rate_;
};

// exp(sB) for a pi-self-adjoint B through the eigendecomposition of
// Pi^{1/2} B Pi^{-1/2}.
class Semigroup {
public:
    Semigroup(const WeightedOperator& generator, const Vector& pi);
    Matrix matrix(double s) const;
    Vector apply(double s, const Vector& f) const;
    const Vector& rates() const { return eigenvalues_; }

private:
    Vector sqrt_pi_;
    Vector eigenvalues_;
    Matrix Q_;
};

enum class PropagationMethod { automatic, exact, rk4 };

struct PropagationResult {
    std::vector<double> times;
    std::vector<Vector> snapshots;
    std::vector<double> l1, l2, linf;
};

double norm_l1(const Vector& f, const Vector& pi);
double norm_l2(const Vector& f, const Vector& pi);

// Snapshots at s1 + k (s2-s1)/steps.  The exact path needs a time-constant
// schedule; RK4 requires steps >= 4 (s2-s1) |B|_inf.
PropagationResult propagate(const ConfigurationSpace& space, const CoefficientSchedule& schedule, const Vector& f0,
                            double s1, double s2, int steps, PropagationMethod method = PropagationMethod::automatic);

// Full propagator U(s1,s2) in the function representation.
Matrix propagator(const ConfigurationSpace& space, const CoefficientSchedule& schedule, double s1, double s2,
                  int steps = 0, PropagationMethod method = PropagationMethod::automatic);

// Smallest RK4 step count that meets the stability bound on [s1, s2].
int stable_steps(const ConfigurationSpace& space, const CoefficientSchedule& schedule, double s1, double s2);

// <f, -B f>_pi
double dirichlet_form(const ConfigurationSpace& space, const WeightedOperator& generator, const Vector& f);
// 1/2 sum_{x != y} pi(x) pi(y) B_xy (f(x) - f(y))^2 with B_xy the delta pairing.
double dirichlet_form_pairs(const ConfigurationSpace& space, const WeightedOperator& generator, const Vector& f);

struct PoincareResult {
    double constant = 0.0;
    bool applicable = true; // false when the heavy-tail claim fails
    std::size_t neighborhood = 0;
};

inline constexpr std::size_t kMaxDenseNeighborhood = 3000;

// sup_f sum pi |f - P f|^2 / D_{y,ell}(f) over the local neighborhood.
PoincareResult poincare_constant(const ConfigurationSpace& space, const Configuration& y, int ell,
                                 const CoefficientSchedule& schedule, double s = 0.0);

// upsilon |f - K f|_2^{2+4/n} / (D(f) |f|_1^{4/n}); zero for kernel elements.
double nash_ratio(const ConfigurationSpace& space, const WeightedOperator& generator, const WeightedOperator& kernel,
                  double upsilon, const Vector& f);
double nash_ratio(const ConfigurationSpace& space, const CoefficientSchedule& schedule, double s, double upsilon,
                  const Vector& f);

// max_x sqrt(sum_y A[x,y]^2 / pi(y))
double norm_2_inf(const Matrix& A, const Vector& pi);
// max_y sum_x pi(x) |A[x,y]| / pi(y)
double norm_1_1(const Matrix& A, const Vector& pi);

struct CurveFit {
    double slope = 0.0;
    double intercept = 0.0;
    std::size_t points = 0;
};
// Least-squares fit of log(value) against log(s) for s in [lo, hi].
CurveFit loglog_fit(const std::vector<double>& s, const std::vector<double>& value, double lo, double hi);

struct UltracontractivityCurve {
    std::vector<double> s;
    std::vector<double> norm;
    std::vector<double> envelope; // running minimum
    bool monotone = false;
    CurveFit fit;
    bool applicable = true;
};

UltracontractivityCurve ultracontractivity_curve(const ConfigurationSpace& space, const CoefficientSchedule& schedule,
                                                 double upsilon, const std::vector<double>& s_grid, double fit_lo,
                                                 double fit_hi);

struct FspEntry {
    std::size_t index;
    int distance;
    double value; // |<delta_x, U_S delta_y>|
};

struct FspProfile {
    std::vector<FspEntry> entries;
    std::vector<double> envelope; // max value per distance
    std::vector<int> counts;      // configurations per distance, 0 for empty bins
    // Envelope nonincreasing across populated distance bins. Far entries sit
    // at double roundoff, hence the absolute slack.
    bool envelope_monotone(double rel_tol = 1e-12, double abs_tol = 1e-13) const;
    double max_beyond(int distance) const;
};

// Short-range propagator column for delta_y against the regular
// configuration distance.
FspProfile fsp_profile(const ConfigurationSpace& space, const Configuration& y, int ell, const std::vector<int>& window,
                       double s1, double s2, const CoefficientSchedule& base);

struct L1Growth {
    std::vector<double> s;
    std::vector<double> norm;
};

L1Growth l1_growth(const ConfigurationSpace& space, const CoefficientSchedule& schedule,
                   const std::vector<double>& s_grid, GeneratorPart part = GeneratorPart::full);

} // namespace cemf
