#include "cemf/relaxation.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace cemf {

std::string to_string(ScheduleVariant v) {
    switch (v) {
    case ScheduleVariant::full: return "full";
    case ScheduleVariant::short_range: return "short-range";
    case ScheduleVariant::lattice: return "lattice";
    }
    return "unknown";
}

// ---------------------------------------------------------------- schedules

CoefficientSchedule::CoefficientSchedule(int N, Evaluator evaluator, bool time_constant, std::string tag)
    : N_(N), eval_(std::move(evaluator)), time_constant_(time_constant), tag_(std::move(tag)) {
    require(N >= 1, "schedule needs at least one site");
    require(static_cast<bool>(eval_), "schedule needs an evaluator");
}

CoefficientSchedule CoefficientSchedule::constant(const CoefficientMatrix& c, std::string tag) {
    validate_coefficients(c, static_cast<int>(c.rows()));
    return CoefficientSchedule(static_cast<int>(c.rows()), [c](double, int i, int j) { return c(i, j); }, true,
                               std::move(tag));
}

CoefficientSchedule CoefficientSchedule::inverse_square(int N, double upsilon) {
    require(upsilon > 0.0, "decay rate must be positive");
    CoefficientSchedule s(
        N,
        [upsilon](double, int i, int j) {
            if (i == j) return 0.0;
            const double d = i - j;
            return upsilon / (d * d);
        },
        true, "inverse-square");
    s.rate_ = upsilon;
    return s;
}

namespace {

std::vector<char> window_mask(int N, const std::vector<int>& window) {
    std::vector<char> mask(N, 0);
    for (int i : window) {
        require(i >= 0 && i < N, "window index out of range");
        mask[i] = 1;
    }
    return mask;
}

} // namespace

CoefficientSchedule CoefficientSchedule::short_range(int ell, const std::vector<int>& window) const {
    require(ell >= 0, "cutoff length must be nonnegative");
    auto mask = window_mask(N_, window);
    auto base = eval_;
    CoefficientSchedule s(
        N_,
        [base, mask, ell](double t, int i, int j) {
            if (i == j || !mask[i] || !mask[j] || std::abs(i - j) > ell) return 0.0;
            return base(t, i, j);
        },
        time_constant_, tag_ + "/short-range");
    s.variant_ = ScheduleVariant::short_range;
    s.ell_ = ell;
    return s;
}

CoefficientSchedule CoefficientSchedule::lattice(int ell, const std::vector<int>& window) const {
    require(ell >= 0, "cutoff length must be nonnegative");
    auto mask = window_mask(N_, window);
    auto base = eval_;
    const double N = N_;
    CoefficientSchedule s(
        N_,
        [base, mask, ell, N](double t, int i, int j) {
            if (i == j) return 0.0;
            if (mask[i] && mask[j] && std::abs(i - j) <= ell) return base(t, i, j);
            const double d = i - j;
            return N / (d * d);
        },
        time_constant_, tag_ + "/lattice");
    s.variant_ = ScheduleVariant::lattice;
    s.ell_ = ell;
    return s;
}

CoefficientSchedule CoefficientSchedule::scaled(double factor) const {
    require(factor > 0.0, "schedule scale factor must be positive");
    auto base = eval_;
    CoefficientSchedule s(
        N_, [base, factor](double t, int i, int j) { return factor * base(t, i, j); }, time_constant_, tag_);
    s.variant_ = variant_;
    s.ell_ = ell_;
    if (rate_) s.rate_ = *rate_ * factor;
    return s;
}

CoefficientSchedule CoefficientSchedule::with_rate(double upsilon) const {
    require(upsilon > 0.0, "decay rate must be positive");
    CoefficientSchedule s = *this;
    s.rate_ = upsilon;
    return s;
}

double CoefficientSchedule::operator()(double s, int i, int j) const { return eval_(s, i, j); }

CoefficientMatrix CoefficientSchedule::at(double s) const {
    CoefficientMatrix c = CoefficientMatrix::Zero(N_, N_);
    for (int i = 0; i < N_; ++i)
        for (int j = i + 1; j < N_; ++j) {
            const double a = eval_(s, i, j);
            const double b = eval_(s, j, i);
            if (a != b) {
                std::ostringstream os;
                os << "schedule not symmetric at s=" << s << " (" << i << "," << j << ")";
                throw Error(os.str());
            }
            c(i, j) = c(j, i) = a;
        }
    validate_coefficients(c, N_);
    return c;
}

bool CoefficientSchedule::heavytail_holds(const std::vector<double>& times) const {
    if (!rate_) return false;
    for (double s : times)
        for (int i = 0; i < N_; ++i)
            for (int j = i + 1; j < N_; ++j) {
                const double d = j - i;
                if (eval_(s, i, j) < *rate_ / (d * d) * (1.0 - 1e-12)) return false;
            }
    return true;
}

// ---------------------------------------------------------------- semigroup

Semigroup::Semigroup(const WeightedOperator& generator, const Vector& pi) {
    require(generator.is_pi_self_adjoint(), "exact semigroup needs a pi-self-adjoint generator");
    require(static_cast<std::size_t>(pi.size()) == generator.size(), "semigroup: measure size mismatch");
    sqrt_pi_ = pi.cwiseSqrt();
    Matrix S = pi_symmetrize(generator.dense(), pi);
    S = 0.5 * (S + S.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(S);
    require(eig.info() == Eigen::Success, "semigroup eigensolve failed");
    eigenvalues_ = eig.eigenvalues();
    Q_ = eig.eigenvectors();
}

Matrix Semigroup::matrix(double s) const {
    if (s == 0.0) return Matrix::Identity(Q_.rows(), Q_.rows());
    const Vector e = (s * eigenvalues_.array()).exp().matrix();
    const Matrix inner = Q_ * e.asDiagonal() * Q_.transpose();
    return sqrt_pi_.cwiseInverse().asDiagonal() * inner * sqrt_pi_.asDiagonal();
}

Vector Semigroup::apply(double s, const Vector& f) const {
    if (s == 0.0) return f;
    const Vector e = (s * eigenvalues_.array()).exp().matrix();
    Vector g = Q_.transpose() * sqrt_pi_.cwiseProduct(f);
    g = e.cwiseProduct(g);
    return (Q_ * g).cwiseQuotient(sqrt_pi_);
}

// ---------------------------------------------------------------- propagation

double norm_l1(const Vector& f, const Vector& pi) { return pi.dot(f.cwiseAbs()); }
double norm_l2(const Vector& f, const Vector& pi) { return std::sqrt(pi.dot(f.cwiseAbs2())); }

namespace {

Matrix apply_matrix(const WeightedOperator& op, const Matrix& M) {
    if (op.is_dense()) return op.dense() * M;
    return op.sparse() * M;
}

Vector apply_any(const WeightedOperator& op, const Vector& v) { return op.apply(v); }
Matrix apply_any(const WeightedOperator& op, const Matrix& M) { return apply_matrix(op, M); }

std::string step_message(double s1, double s2, double norm) {
    const int suggested = static_cast<int>(std::ceil(4.0 * (s2 - s1) * norm)) + 1;
    std::ostringstream os;
    os << "RK4 stability bound violated: |B|_inf = " << norm << " on [" << s1 << ", " << s2
       << "]; use at least " << suggested << " steps";
    return os.str();
}

// Classical RK4 with the operator reassembled at every stage time.  Stage
// operators at the step end are reused as the next step's start.
template <class State>
std::vector<State> rk4(const ConfigurationSpace& space, const CoefficientSchedule& schedule, GeneratorPart part,
                       const State& x0, double s1, double s2, int steps, bool keep_all) {
    std::vector<State> out;
    out.push_back(x0);
    if (s2 == s1) return out;
    const double h = (s2 - s1) / steps;
    auto assemble = [&](double s) {
        WeightedOperator B = assemble_generator(space, schedule.at(s), part);
        const double norm = B.inf_norm();
        if (4.0 * h * norm > 1.0 + 1e-12) throw Error(step_message(s1, s2, norm));
        return B;
    };
    State x = x0;
    WeightedOperator B0 = assemble(s1);
    for (int k = 0; k < steps; ++k) {
        const double s = s1 + k * h;
        const double s_next = k + 1 == steps ? s2 : s1 + (k + 1) * h;
        if (schedule.time_constant()) {
            const State k1 = apply_any(B0, x);
            const State k2 = apply_any(B0, State(x + 0.5 * h * k1));
            const State k3 = apply_any(B0, State(x + 0.5 * h * k2));
            const State k4 = apply_any(B0, State(x + h * k3));
            x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        } else {
            const WeightedOperator Bm = assemble(s + 0.5 * h);
            WeightedOperator B1 = assemble(s_next);
            const State k1 = apply_any(B0, x);
            const State k2 = apply_any(Bm, State(x + 0.5 * h * k1));
            const State k3 = apply_any(Bm, State(x + 0.5 * h * k2));
            const State k4 = apply_any(B1, State(x + h * k3));
            x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            B0 = std::move(B1);
        }
        if (keep_all || k + 1 == steps) out.push_back(x);
    }
    return out;
}

bool use_exact(const CoefficientSchedule& schedule, PropagationMethod method) {
    if (method == PropagationMethod::exact) {
        require(schedule.time_constant(), "exact propagation needs a time-constant schedule");
        return true;
    }
    return method == PropagationMethod::automatic && schedule.time_constant();
}

} // namespace

int stable_steps(const ConfigurationSpace& space, const CoefficientSchedule& schedule, double s1, double s2) {
    require(s2 >= s1, "propagation needs s2 >= s1");
    if (s2 == s1) return 1;
    const int probes = schedule.time_constant() ? 1 : 33;
    double worst = 0.0;
    for (int k = 0; k < probes; ++k) {
        const double s = probes == 1 ? s1 : s1 + (s2 - s1) * k / (probes - 1);
        worst = std::max(worst, assemble_generator(space, schedule.at(s)).inf_norm());
    }
    // Margin for coefficients peaking between probes.
    return std::max(1, static_cast<int>(std::ceil(4.0 * (s2 - s1) * worst * 1.25)));
}

PropagationResult propagate(const ConfigurationSpace& space, const CoefficientSchedule& schedule, const Vector& f0,
                            double s1, double s2, int steps, PropagationMethod method) {
    require(s2 >= s1, "propagation needs s2 >= s1");
    require(steps >= 1, "propagation needs at least one step");
    require(static_cast<std::size_t>(f0.size()) == space.size(), "propagate: function size mismatch");
    require(schedule.sites() == space.sites(), "propagate: schedule size mismatch");
    PropagationResult r;
    const double h = (s2 - s1) / steps;
    for (int k = 0; k <= steps; ++k) r.times.push_back(k == steps ? s2 : s1 + k * h);
    if (s2 == s1) {
        r.times.resize(1);
        r.snapshots.push_back(f0);
    } else if (use_exact(schedule, method)) {
        const Semigroup U(assemble_generator(space, schedule.at(s1)), space.pi());
        r.snapshots.push_back(f0);
        for (int k = 1; k <= steps; ++k) r.snapshots.push_back(U.apply(r.times[k] - s1, f0));
    } else {
        r.snapshots = rk4<Vector>(space, schedule, GeneratorPart::full, f0, s1, s2, steps, true);
    }
    const Vector& pi = space.pi();
    for (const auto& f : r.snapshots) {
        r.l1.push_back(norm_l1(f, pi));
        r.l2.push_back(norm_l2(f, pi));
        r.linf.push_back(f.cwiseAbs().maxCoeff());
    }
    return r;
}

namespace {

Matrix propagator_part(const ConfigurationSpace& space, const CoefficientSchedule& schedule, GeneratorPart part,
                       double s1, double s2, int steps, PropagationMethod method) {
    require(s2 >= s1, "propagation needs s2 >= s1");
    const auto size = static_cast<Eigen::Index>(space.size());
    if (s2 == s1) return Matrix::Identity(size, size);
    if (use_exact(schedule, method)) {
        WeightedOperator B = assemble_generator(space, schedule.at(s1), part);
        if (B.is_pi_self_adjoint()) return Semigroup(B, space.pi()).matrix(s2 - s1);
        require(method != PropagationMethod::exact, "exact propagation needs a pi-self-adjoint generator");
    }
    if (steps <= 0) steps = stable_steps(space, schedule, s1, s2);
    const Matrix I = Matrix::Identity(size, size);
    return rk4<Matrix>(space, schedule, part, I, s1, s2, steps, false).back();
}

} // namespace

Matrix propagator(const ConfigurationSpace& space, const CoefficientSchedule& schedule, double s1, double s2,
                  int steps, PropagationMethod method) {
    return propagator_part(space, schedule, GeneratorPart::full, s1, s2, steps, method);
}

// ---------------------------------------------------------------- Dirichlet forms

double dirichlet_form(const ConfigurationSpace& space, const WeightedOperator& generator, const Vector& f) {
    require(generator.is_pi_self_adjoint(), "Dirichlet form needs a pi-self-adjoint generator");
    require(static_cast<std::size_t>(f.size()) == space.size(), "dirichlet_form: function size mismatch");
    return -f.dot(space.pi().cwiseProduct(generator.apply(f)));
}

double dirichlet_form_pairs(const ConfigurationSpace& space, const WeightedOperator& generator, const Vector& f) {
    require(static_cast<std::size_t>(f.size()) == space.size(), "dirichlet_form_pairs: function size mismatch");
    const Vector& pi = space.pi();
    double total = 0.0;
    const auto S = generator.sparse();
    for (Eigen::Index x = 0; x < S.outerSize(); ++x)
        for (WeightedOperator::Sparse::InnerIterator it(S, x); it; ++it) {
            if (it.col() == x) continue;
            const double d = f[x] - f[it.col()];
            total += pi[x] * it.value() * d * d;
        }
    return 0.5 * total;
}

// ---------------------------------------------------------------- Poincare

PoincareResult poincare_constant(const ConfigurationSpace& space, const Configuration& y, int ell,
                                 const CoefficientSchedule& schedule, double s) {
    require(schedule.sites() == space.sites(), "poincare_constant: schedule size mismatch");
    PoincareResult result;
    result.applicable = schedule.heavytail_holds({s});
    const auto nb = local_neighborhood(space, y, ell);
    const std::size_t m = nb.members.size();
    result.neighborhood = m;
    if (m > kMaxDenseNeighborhood) {
        std::ostringstream os;
        os << "neighborhood too large for dense solve: " << m << " configurations (limit " << kMaxDenseNeighborhood
           << ")";
        throw Error(os.str());
    }

    // Coefficients restricted to equivalent site pairs; jumps along them keep
    // the neighborhood closed.
    CoefficientMatrix c = schedule.at(s);
    for (int i = 0; i < space.sites(); ++i)
        for (int j = 0; j < space.sites(); ++j)
            if (nb.site_class[i] < 0 || nb.site_class[i] != nb.site_class[j]) c(i, j) = 0.0;
    const WeightedOperator B = assemble_generator(space, c);
    const WeightedOperator P = local_projection(space, y, ell);

    const auto mi = static_cast<Eigen::Index>(m);
    Matrix Bl(mi, mi), Pl(mi, mi);
    Vector pl(mi);
    for (Eigen::Index a = 0; a < mi; ++a) {
        pl[a] = space.pi()[static_cast<Eigen::Index>(nb.members[a])];
        for (Eigen::Index b = 0; b < mi; ++b) {
            Bl(a, b) = B.entry(nb.members[a], nb.members[b]);
            Pl(a, b) = P.entry(nb.members[a], nb.members[b]);
        }
    }
    Matrix D = -(pl.asDiagonal() * Bl);
    D = 0.5 * (D + D.transpose()).eval();
    const Matrix R = Matrix::Identity(mi, mi) - Pl;
    Matrix A = R.transpose() * pl.asDiagonal() * R;
    A = 0.5 * (A + A.transpose()).eval();

    Eigen::SelfAdjointEigenSolver<Matrix> eig(D);
    require(eig.info() == Eigen::Success, "poincare_constant: eigensolve failed");
    const Vector& d = eig.eigenvalues();
    const double scale = std::max(d.cwiseAbs().maxCoeff(), 1e-300);
    std::vector<Eigen::Index> range, null;
    for (Eigen::Index k = 0; k < mi; ++k) (d[k] > 1e-10 * scale ? range : null).push_back(k);

    const double a_scale = std::max(A.cwiseAbs().maxCoeff(), 1e-300);
    if (!null.empty()) {
        Matrix V0(mi, static_cast<Eigen::Index>(null.size()));
        for (std::size_t k = 0; k < null.size(); ++k) V0.col(static_cast<Eigen::Index>(k)) = eig.eigenvectors().col(null[k]);
        const double leak = (V0.transpose() * A * V0).cwiseAbs().maxCoeff();
        if (leak > 1e-8 * a_scale && A.cwiseAbs().maxCoeff() > 1e-14) {
            std::ostringstream os;
            os << "Poincare ratio unbounded: deviation " << leak << " on the null space of the local Dirichlet form";
            throw Error(os.str());
        }
    }
    if (range.empty()) return result;
    Matrix W(mi, static_cast<Eigen::Index>(range.size()));
    for (std::size_t k = 0; k < range.size(); ++k)
        W.col(static_cast<Eigen::Index>(k)) = eig.eigenvectors().col(range[k]) / std::sqrt(d[range[k]]);
    Matrix M = W.transpose() * A * W;
    M = 0.5 * (M + M.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> top(M, Eigen::EigenvaluesOnly);
    result.constant = std::max(0.0, top.eigenvalues().maxCoeff());
    return result;
}

// ---------------------------------------------------------------- Nash

double nash_ratio(const ConfigurationSpace& space, const WeightedOperator& generator, const WeightedOperator& kernel,
                  double upsilon, const Vector& f) {
    require(upsilon > 0.0, "decay rate must be positive");
    const Vector& pi = space.pi();
    const double n = space.particles();
    const Vector g = f - kernel.apply(f);
    const double num = norm_l2(g, pi);
    if (num <= 1e-12 * std::max(norm_l2(f, pi), 1e-300)) return 0.0;
    const double D = dirichlet_form(space, generator, f);
    const double l1 = norm_l1(f, pi);
    return upsilon * std::pow(num, 2.0 + 4.0 / n) / (D * std::pow(l1, 4.0 / n));
}

double nash_ratio(const ConfigurationSpace& space, const CoefficientSchedule& schedule, double s, double upsilon,
                  const Vector& f) {
    return nash_ratio(space, assemble_generator(space, schedule.at(s)), kernel_projection(space), upsilon, f);
}

// ---------------------------------------------------------------- norms and curves

double norm_2_inf(const Matrix& A, const Vector& pi) {
    const Vector w = pi.cwiseInverse();
    double best = 0.0;
    for (Eigen::Index x = 0; x < A.rows(); ++x)
        best = std::max(best, std::sqrt(A.row(x).cwiseAbs2().dot(w.transpose())));
    return best;
}

double norm_1_1(const Matrix& A, const Vector& pi) {
    double best = 0.0;
    for (Eigen::Index y = 0; y < A.cols(); ++y) best = std::max(best, pi.dot(A.col(y).cwiseAbs()) / pi[y]);
    return best;
}

CurveFit loglog_fit(const std::vector<double>& s, const std::vector<double>& value, double lo, double hi) {
    require(s.size() == value.size(), "loglog_fit: length mismatch");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    CurveFit fit;
    for (std::size_t k = 0; k < s.size(); ++k) {
        if (s[k] < lo * (1 - 1e-12) || s[k] > hi * (1 + 1e-12)) continue;
        require(s[k] > 0.0 && value[k] > 0.0, "loglog_fit needs positive points");
        const double x = std::log(s[k]), y = std::log(value[k]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++fit.points;
    }
    require(fit.points >= 2, "loglog_fit needs at least two points in range");
    const double m = static_cast<double>(fit.points);
    fit.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    fit.intercept = (sy - fit.slope * sx) / m;
    return fit;
}

UltracontractivityCurve ultracontractivity_curve(const ConfigurationSpace& space, const CoefficientSchedule& schedule,
                                                 double upsilon, const std::vector<double>& s_grid, double fit_lo,
                                                 double fit_hi) {
    UltracontractivityCurve curve;
    curve.applicable = schedule.with_rate(upsilon).heavytail_holds(s_grid);
    const auto size = static_cast<Eigen::Index>(space.size());
    const Matrix IK = Matrix::Identity(size, size) - kernel_projection(space).dense();
    const Vector& pi = space.pi();
    std::vector<double> grid = s_grid;
    std::sort(grid.begin(), grid.end());
    std::optional<Semigroup> exact;
    if (schedule.time_constant()) exact.emplace(assemble_generator(space, schedule.at(0.0)), pi);
    for (double s : grid) {
        require(s >= 0.0, "ultracontractivity grid must be nonnegative");
        const Matrix U = exact ? exact->matrix(s) : propagator(space, schedule, 0.0, s);
        curve.s.push_back(s);
        curve.norm.push_back(norm_2_inf(IK * U, pi));
    }
    curve.monotone = true;
    double running = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < curve.norm.size(); ++k) {
        if (curve.norm[k] > running * (1 + 1e-10)) curve.monotone = false;
        running = std::min(running, curve.norm[k]);
        curve.envelope.push_back(running);
    }
    curve.fit = loglog_fit(curve.s, curve.norm, fit_lo, fit_hi);
    return curve;
}

// ---------------------------------------------------------------- finite speed

double FspProfile::max_beyond(int distance) const {
    double best = 0.0;
    for (const auto& e : entries)
        if (e.distance >= distance) best = std::max(best, e.value);
    return best;
}

bool FspProfile::envelope_monotone(double rel_tol, double abs_tol) const {
    double previous = std::numeric_limits<double>::infinity();
    for (std::size_t d = 0; d < envelope.size(); ++d) {
        if (counts[d] == 0) continue;
        if (envelope[d] > previous * (1 + rel_tol) + abs_tol) return false;
        previous = envelope[d];
    }
    return true;
}

FspProfile fsp_profile(const ConfigurationSpace& space, const Configuration& y, int ell, const std::vector<int>& window,
                       double s1, double s2, const CoefficientSchedule& base) {
    require(s2 >= s1, "fsp_profile needs s2 >= s1");
    const double N = space.sites();
    require(s2 - s1 <= ell / N * (1 + 1e-12), "fsp_profile: time window exceeds ell/N");
    std::vector<int> sorted = window;
    std::sort(sorted.begin(), sorted.end());
    const CoefficientSchedule S = base.short_range(ell, sorted);
    const std::size_t yi = space.index(y);
    Vector delta = Vector::Zero(static_cast<Eigen::Index>(space.size()));
    delta[static_cast<Eigen::Index>(yi)] = 1.0 / space.pi()[static_cast<Eigen::Index>(yi)];
    Vector h;
    if (S.time_constant()) {
        h = Semigroup(assemble_generator(space, S.at(s1)), space.pi()).apply(s2 - s1, delta);
    } else {
        h = propagate(space, S, delta, s1, s2, stable_steps(space, S, s1, s2)).snapshots.back();
    }
    FspProfile profile;
    for (std::size_t x = 0; x < space.size(); ++x) {
        const int d = config_distance(space.config(x), y, sorted);
        profile.entries.push_back({x, d, std::abs(h[static_cast<Eigen::Index>(x)])});
        if (static_cast<std::size_t>(d) >= profile.envelope.size()) {
            profile.envelope.resize(d + 1, 0.0);
            profile.counts.resize(d + 1, 0);
        }
        profile.envelope[d] = std::max(profile.envelope[d], profile.entries.back().value);
        ++profile.counts[d];
    }
    return profile;
}

// ---------------------------------------------------------------- L1 growth

L1Growth l1_growth(const ConfigurationSpace& space, const CoefficientSchedule& schedule,
                   const std::vector<double>& s_grid, GeneratorPart part) {
    L1Growth out;
    std::vector<double> grid = s_grid;
    std::sort(grid.begin(), grid.end());
    const Vector& pi = space.pi();
    const auto size = static_cast<Eigen::Index>(space.size());
    std::optional<Semigroup> exact;
    if (schedule.time_constant()) {
        WeightedOperator B = assemble_generator(space, schedule.at(0.0), part);
        if (B.is_pi_self_adjoint()) exact.emplace(B, pi);
    }
    // Time-dependent or non-reversible: chain propagators between grid points.
    Matrix U = Matrix::Identity(size, size);
    double last = 0.0;
    for (double s : grid) {
        require(s >= 0.0, "l1_growth grid must be nonnegative");
        if (exact) {
            U = exact->matrix(s);
        } else if (s > last) {
            U = propagator_part(space, schedule, part, last, s, stable_steps(space, schedule, last, s),
                                PropagationMethod::rk4) *
                U;
            last = s;
        }
        out.s.push_back(s);
        out.norm.push_back(norm_1_1(U, pi));
    }
    return out;
}

} // namespace cemf
