#include "cemf/spectral.hpp"

#include <Eigen/Eigenvalues>
#include <lapacke.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace cemf {

void apply_sign_convention(Matrix& frame) {
    for (Eigen::Index k = 0; k < frame.cols(); ++k) {
        Eigen::Index arg = 0;
        frame.col(k).cwiseAbs().maxCoeff(&arg);
        if (frame(arg, k) < 0.0) frame.col(k) *= -1.0;
    }
}

SpectralDecomposition eig_sym(const SymmetricMatrix& H) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(H.matrix());
    if (solver.info() != Eigen::Success) {
        std::ostringstream os;
        os << "eig_sym: eigensolver did not converge (N=" << H.size() << ")";
        throw Error(os.str());
    }
    SpectralDecomposition dec{solver.eigenvalues(), solver.eigenvectors()};
    apply_sign_convention(dec.frame);
    return dec;
}

SpectralDecomposition eig_sym_range(const SymmetricMatrix& H, int lo, int hi) {
    const int N = H.size();
    require(0 <= lo && lo <= hi && hi < N, "eig_sym_range: index range out of bounds");
    Matrix a = H.matrix();
    const int count = hi - lo + 1;
    Vector w(N);
    Matrix z(N, count);
    std::vector<lapack_int> support(2 * static_cast<std::size_t>(count));
    lapack_int found = 0;
    const lapack_int info = LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'V', 'I', 'U', N, a.data(), N, 0.0, 0.0, lo + 1,
                                           hi + 1, 0.0, &found, w.data(), z.data(), N, support.data());
    if (info != 0 || found != count) {
        std::ostringstream os;
        os << "eig_sym_range: LAPACK dsyevr failed (info=" << info << ", found=" << found << ")";
        throw Error(os.str());
    }
    SpectralDecomposition dec{w.head(count), z};
    apply_sign_convention(dec.frame);
    return dec;
}

Complex stieltjes_at(const Vector& eigenvalues, Complex zeta) {
    Complex acc = 0.0;
    for (Eigen::Index k = 0; k < eigenvalues.size(); ++k) acc += 1.0 / (eigenvalues[k] - zeta);
    return acc / static_cast<double>(eigenvalues.size());
}

Complex stieltjes(const SpectralDecomposition& dec, HalfPlanePoint z) {
    if (!(z.eta > 0.0)) throw Error("boundary evaluation requires free convolution");
    return stieltjes_at(dec.eigenvalues, z.z());
}

namespace {

void require_unit(const Vector& v, const char* name) {
    if (std::abs(v.norm() - 1.0) > 1e-10) throw Error(std::string("green_form: ") + name + " is not a unit vector");
}

struct ResolventSums {
    Complex m;  // (1/N) sum 1/(lambda - zeta)
    Complex dm; // (1/N) sum 1/(lambda - zeta)^2, the zeta-derivative of m
};

ResolventSums resolvent_sums(const Vector& lam, Complex zeta) {
    Complex m = 0.0, dm = 0.0;
    for (Eigen::Index k = 0; k < lam.size(); ++k) {
        const Complex g = 1.0 / (lam[k] - zeta);
        m += g;
        dm += g * g;
    }
    const double n = static_cast<double>(lam.size());
    return {m / n, dm / n};
}

bool finite(Complex c) { return std::isfinite(c.real()) && std::isfinite(c.imag()); }

std::optional<FixedPoint> iterate_fixed_point(const Vector& lam, double t, Complex z, Complex m,
                                              const FreeConvolutionSettings& s, double& last_residual) {
    constexpr double kNewtonRadius = 1e-3;
    last_residual = INFINITY;
    for (int it = 0; it <= s.max_iterations; ++it) {
        const ResolventSums ev = resolvent_sums(lam, z + t * m);
        if (!finite(ev.m)) return std::nullopt;
        const Complex F = m - ev.m;
        const double res = std::abs(F);
        last_residual = res;
        if (res <= s.tolerance) return FixedPoint{m, res, it, false};
        if (res < kNewtonRadius) {
            const Complex deriv = 1.0 - t * ev.dm;
            if (std::abs(deriv) > 1e-14) {
                Complex cand = m - F / deriv;
                if (cand.imag() < 0.0) cand.imag(0.0);
                const Complex at = resolvent_sums(lam, z + t * cand).m;
                if (finite(at) && std::abs(cand - at) < res) {
                    m = cand;
                    continue;
                }
            }
        }
        m = (1.0 - s.damping) * m + s.damping * ev.m;
    }
    return std::nullopt;
}

} // namespace

Complex green_form(const SpectralDecomposition& dec, HalfPlanePoint z, const Vector& v, const Vector& w) {
    if (!(z.eta > 0.0)) throw Error("boundary evaluation requires free convolution");
    require(v.size() == dec.size() && w.size() == dec.size(), "green_form: vector size mismatch");
    require_unit(v, "v");
    require_unit(w, "w");
    const Vector pv = dec.frame.transpose() * v;
    const Vector pw = dec.frame.transpose() * w;
    Complex acc = 0.0;
    for (int k = 0; k < dec.size(); ++k) acc += pv[k] * pw[k] / (dec.eigenvalues[k] - z.z());
    return acc;
}

void RegularityWindow::validate(int N) const {
    require(kappa > 0.0 && kappa < 1.0, "regularity window: kappa must lie in (0,1)");
    require(r > 0.0, "regularity window: r must be positive");
    require(eta_star >= 1.0 / N && eta_star <= r, "regularity window: need 1/N <= eta_star <= r");
    require(C >= 1.0, "regularity window: C must be at least 1");
}

void to_json(nlohmann::json& j, const RegularityWindow& w) {
    j = nlohmann::json{{"E0", w.E0}, {"r", w.r}, {"eta_star", w.eta_star}, {"kappa", w.kappa}, {"C", w.C}};
}

void from_json(const nlohmann::json& j, RegularityWindow& w) {
    w.E0 = j.value("E0", 0.0);
    w.r = j.value("r", 1.0);
    w.eta_star = j.value("eta_star", 0.01);
    w.kappa = j.value("kappa", 0.5);
    w.C = j.value("C", 4.0);
}

FixedPoint solve_free_convolution(const Vector& lam, double t, HalfPlanePoint z, const FreeConvolutionSettings& s,
                                  std::optional<Complex> warm_start) {
    require(t > 0.0, "free convolution requires t > 0");
    require(z.eta >= 0.0, "free convolution requires eta >= 0");
    double residual = INFINITY;
    if (warm_start && warm_start->imag() >= 0.0) {
        if (auto fp = iterate_fixed_point(lam, t, z.z(), *warm_start, s, residual)) return *fp;
    }
    const Complex guess = stieltjes_at(lam, z.z() + Complex(0.0, t));
    if (auto fp = iterate_fixed_point(lam, t, z.z(), guess, s, residual)) return *fp;
    if (z.eta == 0.0) {
        const Complex lifted(z.E, s.restart_eta);
        const Complex guess2 = stieltjes_at(lam, lifted + Complex(0.0, t));
        if (auto fp = iterate_fixed_point(lam, t, lifted, guess2, s, residual)) {
            fp->restarted = true;
            return *fp;
        }
    }
    std::ostringstream os;
    os << "free convolution fixed point did not converge at z = " << z.E << " + " << z.eta
       << "i; last residual " << residual;
    throw Error(os.str());
}

FreeConvolutionProfile::FreeConvolutionProfile(SpectralDecomposition reference, double t,
                                               FreeConvolutionSettings settings)
    : ref_(std::move(reference)), t_(t), settings_(settings) {
    require(t_ > 0.0, "free convolution profile requires t > 0");
    require(ref_.size() >= 1, "free convolution profile requires a nonempty spectrum");
    require(settings_.grid_subdivisions >= 1, "grid_subdivisions must be positive");
}

FixedPoint FreeConvolutionProfile::m(HalfPlanePoint z) const {
    std::lock_guard lock(mutex_);
    const auto key = std::make_pair(z.E, z.eta);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    FixedPoint fp = solve_free_convolution(ref_.eigenvalues, t_, z, settings_);
    cache_.emplace(key, fp);
    return fp;
}

double FreeConvolutionProfile::max_cached_residual() const {
    std::lock_guard lock(mutex_);
    double worst = 0.0;
    for (const auto& [key, fp] : cache_) worst = std::max(worst, fp.residual);
    return worst;
}

const FreeConvolutionProfile::Quadrature& FreeConvolutionProfile::quadrature_locked() const {
    if (quad_) return *quad_;
    const double lo = ref_.eigenvalues.minCoeff() - 2.0 * std::sqrt(t_) - 1.0;
    const double hi = ref_.eigenvalues.maxCoeff() + 2.0 * std::sqrt(t_) + 1.0;
    Quadrature q;
    q.start = lo;
    q.step = std::min(t_, 1.0) / settings_.grid_subdivisions;
    const auto nodes = static_cast<std::size_t>(std::ceil((hi - lo) / q.step)) + 1;
    q.density.resize(nodes);
    q.cumulative.resize(nodes);
    std::optional<Complex> warm;
    for (std::size_t k = 0; k < nodes; ++k) {
        const double E = lo + static_cast<double>(k) * q.step;
        const FixedPoint fp = solve_free_convolution(ref_.eigenvalues, t_, {E, 0.0}, settings_, warm);
        q.density[k] = std::max(0.0, fp.m.imag()) / std::numbers::pi;
        warm = fp.m.imag() > 1e-8 ? std::optional<Complex>(fp.m) : std::nullopt;
    }
    q.cumulative[0] = 0.0;
    for (std::size_t k = 1; k < nodes; ++k)
        q.cumulative[k] = q.cumulative[k - 1] + 0.5 * q.step * (q.density[k - 1] + q.density[k]);
    const double total = q.cumulative.back();
    if (std::abs(total - 1.0) > 1e-3) {
        std::ostringstream os;
        os << "density integration failure: total mass " << total;
        throw Error(os.str());
    }
    quad_ = std::move(q);
    return *quad_;
}

double FreeConvolutionProfile::cumulative_locked(double E) const {
    const Quadrature& q = quadrature_locked();
    if (E <= q.start) return 0.0;
    const double x = (E - q.start) / q.step;
    const auto k = static_cast<std::size_t>(std::floor(x));
    if (k + 1 >= q.density.size()) return q.cumulative.back();
    const double d = E - (q.start + static_cast<double>(k) * q.step);
    const double slope = (q.density[k + 1] - q.density[k]) / q.step;
    return q.cumulative[k] + d * q.density[k] + 0.5 * slope * d * d;
}

double FreeConvolutionProfile::cumulative(double E) const {
    std::lock_guard lock(mutex_);
    return cumulative_locked(E);
}

const std::vector<double>& FreeConvolutionProfile::classical_locations() const {
    std::lock_guard lock(mutex_);
    if (gamma_) return *gamma_;
    const Quadrature& q = quadrature_locked();
    const int N = ref_.size();
    std::vector<double> gamma(N);
    std::size_t cell = 0;
    for (int i = 0; i < N; ++i) {
        const double level = (i + 0.5) / N;
        while (cell + 1 < q.cumulative.size() && q.cumulative[cell + 1] < level) ++cell;
        if (cell + 1 >= q.cumulative.size()) throw Error("density integration failure: quantile beyond grid");
        double a = q.start + static_cast<double>(cell) * q.step;
        double b = a + q.step;
        while (b - a > settings_.bisection_tolerance) {
            const double mid = 0.5 * (a + b);
            if (cumulative_locked(mid) >= level)
                b = mid;
            else
                a = mid;
        }
        gamma[i] = b;
    }
    gamma_ = std::move(gamma);
    return *gamma_;
}

const FreeConvolutionProfile::Shift& FreeConvolutionProfile::shift_locked(int i) const {
    if (auto it = shifts_.find(i); it != shifts_.end()) return it->second;
    require(i >= 0 && i < ref_.size(), "covariance_form: index out of range");
    const double g = classical_locations()[i];
    const FixedPoint fp = m({g, 0.0});
    if (fp.m.imag() < settings_.density_floor) {
        std::ostringstream os;
        os << "outside regular spectrum: Im m_fc = " << fp.m.imag() << " at classical location " << g;
        throw Error(os.str());
    }
    Shift s;
    s.zeta = Complex(g, 0.0) + t_ * fp.m;
    const int N = ref_.size();
    s.weights.resize(N);
    for (int k = 0; k < N; ++k) s.weights[k] = (1.0 / (ref_.eigenvalues[k] - s.zeta)).imag();
    // Normalizing by Im m_N at the same shifted point keeps (1/N) tr Lambda_i
    // equal to one up to rounding; at the fixed point it equals Im m_fc.
    s.weights /= s.weights.mean();
    return shifts_.emplace(i, std::move(s)).first->second;
}

double FreeConvolutionProfile::covariance_form(int i, const Vector& v, const Vector& w) const {
    require(v.size() == ref_.size() && w.size() == ref_.size(), "covariance_form: vector size mismatch");
    std::lock_guard lock(mutex_);
    const Shift& s = shift_locked(i);
    const Vector pv = ref_.frame.transpose() * v;
    const Vector pw = ref_.frame.transpose() * w;
    return (pv.array() * s.weights.array() * pw.array()).sum();
}

Matrix FreeConvolutionProfile::covariance_matrix(int i) const {
    std::lock_guard lock(mutex_);
    const Shift& s = shift_locked(i);
    return ref_.frame * s.weights.asDiagonal() * ref_.frame.transpose();
}

Complex FreeConvolutionProfile::shifted_point(int i) const {
    std::lock_guard lock(mutex_);
    return shift_locked(i).zeta;
}

Complex free_convolution_m(const FreeConvolutionProfile& profile, HalfPlanePoint z) { return profile.m(z).m; }

std::vector<double> classical_locations(const FreeConvolutionProfile& profile) {
    return profile.classical_locations();
}

double covariance_form(const FreeConvolutionProfile& profile, int i, const Vector& v, const Vector& w) {
    return profile.covariance_form(i, v, w);
}

void to_json(nlohmann::json& j, const AssumptionReport& r) {
    j = nlohmann::json{{"im_m_inf", r.im_m_inf},   {"im_m_sup", r.im_m_sup},   {"form_sup", r.form_sup},
                       {"form_budget", r.form_budget}, {"exponent", r.exponent}, {"C", r.C},
                       {"energies", r.energies},   {"scales", r.scales},       {"lower_ok", r.lower_ok},
                       {"upper_ok", r.upper_ok},   {"form_ok", r.form_ok},     {"pass", r.pass()}};
}

AssumptionReport verify_assumptions(const SpectralDecomposition& dec, const RegularityWindow& window,
                                    const std::vector<Vector>& S, double exponent, int energies, int scales) {
    const int N = dec.size();
    window.validate(N);
    require(energies >= 1 && scales >= 1, "verify_assumptions: grid must be nonempty");
    Matrix proj(N, static_cast<Eigen::Index>(S.size()));
    for (std::size_t a = 0; a < S.size(); ++a) {
        require(S[a].size() == N, "verify_assumptions: vector size mismatch");
        proj.col(static_cast<Eigen::Index>(a)) = dec.frame.transpose() * S[a];
    }
    AssumptionReport rep;
    rep.exponent = exponent;
    rep.C = window.C;
    rep.energies = energies;
    rep.scales = scales;
    rep.form_budget = std::pow(static_cast<double>(N), exponent);
    rep.im_m_inf = INFINITY;
    rep.im_m_sup = 0.0;
    Vector weights(N);
    for (int a = 0; a < energies; ++a) {
        const double E = energies == 1 ? window.E0
                                       : window.lower() + (window.upper() - window.lower()) * a / (energies - 1.0);
        for (int b = 0; b < scales; ++b) {
            const double eta = scales == 1 ? window.eta_star
                                           : window.eta_star * std::pow(1.0 / window.eta_star, b / (scales - 1.0));
            for (int k = 0; k < N; ++k) {
                const double d = dec.eigenvalues[k] - E;
                weights[k] = eta / (d * d + eta * eta);
            }
            const double im_m = weights.mean();
            rep.im_m_inf = std::min(rep.im_m_inf, im_m);
            rep.im_m_sup = std::max(rep.im_m_sup, im_m);
            if (proj.cols() > 0) {
                const Matrix form = proj.transpose() * weights.asDiagonal() * proj;
                rep.form_sup = std::max(rep.form_sup, form.cwiseAbs().maxCoeff());
            }
        }
    }
    rep.lower_ok = rep.im_m_inf >= 1.0 / window.C;
    rep.upper_ok = rep.im_m_sup <= window.C;
    rep.form_ok = rep.form_sup <= rep.form_budget;
    return rep;
}

} // namespace cemf
