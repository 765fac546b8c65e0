#include "cemf/flow.hpp"

#include "cemf/parallel.hpp"
#include "cemf/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace cemf {

namespace {

double min_gap(const Vector& lam) {
    double g = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 1; k < lam.size(); ++k) g = std::min(g, lam[k] - lam[k - 1]);
    return g;
}

void modified_gram_schmidt(Matrix& U) {
    for (Eigen::Index k = 0; k < U.cols(); ++k) {
        for (Eigen::Index j = 0; j < k; ++j) U.col(k) -= U.col(j).dot(U.col(k)) * U.col(j);
        const double norm = U.col(k).norm();
        if (!(norm > 0.0)) throw Error("integrate_see: frame lost rank during orthonormalization");
        U.col(k) /= norm;
    }
}

void see_step(Vector& lam, Matrix& U, double h, rng::Stream& gen, bool negate) {
    const Eigen::Index N = lam.size();
    const double sign = negate ? -1.0 : 1.0;
    const double sq = std::sqrt(h);
    const double rootN = std::sqrt(static_cast<double>(N));
    Matrix dB(N, N);
    for (Eigen::Index j = 0; j < N; ++j)
        for (Eigen::Index i = 0; i <= j; ++i) dB(i, j) = dB(j, i) = sign * sq * gen.normal();
    Matrix K = Matrix::Zero(N, N);
    Vector next = lam;
    for (Eigen::Index i = 0; i < N; ++i) {
        double repulsion = 0.0, decay = 0.0;
        for (Eigen::Index j = 0; j < N; ++j) {
            if (j == i) continue;
            const double d = lam[i] - lam[j];
            repulsion += 1.0 / d;
            decay += 1.0 / (d * d);
            K(j, i) = dB(i, j) / (rootN * d);
        }
        K(i, i) = -0.5 * h * decay / N;
        // Diagonal noise variance 2/N matches the GOE diagonal.
        next[i] += std::sqrt(2.0 / N) * dB(i, i) + h * repulsion / N;
    }
    for (Eigen::Index k = 1; k < N; ++k)
        if (!(next[k] > next[k - 1])) throw Error("eigenvalue collision: ordering lost within a step");
    const Matrix previous = U;
    U += previous * K;
    modified_gram_schmidt(U);
    for (Eigen::Index k = 0; k < N; ++k)
        if (U.col(k).dot(previous.col(k)) < 0.0) U.col(k) *= -1.0;
    lam = next;
}

} // namespace

EigenPath integrate_see(const SpectralDecomposition& dec0, double t, double dt, std::uint64_t seed,
                        const SeeOptions& options) {
    require(dt > 0.0, "integrate_see: dt must be positive");
    require(t >= 0.0, "integrate_see: t must be nonnegative");
    const int N = dec0.size();
    EigenPath path;
    Vector lam = dec0.eigenvalues;
    Matrix U = dec0.frame;
    path.times.push_back(0.0);
    path.eigenvalues.push_back(lam);
    path.frames.push_back(U);
    const double gap0 = min_gap(lam);
    if (gap0 < 10.0 * dt * N) {
        std::ostringstream os;
        os << "initial minimal gap " << gap0 << " is below 10*dt*N = " << 10.0 * dt * N;
        path.log.push_back(os.str());
    }
    if (t == 0.0) return path;
    rng::Stream gen(seed, rng::streams::see);
    double s = 0.0;
    while (t - s > 1e-14 * std::max(1.0, t)) {
        const double step = std::min(dt, t - s);
        double remaining = step;
        while (remaining > 0.0) {
            const double gap = min_gap(lam);
            if (gap < options.gap_floor) {
                std::ostringstream os;
                os << "eigenvalue collision: gap " << gap << " at s = " << s;
                throw Error(os.str());
            }
            double h = remaining;
            while (std::sqrt(h / N) > options.step_gap_ratio * gap) {
                h *= 0.5;
                ++path.halvings;
            }
            see_step(lam, U, h, gen, options.negate_noise);
            remaining -= h;
            if (remaining < 1e-15 * step) remaining = 0.0;
        }
        s += step;
        if (!options.endpoints_only || t - s <= 1e-14 * std::max(1.0, t)) {
            path.times.push_back(s);
            path.eigenvalues.push_back(lam);
            path.frames.push_back(U);
        }
    }
    if (path.halvings > 0) path.log.push_back("step halved " + std::to_string(path.halvings) + " times near small gaps");
    return path;
}

AlignedFrame align_frames(const Matrix& previous, const Matrix& current) {
    require(previous.rows() == current.rows() && previous.cols() == current.cols(), "align_frames: size mismatch");
    const int n = static_cast<int>(current.cols());
    const Matrix overlap = previous.transpose() * current;
    const Matrix weight = overlap.cwiseAbs();
    // Hungarian algorithm (potentials form) minimizing -|overlap|.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = -weight(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    AlignedFrame out;
    out.permutation.assign(n, 0);
    for (int j = 1; j <= n; ++j) out.permutation[p[j] - 1] = j - 1;
    out.frame.resize(current.rows(), n);
    for (int k = 0; k < n; ++k) {
        const int src = out.permutation[k];
        const double sgn = overlap(k, src) < 0.0 ? -1.0 : 1.0;
        out.frame.col(k) = sgn * current.col(src);
        for (int j = 0; j < n; ++j)
            if (j != src && std::abs(weight(k, j) - weight(k, src)) <= 1e-12) out.ambiguous = true;
    }
    return out;
}

double convention_scale(CoefficientConvention c) { return c == CoefficientConvention::ito ? 0.5 : 1.0; }

CoefficientMatrix see_coefficients(const Vector& lam, CoefficientConvention convention) {
    const Eigen::Index N = lam.size();
    const double scale = convention_scale(convention);
    CoefficientMatrix c = CoefficientMatrix::Zero(N, N);
    for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index j = i + 1; j < N; ++j) {
            const double d = lam[i] - lam[j];
            c(i, j) = c(j, i) = scale / (static_cast<double>(N) * d * d);
        }
    return c;
}

Vector moment_observable(const ConfigurationSpace& space, const Matrix& frame, const std::vector<Vector>& V) {
    const int n = space.particles();
    require(static_cast<int>(V.size()) == n, "moment_observable: need one vector per particle");
    const int N = space.sites();
    Matrix P(N, n);
    for (int a = 0; a < n; ++a) P.col(a) = frame.transpose() * V[a];
    P *= std::sqrt(static_cast<double>(N));
    Vector f(static_cast<Eigen::Index>(space.size()));
    for (std::size_t k = 0; k < space.size(); ++k) {
        const int* x = space.data(k);
        double prod = 1.0;
        for (int a = 0; a < n; ++a) prod *= P(x[a], a);
        f[static_cast<Eigen::Index>(k)] = prod / std::sqrt(space.pi()[static_cast<Eigen::Index>(k)]);
    }
    return f;
}

void to_json(nlohmann::json& j, const MomentRequest& r) {
    auto vecs = nlohmann::json::array();
    for (const auto& v : r.vectors) vecs.push_back(std::vector<double>(v.data(), v.data() + v.size()));
    j = nlohmann::json{{"x", r.x}, {"vectors", vecs}, {"ensemble", r.ensemble},
                       {"t", r.t}, {"trials", r.trials}, {"seed", r.seed}};
}

void from_json(const nlohmann::json& j, MomentRequest& r) {
    r = MomentRequest{};
    r.x = j.at("x").get<Configuration>();
    for (const auto& v : j.at("vectors")) {
        const auto raw = v.get<std::vector<double>>();
        r.vectors.push_back(Eigen::Map<const Vector>(raw.data(), static_cast<Eigen::Index>(raw.size())));
    }
    r.ensemble = j.at("ensemble").get<EnsembleSpec>();
    r.t = j.value("t", 0.0);
    r.trials = j.value("trials", std::size_t{1000});
    r.seed = j.value("seed", std::uint64_t{0});
}

OverlapSamples sample_overlaps(const EnsembleSpec& ensemble, const std::optional<SymmetricMatrix>& base, double t,
                               std::size_t trials, std::uint64_t seed, const std::vector<int>& indices,
                               const std::vector<Vector>& V, unsigned threads) {
    require(!indices.empty(), "sample_overlaps: need at least one eigenvector index");
    require(t >= 0.0, "sample_overlaps: t must be nonnegative");
    const int N = base ? base->size() : ensemble.N;
    for (int i : indices) require(i >= 0 && i < N, "sample_overlaps: eigenvector index out of range");
    for (const auto& v : V) require(v.size() == N, "sample_overlaps: vector size mismatch");
    const int lo = *std::min_element(indices.begin(), indices.end());
    const int hi = *std::max_element(indices.begin(), indices.end());
    Matrix Vm(N, static_cast<Eigen::Index>(V.size()));
    for (std::size_t k = 0; k < V.size(); ++k) Vm.col(static_cast<Eigen::Index>(k)) = V[k];

    OverlapSamples out;
    out.indices = indices;
    out.vectors = V.size();
    out.trials = trials;
    out.data.assign(trials * indices.size() * V.size(), 0.0);
    parallel_for(trials, threads, [&](std::size_t trial) {
        SymmetricMatrix H;
        if (base) {
            H = *base;
        } else {
            EnsembleSpec spec = ensemble;
            spec.seed = rng::derive(seed, trial, ensemble.seed);
            H = sample(spec);
        }
        const SymmetricMatrix Ht = perturb_gaussian(H, t, rng::derive(seed, trial, 0x5045525455524221ull));
        SpectralDecomposition dec;
        int offset = 0;
        if (hi - lo + 1 > N / 3) {
            dec = eig_sym(Ht);
        } else {
            dec = eig_sym_range(Ht, lo, hi);
            offset = lo;
        }
        const Matrix P = dec.frame.transpose() * Vm;
        double* row = out.data.data() + trial * indices.size() * V.size();
        for (std::size_t q = 0; q < indices.size(); ++q)
            for (std::size_t k = 0; k < V.size(); ++k)
                row[q * V.size() + k] = P(indices[q] - offset, static_cast<Eigen::Index>(k));
    });
    return out;
}

std::vector<double> moment_values(const OverlapSamples& s, const Configuration& x, int N) {
    require(is_even(x, N), "vanishes by sign symmetry: configuration has odd occupancy");
    require(x.size() <= s.vectors, "moment_values: more particles than vectors");
    std::vector<std::size_t> pos(x.size());
    for (std::size_t a = 0; a < x.size(); ++a) {
        auto it = std::find(s.indices.begin(), s.indices.end(), x[a]);
        require(it != s.indices.end(), "moment_values: site not among sampled indices");
        pos[a] = static_cast<std::size_t>(it - s.indices.begin());
    }
    const double scale = std::pow(static_cast<double>(N), x.size() / 2.0) / std::sqrt(pi_weight(x, N));
    std::vector<double> values(s.trials);
    for (std::size_t trial = 0; trial < s.trials; ++trial) {
        double prod = scale;
        for (std::size_t a = 0; a < x.size(); ++a) prod *= s.overlap(trial, pos[a], a);
        values[trial] = prod;
    }
    return values;
}

MomentEstimate summarize(std::vector<double> values) {
    MomentEstimate e;
    const double n = static_cast<double>(values.size());
    if (values.empty()) return e;
    double sum = 0.0;
    for (double v : values) sum += v;
    e.estimate = sum / n;
    double ss = 0.0;
    for (double v : values) ss += (v - e.estimate) * (v - e.estimate);
    e.std_error = values.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
    e.values = std::move(values);
    return e;
}

MomentEstimate estimate_moment(const MomentRequest& req, unsigned threads) {
    const int N = req.base ? req.base->size() : req.ensemble.N;
    require(!req.x.empty(), "estimate_moment: empty configuration");
    for (int s : req.x) require(s >= 0 && s < N, "estimate_moment: site out of range");
    if (!is_even(req.x, N)) throw Error("vanishes by sign symmetry: configuration has odd occupancy");
    require(req.vectors.size() == req.x.size(), "estimate_moment: need one test vector per particle");
    for (const auto& v : req.vectors)
        require(v.size() == N && std::abs(v.norm() - 1.0) <= 1e-10, "estimate_moment: test vectors must be unit");
    std::vector<int> sites(req.x.begin(), req.x.end());
    std::sort(sites.begin(), sites.end());
    sites.erase(std::unique(sites.begin(), sites.end()), sites.end());
    const OverlapSamples s = sample_overlaps(req.ensemble, req.base, req.t, req.trials, req.seed, sites, req.vectors,
                                             threads);
    return summarize(moment_values(s, req.x, N));
}

GeneratorValidation validate_generator(const SymmetricMatrix& H, const std::vector<Vector>& V, double delta,
                                       std::size_t paths, int substeps, std::uint64_t seed, unsigned threads) {
    require(delta > 0.0 && substeps >= 1, "validate_generator: need delta > 0 and substeps >= 1");
    require(paths >= 4, "validate_generator: need at least four paths");
    const SpectralDecomposition dec0 = eig_sym(H);
    const int N = H.size();
    ConfigurationSpace space(N, static_cast<int>(V.size()));
    const Vector f0 = moment_observable(space, dec0.frame, V);
    const std::size_t pairs = paths / 2;
    const auto M = static_cast<Eigen::Index>(space.size());
    Matrix samples(M, static_cast<Eigen::Index>(pairs));
    SeeOptions plus, minus;
    plus.endpoints_only = minus.endpoints_only = true;
    minus.negate_noise = true;
    parallel_for(pairs, threads, [&](std::size_t p) {
        const std::uint64_t s = rng::derive(seed, p);
        const EigenPath a = integrate_see(dec0, delta, delta / substeps, s, plus);
        const EigenPath b = integrate_see(dec0, delta, delta / substeps, s, minus);
        const Vector fa = moment_observable(space, a.frames.back(), V);
        const Vector fb = moment_observable(space, b.frames.back(), V);
        samples.col(static_cast<Eigen::Index>(p)) = (0.5 * (fa + fb) - f0) / delta;
    });
    GeneratorValidation out{space, f0, Vector(M), Vector(M), Vector(M), Vector(M), pairs * 2};
    for (Eigen::Index k = 0; k < M; ++k) {
        std::vector<double> row(pairs);
        for (std::size_t p = 0; p < pairs; ++p) row[p] = samples(k, static_cast<Eigen::Index>(p));
        const MomentEstimate e = summarize(std::move(row));
        out.fd[k] = e.estimate;
        out.fd_std_error[k] = e.std_error;
    }
    out.drift_ito = assemble_generator(space, see_coefficients(dec0.eigenvalues, CoefficientConvention::ito)).apply(f0);
    out.drift_printed =
        assemble_generator(space, see_coefficients(dec0.eigenvalues, CoefficientConvention::printed)).apply(f0);
    return out;
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
    require(!a.empty() && !b.empty(), "ks_statistic: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(i / na - j / nb));
    }
    return d;
}

} // namespace cemf
