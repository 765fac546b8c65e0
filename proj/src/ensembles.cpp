#include "cemf/ensembles.hpp"

#include "cemf/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

namespace cemf {

SymmetricMatrix::SymmetricMatrix(int N) : m_(Matrix::Zero(N, N)) { require(N >= 1, "matrix size must be positive"); }

SymmetricMatrix SymmetricMatrix::from_upper(const Matrix& m) {
    require(m.rows() == m.cols() && m.rows() >= 1, "symmetric matrix must be square and nonempty");
    require(m.allFinite(), "symmetric matrix entries must be finite");
    SymmetricMatrix out;
    out.m_ = m;
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = j + 1; i < m.rows(); ++i) out.m_(i, j) = m(j, i);
    return out;
}

SymmetricMatrix SymmetricMatrix::from_symmetric(const Matrix& m) {
    require(m.rows() == m.cols() && m.rows() >= 1, "symmetric matrix must be square and nonempty");
    require(m.allFinite(), "symmetric matrix entries must be finite");
    require(m == m.transpose(), "matrix is not exactly symmetric");
    SymmetricMatrix out;
    out.m_ = m;
    return out;
}

std::string to_string(EnsembleKind kind) {
    switch (kind) {
    case EnsembleKind::goe: return "goe";
    case EnsembleKind::generalized_wigner: return "generalized-wigner";
    case EnsembleKind::erdos_renyi: return "erdos-renyi";
    case EnsembleKind::p_regular: return "p-regular";
    case EnsembleKind::levy: return "levy";
    }
    return "?";
}

EnsembleKind ensemble_kind_from_string(const std::string& s) {
    for (auto k : {EnsembleKind::goe, EnsembleKind::generalized_wigner, EnsembleKind::erdos_renyi,
                   EnsembleKind::p_regular, EnsembleKind::levy})
        if (to_string(k) == s) return k;
    throw Error("unknown ensemble kind '" + s + "'");
}

void to_json(nlohmann::json& j, const EnsembleSpec& spec) {
    j = nlohmann::json{{"kind", to_string(spec.kind)}, {"N", spec.N}, {"p", spec.p}, {"alpha", spec.alpha}, {"seed", spec.seed}};
    if (spec.variance_profile) {
        auto rows = nlohmann::json::array();
        for (Eigen::Index i = 0; i < spec.variance_profile->rows(); ++i) {
            auto row = nlohmann::json::array();
            for (Eigen::Index k = 0; k < spec.variance_profile->cols(); ++k) row.push_back((*spec.variance_profile)(i, k));
            rows.push_back(row);
        }
        j["variance_profile"] = rows;
    } else {
        j["variance_profile"] = nullptr;
    }
    if (spec.kind == EnsembleKind::generalized_wigner) {
        j["entry_law"] = spec.entry_law == EntryLaw::bernoulli ? "bernoulli" : "gaussian";
        j["profile_bound"] = spec.profile_bound;
    }
}

void from_json(const nlohmann::json& j, EnsembleSpec& spec) {
    spec = EnsembleSpec{};
    spec.kind = ensemble_kind_from_string(j.at("kind").get<std::string>());
    spec.N = j.at("N").get<int>();
    spec.p = j.value("p", 0.0);
    spec.alpha = j.value("alpha", 0.0);
    spec.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("variance_profile") && !j["variance_profile"].is_null()) {
        const auto& rows = j["variance_profile"];
        const auto n = static_cast<Eigen::Index>(rows.size());
        Matrix prof(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            require(static_cast<Eigen::Index>(rows[i].size()) == n, "variance_profile must be square");
            for (Eigen::Index k = 0; k < n; ++k) prof(i, k) = rows[i][k].get<double>();
        }
        spec.variance_profile = prof;
    }
    if (j.contains("entry_law")) {
        const auto law = j["entry_law"].get<std::string>();
        require(law == "bernoulli" || law == "gaussian", "entry_law must be bernoulli or gaussian");
        spec.entry_law = law == "bernoulli" ? EntryLaw::bernoulli : EntryLaw::gaussian;
    }
    spec.profile_bound = j.value("profile_bound", 10.0);
}

double goe_entry(int N, std::uint64_t seed, int i, int j) {
    if (i > j) std::swap(i, j);
    const double scale = (i == j ? std::sqrt(2.0) : 1.0) / std::sqrt(static_cast<double>(N));
    return scale * rng::normal_at(seed, rng::streams::goe, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
}

SymmetricMatrix sample_goe(int N, std::uint64_t seed) {
    require(N >= 1, "sample_goe: N must be positive");
    SymmetricMatrix H(N);
    for (int j = 0; j < N; ++j)
        for (int i = 0; i <= j; ++i) H.set(i, j, goe_entry(N, seed, i, j));
    return H;
}

Matrix flat_profile(int N) { return Matrix::Constant(N, N, 1.0 / N); }

void validate_profile(const Matrix& s, double C) {
    require(s.rows() == s.cols() && s.rows() >= 1, "variance profile must be square");
    require(C >= 1.0, "profile bound C must be at least 1");
    const double N = static_cast<double>(s.rows());
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
        const double col = s.col(j).sum();
        if (std::abs(col - 1.0) > 1e-10) {
            std::ostringstream os;
            os << "variance profile column " << j << " sums to " << col << ", expected 1";
            throw Error(os.str());
        }
        for (Eigen::Index i = 0; i < s.rows(); ++i) {
            if (s(i, j) != s(j, i)) throw Error("variance profile is not symmetric");
            const double scaled = N * s(i, j);
            if (!(scaled >= 1.0 / C && scaled <= C)) {
                std::ostringstream os;
                os << "variance profile entry (" << i << "," << j << ") gives N*s = " << scaled
                   << " outside [1/C, C] with C = " << C;
                throw Error(os.str());
            }
        }
    }
}

SymmetricMatrix sample_generalized_wigner(const EnsembleSpec& spec) {
    require(spec.N >= 1, "generalized Wigner: N must be positive");
    const Matrix prof = spec.variance_profile ? *spec.variance_profile : flat_profile(spec.N);
    require(prof.rows() == spec.N, "variance profile size does not match N");
    validate_profile(prof, spec.profile_bound);
    SymmetricMatrix H(spec.N);
    for (int j = 0; j < spec.N; ++j)
        for (int i = 0; i <= j; ++i) {
            const double sd = std::sqrt(prof(i, j));
            double z;
            if (spec.entry_law == EntryLaw::bernoulli)
                z = rng::uniform_at(spec.seed, rng::streams::wigner, i, j) < 0.5 ? -1.0 : 1.0;
            else
                z = rng::normal_at(spec.seed, rng::streams::wigner, i, j);
            H.set(i, j, sd * z);
        }
    return H;
}

namespace {

SymmetricMatrix sample_erdos_renyi(const EnsembleSpec& spec) {
    const int N = spec.N;
    const double p = spec.p;
    require(p >= 1.0 && p <= N / 2.0, "erdos-renyi requires 1 <= p <= N/2");
    const double prob = p / N;
    const double value = 1.0 / std::sqrt(p * (1.0 - prob));
    SymmetricMatrix H(N);
    for (int j = 0; j < N; ++j)
        for (int i = 0; i < j; ++i)
            if (rng::uniform_at(spec.seed, rng::streams::erdos_renyi, i, j) < prob) H.set(i, j, value);
    return H;
}

// Sequential pairing: stubs are matched one at a time, each partner drawn
// uniformly from the remaining stubs that would not create a loop or a
// repeated edge.  When no admissible partner exists the whole attempt is
// discarded.  Whole-graph rejection of the plain pairing model succeeds with
// probability about exp(-(p^2-1)/4), hopeless for p in the tens.
bool try_regular_pairing(int N, int p, rng::Stream& gen, std::vector<std::vector<int>>& adj) {
    adj.assign(N, {});
    std::vector<int> stubs;
    stubs.reserve(static_cast<std::size_t>(N) * p);
    for (int v = 0; v < N; ++v)
        for (int k = 0; k < p; ++k) stubs.push_back(v);
    std::vector<int> admissible;
    while (!stubs.empty()) {
        const std::size_t pick = gen.below(stubs.size());
        const int u = stubs[pick];
        stubs[pick] = stubs.back();
        stubs.pop_back();
        // Rejection draws are uniform over admissible partners; the scan only
        // runs when they keep failing.
        int k = -1;
        for (int tries = 0; tries < 64 && !stubs.empty(); ++tries) {
            const auto cand = static_cast<int>(gen.below(stubs.size()));
            const int w = stubs[cand];
            if (w != u && std::find(adj[u].begin(), adj[u].end(), w) == adj[u].end()) {
                k = cand;
                break;
            }
        }
        if (k < 0) {
            admissible.clear();
            for (std::size_t c = 0; c < stubs.size(); ++c) {
                const int w = stubs[c];
                if (w == u) continue;
                if (std::find(adj[u].begin(), adj[u].end(), w) != adj[u].end()) continue;
                admissible.push_back(static_cast<int>(c));
            }
            if (admissible.empty()) return false;
            k = admissible[gen.below(admissible.size())];
        }
        const int w = stubs[k];
        stubs[k] = stubs.back();
        stubs.pop_back();
        adj[u].push_back(w);
        adj[w].push_back(u);
    }
    return true;
}

SymmetricMatrix sample_p_regular(const EnsembleSpec& spec) {
    const int N = spec.N;
    const int p = static_cast<int>(std::lround(spec.p));
    require(std::abs(spec.p - p) < 1e-12, "p-regular requires integer p");
    require(p >= 2 && p < N, "p-regular requires 2 <= p < N");
    require((static_cast<long long>(N) * p) % 2 == 0, "p-regular requires N*p even");
    rng::Stream gen(spec.seed, rng::streams::regular);
    std::vector<std::vector<int>> adj;
    constexpr int kRetryCap = 10000;
    for (int attempt = 0; attempt < kRetryCap; ++attempt) {
        if (!try_regular_pairing(N, p, gen, adj)) continue;
        const double value = 1.0 / std::sqrt(p - 1.0);
        SymmetricMatrix H(N);
        for (int u = 0; u < N; ++u)
            for (int w : adj[u]) H.set(u, w, value);
        return H;
    }
    throw Error("degenerate pairing: no simple p-regular graph after retry cap");
}

} // namespace

SymmetricMatrix sample_sparse_graph(const EnsembleSpec& spec) {
    require(spec.N >= 2, "graph ensembles need N >= 2");
    if (spec.kind == EnsembleKind::erdos_renyi) return sample_erdos_renyi(spec);
    if (spec.kind == EnsembleKind::p_regular) return sample_p_regular(spec);
    throw Error("sample_sparse_graph: kind must be erdos-renyi or p-regular");
}

double levy_scale(double alpha) {
    require(alpha > 0.0 && alpha < 2.0, "levy requires alpha in (0,2)");
    const double base = std::numbers::pi / (2.0 * std::sin(std::numbers::pi * alpha / 2.0) * std::tgamma(alpha));
    return std::pow(base, 1.0 / alpha);
}

double sample_symmetric_stable(double alpha, double scale, rng::Stream& gen) {
    const double V = std::numbers::pi * (gen.uniform() - 0.5);
    const double W = gen.exponential();
    if (alpha == 1.0) return scale * std::tan(V);
    const double x = std::sin(alpha * V) / std::pow(std::cos(V), 1.0 / alpha) *
                     std::pow(std::cos((1.0 - alpha) * V) / W, (1.0 - alpha) / alpha);
    return scale * x;
}

SymmetricMatrix sample_levy(const EnsembleSpec& spec) {
    require(spec.N >= 1, "levy: N must be positive");
    const double sigma = levy_scale(spec.alpha);
    const double norm = std::pow(static_cast<double>(spec.N), -1.0 / spec.alpha);
    SymmetricMatrix H(spec.N);
    rng::Stream gen(spec.seed, rng::streams::levy);
    for (int j = 0; j < spec.N; ++j)
        for (int i = 0; i <= j; ++i) H.set(i, j, norm * sample_symmetric_stable(spec.alpha, sigma, gen));
    return H;
}

SymmetricMatrix sample(const EnsembleSpec& spec) {
    switch (spec.kind) {
    case EnsembleKind::goe: return sample_goe(spec.N, spec.seed);
    case EnsembleKind::generalized_wigner: return sample_generalized_wigner(spec);
    case EnsembleKind::erdos_renyi:
    case EnsembleKind::p_regular: return sample_sparse_graph(spec);
    case EnsembleKind::levy: return sample_levy(spec);
    }
    throw Error("unknown ensemble kind");
}

SymmetricMatrix perturb_gaussian(const SymmetricMatrix& H, double t, std::uint64_t seed) {
    require(t >= 0.0, "perturb_gaussian: t must be nonnegative");
    if (t == 0.0) return H;
    const int N = H.size();
    const double s = std::sqrt(t);
    Matrix m = H.matrix();
    for (int j = 0; j < N; ++j)
        for (int i = 0; i <= j; ++i) m(i, j) += s * goe_entry(N, seed, i, j);
    return SymmetricMatrix::from_upper(m);
}

} // namespace cemf
