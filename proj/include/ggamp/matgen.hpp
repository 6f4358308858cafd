#pragma once

// Structured measurement-matrix ensembles and synthetic SMV/MMV problems.

#include "config.hpp"
#include "types.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace ggamp {

enum class EnsembleKind { IidGaussian, ColumnCorrelated, LowRankProduct, IllConditioned, NonzeroMean };

inline std::string to_string(EnsembleKind kind) {
    switch (kind) {
        case EnsembleKind::IidGaussian: return "iid_gaussian";
        case EnsembleKind::ColumnCorrelated: return "column_correlated";
        case EnsembleKind::LowRankProduct: return "low_rank_product";
        case EnsembleKind::IllConditioned: return "ill_conditioned";
        case EnsembleKind::NonzeroMean: return "nonzero_mean";
    }
    return "unknown";
}

inline EnsembleKind parse_ensemble_kind(const std::string& name) {
    for (auto k : {EnsembleKind::IidGaussian, EnsembleKind::ColumnCorrelated, EnsembleKind::LowRankProduct,
                   EnsembleKind::IllConditioned, EnsembleKind::NonzeroMean}) {
        if (to_string(k) == name) return k;
    }
    throw DomainError("kind", "unknown ensemble '" + name + "'");
}

/**
 * Describes one draw of a measurement matrix.
 *
 * `parameter` is the deviation from the i.i.d. Gaussian ensemble: the lag-1
 * column correlation rho, the rank ratio R/N, the condition number kappa, or
 * the entry mean mu. It is ignored for iid_gaussian.
 */
struct EnsembleSpec {
    EnsembleKind kind = EnsembleKind::IidGaussian;
    Index rows = 0;
    Index cols = 0;
    double parameter = 0.0;
    std::uint64_t seed = 0;

    /// Rank used by the low-rank product ensemble.
    Index low_rank() const { return static_cast<Index>(std::llround(parameter * static_cast<double>(cols))); }

    void validate() const {
        detail::require(rows >= 1, "rows", "must be positive");
        detail::require(cols >= 1, "cols", "must be positive");
        detail::require(rows <= cols, "rows", "must not exceed cols");
        detail::require(std::isfinite(parameter), "parameter", "must be finite");
        switch (kind) {
            case EnsembleKind::ColumnCorrelated:
                detail::require(parameter >= 0.0 && parameter < 1.0, "parameter", "rho must lie in [0, 1)");
                break;
            case EnsembleKind::LowRankProduct:
                detail::require(parameter > 0.0, "parameter", "rank ratio must be positive");
                detail::require(low_rank() >= 1 && low_rank() <= rows, "parameter",
                                "rank ratio must give 1 <= R <= M");
                break;
            case EnsembleKind::IllConditioned:
                detail::require(parameter >= 1.0, "parameter", "kappa must be >= 1");
                detail::require(rows > 1 || parameter == 1.0, "parameter", "kappa != 1 needs at least two rows");
                break;
            default: break;
        }
    }

    KeyValueConfig to_config() const {
        KeyValueConfig cfg;
        cfg.set("kind", to_string(kind));
        cfg.set("rows", std::to_string(rows));
        cfg.set("cols", std::to_string(cols));
        std::ostringstream p;
        p << std::setprecision(17) << parameter;
        cfg.set("parameter", p.str());
        cfg.set("seed", std::to_string(seed));
        return cfg;
    }

    static EnsembleSpec from_config(const KeyValueConfig& cfg) {
        EnsembleSpec spec;
        spec.kind = parse_ensemble_kind(cfg.get("kind"));
        spec.rows = static_cast<Index>(cfg.get_int("rows"));
        spec.cols = static_cast<Index>(cfg.get_int("cols"));
        spec.parameter = cfg.get_double_or("parameter", 0.0);
        const auto seed = cfg.get_int_or("seed", 0);
        detail::require(seed >= 0, "seed", "must be non-negative");
        spec.seed = static_cast<std::uint64_t>(seed);
        spec.validate();
        return spec;
    }

    friend bool operator==(const EnsembleSpec&, const EnsembleSpec&) = default;
};

/// One single-measurement-vector instance y = A x + e.
struct SmvProblem {
    Mat A;
    Vec y;
    Vec x_true;
    double sigma2 = 0.0;
    std::vector<Index> support;
};

/// T frames y(t) = A x(t) + e(t) sharing one support; frames are columns of Y and X_true.
struct MmvProblem {
    Mat A;
    Mat Y;
    Mat X_true;
    double sigma2 = 0.0;
    double beta = 0.0;
    Vec gamma_true;
    std::vector<Index> support;

    Index frames() const { return Y.cols(); }
};

namespace detail {

inline Mat gaussian_matrix(std::mt19937_64& rng, Index rows, Index cols, double mean, double stddev) {
    std::normal_distribution<double> dist(mean, stddev);
    Mat out(rows, cols);
    // Fill row by row so a row's draws are contiguous in the stream.
    for (Index m = 0; m < rows; ++m)
        for (Index n = 0; n < cols; ++n) out(m, n) = dist(rng);
    return out;
}

inline std::vector<Index> draw_support(std::mt19937_64& rng, Index n, Index k) {
    std::vector<Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Index{0});
    for (Index i = 0; i < k; ++i) {
        std::uniform_int_distribution<Index> pick(i, n - 1);
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
    }
    idx.resize(static_cast<std::size_t>(k));
    std::sort(idx.begin(), idx.end());
    return idx;
}

inline double noise_variance_for(double signal_energy, double count, double snr_db) {
    require(std::isfinite(snr_db), "snr_db", "must be finite");
    require(signal_energy > 0.0, "snr_db", "noiseless signal energy is zero; SNR undefined");
    return signal_energy / (count * std::pow(10.0, snr_db / 10.0));
}

}  // namespace detail

/// Draws the matrix described by `spec`. Base Gaussians have variance 1/N.
inline Mat generate_matrix(const EnsembleSpec& spec) {
    spec.validate();
    const Index M = spec.rows;
    const Index N = spec.cols;
    const double sd = 1.0 / std::sqrt(static_cast<double>(N));
    std::mt19937_64 rng(spec.seed);

    switch (spec.kind) {
        case EnsembleKind::IidGaussian: return detail::gaussian_matrix(rng, M, N, 0.0, sd);

        case EnsembleKind::NonzeroMean: return detail::gaussian_matrix(rng, M, N, spec.parameter, sd);

        case EnsembleKind::ColumnCorrelated: {
            // Each row is a stationary Gauss-Markov sequence along the columns.
            const double rho = spec.parameter;
            const double innov = std::sqrt(1.0 - rho * rho);
            Mat W = detail::gaussian_matrix(rng, M, N, 0.0, sd);
            Mat A(M, N);
            A.col(0) = W.col(0);
            for (Index n = 1; n < N; ++n) A.col(n) = rho * A.col(n - 1) + innov * W.col(n);
            return A;
        }

        case EnsembleKind::LowRankProduct: {
            const Index R = spec.low_rank();
            Mat H = detail::gaussian_matrix(rng, M, R, 0.0, 1.0);
            Mat G = detail::gaussian_matrix(rng, R, N, 0.0, 1.0);
            return (H * G) / static_cast<double>(N);
        }

        case EnsembleKind::IllConditioned: {
            Mat G = detail::gaussian_matrix(rng, M, N, 0.0, sd);
            Eigen::BDCSVD<Mat> svd(G, Eigen::ComputeThinU | Eigen::ComputeThinV);
            // Geometric singular values with ratio kappa^(1/(M-1)), scaled so ||A||_F^2 = M.
            Vec sv(M);
            const double step = M > 1 ? std::pow(spec.parameter, -1.0 / static_cast<double>(M - 1)) : 1.0;
            sv(0) = 1.0;
            for (Index i = 1; i < M; ++i) sv(i) = sv(i - 1) * step;
            sv *= std::sqrt(static_cast<double>(M) / sv.squaredNorm());
            return svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose();
        }
    }
    throw DomainError("kind", "unhandled ensemble");
}

/// Exactly K unit-variance Gaussian nonzeros at uniformly random positions; SNR calibrated on the realized ||Ax||^2.
inline SmvProblem generate_smv(const EnsembleSpec& spec, Index K, double snr_db, std::uint64_t signal_seed) {
    spec.validate();
    detail::require(K >= 1, "K", "must be positive");
    detail::require(K <= spec.cols, "K", "must not exceed N");
    detail::require(std::isfinite(snr_db), "snr_db", "must be finite");

    SmvProblem prob;
    prob.A = generate_matrix(spec);
    std::mt19937_64 rng(signal_seed);
    prob.support = detail::draw_support(rng, spec.cols, K);

    std::normal_distribution<double> unit(0.0, 1.0);
    prob.x_true = Vec::Zero(spec.cols);
    for (Index n : prob.support) prob.x_true(n) = unit(rng);

    const Vec z = prob.A * prob.x_true;
    prob.sigma2 = detail::noise_variance_for(z.squaredNorm(), static_cast<double>(spec.rows), snr_db);
    const double sd = std::sqrt(prob.sigma2);
    prob.y = z;
    for (Index m = 0; m < spec.rows; ++m) prob.y(m) += sd * unit(rng);
    return prob;
}

/**
 * MMV draw with AR(1) rows x(t) = beta x(t-1) + sqrt(1-beta^2) v(t), v ~ N(0, gamma).
 *
 * `gamma_true` holds per-row variances (length N); empty means 1 for every row.
 * With T = 1 and unit variances the realization equals generate_smv for the same seeds.
 */
inline MmvProblem generate_mmv(const EnsembleSpec& spec, Index K, Index T, double beta, const Vec& gamma_true,
                               double snr_db, std::uint64_t signal_seed) {
    spec.validate();
    detail::require(K >= 1 && K <= spec.cols, "K", "must satisfy 1 <= K <= N");
    detail::require(T >= 1, "T", "must be positive");
    detail::require(std::isfinite(beta) && std::abs(beta) < 1.0, "beta", "must satisfy |beta| < 1");
    detail::require(gamma_true.size() == 0 || gamma_true.size() == spec.cols, "gamma_true", "length must be N");
    detail::require(gamma_true.size() == 0 || (gamma_true.array() > 0.0).all(), "gamma_true", "must be positive");
    detail::require(std::isfinite(snr_db), "snr_db", "must be finite");

    MmvProblem prob;
    prob.A = generate_matrix(spec);
    prob.beta = beta;
    prob.gamma_true = gamma_true.size() == 0 ? Vec::Ones(spec.cols) : gamma_true;

    std::mt19937_64 rng(signal_seed);
    prob.support = detail::draw_support(rng, spec.cols, K);

    std::normal_distribution<double> unit(0.0, 1.0);
    const double innov = std::sqrt(1.0 - beta * beta);
    prob.X_true = Mat::Zero(spec.cols, T);
    Mat Z(spec.rows, T);
    for (Index t = 0; t < T; ++t) {
        for (Index n : prob.support) {
            const double sd = std::sqrt(prob.gamma_true(n));
            prob.X_true(n, t) = t == 0 ? sd * unit(rng) : beta * prob.X_true(n, t - 1) + innov * sd * unit(rng);
        }
    }
    Z = prob.A * prob.X_true;
    prob.sigma2 =
        detail::noise_variance_for(Z.squaredNorm(), static_cast<double>(spec.rows) * static_cast<double>(T), snr_db);
    const double sd = std::sqrt(prob.sigma2);
    prob.Y = Z;
    for (Index t = 0; t < T; ++t)
        for (Index m = 0; m < spec.rows; ++m) prob.Y(m, t) += sd * unit(rng);
    return prob;
}

// ---------------------------------------------------------------------------
// Problem containers for cross-implementation fixtures.
//
// Binary layout (all little-endian):
//   char[8]   magic "GGPROB01"
//   u64       M, N, T, K
//   f64       sigma2, beta
//   u64[K]    support indices (0-based, ascending)
//   f64[M*N]  A, row-major
//   f64[T*M]  Y, frame by frame
//   f64[T*N]  X_true, frame by frame
//   f64[N]    gamma_true
// An SMV problem is stored with T = 1, beta = 0 and unit gamma_true.
// ---------------------------------------------------------------------------

inline constexpr char kProblemMagic[8] = {'G', 'G', 'P', 'R', 'O', 'B', '0', '1'};

namespace detail {

template <typename T>
T to_little_endian(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char bytes[sizeof(T)];
        std::memcpy(bytes, &v, sizeof(T));
        std::reverse(bytes, bytes + sizeof(T));
        std::memcpy(&v, bytes, sizeof(T));
    }
    return v;
}

template <typename T>
void write_le(std::ostream& out, T v) {
    v = to_little_endian(v);
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DomainError("fixture", "truncated problem file");
    return to_little_endian(v);
}

}  // namespace detail

inline MmvProblem as_mmv(const SmvProblem& p) {
    MmvProblem m;
    m.A = p.A;
    m.Y = p.y;
    m.X_true = p.x_true;
    m.sigma2 = p.sigma2;
    m.beta = 0.0;
    m.gamma_true = Vec::Ones(p.A.cols());
    m.support = p.support;
    return m;
}

inline void write_problem_binary(std::ostream& out, const MmvProblem& p) {
    const auto M = static_cast<std::uint64_t>(p.A.rows());
    const auto N = static_cast<std::uint64_t>(p.A.cols());
    const auto T = static_cast<std::uint64_t>(p.Y.cols());
    out.write(kProblemMagic, sizeof(kProblemMagic));
    detail::write_le<std::uint64_t>(out, M);
    detail::write_le<std::uint64_t>(out, N);
    detail::write_le<std::uint64_t>(out, T);
    detail::write_le<std::uint64_t>(out, p.support.size());
    detail::write_le<double>(out, p.sigma2);
    detail::write_le<double>(out, p.beta);
    for (Index s : p.support) detail::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(s));
    for (Index m = 0; m < p.A.rows(); ++m)
        for (Index n = 0; n < p.A.cols(); ++n) detail::write_le<double>(out, p.A(m, n));
    for (Index t = 0; t < p.Y.cols(); ++t)
        for (Index m = 0; m < p.Y.rows(); ++m) detail::write_le<double>(out, p.Y(m, t));
    for (Index t = 0; t < p.X_true.cols(); ++t)
        for (Index n = 0; n < p.X_true.rows(); ++n) detail::write_le<double>(out, p.X_true(n, t));
    const Vec gamma = p.gamma_true.size() == p.A.cols() ? p.gamma_true : Vec::Ones(p.A.cols());
    for (Index n = 0; n < gamma.size(); ++n) detail::write_le<double>(out, gamma(n));
}

inline MmvProblem read_problem_binary(std::istream& in) {
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kProblemMagic, sizeof(magic)) != 0)
        throw DomainError("fixture", "bad magic; not a GGPROB01 file");
    const auto M = static_cast<Index>(detail::read_le<std::uint64_t>(in));
    const auto N = static_cast<Index>(detail::read_le<std::uint64_t>(in));
    const auto T = static_cast<Index>(detail::read_le<std::uint64_t>(in));
    const auto K = static_cast<Index>(detail::read_le<std::uint64_t>(in));
    detail::require(M >= 1 && N >= 1 && T >= 1 && K <= N, "fixture", "inconsistent dimensions");
    MmvProblem p;
    p.sigma2 = detail::read_le<double>(in);
    p.beta = detail::read_le<double>(in);
    p.support.resize(static_cast<std::size_t>(K));
    for (auto& s : p.support) s = static_cast<Index>(detail::read_le<std::uint64_t>(in));
    p.A.resize(M, N);
    for (Index m = 0; m < M; ++m)
        for (Index n = 0; n < N; ++n) p.A(m, n) = detail::read_le<double>(in);
    p.Y.resize(M, T);
    for (Index t = 0; t < T; ++t)
        for (Index m = 0; m < M; ++m) p.Y(m, t) = detail::read_le<double>(in);
    p.X_true.resize(N, T);
    for (Index t = 0; t < T; ++t)
        for (Index n = 0; n < N; ++n) p.X_true(n, t) = detail::read_le<double>(in);
    p.gamma_true.resize(N);
    for (Index n = 0; n < N; ++n) p.gamma_true(n) = detail::read_le<double>(in);
    return p;
}

inline void write_problem_binary(const std::string& path, const MmvProblem& p) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DomainError("fixture", "cannot open " + path);
    write_problem_binary(out, p);
}

inline MmvProblem read_problem_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DomainError("fixture", "cannot open " + path);
    return read_problem_binary(in);
}

/// Row-per-line CSV with full double precision.
inline void write_matrix_csv(std::ostream& out, const Mat& m) {
    out << std::setprecision(17);
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << m(i, j);
        }
        out << '\n';
    }
}

/// CSV container: `<prefix>_A.csv` (M rows), `<prefix>_Y.csv` and `<prefix>_X.csv` (one frame per row),
/// `<prefix>_meta.txt` (key=value with sigma2, beta and support).
inline void write_problem_csv(const std::string& prefix, const MmvProblem& p) {
    auto open = [](const std::string& path) {
        std::ofstream f(path);
        if (!f) throw DomainError("fixture", "cannot open " + path);
        return f;
    };
    {
        auto f = open(prefix + "_A.csv");
        write_matrix_csv(f, p.A);
    }
    {
        auto f = open(prefix + "_Y.csv");
        write_matrix_csv(f, p.Y.transpose());
    }
    {
        auto f = open(prefix + "_X.csv");
        write_matrix_csv(f, p.X_true.transpose());
    }
    auto f = open(prefix + "_meta.txt");
    f << std::setprecision(17) << "rows = " << p.A.rows() << "\ncols = " << p.A.cols() << "\nframes = " << p.Y.cols()
      << "\nsigma2 = " << p.sigma2 << "\nbeta = " << p.beta << "\nsupport = ";
    for (std::size_t i = 0; i < p.support.size(); ++i) f << (i ? "," : "") << p.support[i];
    f << '\n';
}

}  // namespace ggamp
