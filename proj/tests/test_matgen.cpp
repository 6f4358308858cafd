#include <ggamp/matgen.hpp>

#include <gtest/gtest.h>

#include <Eigen/SVD>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

using namespace ggamp;

namespace {

Vec singular_values(const Mat& A) { return Eigen::JacobiSVD<Mat>(A).singularValues(); }

/// Lag-1 column correlation sum_m a(m,n) a(m,n+1) / sum_m a(m,n)^2, pooled over columns.
double lag1_column_correlation(const Mat& A) {
    double num = 0.0, den = 0.0;
    for (Index n = 0; n + 1 < A.cols(); ++n) {
        num += A.col(n).dot(A.col(n + 1));
        den += A.col(n).squaredNorm();
    }
    return num / den;
}

/// Wilson-Hilferty chi-square quantile.
double chi2_quantile(double dof, double z) {
    const double a = 2.0 / (9.0 * dof);
    return dof * std::pow(1.0 - a + z * std::sqrt(a), 3.0);
}

}  // namespace

TEST(GenerateMatrix, DeterministicGivenSeed) {
    for (auto kind : {EnsembleKind::IidGaussian, EnsembleKind::ColumnCorrelated, EnsembleKind::LowRankProduct,
                      EnsembleKind::IllConditioned, EnsembleKind::NonzeroMean}) {
        const double param = kind == EnsembleKind::IllConditioned ? 10.0 : kind == EnsembleKind::LowRankProduct ? 0.25 : 0.5;
        const EnsembleSpec spec{kind, 12, 20, param, 77};
        const Mat a = generate_matrix(spec);
        const Mat b = generate_matrix(spec);
        EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()), 0) << to_string(kind);
        EnsembleSpec other = spec;
        other.seed = 78;
        EXPECT_GT((generate_matrix(other) - a).norm(), 0.0);
    }
}

TEST(GenerateMatrix, IidFrobeniusConcentrates) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const Mat A = generate_matrix({EnsembleKind::IidGaussian, 100, 100, 0.0, seed});
        EXPECT_NEAR(A.squaredNorm(), 100.0, 20.0) << "seed " << seed;
    }
}

TEST(GenerateMatrix, IllConditionedHitsKappa) {
    for (double kappa : {1.0, 10.0, 100.0, 1e4}) {
        const Vec sv = singular_values(generate_matrix({EnsembleKind::IllConditioned, 16, 40, kappa, 5}));
        EXPECT_NEAR(sv.maxCoeff() / sv.minCoeff() / kappa, 1.0, 1e-8) << "kappa " << kappa;
    }
    const Vec sv = singular_values(generate_matrix({EnsembleKind::IllConditioned, 8, 8, 1.0, 9}));
    EXPECT_NEAR(sv.maxCoeff() - sv.minCoeff(), 0.0, 1e-12);
}

TEST(GenerateMatrix, LowRankHasRequestedRank) {
    for (double ratio : {0.1, 0.25, 0.5}) {
        const EnsembleSpec spec{EnsembleKind::LowRankProduct, 20, 40, ratio, 3};
        const Vec sv = singular_values(generate_matrix(spec));
        const Index rank = (sv.array() > 1e-10 * sv(0)).count();
        EXPECT_EQ(rank, spec.low_rank()) << "ratio " << ratio;
    }
}

TEST(GenerateMatrix, ColumnCorrelationMatchesRho) {
    for (double rho : {0.0, 0.5, 0.9}) {
        const Mat A = generate_matrix({EnsembleKind::ColumnCorrelated, 400, 400, rho, 21});
        EXPECT_NEAR(lag1_column_correlation(A), rho, 0.02) << "rho " << rho;
    }
}

TEST(GenerateMatrix, ZeroDeviationEndpointsMatchIidMoments) {
    // Per-entry mean 0, variance 1/N and no lag-1 column correlation.
    const Index M = 200, N = 200;
    for (const EnsembleSpec spec : {EnsembleSpec{EnsembleKind::ColumnCorrelated, M, N, 0.0, 4},
                                    EnsembleSpec{EnsembleKind::NonzeroMean, M, N, 0.0, 4},
                                    EnsembleSpec{EnsembleKind::IllConditioned, M, N, 1.0, 4}}) {
        const Mat A = generate_matrix(spec);
        const double entries = static_cast<double>(M * N);
        EXPECT_NEAR(A.mean(), 0.0, 4.0 / std::sqrt(entries * N)) << to_string(spec.kind);
        EXPECT_NEAR(A.squaredNorm() / entries * N, 1.0, 0.05) << to_string(spec.kind);
        EXPECT_NEAR(lag1_column_correlation(A), 0.0, 0.03) << to_string(spec.kind);
    }
    // Column-correlated at rho = 0 is the i.i.d. draw itself.
    const Mat a = generate_matrix({EnsembleKind::ColumnCorrelated, 6, 9, 0.0, 8});
    const Mat b = generate_matrix({EnsembleKind::IidGaussian, 6, 9, 0.0, 8});
    EXPECT_EQ((a - b).norm(), 0.0);
}

TEST(GenerateMatrix, NonzeroMeanShiftsEntries) {
    const Mat A = generate_matrix({EnsembleKind::NonzeroMean, 100, 200, 0.3, 2});
    EXPECT_NEAR(A.mean(), 0.3, 0.01);
}

TEST(GenerateMatrix, ParameterDomainErrors) {
    auto field_of = [](const EnsembleSpec& s) {
        try {
            generate_matrix(s);
        } catch (const DomainError& e) {
            return e.field();
        }
        return std::string("none");
    };
    EXPECT_EQ(field_of({EnsembleKind::ColumnCorrelated, 4, 8, 1.0, 0}), "parameter");
    EXPECT_EQ(field_of({EnsembleKind::ColumnCorrelated, 4, 8, -0.1, 0}), "parameter");
    EXPECT_EQ(field_of({EnsembleKind::IllConditioned, 4, 8, 0.5, 0}), "parameter");
    EXPECT_EQ(field_of({EnsembleKind::LowRankProduct, 4, 8, 0.75, 0}), "parameter");
    EXPECT_EQ(field_of({EnsembleKind::LowRankProduct, 4, 8, 0.0, 0}), "parameter");
    EXPECT_EQ(field_of({EnsembleKind::IidGaussian, 9, 8, 0.0, 0}), "rows");
    EXPECT_EQ(field_of({EnsembleKind::IidGaussian, 0, 8, 0.0, 0}), "rows");
}

TEST(GenerateSmv, SnrCalibratedOnRealization) {
    const EnsembleSpec spec{EnsembleKind::IidGaussian, 30, 60, 0.0, 1};
    for (double snr : {0.0, 20.0, 60.0}) {
        const auto p = generate_smv(spec, 12, snr, 99);
        const double signal = (p.A * p.x_true).squaredNorm();
        EXPECT_NEAR(signal / (30.0 * p.sigma2), std::pow(10.0, snr / 10.0), 1e-9 * std::pow(10.0, snr / 10.0));
    }
    const auto p0 = generate_smv(spec, 12, 0.0, 99);
    EXPECT_NEAR(p0.sigma2, (p0.A * p0.x_true).squaredNorm() / 30.0, 1e-14);
}

TEST(GenerateSmv, ExactSupportAndDeterminism) {
    const EnsembleSpec spec{EnsembleKind::ColumnCorrelated, 20, 50, 0.5, 7};
    const auto a = generate_smv(spec, 10, 30.0, 11);
    const auto b = generate_smv(spec, 10, 30.0, 11);
    ASSERT_EQ(a.support.size(), 10u);
    for (Index n = 0; n < 50; ++n) {
        const bool on = std::find(a.support.begin(), a.support.end(), n) != a.support.end();
        EXPECT_EQ(on, a.x_true(n) != 0.0);
    }
    EXPECT_EQ(a.support, b.support);
    EXPECT_EQ((a.y - b.y).norm(), 0.0);
    EXPECT_EQ((a.x_true - b.x_true).norm(), 0.0);
    EXPECT_EQ(a.sigma2, b.sigma2);
    const auto k_eq_n = generate_smv(spec, 50, 30.0, 11);
    EXPECT_EQ(k_eq_n.support.size(), 50u);
}

TEST(GenerateSmv, PreconditionErrors) {
    const EnsembleSpec spec{EnsembleKind::IidGaussian, 5, 10, 0.0, 1};
    EXPECT_THROW(generate_smv(spec, 11, 60.0, 1), DomainError);
    EXPECT_THROW(generate_smv(spec, 0, 60.0, 1), DomainError);
    EXPECT_THROW(generate_smv(spec, 10, std::numeric_limits<double>::infinity(), 1), DomainError);
}

TEST(GenerateMmv, SingleFrameMatchesSmv) {
    const EnsembleSpec spec{EnsembleKind::ColumnCorrelated, 20, 40, 0.7, 5};
    const auto s = generate_smv(spec, 8, 40.0, 123);
    const auto m = generate_mmv(spec, 8, 1, 0.0, Vec(), 40.0, 123);
    EXPECT_EQ(s.support, m.support);
    EXPECT_EQ((s.x_true - m.X_true.col(0)).norm(), 0.0);
    EXPECT_EQ((s.y - m.Y.col(0)).norm(), 0.0);
    EXPECT_EQ(s.sigma2, m.sigma2);
}

TEST(GenerateMmv, SharedSupportAndErrors) {
    const EnsembleSpec spec{EnsembleKind::IidGaussian, 10, 30, 0.0, 2};
    const auto p = generate_mmv(spec, 6, 5, 0.8, Vec(), 30.0, 4);
    for (Index t = 0; t < 5; ++t)
        for (Index n = 0; n < 30; ++n)
            EXPECT_EQ(p.X_true(n, t) != 0.0, std::binary_search(p.support.begin(), p.support.end(), n));
    EXPECT_THROW(generate_mmv(spec, 6, 5, 1.0, Vec(), 30.0, 4), DomainError);
    EXPECT_THROW(generate_mmv(spec, 6, 5, -1.2, Vec(), 30.0, 4), DomainError);
    EXPECT_THROW(generate_mmv(spec, 6, 0, 0.5, Vec(), 30.0, 4), DomainError);
}

TEST(GenerateMmv, BetaZeroFramesAreUncorrelated) {
    const EnsembleSpec spec{EnsembleKind::IidGaussian, 1, 1, 0.0, 1};
    const auto p = generate_mmv(spec, 1, 2000, 0.0, Vec(), 60.0, 17);
    const auto x = p.X_true.row(0);
    const double lag1 = x.head(1999).dot(x.tail(1999)) / x.squaredNorm();
    EXPECT_NEAR(lag1, 0.0, 0.06);
}

TEST(GenerateMmv, Lag1AutocorrelationMatchesBeta) {
    const EnsembleSpec spec{EnsembleKind::IidGaussian, 1, 1, 0.0, 1};
    const auto p = generate_mmv(spec, 1, 1000, 0.9, Vec(), 60.0, 5);
    const auto x = p.X_true.row(0);
    const double lag1 = x.head(999).dot(x.tail(999)) / x.head(999).squaredNorm();
    EXPECT_NEAR(lag1, 0.9, 0.05);
}

TEST(GenerateMmv, StationaryVariancePerFrame) {
    // Variance of each frame across realizations against chi-square bounds (two-sided 5%).
    const Index T = 6;
    const int R = 400;
    const double gamma = 2.5;
    Mat X(R, T);
    for (int i = 0; i < R; ++i) {
        const EnsembleSpec spec{EnsembleKind::IidGaussian, 1, 1, 0.0, 1};
        X.row(i) = generate_mmv(spec, 1, T, 0.9, Vec::Constant(1, gamma), 60.0, 1000 + i).X_true.row(0);
    }
    const double lo = chi2_quantile(R, -1.959964), hi = chi2_quantile(R, 1.959964);
    for (Index t = 0; t < T; ++t) {
        const double stat = X.col(t).squaredNorm() / gamma;
        EXPECT_GT(stat, lo) << "frame " << t;
        EXPECT_LT(stat, hi) << "frame " << t;
    }
}

TEST(ProblemContainer, BinaryRoundTripIsExact) {
    const EnsembleSpec spec{EnsembleKind::LowRankProduct, 6, 11, 0.5, 3};
    Vec g = Vec::LinSpaced(11, 0.5, 1.5);
    const auto p = generate_mmv(spec, 4, 3, 0.6, g, 25.0, 8);
    std::stringstream buf;
    write_problem_binary(buf, p);
    const auto q = read_problem_binary(buf);
    EXPECT_EQ(q.A, p.A);
    EXPECT_EQ(q.Y, p.Y);
    EXPECT_EQ(q.X_true, p.X_true);
    EXPECT_EQ(q.gamma_true, p.gamma_true);
    EXPECT_EQ(q.support, p.support);
    EXPECT_EQ(q.sigma2, p.sigma2);
    EXPECT_EQ(q.beta, p.beta);
}

TEST(ProblemContainer, BinaryLayoutIsRowMajorLittleEndian) {
    MmvProblem p;
    p.A = (Mat(2, 2) << 1.0, 2.0, 3.0, 4.0).finished();
    p.Y = Mat::Zero(2, 1);
    p.X_true = Mat::Zero(2, 1);
    p.sigma2 = 0.5;
    p.gamma_true = Vec::Ones(2);
    std::stringstream buf;
    write_problem_binary(buf, p);
    const std::string bytes = buf.str();
    ASSERT_EQ(bytes.size(), 8u + 4 * 8 + 2 * 8 + 4 * 8 + 2 * 8 + 2 * 8 + 2 * 8);
    EXPECT_EQ(bytes.substr(0, 8), "GGPROB01");
    double a01 = 0.0;
    std::memcpy(&a01, bytes.data() + 8 + 32 + 16 + 8, sizeof(double));  // second entry of row 0
    EXPECT_EQ(a01, 2.0);
    EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 2u);  // M, low byte first
}

TEST(ProblemContainer, RejectsBadMagicAndTruncation) {
    std::stringstream bad("NOTAPROB");
    EXPECT_THROW(read_problem_binary(bad), DomainError);
    const auto p = as_mmv(generate_smv({EnsembleKind::IidGaussian, 3, 5, 0.0, 1}, 2, 20.0, 2));
    std::stringstream buf;
    write_problem_binary(buf, p);
    std::stringstream cut(buf.str().substr(0, buf.str().size() - 3));
    EXPECT_THROW(read_problem_binary(cut), DomainError);
}

TEST(ProblemContainer, CsvFilesHaveExpectedShape) {
    const auto p = generate_mmv({EnsembleKind::IidGaussian, 3, 5, 0.0, 1}, 2, 2, 0.5, Vec(), 20.0, 2);
    const std::string prefix = ::testing::TempDir() + "ggamp_csv_fixture";
    write_problem_csv(prefix, p);
    auto count_lines = [](const std::string& path) {
        std::ifstream f(path);
        std::string line;
        int n = 0;
        while (std::getline(f, line)) ++n;
        return n;
    };
    EXPECT_EQ(count_lines(prefix + "_A.csv"), 3);
    EXPECT_EQ(count_lines(prefix + "_Y.csv"), 2);
    EXPECT_EQ(count_lines(prefix + "_X.csv"), 2);
    const auto meta = KeyValueConfig::load(prefix + "_meta.txt");
    EXPECT_EQ(meta.get_int("frames"), 2);
    EXPECT_DOUBLE_EQ(meta.get_double("sigma2"), p.sigma2);
    for (const char* suffix : {"_A.csv", "_Y.csv", "_X.csv", "_meta.txt"}) std::remove((prefix + suffix).c_str());
}
