#pragma once

#include <sysid/sysid.hpp>

#include <random>

namespace testing_support {

using sysid::Index;
using sysid::Matrix;
using sysid::Vector;

/// Plain triple loop, kept apart from Eigen's product kernels.
inline Matrix mul(const Matrix& a, const Matrix& b) {
    Matrix c = Matrix::Zero(a.rows(), b.cols());
    for (Index i = 0; i < a.rows(); ++i)
        for (Index k = 0; k < a.cols(); ++k)
            for (Index j = 0; j < b.cols(); ++j) c(i, j) += a(i, k) * b(k, j);
    return c;
}

inline Matrix power(const Matrix& A, Index e) {
    Matrix P = Matrix::Identity(A.rows(), A.cols());
    for (Index i = 0; i < e; ++i) P = mul(P, A);
    return P;
}

/// X_0 = D, X_j = C A^{j-1} B.
inline Matrix markov_block(const sysid::SystemMatrices& s, Index j) {
    return j == 0 ? s.D : mul(mul(s.C, power(s.A, j - 1)), s.B);
}

inline Matrix gaussian(Index r, Index c, std::mt19937_64& rng, double sd = 1.0) {
    std::normal_distribution<double> N(0.0, sd);
    Matrix M(r, c);
    for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j) M(i, j) = N(rng);
    return M;
}

inline sysid::SystemMatrices random_system(std::mt19937_64& rng, Index n, Index m, Index p, double radius = 0.95) {
    Matrix A = gaussian(n, n, rng);
    A *= radius / sysid::spectral_radius(A);
    return {A, gaussian(n, p, rng), gaussian(m, n, rng), gaussian(m, p, rng)};
}

/// Random system with |B|, |C| >= 1 and kappa at s at most `kappa`.
inline sysid::SystemMatrices well_behaved_system(std::mt19937_64& rng, Index n, Index m, Index p, Index s,
                                                 double kappa, double radius = 1.0) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
        auto sys = random_system(rng, n, m, p, radius / (1 + 1e-9));
        sys.B /= std::min(1.0, sysid::operator_norm(sys.B));
        sys.C /= std::min(1.0, sysid::operator_norm(sys.C));
        if (sysid::condition_report(sys, s, kappa).well_behaved) return sys;
    }
    throw std::runtime_error("no well-behaved system found");
}

/// Similarity transform (U^{-1} A U, U^{-1} B, C U, D).
inline sysid::SystemMatrices conjugate(const sysid::SystemMatrices& s, const Matrix& U) {
    const Matrix Ui = U.inverse();
    return {Ui * s.A * U, Ui * s.B, s.C * U, s.D};
}

struct MeanSe {
    double mean = 0, se = 0;
};

inline MeanSe mean_se(const std::vector<double>& v) {
    MeanSe r;
    for (double x : v) r.mean += x;
    r.mean /= static_cast<double>(v.size());
    double var = 0;
    for (double x : v) var += (x - r.mean) * (x - r.mean);
    var /= static_cast<double>(v.size() - 1);
    r.se = std::sqrt(var / static_cast<double>(v.size()));
    return r;
}

}  // namespace testing_support
