#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace sysid {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Shapes that do not agree with the declared (n, m, p).
class DimensionError : public Error {
   public:
    using Error::Error;
};

/// An operation was called outside its domain (horizon too short, s < 1, ...).
class PreconditionError : public Error {
   public:
    using Error::Error;
};

/// Malformed or inconsistent configuration.
class ConfigError : public Error {
   public:
    using Error::Error;
};

namespace detail {

inline std::string shape(const Matrix& M) {
    return std::to_string(M.rows()) + "x" + std::to_string(M.cols());
}

inline void require_shape(const Matrix& M, Index rows, Index cols, const char* what) {
    if (M.rows() != rows || M.cols() != cols) {
        throw DimensionError(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                             std::to_string(cols) + ", got " + shape(M));
    }
}

inline void require(bool cond, const std::string& message) {
    if (!cond) throw PreconditionError(message);
}

}  // namespace detail

/// Largest singular value.
inline double operator_norm(const Matrix& M) {
    if (M.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(M);
    return svd.singularValues()(0);
}

inline double spectral_radius(const Matrix& A) {
    if (A.size() == 0) return 0.0;
    Eigen::EigenSolver<Matrix> es(A, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Symmetric square root of a PSD matrix; tiny negative eigenvalues are clipped.
inline Matrix psd_sqrt(const Matrix& S) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (S + S.transpose()));
    Vector ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

/// True when S is symmetric and has no eigenvalue below -tol * max(1, |S|).
inline bool is_psd(const Matrix& S, double tol = 1e-10) {
    if (S.rows() != S.cols()) return false;
    if (S.size() == 0) return true;
    if (!S.allFinite()) return false;
    const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
    if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) return false;
    Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() >= -tol * scale;
}

}  // namespace sysid
