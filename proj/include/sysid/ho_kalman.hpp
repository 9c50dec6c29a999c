#pragma once

#include <sysid/algebra.hpp>
#include <sysid/core.hpp>
#include <sysid/lds.hpp>
#include <sysid/markov.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace sysid {

inline constexpr double pinv_cutoff = 1e-10;

namespace detail {

/// Moore-Penrose pseudo-inverse; singular values below rcond * sigma_max are dropped.
inline Matrix pseudo_inverse(const Matrix& M, double rcond = pinv_cutoff) {
    if (M.size() == 0) return Matrix::Zero(M.cols(), M.rows());
    Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double cut = rcond * (sv.size() ? sv(0) : 0.0);
    Vector inv = Vector::Zero(sv.size());
    for (Index i = 0; i < sv.size(); ++i)
        if (sv(i) > cut && sv(i) > 0) inv(i) = 1.0 / sv(i);
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

}  // namespace detail

struct HankelPair {
    Matrix H;        // ms x p(s+1), block (i,j) = X_{i+j+1}
    Matrix H_minus;  // first ps columns
    Matrix H_plus;   // last ps columns
    Index s = 0;
};

inline HankelPair hankel_from_markov(const MarkovEstimate& est, Index s) {
    est.validate();
    if (s < 1) throw PreconditionError("hankel_from_markov: s must be >= 1");
    if (est.k < 2 * s)
        throw PreconditionError("hankel_from_markov: need blocks X_0..X_" + std::to_string(2 * s) + ", have X_0..X_" +
                                std::to_string(est.k));
    const Index m = est.m(), p = est.p();
    HankelPair h;
    h.s = s;
    h.H.resize(m * s, p * (s + 1));
    for (Index i = 0; i < s; ++i)
        for (Index j = 0; j <= s; ++j) h.H.block(i * m, j * p, m, p) = est.blocks[static_cast<std::size_t>(i + j + 1)];
    h.H_minus = h.H.leftCols(p * s);
    h.H_plus = h.H.rightCols(p * s);
    return h;
}

struct Realization {
    Matrix A_hat, B_hat, C_hat, D_hat;
    Matrix O_hat;  // ms x n
    Matrix Q_hat;  // n x ps
    Matrix L_hat;  // rank-n truncation of H_minus
    Vector singular_values;
    Index s = 0;
    bool degenerate = false;

    SystemMatrices system() const { return SystemMatrices(A_hat, B_hat, C_hat, D_hat); }
};

/// Algorithm 3: rank-n SVD truncation of H_minus, balanced factors
/// O = U S^{1/2}, Q = S^{1/2} V^T, C = O[:m], B = Q[:, :p], A = O^+ H_plus Q^+.
/// Each left singular vector is oriented so its largest-magnitude entry is positive.
inline Realization ho_kalman(const MarkovEstimate& est, Index s, Index n) {
    const auto h = hankel_from_markov(est, s);
    const Index m = est.m(), p = est.p();
    if (n < 1 || n > std::min(m * s, p * s))
        throw PreconditionError("ho_kalman: order n must satisfy 1 <= n <= min(ms, ps)");
    Eigen::JacobiSVD<Matrix> svd(h.H_minus, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Matrix U = svd.matrixU().leftCols(n);
    Matrix V = svd.matrixV().leftCols(n);
    const Vector sv = svd.singularValues();
    for (Index i = 0; i < n; ++i) {
        Index arg;
        U.col(i).cwiseAbs().maxCoeff(&arg);
        if (U(arg, i) < 0) {
            U.col(i) *= -1.0;
            V.col(i) *= -1.0;
        }
    }
    const Vector root = sv.head(n).cwiseSqrt();
    Realization r;
    r.s = s;
    r.singular_values = sv;
    r.degenerate = !(sv(0) > 0) || sv(n - 1) < pinv_cutoff * sv(0);
    r.O_hat = U * root.asDiagonal();
    r.Q_hat = root.asDiagonal() * V.transpose();
    r.L_hat = r.O_hat * r.Q_hat;
    r.C_hat = r.O_hat.topRows(m);
    r.B_hat = r.Q_hat.leftCols(p);
    r.A_hat = detail::pseudo_inverse(r.O_hat) * h.H_plus * detail::pseudo_inverse(r.Q_hat);
    r.D_hat = est.blocks.front();
    return r;
}

/// sum_{j=0..horizon} |X_j(a) - X_j(b)|_F; the state dimensions may differ.
inline double markov_distance(const SystemMatrices& a, const SystemMatrices& b, Index horizon) {
    if (a.m() != b.m() || a.p() != b.p())
        throw DimensionError("markov_distance: (m,p) mismatch " + detail::shape(a.D) + " vs " + detail::shape(b.D));
    detail::require(horizon >= 0, "markov_distance: horizon must be >= 0");
    const auto xa = markov_parameters(a, horizon);
    const auto xb = markov_parameters(b, horizon);
    double d = 0;
    for (std::size_t j = 0; j < xa.size(); ++j) d += (xa[j] - xb[j]).norm();
    return d;
}

struct EvalReport {
    double markov_error = 0;  // sum_{j<=2s} |X_j(truth) - X_j(est)|_F
    double residual_A = 0, residual_B = 0, residual_C = 0, residual_D = 0;
    Matrix transform;  // U with A ~ U^{-1} A_hat U, B ~ U^{-1} B_hat, C ~ C_hat U
    double transform_condition = 0;
    bool alignment_failed = false;

    double parameter_gap() const { return std::max({residual_A, residual_B, residual_C}); }
};

namespace detail {

inline Vector alignment_residual(const SystemMatrices& truth, const SystemMatrices& est, const Matrix& U) {
    const Index n = truth.n(), m = truth.m(), p = truth.p();
    Eigen::PartialPivLU<Matrix> lu(U);
    Vector r(n * n + n * p + m * n);
    Matrix RA = lu.solve(est.A * U) - truth.A;
    Matrix RB = lu.solve(est.B) - truth.B;
    Matrix RC = est.C * U - truth.C;
    r << Eigen::Map<Vector>(RA.data(), RA.size()), Eigen::Map<Vector>(RB.data(), RB.size()),
        Eigen::Map<Vector>(RC.data(), RC.size());
    return r;
}

inline double condition_number(const Matrix& U) {
    Eigen::JacobiSVD<Matrix> svd(U);
    const auto& sv = svd.singularValues();
    return sv(sv.size() - 1) > 0 ? sv(0) / sv(sv.size() - 1) : std::numeric_limits<double>::infinity();
}

}  // namespace detail

/// Similarity alignment of `est` onto `truth` using order-s observability
/// factors: U solves O_hat U ~ O_s(truth) in least squares, then damped
/// Gauss-Newton steps on the joint residual of (A, B, C) are accepted while
/// they reduce it.
inline EvalReport align_similarity(const SystemMatrices& truth, const SystemMatrices& est, Index s,
                                   const Matrix& O_hat, Index refine_steps = 20) {
    if (truth.n() != est.n()) throw DimensionError("align_similarity: state dimensions differ");
    if (truth.m() != est.m() || truth.p() != est.p()) throw DimensionError("align_similarity: (m,p) mismatch");
    const Index n = truth.n();
    EvalReport rep;
    rep.markov_error = markov_distance(truth, est, 2 * s);
    const Matrix Ot = observability_matrix(truth, s);
    detail::require_shape(O_hat, Ot.rows(), n, "O_hat");
    Matrix U = detail::pseudo_inverse(O_hat) * Ot;
    if (!(detail::condition_number(U) < 1e8)) U = Matrix::Identity(n, n);

    auto cost = [&](const Matrix& V) {
        if (!(detail::condition_number(V) < 1e8)) return std::numeric_limits<double>::infinity();
        return detail::alignment_residual(truth, est, V).squaredNorm();
    };
    double f = cost(U);
    double lambda = 1e-3;
    for (Index step = 0; step < refine_steps && std::isfinite(f) && f > 0; ++step) {
        const Vector r = detail::alignment_residual(truth, est, U);
        Matrix J(r.size(), n * n);
        for (Index q = 0; q < n * n; ++q) {
            Matrix Up = U;
            const double hstep = 1e-7 * std::max(1.0, std::abs(Up.data()[q]));
            Up.data()[q] += hstep;
            J.col(q) = (detail::alignment_residual(truth, est, Up) - r) / hstep;
        }
        const Matrix JtJ = J.transpose() * J;
        const Vector g = J.transpose() * r;
        bool accepted = false;
        for (int tries = 0; tries < 8 && !accepted; ++tries) {
            Matrix Dm = JtJ;
            Dm.diagonal().array() += lambda * (1.0 + JtJ.diagonal().array());
            const Vector delta = Dm.ldlt().solve(-g);
            Matrix Un = U + Eigen::Map<const Matrix>(delta.data(), n, n);
            const double fn = cost(Un);
            if (fn < f) {
                U = Un;
                f = fn;
                lambda = std::max(1e-12, lambda * 0.3);
                accepted = true;
            } else {
                lambda *= 10;
            }
        }
        if (!accepted) break;
    }
    rep.transform = U;
    rep.transform_condition = detail::condition_number(U);
    rep.alignment_failed = !(rep.transform_condition < 1e8);
    Eigen::PartialPivLU<Matrix> lu(U);
    rep.residual_A = (truth.A - lu.solve(est.A * U)).norm();
    rep.residual_B = (truth.B - lu.solve(est.B)).norm();
    rep.residual_C = (truth.C - est.C * U).norm();
    rep.residual_D = (truth.D - est.D).norm();
    return rep;
}

inline EvalReport align_similarity(const SystemMatrices& truth, const Realization& est) {
    return align_similarity(truth, est.system(), est.s, est.O_hat);
}

/// Alignment of two systems through their order-s observability matrices.
inline EvalReport align_similarity(const SystemMatrices& truth, const SystemMatrices& other, Index s) {
    return align_similarity(truth, other, s, observability_matrix(other, s));
}

}  // namespace sysid
