#pragma once

#include <sysid/algebra.hpp>
#include <sysid/core.hpp>
#include <sysid/ho_kalman.hpp>
#include <sysid/lds.hpp>
#include <sysid/random.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string_view>
#include <vector>

namespace sysid {

inline constexpr Index unobservable_check_horizon = 50;

enum class PairKind { unobservable, uncontrollable };

inline std::string_view to_string(PairKind k) {
    return k == PairKind::unobservable ? "unobservable" : "uncontrollable";
}

struct UnobservablePair {
    SystemMatrices sys;
    Vector v;
    double delta = 0;
    PairKind kind = PairKind::unobservable;

    /// max_{s <= S_max} |C A^s v| (unobservable) or |(A^s B)^T v| (uncontrollable).
    double leakage(Index horizon = unobservable_check_horizon) const {
        double worst = 0;
        if (kind == PairKind::unobservable) {
            Vector x = v;
            for (Index s = 0; s <= horizon; ++s, x = sys.A * x) worst = std::max(worst, (sys.C * x).norm());
        } else {
            Vector x = v;
            const Matrix At = sys.A.transpose();
            for (Index s = 0; s <= horizon; ++s, x = At * x) worst = std::max(worst, (sys.B.transpose() * x).norm());
        }
        return worst;
    }

    bool verify(Index horizon = unobservable_check_horizon) const {
        return std::abs(v.norm() - 1.0) <= 1e-12 && leakage(horizon) <= delta * (1.0 + 1e-9) + 1e-14;
    }
};

namespace detail {

inline Vector random_unit(Index n, CounterRng& rng) {
    std::normal_distribution<double> N(0.0, 1.0);
    Vector x(n);
    do {
        for (Index i = 0; i < n; ++i) x(i) = N(rng);
    } while (x.norm() < 1e-8);
    return x.normalized();
}

inline Matrix random_gaussian(Index r, Index c, CounterRng& rng) {
    std::normal_distribution<double> N(0.0, 1.0);
    Matrix M(r, c);
    for (Index j = 0; j < c; ++j)
        for (Index i = 0; i < r; ++i) M(i, j) = N(rng);
    return M;
}

}  // namespace detail

/// A = lambda v v^T + v r^T P + P M P with P = I - v v^T, so A v = lambda v and
/// the block on v-perp (random, rescaled to spectral radius 0.95) sets the rest
/// of the spectrum. C (2 x n) maps v-perp generically and has |C v| = delta;
/// hence |C A^s v| = |lambda|^s delta. B = I_n, D = 0.
inline UnobservablePair build_unobservable(Index n, double delta, double lambda, std::uint64_t seed) {
    if (n < 3) throw PreconditionError("build_unobservable: n must be >= 3");
    if (!(delta >= 0 && delta < 0.1)) throw PreconditionError("build_unobservable: delta must lie in [0, 0.1)");
    if (!(std::abs(lambda) <= 1.0)) throw PreconditionError("build_unobservable: |lambda| must be <= 1");
    CounterRng rng(seed, streams::system, 0);
    const Vector v = detail::random_unit(n, rng);
    const Matrix P = Matrix::Identity(n, n) - v * v.transpose();
    Matrix M = P * detail::random_gaussian(n, n, rng) * P;
    const double rho = spectral_radius(M);
    if (rho > 0) M *= 0.95 / rho;
    const Vector r = 0.5 * P * detail::random_unit(n, rng);
    const Matrix A = lambda * v * v.transpose() + v * r.transpose() + M;
    const Index m = 2;
    Matrix C = detail::random_gaussian(m, n, rng) * P;
    C.row(0) += delta * v.transpose();
    UnobservablePair pair{SystemMatrices(A, Matrix::Identity(n, n), C, Matrix::Zero(m, n)), v, delta,
                          PairKind::unobservable};
    if (!pair.verify()) throw PreconditionError("build_unobservable: construction failed verification");
    return pair;
}

/// Dual construction: (A^T, C^T) of an unobservable pair gives |(A^s B)^T v| = |C A^s v|.
inline UnobservablePair build_uncontrollable(Index n, double delta, double lambda, std::uint64_t seed) {
    const auto base = build_unobservable(n, delta, lambda, seed);
    const Index p = base.sys.m();
    UnobservablePair pair{SystemMatrices(base.sys.A.transpose(), base.sys.C.transpose(), Matrix::Identity(n, n),
                                         Matrix::Zero(n, p)),
                          base.v, delta, PairKind::uncontrollable};
    if (!pair.verify()) throw PreconditionError("build_uncontrollable: construction failed verification");
    return pair;
}

/// Block lower-triangular m(T+1) x p(T+1) matrix with block (i,j) = C A^{i-j-1} B for i > j.
inline Matrix toeplitz_P(const Matrix& A, const Matrix& B, const Matrix& C, Index T) {
    detail::require(T >= 0, "toeplitz_P: T must be >= 0");
    const Index n = A.rows(), m = C.rows(), p = B.cols();
    detail::require_shape(A, n, n, "A");
    detail::require_shape(B, n, p, "B");
    detail::require_shape(C, m, n, "C");
    Matrix P = Matrix::Zero(m * (T + 1), p * (T + 1));
    Matrix AiB = B;
    for (Index d = 1; d <= T; ++d) {
        const Matrix blk = C * AiB;
        for (Index j = 0; j + d <= T; ++j) P.block((j + d) * m, j * p, m, p) = blk;
        AiB = A * AiB;
    }
    return P;
}

inline Matrix toeplitz_P(const SystemMatrices& sys, Index T) { return toeplitz_P(sys.A, sys.B, sys.C, T); }

/// Covariance of (u_0..u_T, y_0..y_T), u-block first, for D = 0,
/// u, z ~ N(0, I), w ~ N(0, sigma_w), x_0 = 0.
struct ProcessCovariance {
    Matrix sigma;
    Index T = 0;
    Index m = 0, p = 0;
};

inline ProcessCovariance process_covariance(const SystemMatrices& sys, const Matrix& sigma_w, Index T) {
    sys.validate();
    if (sys.D.size() && sys.D.cwiseAbs().maxCoeff() != 0.0)
        throw PreconditionError("process_covariance: requires D = 0");
    detail::require_shape(sigma_w, sys.n(), sys.n(), "sigma_w");
    if (!is_psd(sigma_w)) throw PreconditionError("process_covariance: sigma_w must be PSD");
    const Index m = sys.m(), p = sys.p(), pu = p * (T + 1), my = m * (T + 1);
    const Matrix P = toeplitz_P(sys, T);
    const Matrix Pw = toeplitz_P(sys.A, psd_sqrt(sigma_w), sys.C, T);
    ProcessCovariance out;
    out.T = T;
    out.m = m;
    out.p = p;
    out.sigma = Matrix::Zero(pu + my, pu + my);
    out.sigma.topLeftCorner(pu, pu).setIdentity();
    out.sigma.bottomLeftCorner(my, pu) = P;
    out.sigma.topRightCorner(pu, my) = P.transpose();
    out.sigma.bottomRightCorner(my, my) =
        P * P.transpose() + Pw * Pw.transpose() + Matrix::Identity(my, my);
    return out;
}

inline ProcessCovariance process_covariance(const SystemMatrices& sys, Index T) {
    return process_covariance(sys, sys.B * sys.B.transpose(), T);
}

struct ClosenessReport {
    double mult_factor = 0;  // max |eig(S1^{-1/2} S2 S1^{-1/2} - I)|
    double tv_upper = 0;     // 0.5 |S1^{-1/2} S2 S1^{-1/2} - I|_F
    double paper_bound = std::numeric_limits<double>::quiet_NaN();  // 6 (T+1) |u| delta
};

/// A singular s1 is shifted to be positive definite; s2 receives the same shift.
inline ClosenessReport covariance_closeness(const ProcessCovariance& s1, const ProcessCovariance& s2) {
    if (s1.sigma.rows() != s2.sigma.rows() || s1.sigma.cols() != s2.sigma.cols())
        throw DimensionError("covariance_closeness: size mismatch " + detail::shape(s1.sigma) + " vs " +
                             detail::shape(s2.sigma));
    const Index N = s1.sigma.rows();
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (s1.sigma + s1.sigma.transpose()));
    Vector ev = es.eigenvalues();
    double shift = 0;
    if (ev.minCoeff() <= 0) {
        shift = 1e-12 - ev.minCoeff();
        ev.array() += shift;
    }
    const Matrix W = es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
    const Matrix S2 = s2.sigma + shift * Matrix::Identity(N, N);
    Matrix M = W * S2 * W - Matrix::Identity(N, N);
    M = 0.5 * (M + M.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> em(M, Eigen::EigenvaluesOnly);
    ClosenessReport rep;
    rep.mult_factor = em.eigenvalues().cwiseAbs().maxCoeff();
    rep.tv_upper = 0.5 * M.norm();
    return rep;
}

/// (A, B + v u^T, C, D) for unobservable pairs, (A, B, C + u v^T, D) for uncontrollable ones.
inline SystemMatrices perturbed_system(const UnobservablePair& pair, const Vector& u_vec) {
    SystemMatrices out = pair.sys;
    if (pair.kind == PairKind::unobservable) {
        if (u_vec.size() != pair.sys.p()) throw DimensionError("perturbed_system: u must have length p");
        out.B += pair.v * u_vec.transpose();
    } else {
        if (u_vec.size() != pair.sys.m()) throw DimensionError("perturbed_system: u must have length m");
        out.C += u_vec * pair.v.transpose();
    }
    return out;
}

/// Closeness of the trajectory laws of pair.sys and its perturbation, both
/// driven by the same process noise sigma_w = B B^T of the unperturbed system.
inline ClosenessReport lowerbound_closeness(const UnobservablePair& pair, const Vector& u_vec, Index T) {
    const auto sys2 = perturbed_system(pair, u_vec);
    const Matrix sw = pair.sys.B * pair.sys.B.transpose();
    auto rep = covariance_closeness(process_covariance(pair.sys, sw, T), process_covariance(sys2, sw, T));
    rep.paper_bound = 6.0 * static_cast<double>(T + 1) * u_vec.norm() * pair.delta;
    return rep;
}

struct GenericWitness {
    bool generic = false;
    Vector u, w;
    double value = 0;   // <u, A w>
    double norm_A = 0;
    double c_max = 0;   // largest c this witness certifies: min(value / |A|, |A|)
};

/// Maximizes <u, A w> over unit u perp v and unit w perp u. For fixed u the best
/// w is (I - u u^T) A^T u normalized, so the search runs over u alone:
/// f(u)^2 = |A^T u|^2 - (u^T A u)^2, seeded with singular vectors of the
/// compressed operator and refined by projected gradient ascent.
inline GenericWitness c_generic_check(const Matrix& A, const Vector& v, double c) {
    const Index n = A.rows();
    detail::require_shape(A, n, n, "A");
    if (v.size() != n) throw DimensionError("c_generic_check: v must have length n");
    if (std::abs(v.norm() - 1.0) > 1e-9) throw PreconditionError("c_generic_check: v must be a unit vector");
    GenericWitness out;
    out.norm_A = operator_norm(A);
    if (n < 3 || out.norm_A == 0.0) return out;
    const Matrix P = Matrix::Identity(n, n) - v * v.transpose();
    auto f2 = [&](const Vector& u) {
        const double q = u.dot(A * u);
        return std::max(0.0, (A.transpose() * u).squaredNorm() - q * q);
    };
    auto grad = [&](const Vector& u) {
        const double q = u.dot(A * u);
        Vector g = 2.0 * (A * (A.transpose() * u)) - 2.0 * q * ((A + A.transpose()) * u);
        g = P * g;
        return Vector(g - u.dot(g) * u);
    };
    std::vector<Vector> starts;
    Eigen::JacobiSVD<Matrix> svd(P * A * P, Eigen::ComputeFullU);
    for (Index i = 0; i < n; ++i) starts.push_back(svd.matrixU().col(i));
    for (Index i = 0; i < n; ++i) starts.push_back(Vector::Unit(n, i));
    CounterRng rng(0x5eed, streams::directions, static_cast<std::uint64_t>(n));
    for (int i = 0; i < 8; ++i) starts.push_back(detail::random_unit(n, rng));
    Vector best_u;
    double best = -1;
    for (Vector u : starts) {
        u = P * u;
        if (u.norm() < 1e-8) continue;
        u.normalize();
        double fu = f2(u);
        double step = 1.0 / std::max(1e-300, out.norm_A * out.norm_A);
        for (int it = 0; it < 500; ++it) {
            const Vector g = grad(u);
            if (g.norm() < 1e-14 * out.norm_A * out.norm_A) break;
            bool moved = false;
            for (int bt = 0; bt < 30; ++bt) {
                Vector cand = P * (u + step * g);
                cand.normalize();
                const double fc = f2(cand);
                if (fc > fu) {
                    u = cand;
                    fu = fc;
                    step *= 1.5;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if (!moved) break;
        }
        if (fu > best) {
            best = fu;
            best_u = u;
        }
    }
    if (best < 0) return out;
    Vector w = A.transpose() * best_u;
    w -= best_u.dot(w) * best_u;
    if (w.norm() <= 1e-12 * out.norm_A) return out;
    w.normalize();
    w -= best_u.dot(w) * best_u;
    w.normalize();
    out.u = best_u;
    out.w = w;
    out.value = best_u.dot(A * w);
    out.c_max = std::min(out.value / out.norm_A, out.norm_A);
    const double slack = 1e-12;
    out.generic = out.norm_A >= c * (1 - slack) && out.value >= c * out.norm_A * (1 - slack);
    return out;
}

/// One row of the indistinguishability sweep.
struct LowerBoundRow {
    double delta = 0;
    Index T = 0;
    double mult_factor = 0;
    double tv_upper = 0;
    double paper_bound = 0;
    double markov_distance = 0;
    double parameter_gap = 0;
    double c = 0;
};

/// Builds a (delta, v)-unobservable system with B = I, D = 0, perturbs B by
/// u_norm * v u^T along the c-generic witness u and compares the two.
inline LowerBoundRow lowerbound_row(Index n, double delta, double lambda, Index T, double u_norm,
                                    std::uint64_t seed) {
    const auto pair = build_unobservable(n, delta, lambda, seed);
    const auto gen = c_generic_check(pair.sys.A, pair.v, 0.0);
    if (gen.u.size() == 0) throw PreconditionError("lowerbound_row: no generic witness");
    const Vector u_vec = u_norm * gen.u;
    const auto sys2 = perturbed_system(pair, u_vec);
    const auto close = lowerbound_closeness(pair, u_vec, T);
    LowerBoundRow row;
    row.delta = delta;
    row.T = T;
    row.mult_factor = close.mult_factor;
    row.tv_upper = close.tv_upper;
    row.paper_bound = close.paper_bound;
    row.markov_distance = markov_distance(pair.sys, sys2, T);
    row.parameter_gap = align_similarity(pair.sys, sys2, n).parameter_gap();
    row.c = gen.c_max;
    return row;
}

}  // namespace sysid
