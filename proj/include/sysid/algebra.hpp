#pragma once

#include <sysid/coefficients.hpp>
#include <sysid/core.hpp>
#include <sysid/lds.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace sysid {

/// Stacked C, CA, ..., CA^{s-1} (sm x n).
inline Matrix observability_matrix(const SystemMatrices& sys, Index s) {
    detail::require(s >= 1, "observability_matrix: s must be >= 1");
    const Index m = sys.m();
    Matrix O(s * m, sys.n());
    Matrix block = sys.C;
    for (Index i = 0; i < s; ++i) {
        O.middleRows(i * m, m) = block;
        block = block * sys.A;
    }
    return O;
}

/// Concatenated B, AB, ..., A^{s-1}B (n x sp).
inline Matrix controllability_matrix(const SystemMatrices& sys, Index s) {
    detail::require(s >= 1, "controllability_matrix: s must be >= 1");
    const Index p = sys.p();
    Matrix Q(sys.n(), s * p);
    Matrix block = sys.B;
    for (Index i = 0; i < s; ++i) {
        Q.middleCols(i * p, p) = block;
        block = sys.A * block;
    }
    return Q;
}

inline double sigma_max(const Matrix& M) { return operator_norm(M); }

/// Smallest of the min(rows, cols) singular values.
inline double sigma_min(const Matrix& M) {
    if (M.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(M);
    return svd.singularValues().tail(1)(0);
}

inline constexpr double spectral_tolerance = 1e-9;

struct ConditionReport {
    double sigma_max_O2s = 0, sigma_min_Os = 0, sigma_max_Q2s = 0, sigma_min_Qs = 0;
    double kappa_obs = 0, kappa_ctrl = 0;  // +inf when the denominator vanishes
    double spectral_radius = 0;
    double norm_B = 0, norm_C = 0;
    bool degenerate = false;  // O_s or Q_s rank deficient
    bool well_behaved = false;
};

/// Checks the well-behavedness conditions: |B|, |C| >= 1, rho(A) <= 1 and
/// sigma_max(O_2s)/sigma_min(O_s), sigma_max(Q_2s)/sigma_min(Q_s) <= kappa.
inline ConditionReport condition_report(const SystemMatrices& sys, Index s, double kappa) {
    detail::require(s >= 1, "condition_report: s must be >= 1");
    ConditionReport r;
    const Matrix Os = observability_matrix(sys, s), O2s = observability_matrix(sys, 2 * s);
    const Matrix Qs = controllability_matrix(sys, s), Q2s = controllability_matrix(sys, 2 * s);
    r.sigma_max_O2s = sigma_max(O2s);
    r.sigma_max_Q2s = sigma_max(Q2s);
    // Full column rank of O_s needs sm >= n; otherwise the n-th singular value is 0.
    r.sigma_min_Os = Os.rows() >= Os.cols() ? sigma_min(Os) : 0.0;
    r.sigma_min_Qs = Qs.cols() >= Qs.rows() ? sigma_min(Qs) : 0.0;
    constexpr double inf = std::numeric_limits<double>::infinity();
    const double floor = 1e-300;
    r.kappa_obs = r.sigma_min_Os > floor ? r.sigma_max_O2s / r.sigma_min_Os : inf;
    r.kappa_ctrl = r.sigma_min_Qs > floor ? r.sigma_max_Q2s / r.sigma_min_Qs : inf;
    r.degenerate = !(r.sigma_min_Os > floor) || !(r.sigma_min_Qs > floor);
    r.spectral_radius = spectral_radius(sys.A);
    r.norm_B = operator_norm(sys.B);
    r.norm_C = operator_norm(sys.C);
    r.well_behaved = r.norm_B >= 1.0 && r.norm_C >= 1.0 && r.spectral_radius <= 1.0 + spectral_tolerance &&
                     r.kappa_obs <= kappa && r.kappa_ctrl <= kappa;
    return r;
}

struct MatrixPolyEval {
    Matrix F;                       // F_{alpha,k}(A), m x n
    std::vector<Matrix> F_partial;  // F^{(i)}_{alpha,k}(A), i = 0..k+s
};

/// F_{alpha,k}(A) = C A^{s+k} - alpha_1 C A^{s-1} - ... - alpha_s C, and the
/// truncated polynomials
///   F^{(i)} = C A^i                                   for i <= k
///   F^{(i)} = C A^i - sum_{j=1}^{i-k} alpha_j C A^{i-k-j}  for k < i <= k+s.
inline MatrixPolyEval matrix_poly_F(const SystemMatrices& sys, const StabilizerCoefficients& alpha, Index k) {
    alpha.validate();
    detail::require(k >= 1, "matrix_poly_F: k must be >= 1");
    if (alpha.m() != sys.m()) throw DimensionError("matrix_poly_F: alpha blocks must be m x m");
    const Index s = alpha.s();
    std::vector<Matrix> CA;  // C A^i, i = 0..k+s
    CA.reserve(static_cast<std::size_t>(k + s + 1));
    CA.push_back(sys.C);
    for (Index i = 1; i <= k + s; ++i) CA.push_back(CA.back() * sys.A);

    MatrixPolyEval out;
    out.F_partial.reserve(CA.size());
    for (Index i = 0; i <= k + s; ++i) {
        Matrix Fi = CA[static_cast<std::size_t>(i)];
        for (Index j = 1; j <= i - k; ++j) Fi -= alpha[j] * CA[static_cast<std::size_t>(i - k - j)];
        out.F_partial.push_back(std::move(Fi));
    }
    out.F = out.F_partial.back();
    return out;
}

struct PotentialValue {
    double G = 0;  // sum_{i<=l} |F A^i B|_F^2
    double H = 0;  // sum_{i<=l} |F A^i|_F^2
    Index l = 0;
};

inline PotentialValue potential(const SystemMatrices& sys, const StabilizerCoefficients& alpha, Index k, Index l) {
    detail::require(l >= 0, "potential: l must be >= 0");
    PotentialValue v;
    v.l = l;
    Matrix FAi = matrix_poly_F(sys, alpha, k).F;
    for (Index i = 0; i <= l; ++i) {
        v.H += FAi.squaredNorm();
        v.G += (FAi * sys.B).squaredNorm();
        FAi = FAi * sys.A;
    }
    return v;
}

/// H_{alpha,l} <= kappa^2 s G_{alpha,l+s}, with slack for rounding.
inline bool potential_relation_holds(const SystemMatrices& sys, const StabilizerCoefficients& alpha, Index k,
                                     Index l, double kappa) {
    const double H = potential(sys, alpha, k, l).H;
    const double G = potential(sys, alpha, k, l + alpha.s()).G;
    return H <= kappa * kappa * static_cast<double>(alpha.s()) * G * (1 + 1e-9) + 1e-300;
}

struct PowerNormResult {
    double log_actual;  // log |A^L|, -inf when A^L = 0
    double log_bound;   // log n + n log(2 (1 + |A|) L)
    double actual() const { return std::exp(log_actual); }
    double bound() const { return std::exp(log_bound); }
    bool holds() const { return log_actual <= log_bound; }
};

/// |A^L| against n (2 (1 + |A|) L)^n for A with spectral radius <= 1. Powers
/// are renormalized as they are formed; the scale lives in a log accumulator.
inline PowerNormResult power_norm_check(const Matrix& A, Index L) {
    detail::require_shape(A, A.rows(), A.rows(), "A");
    detail::require(L >= 1, "power_norm_check: L must be >= 1");
    if (spectral_radius(A) > 1.0 + spectral_tolerance)
        throw PreconditionError("power_norm_check: eigenvalue magnitude exceeds 1");
    const Index n = A.rows();
    Matrix P = Matrix::Identity(n, n);
    double log_scale = 0.0;
    for (Index i = 0; i < L; ++i) {
        P = P * A;
        const double mag = P.cwiseAbs().maxCoeff();
        if (mag == 0.0) break;
        if (mag > 1e64 || mag < 1e-64) {
            P /= mag;
            log_scale += std::log(mag);
        }
    }
    const double nrm = operator_norm(P);
    PowerNormResult r;
    r.log_actual = nrm == 0.0 ? -std::numeric_limits<double>::infinity() : std::log(nrm) + log_scale;
    r.log_bound = std::log(static_cast<double>(n)) +
                  static_cast<double>(n) * std::log(2.0 * (1.0 + operator_norm(A)) * static_cast<double>(L));
    return r;
}

/// Largest empirical E<v,x>^4 / E<v,x>^2^2 over the coordinate axes plus
/// `directions` random unit vectors. Samples are the columns of `X`. Being a
/// max over finitely many v, this is a lower estimate of the true constant.
inline double hypercontractivity_ratio(const Matrix& X, Index directions, std::uint64_t seed) {
    const Index d = X.rows();
    Matrix V(d, d + directions);
    V.leftCols(d).setIdentity();
    for (Index j = 0; j < directions; ++j) {
        CounterRng r(seed, streams::directions, static_cast<std::uint64_t>(j));
        Vector v(d);
        for (Index i = 0; i < d; ++i) v(i) = std::normal_distribution<double>{}(r);
        V.col(d + j) = v / v.norm();
    }
    double best = 0.0;
    for (Index j = 0; j < V.cols(); ++j) {
        const Eigen::ArrayXd proj = (V.col(j).transpose() * X).transpose().array();
        const double m2 = proj.square().mean();
        const double m4 = proj.square().square().mean();
        if (!(m2 > 0.0)) throw PreconditionError("hypercontractivity_probe: zero empirical variance");
        best = std::max(best, m4 / (m2 * m2));
    }
    return best;
}

inline double hypercontractivity_probe(const DistributionSpec& spec, Index directions, Index samples,
                                       std::uint64_t seed) {
    detail::require(samples >= 10000, "hypercontractivity_probe: needs >= 1e4 samples");
    Matrix X(spec.dim(), samples);
    const auto draws = sample_distribution(spec, samples, seed);
    for (Index i = 0; i < samples; ++i) X.col(i) = draws[static_cast<std::size_t>(i)];
    return hypercontractivity_ratio(X, directions, seed);
}

struct AntiConcentration {
    std::vector<double> probabilities;  // per beta
    double max_probability = 0;
    double bound = 0;  // 1 - 1/(10 max(K, 3))
};

/// Empirical Pr[|z - beta| <= 0.1] over a grid of beta for a scalar law.
inline AntiConcentration anti_concentration_probe(const DistributionSpec& spec, const std::vector<double>& beta_grid,
                                                  Index samples, std::uint64_t seed) {
    if (spec.dim() != 1) throw DimensionError("anti_concentration_probe: scalar law required");
    const auto draws = sample_distribution(spec, samples, seed);
    AntiConcentration out;
    for (double beta : beta_grid) {
        Index hits = 0;
        for (const auto& z : draws)
            if (std::abs(z(0) - beta) <= 0.1) ++hits;
        const double prob = static_cast<double>(hits) / static_cast<double>(samples);
        out.probabilities.push_back(prob);
        out.max_probability = std::max(out.max_probability, prob);
    }
    out.bound = 1.0 - 1.0 / (10.0 * std::max(3.0, spec.K()));
    return out;
}

}  // namespace sysid
