#pragma once

#include <sysid/algebra.hpp>
#include <sysid/coefficients.hpp>
#include <sysid/core.hpp>
#include <sysid/lds.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

namespace sysid {

enum class Mode { paper, practical };

inline std::string_view to_string(Mode m) { return m == Mode::paper ? "paper" : "practical"; }

inline Mode mode_from_string(std::string_view s) {
    if (s == "paper") return Mode::paper;
    if (s == "practical") return Mode::practical;
    throw ConfigError("mode must be 'paper' or 'practical', got '" + std::string(s) + "'");
}

/// The parameter set the stabilizer may depend on: norms of the system
/// matrices, dimensions, the condition bound kappa, the hypercontractivity
/// constant K and the noise scales.
struct SystemBounds {
    double norm_A = 1, norm_B = 1, norm_C = 1, norm_D = 0;
    double kappa = 1, K = 3, sigma_w = 1, sigma_z = 1;
    Index n = 1, m = 1, p = 1;

    static SystemBounds from_system(const SystemMatrices& sys, const NoiseModel& noise, Index s) {
        SystemBounds b;
        const auto rep = condition_report(sys, s, std::numeric_limits<double>::infinity());
        b.norm_A = operator_norm(sys.A);
        b.norm_B = rep.norm_B;
        b.norm_C = rep.norm_C;
        b.norm_D = operator_norm(sys.D);
        b.kappa = std::max(1.0, std::max(rep.kappa_obs, rep.kappa_ctrl));
        if (!std::isfinite(b.kappa))
            throw PreconditionError("system bounds: O_s or Q_s is rank deficient at s = " + std::to_string(s) +
                                    "; give the bounds explicitly");
        b.K = noise.input.K();
        b.sigma_w = std::sqrt(std::max(0.0, operator_norm(noise.process.covariance())));
        b.sigma_z = std::sqrt(std::max(0.0, operator_norm(noise.observation.covariance())));
        b.n = sys.n();
        b.m = sys.m();
        b.p = sys.p();
        return b;
    }
};

struct ConstraintConfig {
    Index s = 1;
    Index k = 10;
    double P0 = 1;
    double P1 = 1;
    double L = 1;       // checkpoint spacing
    double L_full = 1;  // P2 log^2(1/eps) / eps^2; equals L in paper mode
    Index num_checkpoints = 1;
    double eps = 0.1;
    Mode mode = Mode::practical;

    double radius() const { return P1 * std::log(1.0 / eps); }
    Index spacing() const { return static_cast<Index>(L); }

    /// Targets i L + k, i = 1..num_checkpoints; the regressors sit at i L - j.
    std::vector<Index> checkpoint_indices() const {
        std::vector<Index> idx;
        for (Index i = 1; i <= num_checkpoints; ++i) idx.push_back(i * spacing() + k);
        return idx;
    }

    void validate() const {
        if (s < 1) throw ConfigError("stabilizer: s must be >= 1");
        if (k < 1) throw ConfigError("stabilizer: k must be >= 1");
        if (!(P0 > 0) || !(P1 > 0) || !(L >= 1)) throw ConfigError("stabilizer: P0, P1, L must be positive");
        if (!(eps > 0 && eps < 1)) throw ConfigError("stabilizer: eps must lie in (0,1)");
        if (num_checkpoints < 1) throw ConfigError("stabilizer: needs at least one checkpoint");
        if (spacing() < s) throw ConfigError("stabilizer: checkpoint spacing must be >= s");
    }

    Index required_horizon() const { return num_checkpoints * spacing() + k; }
};

/// Practical spacing L' = min(L_full, (horizon - k - s) / count), with the count
/// reduced until consecutive checkpoint windows no longer overlap.
inline void space_checkpoints(ConstraintConfig& cfg, Index horizon) {
    const Index usable = horizon - cfg.k - cfg.s;
    if (usable < cfg.k + cfg.s + 1)
        throw PreconditionError("stabilizer: horizon " + std::to_string(horizon) + " too short for k + s = " +
                                std::to_string(cfg.k + cfg.s));
    cfg.num_checkpoints = std::clamp<Index>(cfg.num_checkpoints, 1, usable / (cfg.k + cfg.s + 1));
    cfg.L = std::min(cfg.L_full, std::floor(static_cast<double>(usable) / static_cast<double>(cfg.num_checkpoints)));
}

/// Default constants.
///
///   P0 = kappa * g * |C| * sqrt(s) * m, g = (sqrt(n) kappa)^{(k+s)/s}
///   P1 = 100 P0 (k+s) (1 + sigma_w + sigma_z) max(1, |B|, |C|, |D|)^2
///   P2 = 100 P1,  L = P2 log^2(1/eps) / eps^2
///
/// `paper` uses k = 10 s and 100 s n m^2 K log L checkpoints spaced L apart.
/// `practical` uses k = 2 s (the least lag that still yields every block the
/// realization step reads), replaces g by min(g, |A|^{k+s}), and places
/// c0 log L checkpoints evenly over the available horizon.
inline ConstraintConfig calibrate(const SystemBounds& b, Index s, Index horizon, Mode mode, double eps = 0.1,
                                  double c0 = 20.0, Index k_override = 0) {
    ConstraintConfig cfg;
    cfg.s = s;
    cfg.mode = mode;
    cfg.eps = eps;
    cfg.k = k_override > 0 ? k_override : (mode == Mode::paper ? 10 * s : 2 * s);
    const double sd = static_cast<double>(s), kd = static_cast<double>(cfg.k);
    double growth = std::pow(std::sqrt(static_cast<double>(b.n)) * b.kappa, (kd + sd) / sd);
    if (mode == Mode::practical) growth = std::min(growth, std::pow(std::max(1.0, b.norm_A), kd + sd));
    cfg.P0 = b.kappa * growth * std::max(1.0, b.norm_C) * std::sqrt(sd) * static_cast<double>(b.m);
    const double mx = std::max({1.0, b.norm_B, b.norm_C, b.norm_D});
    cfg.P1 = 100.0 * cfg.P0 * (kd + sd) * (1.0 + b.sigma_w + b.sigma_z) * mx * mx;
    const double P2 = 100.0 * cfg.P1;
    const double log_eps = std::log(1.0 / eps);
    const double L = P2 * log_eps * log_eps / (eps * eps);
    cfg.L_full = std::floor(L);
    if (mode == Mode::paper) {
        cfg.L = std::floor(L);
        cfg.num_checkpoints = static_cast<Index>(std::ceil(100.0 * sd * static_cast<double>(b.n) *
                                                           static_cast<double>(b.m * b.m) * b.K * std::log(L)));
    } else {
        const Index count = std::max<Index>(1, static_cast<Index>(std::ceil(c0 * std::log(L))));
        cfg.num_checkpoints = count;
        space_checkpoints(cfg, horizon);
    }
    return cfg;
}

/// |M x - b|_2 <= radius, x the flattened coefficient vector.
struct BallConstraint {
    enum class Kind { coefficient_norm, checkpoint, generic };
    Matrix M;
    Vector b;
    double radius = 0;
    Kind kind = Kind::generic;
    Index index = 0;  // block j for norm caps, target time for checkpoints

    double residual_norm(const Vector& x) const { return (M * x - b).norm(); }
    double violation(const Vector& x) const { return std::max(0.0, residual_norm(x) - radius); }
};

struct ConstraintSystem {
    std::vector<BallConstraint> constraints;
    Index dim = 0;
    Index s = 1, m = 1;                                        // coefficient layout of x
    double block_cap = std::numeric_limits<double>::infinity();  // projection radius per alpha_j

    std::size_t size() const { return constraints.size(); }

    double max_violation(const Vector& x) const {
        double v = 0;
        for (const auto& c : constraints) v = std::max(v, c.violation(x));
        return v;
    }

    /// max_i (|M_i x - b_i| - r_i); negative inside the feasible set.
    double margin(const Vector& x) const {
        double v = -std::numeric_limits<double>::infinity();
        for (const auto& c : constraints) v = std::max(v, c.residual_norm(x) - c.radius);
        return v;
    }
};

/// Constraint system over alpha:
///   |alpha_j|_F <= P0                                      j = 1..s
///   |y_{iL+k} - sum_j alpha_j y_{iL-j}|_2 <= P1 log(1/eps)  i = 1..num_checkpoints
inline ConstraintSystem build_constraints(const Trajectory& traj, const ConstraintConfig& cfg) {
    cfg.validate();
    traj.validate();
    if (cfg.required_horizon() > traj.T)
        throw PreconditionError("build_constraints: trajectory too short (T=" + std::to_string(traj.T) +
                                ", checkpoints need " + std::to_string(cfg.required_horizon()) + ")");
    const Index m = traj.m(), s = cfg.s, mm = m * m;
    ConstraintSystem cs;
    cs.s = s;
    cs.m = m;
    cs.dim = s * mm;
    cs.block_cap = cfg.P0;
    for (Index j = 0; j < s; ++j) {
        BallConstraint c;
        c.kind = BallConstraint::Kind::coefficient_norm;
        c.index = j + 1;
        c.M = Matrix::Zero(mm, cs.dim);
        c.M.middleCols(j * mm, mm).setIdentity();
        c.b = Vector::Zero(mm);
        c.radius = cfg.P0;
        cs.constraints.push_back(std::move(c));
    }
    const Matrix Im = Matrix::Identity(m, m);
    for (Index target : cfg.checkpoint_indices()) {
        const Index base = target - cfg.k;
        BallConstraint c;
        c.kind = BallConstraint::Kind::checkpoint;
        c.index = target;
        c.M.resize(m, cs.dim);
        // alpha_j y = (y^T kron I_m) vec(alpha_j)
        for (Index j = 1; j <= s; ++j) {
            const Vector yj = traj.y.col(base - j);
            for (Index col = 0; col < m; ++col) c.M.middleCols((j - 1) * mm + col * m, m) = yj(col) * Im;
        }
        c.b = traj.y.col(target);
        c.radius = cfg.radius();
        cs.constraints.push_back(std::move(c));
    }
    return cs;
}

struct FeasibilitySolution {
    StabilizerCoefficients coefficients;
    Vector x;                 // flattened coefficients
    double max_violation = 0;
    double margin = 0;        // max_i (|residual_i| - radius_i) at x
    Index iterations = 0;
    bool feasible = false;
};

struct SolverOptions {
    /// Keep iterating after the first feasible point, minimizing the signed
    /// margin over the whole budget.
    bool minimize_margin = false;
};

namespace detail {

inline void project_blocks(Vector& x, Index blocks, double cap) {
    if (!std::isfinite(cap) || blocks <= 0) return;
    const Index len = x.size() / blocks;
    for (Index j = 0; j < blocks; ++j) {
        auto seg = x.segment(j * len, len);
        const double nrm = seg.norm();
        if (nrm > cap) seg *= cap / nrm;
    }
}

}  // namespace detail

/// Projected subgradient descent on the convex function
///   phi(x) = max_i (|M_i x - b_i| - r_i),
/// started from the least-squares point of the stacked constraints and kept
/// inside the per-block cap. Steps are taken in the metric whitened by the
/// stacked constraint matrix (R^T R = S^T S), so a unit step moves the stacked
/// residual by at most one unit regardless of data scale. Step sizes follow
/// D / sqrt(iter). Stops at the first iterate with max(0, phi) <= tol unless
/// `minimize_margin` is set; the best iterate is returned.
inline FeasibilitySolution solve_feasibility(const ConstraintSystem& cs, double tol, Index max_iters,
                                             SolverOptions opts = {}) {
    if (cs.constraints.empty()) throw PreconditionError("solve_feasibility: empty constraint system");
    const Index dim = cs.dim;
    Index rows = 0;
    for (const auto& c : cs.constraints) {
        detail::require_shape(c.M, c.b.size(), dim, "constraint matrix");
        rows += c.M.rows();
    }
    Matrix S(rows, dim);
    Vector bs(rows);
    std::vector<Index> offset;
    {
        Index r = 0;
        for (const auto& c : cs.constraints) {
            offset.push_back(r);
            S.middleRows(r, c.M.rows()) = c.M;
            bs.segment(r, c.b.size()) = c.b;
            r += c.M.rows();
        }
    }
    const double scale = std::max(S.cwiseAbs().maxCoeff(), 1e-300);
    Matrix Saug(rows + dim, dim);
    Saug.topRows(rows) = S;
    Saug.bottomRows(dim) = Matrix::Identity(dim, dim) * (1e-10 * scale);
    Vector baug = Vector::Zero(rows + dim);
    baug.head(rows) = bs;
    Eigen::HouseholderQR<Matrix> qr(Saug);
    const Matrix R = qr.matrixQR().topRows(dim).triangularView<Eigen::Upper>();
    Vector x = qr.solve(baug);
    detail::project_blocks(x, cs.s, cs.block_cap);

    auto evaluate = [&](const Vector& v, Index& active, Vector& e_active) {
        const Vector res = S * v - bs;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < cs.constraints.size(); ++i) {
            const auto& c = cs.constraints[i];
            const double val = res.segment(offset[i], c.b.size()).norm() - c.radius;
            if (val > best) {
                best = val;
                active = static_cast<Index>(i);
            }
        }
        const auto& c = cs.constraints[static_cast<std::size_t>(active)];
        e_active = res.segment(offset[static_cast<std::size_t>(active)], c.b.size());
        return best;
    };

    Index active = 0;
    Vector e;
    double phi = evaluate(x, active, e);
    FeasibilitySolution sol;
    Vector best_x = x;
    double best_phi = phi;
    double D = 0.5 * std::max(1e-12, (S * x - bs).cwiseAbs().maxCoeff());
    Index it = 0;
    for (; it < max_iters; ++it) {
        if (!opts.minimize_margin && std::max(0.0, best_phi) <= tol) break;
        const double en = e.norm();
        if (en == 0.0) break;  // 0 is a subgradient: optimal
        const auto& c = cs.constraints[static_cast<std::size_t>(active)];
        const Vector g = c.M.transpose() * (e / en);
        const Vector gw = R.transpose().triangularView<Eigen::Lower>().solve(g);
        const double gn = gw.norm();
        if (!(gn > 0.0)) break;
        const double step = D / std::sqrt(static_cast<double>(it + 1));
        const Vector dx = R.triangularView<Eigen::Upper>().solve(gw * (step / gn));
        x -= dx;
        detail::project_blocks(x, cs.s, cs.block_cap);
        phi = evaluate(x, active, e);
        if (phi < best_phi) {
            best_phi = phi;
            best_x = x;
        }
    }
    sol.x = best_x;
    sol.margin = best_phi;
    sol.max_violation = cs.max_violation(best_x);
    sol.iterations = it;
    sol.feasible = sol.max_violation <= tol;
    if (cs.dim == cs.s * cs.m * cs.m) sol.coefficients = StabilizerCoefficients::unflatten(best_x, cs.s, cs.m);
    return sol;
}

/// Ground-truth coefficients solving C A^{k+s} = alpha_1 C A^{s-1} + ... + alpha_s C
/// in the minimum-norm least-squares sense. Test and evaluation use only.
inline StabilizerCoefficients oracle_alpha(const SystemMatrices& sys, Index k, Index s) {
    detail::require(s >= 1 && k >= 0, "oracle_alpha: s >= 1, k >= 0");
    const Matrix O = observability_matrix(sys, s);
    Eigen::JacobiSVD<Matrix> svd(O.transpose(), Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (O.rows() < O.cols() || sv(sv.size() - 1) <= 1e-10 * std::max(1.0, sv(0)))
        throw PreconditionError("oracle_alpha: observability matrix O_s is rank deficient");
    Matrix target = sys.C;
    for (Index i = 0; i < k + s; ++i) target = target * sys.A;
    // O^T X^T = target^T, X = [beta_0 .. beta_{s-1}] with beta_i multiplying C A^i.
    const Matrix X = svd.solve(target.transpose()).transpose();
    const Index m = sys.m();
    std::vector<Matrix> alpha;
    for (Index j = 1; j <= s; ++j) alpha.push_back(X.middleCols((s - j) * m, m));
    return StabilizerCoefficients(std::move(alpha));
}

}  // namespace sysid
