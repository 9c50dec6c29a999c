#pragma once

#include <sysid/core.hpp>
#include <sysid/ho_kalman.hpp>
#include <sysid/lds.hpp>
#include <sysid/lowerbound.hpp>
#include <sysid/markov.hpp>
#include <sysid/random.hpp>
#include <sysid/stabilizer.hpp>

#include <chrono>
#include <random>
#include <string>

namespace sysid {

/// Entries iid N(0,1); A divided by rho(A) (1 + 1e-6) and scaled by `radius_cap`.
inline SystemMatrices random_stable_system(Index n, Index m, Index p, std::uint64_t seed, double radius_cap = 1.0,
                                           bool with_D = true) {
    detail::require(n >= 1 && m >= 1 && p >= 1, "random_stable_system: dimensions must be positive");
    CounterRng rng(seed, streams::system, 1);
    Matrix A = detail::random_gaussian(n, n, rng);
    const double rho = spectral_radius(A);
    if (rho > 0) A *= radius_cap / (rho * (1.0 + 1e-6));
    Matrix B = detail::random_gaussian(n, p, rng);
    Matrix C = detail::random_gaussian(m, n, rng);
    Matrix D = with_D ? detail::random_gaussian(m, p, rng) : Matrix::Zero(m, p);
    return SystemMatrices(A, B, C, D);
}

/// A = I + dt N (one Jordan block at eigenvalue 1, N the shift), the first
/// input drives the last state, the second input the first state; the outputs
/// read the first and last states. n = 3, m = p = 2, D = 0.
inline SystemMatrices jordan_integrator_system(double dt = 0.1) {
    detail::require(dt > 0, "jordan_integrator_system: dt must be positive");
    Matrix A = Matrix::Identity(3, 3);
    A(0, 1) = dt;
    A(1, 2) = dt;
    Matrix B = Matrix::Zero(3, 2);
    B(2, 0) = 1;
    B(0, 1) = 1;
    Matrix C = Matrix::Zero(2, 3);
    C(0, 0) = 1;
    C(1, 2) = 1;
    return SystemMatrices(A, B, C, Matrix::Zero(2, 2));
}

struct StabilizerSettings {
    Index s = 2;
    Index k = 0;  // 0: mode default
    double eps = 0.1;
    double P0 = 0, P1 = 0, L = 0;  // 0: calibrated
    Index num_checkpoints = 0;     // 0: calibrated
    double c0 = 20;
    double tol = 1e-9;
    Index max_iters = 100000;
    bool minimize_margin = false;
};

inline ConstraintConfig resolve_constraints(const SystemBounds& bounds, const StabilizerSettings& st, Index horizon,
                                            Mode mode) {
    auto cfg = calibrate(bounds, st.s, horizon, mode, st.eps, st.c0, st.k);
    if (st.P0 > 0) cfg.P0 = st.P0;
    if (st.P1 > 0) cfg.P1 = st.P1;
    if (st.num_checkpoints > 0) {
        cfg.num_checkpoints = st.num_checkpoints;
        if (mode == Mode::practical && st.L <= 0) space_checkpoints(cfg, horizon);
    }
    if (st.L > 0) cfg.L = st.L;
    cfg.validate();
    return cfg;
}

class InfeasibleError : public Error {
public:
    InfeasibleError(const std::string& msg, double violation) : Error(msg), max_violation(violation) {}
    double max_violation;
};

struct PipelineResult {
    ConstraintConfig constraints;
    FeasibilitySolution solution;
    MarkovEstimate estimate;
    Realization realization;
    double seconds_stabilize = 0, seconds_estimate = 0, seconds_realize = 0;
};

/// Algorithm 2 (stabilizer), Algorithm 1 step 2 (estimator) and Algorithm 3
/// (realization) on one trajectory.
inline PipelineResult identify(const Trajectory& traj, const SystemBounds& bounds, const StabilizerSettings& st,
                               Mode mode, Index order) {
    using clock = std::chrono::steady_clock;
    auto secs = [](clock::time_point a) { return std::chrono::duration<double>(clock::now() - a).count(); };
    PipelineResult r;
    auto t0 = clock::now();
    r.constraints = resolve_constraints(bounds, st, traj.T, mode);
    const auto cs = build_constraints(traj, r.constraints);
    r.solution = solve_feasibility(cs, st.tol, st.max_iters, SolverOptions{st.minimize_margin});
    if (!r.solution.feasible)
        throw InfeasibleError("stabilizer infeasible: max_violation = " + std::to_string(r.solution.max_violation),
                              r.solution.max_violation);
    r.seconds_stabilize = secs(t0);
    t0 = clock::now();
    r.estimate = estimate_markov(traj, r.solution.coefficients, r.constraints.k, st.s);
    r.seconds_estimate = secs(t0);
    t0 = clock::now();
    r.realization = ho_kalman(r.estimate, st.s, order);
    r.seconds_realize = secs(t0);
    return r;
}

}  // namespace sysid
