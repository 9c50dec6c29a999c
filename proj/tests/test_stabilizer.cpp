#include "support.hpp"

#include <gtest/gtest.h>

using namespace sysid;
namespace ts = testing_support;

namespace {

ConstraintConfig manual_config(Index s, Index k, Index L, Index count, double P0, double P1) {
    ConstraintConfig cfg;
    cfg.s = s;
    cfg.k = k;
    cfg.L = static_cast<double>(L);
    cfg.L_full = cfg.L;
    cfg.num_checkpoints = count;
    cfg.P0 = P0;
    cfg.P1 = P1;
    return cfg;
}

BallConstraint ball(double center, double radius) {
    BallConstraint c;
    c.M = Matrix::Identity(1, 1);
    c.b = Vector::Constant(1, center);
    c.radius = radius;
    return c;
}

ConstraintSystem scalar_system(std::vector<BallConstraint> cs) {
    ConstraintSystem sys;
    sys.constraints = std::move(cs);
    sys.dim = 1;
    return sys;
}

struct Problem {
    SystemMatrices sys;
    NoiseModel noise;
    Trajectory traj;
    ConstraintConfig cfg;
};

Problem simulated_problem(std::uint64_t seed, Index T = 20000) {
    std::mt19937_64 rng(seed);
    Problem p{ts::well_behaved_system(rng, 3, 2, 2, 2, 100.0), {}, {}, {}};
    p.noise = NoiseModel::isotropic(p.sys, DistributionKind::gaussian, 0.5, 0.5);
    p.traj = simulate(p.sys, p.noise, T, seed);
    p.cfg = calibrate(SystemBounds::from_system(p.sys, p.noise, 2), 2, T, Mode::practical);
    return p;
}

}  // namespace

TEST(Mode, RoundTrip) {
    EXPECT_EQ(mode_from_string("paper"), Mode::paper);
    EXPECT_EQ(mode_from_string(to_string(Mode::practical)), Mode::practical);
    EXPECT_THROW(mode_from_string("fast"), ConfigError);
}

TEST(BuildConstraints, CountsByConstruction) {
    const Matrix one = Matrix::Constant(1, 1, 1.0);
    const SystemMatrices sys(one * 0.5, one, one, one);
    const auto traj = simulate(sys, NoiseModel::isotropic(sys, DistributionKind::gaussian, 1, 1), 100, 1);
    EXPECT_EQ(build_constraints(traj, manual_config(1, 10, 20, 1, 1, 1)).size(), 2u);
    EXPECT_EQ(build_constraints(traj, manual_config(3, 5, 10, 4, 1, 1)).size(), 7u);
}

TEST(BuildConstraints, ZeroCandidateViolation) {
    std::mt19937_64 rng(2);
    const auto sys = ts::random_system(rng, 3, 2, 2);
    const auto traj = simulate(sys, NoiseModel::isotropic(sys, DistributionKind::laplace, 1, 1), 500, 2);
    const auto cfg = manual_config(2, 4, 50, 8, 1.0, 0.5);
    const auto cs = build_constraints(traj, cfg);
    const Vector zero = Vector::Zero(cs.dim);
    const auto idx = cfg.checkpoint_indices();
    Index seen = 0;
    for (const auto& c : cs.constraints) {
        if (c.kind != BallConstraint::Kind::checkpoint) continue;
        const Index t = idx[static_cast<std::size_t>(seen++)];
        EXPECT_EQ(c.index, t);
        EXPECT_NEAR(c.violation(zero), std::max(0.0, traj.y.col(t).norm() - 0.5 * std::log(10.0)), 1e-12);
    }
    EXPECT_EQ(seen, 8);
}

TEST(BuildConstraints, ResidualMatchesTransform) {
    std::mt19937_64 rng(3);
    const auto sys = ts::random_system(rng, 3, 2, 2);
    const auto traj = simulate(sys, NoiseModel::isotropic(sys, DistributionKind::gaussian, 1, 1), 400, 3);
    const auto cfg = manual_config(2, 3, 40, 6, 1.0, 1.0);
    const auto cs = build_constraints(traj, cfg);
    StabilizerCoefficients alpha({ts::gaussian(2, 2, rng), ts::gaussian(2, 2, rng)});
    const Vector x = alpha.flatten();
    for (const auto& c : cs.constraints) {
        if (c.kind != BallConstraint::Kind::checkpoint) continue;
        const Index base = c.index - cfg.k;
        Vector r = traj.y.col(c.index);
        for (Index j = 1; j <= 2; ++j) r -= alpha[j] * traj.y.col(base - j);
        EXPECT_NEAR(c.residual_norm(x), r.norm(), 1e-10);
    }
}

TEST(BuildConstraints, Errors) {
    const Matrix one = Matrix::Constant(1, 1, 1.0);
    const SystemMatrices sys(one * 0.5, one, one, one);
    const auto traj = simulate(sys, NoiseModel::isotropic(sys, DistributionKind::gaussian, 1, 1), 100, 1);
    EXPECT_THROW(build_constraints(traj, manual_config(1, 10, 20, 5, 1, 1)), PreconditionError);
    EXPECT_THROW(build_constraints(traj, manual_config(1, 10, 20, 1, -1, 1)), ConfigError);
    EXPECT_THROW(build_constraints(traj, manual_config(4, 10, 2, 1, 1, 1)), ConfigError);
}

TEST(BuildConstraints, OracleNoiselessHasNoViolation) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        const auto sys = ts::well_behaved_system(rng, 3, 2, 2, 2, 100.0);
        const auto noise = NoiseModel::isotropic(sys, DistributionKind::gaussian, 0.0, 0.0);
        const auto traj = simulate(sys, noise, 5000, 10 + trial);
        const auto cfg = calibrate(SystemBounds::from_system(sys, noise, 2), 2, 5000, Mode::practical);
        const auto cs = build_constraints(traj, cfg);
        EXPECT_EQ(cs.max_violation(oracle_alpha(sys, cfg.k, 2).flatten()), 0.0);
    }
}

TEST(SolveFeasibility, CapOnlyReturnsOrigin) {
    ConstraintSystem cs;
    BallConstraint c;
    c.M = Matrix::Identity(4, 4);
    c.b = Vector::Zero(4);
    c.radius = 2.0;
    c.kind = BallConstraint::Kind::coefficient_norm;
    cs.constraints.push_back(c);
    cs.dim = 4;
    cs.s = 1;
    cs.m = 2;
    cs.block_cap = 2.0;
    const auto sol = solve_feasibility(cs, 1e-9, 1000);
    EXPECT_TRUE(sol.feasible);
    EXPECT_EQ(sol.max_violation, 0.0);
    EXPECT_LE(sol.x.norm(), 1e-12);
    EXPECT_EQ(sol.coefficients.s(), 1);
}

TEST(SolveFeasibility, DisjointBallsInfeasible) {
    const auto cs = scalar_system({ball(0, 1), ball(5, 1)});
    const auto sol = solve_feasibility(cs, 1e-9, 20000);
    EXPECT_FALSE(sol.feasible);
    EXPECT_GE(sol.max_violation, 1.5 - 1e-12);
    EXPECT_NEAR(sol.max_violation, 1.5, 1e-6);
}

TEST(SolveFeasibility, EmptySystemThrows) {
    EXPECT_THROW(solve_feasibility(ConstraintSystem{}, 1e-9, 10), PreconditionError);
}

TEST(SolveFeasibility, FindsIntersection) {
    const auto cs = scalar_system({ball(0, 1), ball(1.9, 1), ball(-0.5, 2)});
    const auto sol = solve_feasibility(cs, 1e-9, 100000);
    EXPECT_TRUE(sol.feasible);
    EXPECT_GE(sol.x(0), 0.9 - 1e-9);
    EXPECT_LE(sol.x(0), 1.0 + 1e-9);
}

TEST(SolveFeasibility, SubgradientPhaseLeavesLeastSquaresStart) {
    // Least squares lands at 2; feasibility needs x in [2.9, 3.1].
    const auto cs = scalar_system({ball(0, 3.1), ball(4, 1.1)});
    EXPECT_GT(cs.max_violation(Vector::Constant(1, 2.0)), 0.5);
    const auto sol = solve_feasibility(cs, 1e-9, 100000);
    EXPECT_TRUE(sol.feasible);
    EXPECT_GT(sol.iterations, 0);
}

TEST(SolveFeasibility, SimulatedSystemFeasible) {
    for (std::uint64_t seed : {11, 12, 13}) {
        const auto p = simulated_problem(seed);
        const auto cs = build_constraints(p.traj, p.cfg);
        const auto sol = solve_feasibility(cs, 1e-9, 100000);
        EXPECT_TRUE(sol.feasible) << seed;
        EXPECT_LE(sol.iterations, 100000);
    }
}

TEST(SolveFeasibility, IndependentReevaluation) {
    const auto p = simulated_problem(14);
    const auto sol = solve_feasibility(build_constraints(p.traj, p.cfg), 1e-9, 100000);
    ASSERT_TRUE(sol.feasible);
    const Vector x = sol.coefficients.flatten();
    for (Index j = 1; j <= p.cfg.s; ++j) EXPECT_LE(sol.coefficients[j].norm(), p.cfg.P0 + 1e-9);
    for (Index t : p.cfg.checkpoint_indices()) {
        Vector r = p.traj.y.col(t);
        for (Index j = 1; j <= p.cfg.s; ++j) r -= sol.coefficients[j] * p.traj.y.col(t - p.cfg.k - j);
        EXPECT_LE(r.norm(), p.cfg.radius() + 1e-9);
    }
    EXPECT_LE((x - sol.x).norm(), 0.0);
}

TEST(SolveFeasibility, MonotoneInIterationBudget) {
    std::mt19937_64 rng(15);
    ConstraintSystem cs;
    cs.dim = 4;
    cs.s = 1;
    cs.m = 2;
    for (int i = 0; i < 12; ++i) {
        BallConstraint c;
        c.M = ts::gaussian(2, 4, rng);
        c.b = ts::gaussian(2, 1, rng) * 3.0;
        c.radius = 0.5;
        cs.constraints.push_back(c);
    }
    double prev = std::numeric_limits<double>::infinity();
    for (Index iters : {0, 1, 10, 100, 1000, 10000}) {
        const auto sol = solve_feasibility(cs, 1e-9, iters);
        EXPECT_LE(sol.max_violation, prev) << iters;
        prev = sol.max_violation;
    }
    for (Index iters : {0, 1, 10, 100, 1000}) {
        const auto a = solve_feasibility(cs, 1e-9, iters, {true});
        const auto b = solve_feasibility(cs, 1e-9, iters * 10 + 1, {true});
        EXPECT_LE(b.margin, a.margin + 1e-15);
    }
}

TEST(OracleAlpha, ScalarSystem) {
    const double a = 0.9;
    const Matrix one = Matrix::Constant(1, 1, 1.0);
    const SystemMatrices sys(one * a, one, one, Matrix::Zero(1, 1));
    for (Index k : {1, 5, 20}) EXPECT_NEAR(oracle_alpha(sys, k, 1)[1](0, 0), std::pow(a, k + 1), 1e-14);
}

TEST(OracleAlpha, IdentityObservation) {
    std::mt19937_64 rng(16);
    const auto base = ts::random_system(rng, 3, 3, 2);
    const SystemMatrices sys(base.A, base.B, Matrix::Identity(3, 3), Matrix::Zero(3, 2));
    for (Index k : {1, 4}) EXPECT_LE((oracle_alpha(sys, k, 1)[1] - ts::power(sys.A, k + 1)).norm(), 1e-12);
}

TEST(OracleAlpha, NormBoundAndRankDeficiency) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const Index s = 2, k = 20;
        const auto sys = ts::well_behaved_system(rng, 3, 2, 2, s, 1e4);
        const auto alpha = oracle_alpha(sys, k, s);
        const double kappa = 1.0 / sigma_min(observability_matrix(sys, s));
        const double target = ts::mul(sys.C, ts::power(sys.A, k + s)).norm();
        for (Index j = 1; j <= s; ++j) EXPECT_LE(alpha[j].norm(), kappa * target * (1 + 1e-9));
    }
    const auto pair = build_unobservable(4, 0.0, 1.0, 5);
    EXPECT_THROW(oracle_alpha(pair.sys, 10, 4), PreconditionError);
}

TEST(Calibrate, ShapeOfConstants) {
    SystemBounds b;
    b.n = 3;
    b.m = 2;
    b.p = 2;
    b.kappa = 2;
    b.norm_A = 1;
    b.norm_B = 1.5;
    b.norm_C = 2;
    b.norm_D = 0.5;
    b.sigma_w = 0.3;
    b.sigma_z = 0.2;
    const auto pr = calibrate(b, 2, 100000, Mode::practical);
    EXPECT_EQ(pr.k, 4);
    EXPECT_NEAR(pr.P0, 2 * 1.0 * 2 * std::sqrt(2.0) * 2, 1e-9);
    EXPECT_NEAR(pr.P1, 100 * pr.P0 * 6 * 1.5 * 4, 1e-6);
    EXPECT_NEAR(pr.L_full, std::floor(100 * pr.P1 * std::pow(std::log(10.0), 2) / 0.01), 1.0);
    EXPECT_LE(pr.required_horizon(), 100000);
    EXPECT_EQ(pr.num_checkpoints, static_cast<Index>(std::ceil(20 * std::log(pr.L_full))));
    EXPECT_NO_THROW(pr.validate());

    const auto pa = calibrate(b, 2, 100000, Mode::paper);
    EXPECT_EQ(pa.k, 20);
    EXPECT_NEAR(pa.P0, 2 * std::pow(std::sqrt(3.0) * 2, 11) * 2 * std::sqrt(2.0) * 2, 1e-6 * pa.P0);
    EXPECT_EQ(pa.L, pa.L_full);
    EXPECT_GT(pa.required_horizon(), 100000);
}

TEST(Calibrate, SpacingShrinksToHorizon) {
    ConstraintConfig cfg = manual_config(2, 4, 1000000, 200, 1, 1);
    space_checkpoints(cfg, 1000);
    EXPECT_EQ(cfg.num_checkpoints, (1000 - 6) / 7);
    EXPECT_EQ(cfg.spacing(), (1000 - 6) / cfg.num_checkpoints);
    EXPECT_LE(cfg.required_horizon(), 1000);
    ConstraintConfig tiny = manual_config(2, 4, 10, 5, 1, 1);
    EXPECT_THROW(space_checkpoints(tiny, 12), PreconditionError);
}

TEST(PotentialControl, SolvedAlphaBounded) {
    for (std::uint64_t seed : {21, 22, 23, 24, 25}) {
        const auto p = simulated_problem(seed);
        const auto sol = solve_feasibility(build_constraints(p.traj, p.cfg), 1e-9, 100000);
        ASSERT_TRUE(sol.feasible);
        const double G = potential(p.sys, sol.coefficients, p.cfg.k, p.cfg.spacing()).G;
        const double limit = static_cast<double>(p.sys.m()) * std::pow(200.0 * p.cfg.radius(), 2);
        EXPECT_LE(G, limit) << seed;
    }
}

TEST(PotentialControl, AdversarialAlphaViolates) {
    const auto sys = jordan_integrator_system(0.1);
    const Index s = 2, k = 4, L = 400, count = 20;
    const auto alpha = StabilizerCoefficients::zero(s, 2);
    const double G = potential(sys, alpha, k, L).G;
    // Large potential relative to the checkpoint radius.
    const double P1 = std::sqrt(G) / (20.0 * std::log(10.0));
    int violated = 0;
    const int seeds = 50;
    for (int seed = 0; seed < seeds; ++seed) {
        const auto noise = NoiseModel::isotropic(sys, DistributionKind::gaussian, 0.0, 0.0);
        const auto traj = simulate(sys, noise, L * count + k, 1000 + seed);
        const auto cs = build_constraints(traj, manual_config(s, k, L, count, 1e9, P1));
        if (cs.max_violation(alpha.flatten()) > 0) ++violated;
    }
    EXPECT_GE(violated, 0.9 * seeds);
}
