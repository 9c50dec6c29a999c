#pragma once

#include <sysid/coefficients.hpp>
#include <sysid/core.hpp>
#include <sysid/lds.hpp>
#include <sysid/parallel.hpp>
#include <sysid/random.hpp>

#include <algorithm>
#include <string>
#include <string_view>
#include <vector>

namespace sysid {

struct MarkovEstimate {
    std::vector<Matrix> blocks;  // X_0 .. X_k
    Index k = 0;
    Index sample_count = 0;

    Index m() const { return blocks.empty() ? 0 : blocks.front().rows(); }
    Index p() const { return blocks.empty() ? 0 : blocks.front().cols(); }

    void validate() const {
        if (static_cast<Index>(blocks.size()) != k + 1) throw DimensionError("MarkovEstimate: expected k+1 blocks");
        for (const auto& b : blocks) detail::require_shape(b, m(), p(), "Markov block");
    }

    static MarkovEstimate from_system(const SystemMatrices& sys, Index k) {
        return {markov_parameters(sys, k), k, 0};
    }
};

/// yhat_t for t = first..T, stored column t - first.
struct StabilizedSequence {
    Index first = 0;
    Matrix values;

    Index last() const { return first + values.cols() - 1; }
    auto at(Index t) const { return values.col(t - first); }
};

/// yhat_t = y_t - sum_{i=1..s} alpha_i y_{t-k-i} for t in (k+s, T].
inline StabilizedSequence stabilized_observations(const Trajectory& traj, const StabilizerCoefficients& alpha, Index k,
                                                  Index s) {
    traj.validate();
    alpha.validate();
    if (alpha.s() != s) throw DimensionError("stabilized_observations: alpha has " + std::to_string(alpha.s()) +
                                             " blocks, s = " + std::to_string(s));
    if (alpha.m() != traj.m()) throw DimensionError("stabilized_observations: alpha blocks must be m x m");
    if (k < 0) throw PreconditionError("stabilized_observations: k must be >= 0");
    if (traj.T <= k + s) throw PreconditionError("stabilized_observations: horizon must exceed k + s");
    StabilizedSequence out;
    out.first = k + s + 1;
    out.values = traj.y.rightCols(traj.T - k - s);
    for (Index i = 1; i <= s; ++i)
        out.values.noalias() -= alpha[i] * traj.y.middleCols(out.first - k - i, out.values.cols());
    return out;
}

/// X_j = average over t in [t_begin, t_end] of yhat_t u_{t-j}^T, j = 0..k.
/// The window defaults to (k+s, T].
inline MarkovEstimate estimate_markov(const Trajectory& traj, const StabilizerCoefficients& alpha, Index k, Index s,
                                      Index t_begin = -1, Index t_end = -1) {
    if (traj.T <= k + s + 1) throw PreconditionError("estimate_markov: horizon must exceed k + s + 1");
    const auto yhat = stabilized_observations(traj, alpha, k, s);
    if (t_begin < 0) t_begin = yhat.first;
    if (t_end < 0) t_end = traj.T;
    if (t_begin < yhat.first || t_end > traj.T || t_end < t_begin)
        throw PreconditionError("estimate_markov: averaging window outside (k+s, T]");
    const Index count = t_end - t_begin + 1;
    const auto Y = yhat.values.middleCols(t_begin - yhat.first, count);
    MarkovEstimate est;
    est.k = k;
    est.sample_count = count;
    for (Index j = 0; j <= k; ++j)
        est.blocks.push_back(Y * traj.u.middleCols(t_begin - j, count).transpose() / static_cast<double>(count));
    return est;
}

/// X_j = average over t = 0..T-k of y_{t+j} u_t^T (no stabilization).
inline MarkovEstimate naive_estimate(const Trajectory& traj, Index k) {
    traj.validate();
    if (k < 0) throw PreconditionError("naive_estimate: k must be >= 0");
    if (traj.T <= k) throw PreconditionError("naive_estimate: horizon must exceed k");
    const Index count = traj.T - k + 1;
    MarkovEstimate est;
    est.k = k;
    est.sample_count = count;
    const auto U = traj.u.leftCols(count);
    for (Index j = 0; j <= k; ++j)
        est.blocks.push_back(traj.y.middleCols(j, count) * U.transpose() / static_cast<double>(count));
    return est;
}

/// Robustness variant: the window (k+s, T] is cut into `groups` contiguous
/// pieces, each averaged separately, and the entrywise median is returned.
inline MarkovEstimate estimate_markov_median_of_means(const Trajectory& traj, const StabilizerCoefficients& alpha,
                                                      Index k, Index s, Index groups) {
    if (groups < 1) throw PreconditionError("median of means: groups must be >= 1");
    const Index first = k + s + 1;
    const Index total = traj.T - first + 1;
    if (total < groups) throw PreconditionError("median of means: fewer samples than groups");
    std::vector<MarkovEstimate> parts;
    for (Index g = 0; g < groups; ++g) {
        const Index b = first + g * total / groups;
        const Index e = first + (g + 1) * total / groups - 1;
        parts.push_back(estimate_markov(traj, alpha, k, s, b, e));
    }
    MarkovEstimate est = parts.front();
    est.sample_count = total;
    std::vector<double> vals(static_cast<std::size_t>(groups));
    for (Index j = 0; j <= k; ++j) {
        auto& blk = est.blocks[static_cast<std::size_t>(j)];
        for (Index r = 0; r < blk.rows(); ++r) {
            for (Index c = 0; c < blk.cols(); ++c) {
                for (Index g = 0; g < groups; ++g)
                    vals[static_cast<std::size_t>(g)] = parts[static_cast<std::size_t>(g)].blocks[static_cast<std::size_t>(j)](r, c);
                std::sort(vals.begin(), vals.end());
                const auto n = vals.size();
                blk(r, c) = n % 2 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
            }
        }
    }
    return est;
}

/// max_j |X_j - Xhat_j|_F over the common lags.
inline double max_block_error(const std::vector<Matrix>& truth, const MarkovEstimate& est, Index first_lag = 0) {
    double e = 0;
    const Index upto = std::min<Index>(static_cast<Index>(truth.size()) - 1, est.k);
    for (Index j = first_lag; j <= upto; ++j)
        e = std::max(e, (truth[static_cast<std::size_t>(j)] - est.blocks[static_cast<std::size_t>(j)]).norm());
    return e;
}

enum class EstimatorKind { naive, stabilized };

inline std::string_view to_string(EstimatorKind k) { return k == EstimatorKind::naive ? "naive" : "stabilized"; }

struct VarianceReport {
    Index horizon = 0;
    Index trials = 0;
    double second_moment = 0;
    double standard_error = 0;
    EstimatorKind estimator_kind = EstimatorKind::naive;
};

/// A = B = C = D = 1, w ~ N(0, 100), u, z ~ N(0, 1), x_0 = 0.
inline SystemMatrices appendix_system() {
    const Matrix one = Matrix::Constant(1, 1, 1.0);
    return {one, one, one, one};
}

inline NoiseModel appendix_noise() {
    using DK = DistributionKind;
    return {DistributionSpec::isotropic(DK::gaussian, 1), DistributionSpec::isotropic(DK::gaussian, 1, 10.0),
            DistributionSpec::isotropic(DK::gaussian, 1), DistributionSpec::zero(1)};
}

/// Empirical E[Q_T^2] on the appendix system. For `naive`,
/// Q_T = (1/T) sum_{t=1..T} y_t u_t - 1. For `stabilized`, Q_T is the error of
/// the stabilized estimate of X_0 = 1 with s = 1, lag k and alpha_1 = A^{k+1} = 1.
inline VarianceReport variance_blowup_experiment(Index T, Index trials, std::uint64_t seed,
                                                 EstimatorKind kind = EstimatorKind::naive, Index k = 2) {
    if (trials < 100) throw PreconditionError("variance_blowup_experiment: trials must be >= 100");
    if (T < 2) throw PreconditionError("variance_blowup_experiment: T must be >= 2");
    const auto sys = appendix_system();
    const auto noise = appendix_noise();
    const auto alpha = StabilizerCoefficients({Matrix::Constant(1, 1, 1.0)});
    std::vector<double> q(static_cast<std::size_t>(trials));
    parallel_for(trials, [&](long i) {
        const auto tr = simulate(sys, noise, T, derive_seed(seed, streams::trial, static_cast<std::uint64_t>(i)));
        double val;
        if (kind == EstimatorKind::naive) {
            double acc = 0;
            for (Index t = 1; t <= T; ++t) acc += tr.y(0, t) * tr.u(0, t);
            val = acc / static_cast<double>(T) - 1.0;
        } else {
            val = estimate_markov(tr, alpha, k, 1).blocks[0](0, 0) - 1.0;
        }
        q[static_cast<std::size_t>(i)] = val * val;
    });
    VarianceReport rep;
    rep.horizon = T;
    rep.trials = trials;
    rep.estimator_kind = kind;
    double mean = 0;
    for (double v : q) mean += v;
    mean /= static_cast<double>(trials);
    double var = 0;
    for (double v : q) var += (v - mean) * (v - mean);
    var /= static_cast<double>(trials - 1);
    rep.second_moment = mean;
    rep.standard_error = std::sqrt(var / static_cast<double>(trials));
    return rep;
}

}  // namespace sysid
