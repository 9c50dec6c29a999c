#pragma once

#include <sysid/core.hpp>
#include <sysid/random.hpp>

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace sysid {

/// Parameters (A, B, C, D) of
///   x_{t+1} = A x_t + B u_t + w_t
///   y_t     = C x_t + D u_t + z_t
/// with state dimension n, observation dimension m and input dimension p.
struct SystemMatrices {
    Matrix A, B, C, D;

    SystemMatrices() = default;
    SystemMatrices(Matrix a, Matrix b, Matrix c, Matrix d)
        : A(std::move(a)), B(std::move(b)), C(std::move(c)), D(std::move(d)) {
        validate();
    }

    Index n() const { return A.rows(); }
    Index m() const { return C.rows(); }
    Index p() const { return B.cols(); }

    void validate() const {
        const Index n = A.rows();
        if (n < 1 || B.cols() < 1 || C.rows() < 1) throw DimensionError("system: empty dimension");
        detail::require_shape(A, n, n, "A");
        detail::require_shape(B, n, B.cols(), "B");
        detail::require_shape(C, C.rows(), n, "C");
        detail::require_shape(D, C.rows(), B.cols(), "D");
        if (!A.allFinite() || !B.allFinite() || !C.allFinite() || !D.allFinite()) {
            throw DimensionError("system: non-finite entry");
        }
    }
};

/// Markov parameter blocks X_0 = D, X_j = C A^{j-1} B for j = 1..horizon.
inline std::vector<Matrix> markov_parameters(const SystemMatrices& sys, Index horizon) {
    std::vector<Matrix> out;
    out.reserve(static_cast<std::size_t>(horizon + 1));
    out.push_back(sys.D);
    Matrix AkB = sys.B;
    for (Index j = 1; j <= horizon; ++j) {
        out.push_back(sys.C * AkB);
        AkB = sys.A * AkB;
    }
    return out;
}

enum class DistributionKind { gaussian, laplace, rademacher, uniform_box, scaled_mixture };

inline constexpr DistributionKind all_distribution_kinds[] = {
    DistributionKind::gaussian, DistributionKind::laplace, DistributionKind::rademacher,
    DistributionKind::uniform_box, DistributionKind::scaled_mixture};

inline std::string_view to_string(DistributionKind k) {
    switch (k) {
        case DistributionKind::gaussian: return "gaussian";
        case DistributionKind::laplace: return "laplace";
        case DistributionKind::rademacher: return "rademacher";
        case DistributionKind::uniform_box: return "uniform-box";
        case DistributionKind::scaled_mixture: return "scaled-mixture";
    }
    return "?";
}

inline DistributionKind distribution_kind_from_string(std::string_view s) {
    for (auto k : all_distribution_kinds)
        if (to_string(k) == s) return k;
    throw ConfigError("unsupported distribution kind '" + std::string(s) + "'");
}

// Two-component gaussian scale mixture: variance 0.5 w.p. 0.9, 5.5 w.p. 0.1.
inline constexpr double mixture_heavy_prob = 0.1;
inline constexpr double mixture_light_var = 0.5;
inline constexpr double mixture_heavy_var = 5.5;

/// E[z^4] / E[z^2]^2 of the standardized scalar law.
inline double kurtosis(DistributionKind k) {
    switch (k) {
        case DistributionKind::gaussian: return 3.0;
        case DistributionKind::laplace: return 6.0;
        case DistributionKind::rademacher: return 1.0;
        case DistributionKind::uniform_box: return 1.8;
        case DistributionKind::scaled_mixture: {
            const double q = mixture_heavy_prob;
            const double m4 = (1 - q) * mixture_light_var * mixture_light_var +
                              q * mixture_heavy_var * mixture_heavy_var;
            return 3.0 * m4;  // second moment is 1
        }
    }
    return 3.0;
}

/// Declared (4,2,K) constant for vectors with iid coordinates of this law under
/// any linear map: max(3, scalar kurtosis).
inline double declared_K(DistributionKind k) { return std::max(3.0, kurtosis(k)); }

/// Mean-zero law: iid standardized coordinates of `kind`, mapped by the
/// symmetric square root of `covariance`.
class DistributionSpec {
   public:
    DistributionSpec() = default;
    DistributionSpec(DistributionKind kind, Matrix covariance) : kind_(kind), cov_(std::move(covariance)) {
        if (cov_.rows() != cov_.cols()) throw DimensionError("covariance must be square");
        if (!is_psd(cov_)) throw PreconditionError("covariance is not symmetric PSD");
        factor_ = psd_sqrt(cov_);
    }

    static DistributionSpec isotropic(DistributionKind kind, Index dim, double stddev = 1.0) {
        return {kind, Matrix::Identity(dim, dim) * (stddev * stddev)};
    }
    static DistributionSpec zero(Index dim) { return {DistributionKind::gaussian, Matrix::Zero(dim, dim)}; }

    DistributionKind kind() const { return kind_; }
    const Matrix& covariance() const { return cov_; }
    const Matrix& factor() const { return factor_; }
    Index dim() const { return cov_.rows(); }
    double K() const { return declared_K(kind_); }
    bool is_zero() const { return cov_.size() == 0 || cov_.cwiseAbs().maxCoeff() == 0.0; }

    /// One standardized scalar (mean 0, variance 1).
    template <class Rng>
    static double standard_draw(DistributionKind kind, Rng& rng) {
        switch (kind) {
            case DistributionKind::gaussian: return std::normal_distribution<double>{}(rng);
            case DistributionKind::laplace: {
                const double e = std::exponential_distribution<double>{std::sqrt(2.0)}(rng);
                return std::bernoulli_distribution{0.5}(rng) ? e : -e;
            }
            case DistributionKind::rademacher: return std::bernoulli_distribution{0.5}(rng) ? 1.0 : -1.0;
            case DistributionKind::uniform_box:
                return std::uniform_real_distribution<double>{-std::sqrt(3.0), std::sqrt(3.0)}(rng);
            case DistributionKind::scaled_mixture: {
                const bool heavy = std::bernoulli_distribution{mixture_heavy_prob}(rng);
                const double sd = std::sqrt(heavy ? mixture_heavy_var : mixture_light_var);
                return sd * std::normal_distribution<double>{}(rng);
            }
        }
        throw ConfigError("unsupported distribution kind");
    }

    template <class Rng>
    Vector draw(Rng& rng) const {
        Vector e(dim());
        if (is_zero()) return Vector::Zero(dim());
        for (Index i = 0; i < e.size(); ++i) e(i) = standard_draw(kind_, rng);
        return factor_ * e;
    }

   private:
    DistributionKind kind_ = DistributionKind::gaussian;
    Matrix cov_;
    Matrix factor_;
};

/// Laws of u_t, w_t, z_t and x_0.
struct NoiseModel {
    DistributionSpec input;
    DistributionSpec process;
    DistributionSpec observation;
    DistributionSpec initial;

    /// Isotropic input, process and observation noise of one kind; x_0 = 0.
    static NoiseModel isotropic(const SystemMatrices& sys, DistributionKind kind, double sigma_w,
                                double sigma_z) {
        return {DistributionSpec::isotropic(kind, sys.p()), DistributionSpec::isotropic(kind, sys.n(), sigma_w),
                DistributionSpec::isotropic(kind, sys.m(), sigma_z), DistributionSpec::zero(sys.n())};
    }

    void validate(const SystemMatrices& sys) const {
        if (input.dim() != sys.p()) throw DimensionError("input law dimension != p");
        if (process.dim() != sys.n()) throw DimensionError("process law dimension != n");
        if (observation.dim() != sys.m()) throw DimensionError("observation law dimension != m");
        if (initial.dim() != sys.n()) throw DimensionError("initial law dimension != n");
        if ((input.covariance() - Matrix::Identity(sys.p(), sys.p())).cwiseAbs().maxCoeff() > 1e-12) {
            throw PreconditionError("input covariance must be the identity");
        }
    }
};

/// Inputs and observations at t = 0..T stored column-per-time; hidden fields
/// are populated by the simulator.
struct Trajectory {
    struct Hidden {
        Matrix x;  // n x (T+2): x_0 .. x_{T+1}
        Matrix w;  // n x (T+1)
        Matrix z;  // m x (T+1)
    };

    Index T = 0;
    Matrix u;  // p x (T+1)
    Matrix y;  // m x (T+1)
    std::optional<Hidden> hidden;
    std::uint64_t seed = 0;

    Index m() const { return y.rows(); }
    Index p() const { return u.rows(); }

    void validate() const {
        if (u.cols() != T + 1 || y.cols() != T + 1) throw DimensionError("trajectory length != T+1");
        if (hidden) {
            if (hidden->x.cols() != T + 2 || hidden->w.cols() != T + 1 || hidden->z.cols() != T + 1)
                throw DimensionError("hidden trajectory length mismatch");
        }
    }
};

/// Simulates t = 0..T with the given inputs; process, observation and initial
/// draws come from per-time substreams of `seed`.
inline Trajectory simulate_with_inputs(const SystemMatrices& sys, const NoiseModel& noise, const Matrix& inputs,
                                       std::uint64_t seed) {
    sys.validate();
    noise.validate(sys);
    const Index T = inputs.cols() - 1;
    detail::require(T >= 1, "simulate: horizon T must be >= 1");
    detail::require_shape(inputs, sys.p(), T + 1, "inputs");

    Trajectory tr;
    tr.T = T;
    tr.seed = seed;
    tr.u = inputs;
    tr.y.resize(sys.m(), T + 1);
    Trajectory::Hidden h;
    h.x.resize(sys.n(), T + 2);
    h.w.resize(sys.n(), T + 1);
    h.z.resize(sys.m(), T + 1);

    CounterRng r0(seed, streams::initial, 0);
    h.x.col(0) = noise.initial.draw(r0);
    for (Index t = 0; t <= T; ++t) {
        CounterRng rw(seed, streams::process, static_cast<std::uint64_t>(t));
        CounterRng rz(seed, streams::observation, static_cast<std::uint64_t>(t));
        h.w.col(t) = noise.process.draw(rw);
        h.z.col(t) = noise.observation.draw(rz);
        tr.y.col(t) = sys.C * h.x.col(t) + sys.D * tr.u.col(t) + h.z.col(t);
        h.x.col(t + 1) = sys.A * h.x.col(t) + sys.B * tr.u.col(t) + h.w.col(t);
    }
    tr.hidden = std::move(h);
    return tr;
}

/// Inputs u_0..u_T drawn from the input law on per-time substreams of `seed`.
inline Matrix draw_inputs(const DistributionSpec& law, Index T, std::uint64_t seed) {
    Matrix u(law.dim(), T + 1);
    for (Index t = 0; t <= T; ++t) {
        CounterRng r(seed, streams::input, static_cast<std::uint64_t>(t));
        u.col(t) = law.draw(r);
    }
    return u;
}

inline Trajectory simulate(const SystemMatrices& sys, const NoiseModel& noise, Index T, std::uint64_t seed) {
    sys.validate();
    noise.validate(sys);
    detail::require(T >= 1, "simulate: horizon T must be >= 1");
    return simulate_with_inputs(sys, noise, draw_inputs(noise.input, T, seed), seed);
}

/// y_t = D u_t + z_t + sum_{i=1..t} C A^{i-1} (B u_{t-i} + w_{t-i}) + C A^t x_0,
/// accumulated from the impulse response rather than the state recursion.
inline Vector closed_form_y(const SystemMatrices& sys, const Matrix& inputs, const Matrix& process_noise,
                            const Matrix& obs_noise, const Vector& x0, Index t) {
    if (t < 0 || inputs.cols() <= t || process_noise.cols() < t || obs_noise.cols() <= t)
        throw PreconditionError("closed_form_y: index out of range");
    Vector y = sys.D * inputs.col(t) + obs_noise.col(t);
    Matrix CAi = sys.C;  // C A^{i-1}
    for (Index i = 1; i <= t; ++i) {
        y += CAi * (sys.B * inputs.col(t - i) + process_noise.col(t - i));
        CAi = CAi * sys.A;
    }
    return y + CAi * x0;
}

/// `count` iid draws, one substream per sample index.
inline std::vector<Vector> sample_distribution(const DistributionSpec& spec, Index count, std::uint64_t seed) {
    detail::require(count >= 1, "sample_distribution: count must be >= 1");
    std::vector<Vector> out;
    out.reserve(static_cast<std::size_t>(count));
    for (Index i = 0; i < count; ++i) {
        CounterRng r(seed, streams::sample, static_cast<std::uint64_t>(i));
        out.push_back(spec.draw(r));
    }
    return out;
}

}  // namespace sysid
