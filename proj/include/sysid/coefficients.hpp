#pragma once

#include <sysid/core.hpp>

#include <vector>

namespace sysid {

/// Stabilizing coefficients alpha_1..alpha_s (each m x m) of the transform
///   yhat_{t+k} = y_{t+k} - sum_j alpha_j y_{t-j}.
struct StabilizerCoefficients {
    std::vector<Matrix> alpha;

    StabilizerCoefficients() = default;
    explicit StabilizerCoefficients(std::vector<Matrix> a) : alpha(std::move(a)) { validate(); }

    static StabilizerCoefficients zero(Index s, Index m) {
        return StabilizerCoefficients(std::vector<Matrix>(static_cast<std::size_t>(s), Matrix::Zero(m, m)));
    }

    Index s() const { return static_cast<Index>(alpha.size()); }
    Index m() const { return alpha.empty() ? 0 : alpha.front().rows(); }
    const Matrix& operator[](Index j) const { return alpha[static_cast<std::size_t>(j - 1)]; }  // 1-based

    double squared_norm() const {
        double acc = 0;
        for (const auto& a : alpha) acc += a.squaredNorm();
        return acc;
    }

    void validate() const {
        if (alpha.empty()) throw DimensionError("stabilizer: s must be >= 1");
        const Index m = alpha.front().rows();
        for (const auto& a : alpha) {
            detail::require_shape(a, m, m, "alpha_j");
            if (!a.allFinite()) throw DimensionError("alpha_j: non-finite entry");
        }
    }

    /// Column-major concatenation vec(alpha_1), ..., vec(alpha_s).
    Vector flatten() const {
        const Index m = this->m();
        Vector v(s() * m * m);
        for (Index j = 0; j < s(); ++j)
            v.segment(j * m * m, m * m) = Eigen::Map<const Vector>(alpha[static_cast<std::size_t>(j)].data(), m * m);
        return v;
    }

    static StabilizerCoefficients unflatten(const Vector& v, Index s, Index m) {
        if (v.size() != s * m * m) throw DimensionError("unflatten: size mismatch");
        std::vector<Matrix> a;
        for (Index j = 0; j < s; ++j) a.push_back(Eigen::Map<const Matrix>(v.data() + j * m * m, m, m));
        return StabilizerCoefficients(std::move(a));
    }
};

}  // namespace sysid
