#pragma once

#include "romkit/archive.hpp"
#include "romkit/dataset.hpp"
#include "romkit/numerics.hpp"

#include <functional>
#include <variant>
#include <vector>

namespace romkit {

/// Keep exactly this many modes.
struct RankCount {
    Index value;
};

/// Keep the smallest r with sum_{i<=r} s_i^2 >= fraction * sum s_i^2.
struct EnergyFraction {
    double value;
};

using RankCriterion = std::variant<RankCount, EnergyFraction>;

/// Rank selected by `criterion` given the retained singular values.
Index select_rank(const Vector& singular_values, const RankCriterion& criterion);

/// Orthonormal modal basis extracted from snapshots.
struct ReducedBasis {
    Matrix modes;     ///< dof x N_rb
    Vector energies;  ///< singular value of each mode, nonincreasing
    Vector shift;     ///< subtracted mean; empty when uncentered

    Index size() const { return modes.cols(); }
    Index dof() const { return modes.rows(); }
    bool centered() const { return shift.size() > 0; }
    /// First n modes only.
    ReducedBasis truncated(Index n) const;
};

ReducedBasis pod_fit(const Matrix& snapshots, const RankCriterion& criterion, bool center = false);
inline ReducedBasis pod_fit(const SnapshotSet& set, const RankCriterion& criterion, bool center = false) {
    return pod_fit(set.snapshots(), criterion, center);
}

/// modes^T (state - shift); columns of `states` are projected independently.
Matrix pod_project(const ReducedBasis& basis, const Matrix& states);
Vector pod_project(const ReducedBasis& basis, const Vector& state);
/// modes * coeffs + shift
Matrix pod_lift(const ReducedBasis& basis, const Matrix& coeffs);
Vector pod_lift(const ReducedBasis& basis, const Vector& coeffs);

/// Modes as snapshot columns, energies as the single parameter per column,
/// mode index as the time stamp. The shift (if any) rides along as an extra
/// column flagged with time -1.
SnapshotSet basis_to_snapshots(const ReducedBasis& basis);
ReducedBasis basis_from_snapshots(const SnapshotSet& set);

/// Dominant eigenspace of the averaged gradient outer product.
struct ActiveSubspace {
    Matrix W;            ///< m x k, leading eigenvectors of C
    Vector eigenvalues;  ///< full spectrum of C, nonincreasing, >= 0
    Matrix C;            ///< m x m averaged J^T J

    Index k() const { return W.cols(); }
};

/// Each gradient sample is an n x m Jacobian (a 1 x m row for scalar f);
/// C = (1/N) sum J_i^T J_i.
ActiveSubspace as_fit(const std::vector<Matrix>& jacobians, Index k);
/// Convenience for scalar functions: each vector is the gradient.
ActiveSubspace as_fit(const std::vector<Vector>& gradients, Index k);

/// z = W^T x
Vector as_project(const ActiveSubspace& subspace, const Vector& x);

/// Central differences with step h_i = 1e-5 (1 + |x_i|). Returns n x m.
Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x);

}  // namespace romkit
