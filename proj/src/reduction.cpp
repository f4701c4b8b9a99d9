#include "romkit/reduction.hpp"

#include "romkit/error.hpp"

#include <cmath>

namespace romkit {

Index select_rank(const Vector& s, const RankCriterion& criterion) {
    if (const auto* rank = std::get_if<RankCount>(&criterion)) {
        if (rank->value < 1) throw ConfigError("rank criterion must be >= 1");
        return std::min<Index>(rank->value, s.size());
    }
    const double eta = std::get<EnergyFraction>(criterion).value;
    if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError("energy fraction must lie in (0, 1]");
    if (eta == 1.0) return s.size();
    const double total = s.squaredNorm();
    double acc = 0.0;
    for (Index r = 0; r < s.size(); ++r) {
        acc += s(r) * s(r);
        if (acc >= eta * total) return r + 1;
    }
    return s.size();
}

ReducedBasis ReducedBasis::truncated(Index n) const {
    if (n < 0 || n > size()) throw ConfigError("basis truncation exceeds basis size");
    ReducedBasis out;
    out.modes = modes.leftCols(n);
    out.energies = energies.head(n);
    out.shift = shift;
    return out;
}

ReducedBasis pod_fit(const Matrix& snapshots, const RankCriterion& criterion, bool center) {
    if (snapshots.cols() < 1 || snapshots.rows() < 1) throw ConfigError("pod_fit: no snapshots");
    ReducedBasis basis;
    Matrix work = snapshots;
    if (center) {
        basis.shift = snapshots.rowwise().mean();
        work.colwise() -= basis.shift;
    }
    if (max_abs(work) == 0.0) throw ConfigError("pod_fit: snapshot matrix is identically zero");
    SvdResult dec = svd(work);
    const Index r = select_rank(dec.singular_values, criterion);
    basis.modes = dec.U.leftCols(r);
    basis.energies = dec.singular_values.head(r);
    return basis;
}

Matrix pod_project(const ReducedBasis& basis, const Matrix& states) {
    if (states.rows() != basis.dof()) throw ConfigError("pod_project: state dimension mismatch");
    if (basis.centered()) return basis.modes.transpose() * (states.colwise() - basis.shift);
    return basis.modes.transpose() * states;
}

Vector pod_project(const ReducedBasis& basis, const Vector& state) {
    return pod_project(basis, Matrix(state)).col(0);
}

Matrix pod_lift(const ReducedBasis& basis, const Matrix& coeffs) {
    if (coeffs.rows() != basis.size()) throw ConfigError("pod_lift: coefficient dimension mismatch");
    Matrix out = basis.modes * coeffs;
    if (basis.centered()) out.colwise() += basis.shift;
    return out;
}

Vector pod_lift(const ReducedBasis& basis, const Vector& coeffs) {
    return pod_lift(basis, Matrix(coeffs)).col(0);
}

SnapshotSet basis_to_snapshots(const ReducedBasis& basis) {
    const Index extra = basis.centered() ? 1 : 0;
    const Index n = basis.size();
    Matrix cols(basis.dof(), n + extra);
    Matrix params(1, n + extra);
    Vector times(n + extra);
    cols.leftCols(n) = basis.modes;
    params.leftCols(n) = basis.energies.transpose();
    for (Index i = 0; i < n; ++i) times(i) = double(i);
    if (extra) {
        cols.col(n) = basis.shift;
        params(0, n) = 0.0;
        times(n) = -1.0;
    }
    return SnapshotSet(std::move(cols), std::move(params), std::move(times), R"({"kind":"reduced_basis"})");
}

ReducedBasis basis_from_snapshots(const SnapshotSet& set) {
    if (set.param_dim() != 1) throw IoError("reduced basis file must carry one energy per mode");
    ReducedBasis b;
    Index n = set.count();
    if (n > 0 && set.times()(n - 1) < 0.0) {
        b.shift = set.snapshots().col(n - 1);
        --n;
    }
    b.modes = set.snapshots().leftCols(n);
    b.energies = set.params().row(0).head(n).transpose();
    return b;
}

ActiveSubspace as_fit(const std::vector<Matrix>& jacobians, Index k) {
    if (jacobians.empty()) throw ConfigError("as_fit: need at least one gradient sample");
    const Index m = jacobians.front().cols();
    if (k < 1 || k > m) throw ConfigError("as_fit: k must lie in [1, m]");
    Matrix c = Matrix::Zero(m, m);
    for (const Matrix& j : jacobians) {
        if (j.cols() != m) throw ConfigError("as_fit: inconsistent gradient dimension");
        require_finite(j, "as_fit gradient");
        c.noalias() += j.transpose() * j;
    }
    c /= double(jacobians.size());
    c = 0.5 * (c + c.transpose());

    EigSymResult es = eig_sym(c);
    ActiveSubspace as;
    as.eigenvalues = es.eigenvalues.cwiseMax(0.0);
    as.W = es.eigenvectors.leftCols(k);
    as.C = std::move(c);
    return as;
}

ActiveSubspace as_fit(const std::vector<Vector>& gradients, Index k) {
    std::vector<Matrix> jac;
    jac.reserve(gradients.size());
    for (const Vector& g : gradients) jac.emplace_back(g.transpose());
    return as_fit(jac, k);
}

Vector as_project(const ActiveSubspace& subspace, const Vector& x) {
    if (x.size() != subspace.W.rows()) throw ConfigError("as_project: dimension mismatch");
    return subspace.W.transpose() * x;
}

Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x) {
    const Vector f0 = f(x);
    Matrix jac(f0.size(), x.size());
    Vector xp = x, xm = x;
    for (Index i = 0; i < x.size(); ++i) {
        const double h = 1e-5 * (1.0 + std::abs(x(i)));
        xp(i) = x(i) + h;
        xm(i) = x(i) - h;
        jac.col(i) = (f(xp) - f(xm)) / (2.0 * h);
        xp(i) = xm(i) = x(i);
    }
    return jac;
}

}  // namespace romkit
