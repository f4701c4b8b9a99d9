#include "romkit/numerics.hpp"

#include "romkit/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace romkit {

Matrix SvdResult::reconstruct() const {
    return U * singular_values.asDiagonal() * V.transpose();
}

void require_finite(const Eigen::Ref<const Matrix>& a, std::string_view what) {
    for (Index j = 0; j < a.cols(); ++j) {
        for (Index i = 0; i < a.rows(); ++i) {
            if (!std::isfinite(a(i, j))) {
                std::ostringstream msg;
                msg << what << ": non-finite entry at (" << i << ", " << j << ")";
                throw NumericalError(msg.str());
            }
        }
    }
}

double max_abs(const Eigen::Ref<const Matrix>& a) {
    return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

SvdResult svd(const Matrix& a, std::optional<Index> rank_cap, double tol) {
    if (a.rows() < 1 || a.cols() < 1) throw ConfigError("svd: empty matrix");
    require_finite(a, "svd");
    const Index full = std::min(a.rows(), a.cols());
    if (rank_cap && (*rank_cap < 0 || *rank_cap > full))
        throw ConfigError("svd: rank cap exceeds min(rows, cols)");

    Eigen::JacobiSVD<Matrix, Eigen::ColPivHouseholderQRPreconditioner> jac(
        a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = jac.singularValues();

    Index r = 0;
    if (s.size() > 0 && s(0) > 0.0) {
        const double cut = tol * s(0);
        while (r < s.size() && s(r) > cut) ++r;
    }
    if (rank_cap) r = std::min(r, *rank_cap);

    SvdResult out;
    out.U = jac.matrixU().leftCols(r);
    out.singular_values = s.head(r);
    out.V = jac.matrixV().leftCols(r);
    return out;
}

EigSymResult eig_sym(const Matrix& a) {
    if (a.rows() != a.cols() || a.rows() < 1) throw ConfigError("eig_sym: matrix must be square");
    require_finite(a, "eig_sym");
    const double asym = max_abs(a - a.transpose());
    if (asym > 1e-10 * a.norm()) {
        std::ostringstream msg;
        msg << "eig_sym: matrix is not symmetric (max |A - A^T| = " << asym << ")";
        throw ConfigError(msg.str());
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a + a.transpose()));
    if (es.info() != Eigen::Success) throw NumericalError("eig_sym: eigensolver did not converge");

    EigSymResult out;
    out.eigenvalues = es.eigenvalues().reverse();
    out.eigenvectors = es.eigenvectors().rowwise().reverse();
    return out;
}

CholeskyFactor::CholeskyFactor(const Matrix& a) : l_(Matrix::Zero(a.rows(), a.cols())) {
    if (a.rows() != a.cols()) throw ConfigError("cholesky: matrix must be square");
    const Index n = a.rows();
    for (Index j = 0; j < n; ++j) {
        double d = a(j, j);
        for (Index k = 0; k < j; ++k) d -= l_(j, k) * l_(j, k);
        if (!(d > 0.0)) {
            std::ostringstream msg;
            msg << "cholesky: matrix not positive definite, pivot " << j << " = " << d;
            throw NumericalError(msg.str());
        }
        const double ljj = std::sqrt(d);
        l_(j, j) = ljj;
        for (Index i = j + 1; i < n; ++i) {
            double v = a(i, j);
            for (Index k = 0; k < j; ++k) v -= l_(i, k) * l_(j, k);
            l_(i, j) = v / ljj;
        }
    }
}

Matrix CholeskyFactor::solve(const Matrix& b) const {
    if (b.rows() != l_.rows()) throw ConfigError("cholesky solve: dimension mismatch");
    const auto tri = l_.triangularView<Eigen::Lower>();
    Matrix y = tri.solve(b);
    return tri.transpose().solve(y);
}

Vector CholeskyFactor::solve(const Vector& b) const {
    Matrix x = solve(Matrix(b));
    return x.col(0);
}

double CholeskyFactor::log_determinant() const {
    return 2.0 * l_.diagonal().array().log().sum();
}

LuFactor::LuFactor(const Matrix& a) : lu_(a), perm_(static_cast<std::size_t>(a.rows())) {
    if (a.rows() != a.cols() || a.rows() < 1) throw ConfigError("lu: matrix must be square");
    require_finite(a, "lu");
    const Index n = a.rows();
    const double threshold = 1e-13 * max_abs(a);
    for (Index i = 0; i < n; ++i) perm_[static_cast<std::size_t>(i)] = i;

    double pmin = std::numeric_limits<double>::infinity();
    double pmax = 0.0;
    for (Index k = 0; k < n; ++k) {
        Index p = k;
        lu_.col(k).tail(n - k).cwiseAbs().maxCoeff(&p);
        p += k;
        const double piv = std::abs(lu_(p, k));
        if (!(piv > threshold)) {
            std::ostringstream msg;
            msg << "lu: matrix singular to tolerance at pivot position " << k << " (|pivot| = " << piv
                << ", threshold " << threshold << ")";
            throw NumericalError(msg.str());
        }
        pmin = std::min(pmin, piv);
        pmax = std::max(pmax, piv);
        if (p != k) {
            lu_.row(k).swap(lu_.row(p));
            std::swap(perm_[static_cast<std::size_t>(k)], perm_[static_cast<std::size_t>(p)]);
        }
        const double inv = 1.0 / lu_(k, k);
        for (Index i = k + 1; i < n; ++i) {
            const double f = lu_(i, k) * inv;
            lu_(i, k) = f;
            if (f != 0.0) lu_.row(i).tail(n - k - 1) -= f * lu_.row(k).tail(n - k - 1);
        }
    }
    pivot_ratio_ = pmin / pmax;
}

Matrix LuFactor::solve(const Matrix& b) const {
    const Index n = lu_.rows();
    if (b.rows() != n) throw ConfigError("lu solve: dimension mismatch");
    Matrix x(n, b.cols());
    for (Index i = 0; i < n; ++i) x.row(i) = b.row(perm_[static_cast<std::size_t>(i)]);
    lu_.triangularView<Eigen::UnitLower>().solveInPlace(x);
    lu_.triangularView<Eigen::Upper>().solveInPlace(x);
    return x;
}

Matrix solve_spd(const Matrix& a, const Matrix& b) {
    require_finite(a, "solve_spd");
    if (max_abs(a - a.transpose()) > 1e-12 * std::max(1.0, max_abs(a)))
        throw ConfigError("solve_spd: matrix is not symmetric");
    return CholeskyFactor(a).solve(b);
}

Matrix solve_general(const Matrix& a, const Matrix& b) {
    return LuFactor(a).solve(b);
}

}  // namespace romkit
