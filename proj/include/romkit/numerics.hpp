#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string_view>

namespace romkit {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

/// Singular values below this fraction of the largest one are dropped.
inline constexpr double kDefaultSvdTolerance = 1e-12;

/// Thin, truncated singular value decomposition A ~ U diag(s) V^T.
struct SvdResult {
    Matrix U;                ///< m x r, orthonormal columns
    Vector singular_values;  ///< r entries, nonincreasing
    Matrix V;                ///< n x r, orthonormal columns

    Index rank() const { return singular_values.size(); }
    Matrix reconstruct() const;
};

struct EigSymResult {
    Vector eigenvalues;   ///< nonincreasing
    Matrix eigenvectors;  ///< orthonormal columns, same order as eigenvalues
};

/// Leading singular triplets of `a`: r = min(rank_cap, #{s_i > tol * s_1}).
/// Backed by two-sided Jacobi (deterministic, accurate small singular values).
SvdResult svd(const Matrix& a, std::optional<Index> rank_cap = std::nullopt,
              double tol = kDefaultSvdTolerance);

/// Symmetric eigendecomposition, eigenvalues sorted nonincreasing.
EigSymResult eig_sym(const Matrix& a);

/// Dense Cholesky factorization A = L L^T. Throws NumericalError naming the
/// first non-positive pivot.
class CholeskyFactor {
public:
    explicit CholeskyFactor(const Matrix& a);

    Matrix solve(const Matrix& b) const;
    Vector solve(const Vector& b) const;
    double log_determinant() const;
    const Matrix& lower() const { return l_; }

private:
    Matrix l_;
};

/// Partial-pivot LU. Pivots below 1e-13 * max|A| are treated as singular.
class LuFactor {
public:
    explicit LuFactor(const Matrix& a);

    Matrix solve(const Matrix& b) const;
    /// min |pivot| / max |pivot|, a cheap conditioning indicator.
    double pivot_ratio() const { return pivot_ratio_; }

private:
    Matrix lu_;
    std::vector<Index> perm_;
    double pivot_ratio_ = 1.0;
};

Matrix solve_spd(const Matrix& a, const Matrix& b);
Matrix solve_general(const Matrix& a, const Matrix& b);

/// Throws NumericalError if any entry is NaN or infinite.
void require_finite(const Eigen::Ref<const Matrix>& a, std::string_view what);

double max_abs(const Eigen::Ref<const Matrix>& a);

}  // namespace romkit
