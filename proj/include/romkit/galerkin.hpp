#pragma once

#include "romkit/archive.hpp"
#include "romkit/dataset.hpp"
#include "romkit/numerics.hpp"
#include "romkit/reduction.hpp"

#include <Eigen/SparseCore>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace romkit {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Scalar coefficient θ(μ) of one affine term. Named terms can be persisted;
/// anonymous ones (empty name) live only in memory.
struct Theta {
    std::string name;
    std::function<double(const Vector&)> fn;

    double operator()(const Vector& mu) const { return fn(mu); }
};

/// Registry of persistable coefficient functions: "one", "mu[i]", "inv(mu[i])".
Theta theta_named(const std::string& name);

/// Σ θ_a^q(μ) A_q u = Σ θ_f^i(μ) F_i with symmetric A_q.
struct AffineProblem {
    std::vector<SparseMatrix> operators;
    std::vector<Theta> theta_a;
    std::vector<Vector> rhs;
    std::vector<Theta> theta_f;
    /// Coercivity constant of Σ_q A_q; α_LB(μ) = min_q θ_a^q(μ) · unit_coercivity.
    double unit_coercivity = 0.0;
    std::optional<ParameterSpace> space;

    Index dof() const { return operators.empty() ? 0 : operators.front().rows(); }
    SparseMatrix assemble_operator(const Vector& mu) const;
    Vector assemble_rhs(const Vector& mu) const;
    double coercivity_lb(const Vector& mu) const;

    /// Shapes, symmetry (1e-12 relative) and spot-checked positivity at `probe` parameters.
    void validate(const Matrix& probe = Matrix(0, 0)) const;
};

/// Full-order solve by sparse Cholesky; an indefinite operator raises NumericalError.
Vector solve_full(const AffineProblem& problem, const Vector& mu);
/// One column per parameter column; solves run on `threads` workers, merged in order.
Matrix solve_full(const AffineProblem& problem, const Matrix& mus, unsigned threads = 1);

struct ReducedOperator {
    Matrix Z;                      ///< N x N_rb, orthonormal columns
    std::vector<Matrix> A_hat;     ///< Z^T A_q Z
    std::vector<Vector> F_hat;     ///< Z^T F_i
    std::vector<Theta> theta_a;
    std::vector<Theta> theta_f;
    double unit_coercivity = 0.0;

    // Affine pieces of the squared residual norm.
    Matrix FF;                         ///< F_i^T F_j
    std::vector<Matrix> AF;            ///< per q: Z^T A_q F (N_rb x m_f)
    std::vector<std::vector<Matrix>> AA;  ///< Z^T A_q A_q' Z

    Index size() const { return Z.cols(); }
    Index dof() const { return Z.rows(); }
    Matrix assemble(const Vector& mu) const;
    Vector rhs(const Vector& mu) const;
    /// Operator on the leading n basis vectors; identical to reassembling with Z.leftCols(n).
    ReducedOperator truncated(Index n) const;
};

ReducedOperator assemble_reduced(const AffineProblem& problem, const Matrix& Z);

/// Coefficients α(μ) of the reduced Galerkin solution u_rb = Z α.
Vector solve_reduced(const ReducedOperator& op, const Vector& mu);

/// Residual-based estimate ‖r(μ)‖₂ / α_LB(μ), evaluated from the cached affine products.
double error_indicator(const ReducedOperator& op, const Vector& mu, const Vector& alpha);

struct GreedyResult {
    ReducedOperator op;
    std::vector<Index> selected;         ///< training column chosen at each iteration
    std::vector<double> max_indicator;   ///< max over the training set after each iteration
    std::string diagnostic;              ///< why the loop stopped
};

GreedyResult greedy_build(const AffineProblem& problem, const Matrix& training, double tolerance, Index max_size);

struct PodBuildResult {
    ReducedOperator op;
    ReducedBasis basis;
    Matrix snapshots;
};

/// Solves the FOM at each training column, fits an uncentered POD basis and assembles.
PodBuildResult pod_build(const AffineProblem& problem, const Matrix& training, const RankCriterion& criterion,
                         unsigned threads = 1);

/// Persists Z, the reduced terms, the residual caches and the θ names; every θ must be named.
void save_reduced(const ReducedOperator& op, Archive& ar, const std::string& prefix = "rb");
ReducedOperator load_reduced(const Archive& ar, const std::string& prefix = "rb");

}  // namespace romkit
