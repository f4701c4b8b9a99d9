#pragma once

#include "romkit/archive.hpp"
#include "romkit/numerics.hpp"

#include <optional>
#include <string>
#include <vector>

namespace romkit {

// Column convention throughout: points are m x n (one point per column),
// values are out x n (one output vector per column).

enum class RbfKernel { gaussian, multiquadric, thin_plate, linear };

/// Polynomial tail: none, constant + coordinates, or coordinates only (the
/// strict p_j(x) = x_j form, which may not be unisolvent).
enum class RbfTail { none, affine, coordinates };

std::string to_string(RbfKernel kernel);
std::string to_string(RbfTail tail);
RbfKernel parse_rbf_kernel(const std::string& tag);
RbfTail parse_rbf_tail(const std::string& tag);

/// psi(r) for the given kernel and shape parameter.
double rbf_psi(RbfKernel kernel, double epsilon, double r);

struct RbfOptions {
    RbfKernel kernel = RbfKernel::gaussian;
    /// Shape parameter; <= 0 selects 1 / (median pairwise distance).
    double epsilon = 0.0;
    RbfTail tail = RbfTail::none;
};

struct RbfModel {
    Matrix centers;      ///< m x n
    Matrix weights;      ///< out x n
    Matrix tail_coeffs;  ///< out x q
    RbfKernel kernel = RbfKernel::gaussian;
    double epsilon = 1.0;
    RbfTail tail = RbfTail::none;
    double pivot_ratio = 1.0;  ///< LU conditioning indicator of the saddle system
    std::vector<std::string> warnings;

    Index dim() const { return centers.rows(); }
    Index outputs() const { return weights.rows(); }
};

/// Solves [[Psi, P], [P^T, 0]] [w; c] = [y; 0].
RbfModel rbf_fit(const Matrix& points, const Matrix& values, const RbfOptions& options = {});
Vector rbf_eval(const RbfModel& model, const Vector& x);
/// One prediction column per query column.
Matrix rbf_eval(const RbfModel& model, const Matrix& queries);

void save_rbf(const RbfModel& model, Archive& ar, const std::string& prefix = "rbf");
RbfModel load_rbf(const Archive& ar, const std::string& prefix = "rbf");

/// Squared-exponential kernel s2 * exp(-0.5 * sum((x_d - y_d) / l_d)^2).
struct GprHyper {
    double signal_variance = 1.0;
    Vector length_scales = Vector::Ones(1);  ///< one entry broadcasts
    double noise = 0.0;                      ///< standard deviation of the observation noise
};

enum class GprPrior { zero, constant };

struct GprModel {
    Matrix X;  ///< m x N
    Matrix Y;  ///< out x N
    GprHyper hyper;
    GprPrior prior = GprPrior::zero;
    Vector prior_mean;  ///< out
    Matrix chol_lower;  ///< lower Cholesky factor of K + (noise^2 + jitter) I
    Matrix alpha;       ///< N x out, (K + noise^2 I)^-1 (Y - g)^T
    double jitter = 0.0;

    Index dim() const { return X.rows(); }
    Index outputs() const { return Y.rows(); }
};

/// k(a_i, b_j) for all column pairs.
Matrix se_kernel(const Matrix& a, const Matrix& b, const GprHyper& hyper);

GprModel gpr_fit(const Matrix& X, const Matrix& Y, const GprHyper& hyper, GprPrior prior = GprPrior::zero);

struct GprPosterior {
    Matrix mean;        ///< out x l
    Matrix covariance;  ///< l x l, shared by every output
    Index clamped = 0;  ///< diagonal entries clamped at zero
};

GprPosterior gpr_predict(const GprModel& model, const Matrix& queries);
Matrix gpr_predict_mean(const GprModel& model, const Matrix& queries);

/// Sum over outputs of -0.5 y^T a - 0.5 log det(K + s^2 I) - N/2 log(2 pi).
double gpr_log_marginal_likelihood(const Matrix& X, const Matrix& Y, const GprHyper& hyper,
                                   GprPrior prior = GprPrior::zero);

/// Grid point with the largest exact log marginal likelihood; ties go to the
/// smaller length scale, then the smaller noise.
GprHyper gpr_select_hyperparams(const Matrix& X, const Matrix& Y, const std::vector<GprHyper>& grid,
                                GprPrior prior = GprPrior::zero);

void save_gpr(const GprModel& model, Archive& ar, const std::string& prefix = "gpr");
GprModel load_gpr(const Archive& ar, const std::string& prefix = "gpr");

}  // namespace romkit
