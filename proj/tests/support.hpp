#pragma once

#include "romkit/neural.hpp"
#include "romkit/numerics.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

namespace romkit::testing {

/// Small seeded generator for property tests.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : eng_(seed) {}

    double uniform(double lo = -1.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng_); }
    Index integer(Index lo, Index hi) { return std::uniform_int_distribution<Index>(lo, hi)(eng_); }

    Matrix matrix(Index rows, Index cols, double lo = -1.0, double hi = 1.0) {
        Matrix m(rows, cols);
        for (Index j = 0; j < cols; ++j)
            for (Index i = 0; i < rows; ++i) m(i, j) = uniform(lo, hi);
        return m;
    }
    Vector vector(Index n, double lo = -1.0, double hi = 1.0) { return matrix(n, 1, lo, hi); }
    Matrix symmetric(Index n) {
        const Matrix m = matrix(n, n);
        return 0.5 * (m + m.transpose());
    }
    Matrix spd(Index n) {
        const Matrix m = matrix(n, n);
        return m.transpose() * m + Matrix::Identity(n, n);
    }
    /// Orthonormal columns from Householder QR of a random matrix.
    Matrix orthonormal(Index rows, Index cols) {
        Eigen::HouseholderQR<Matrix> qr(matrix(rows, cols));
        return qr.householderQ() * Matrix::Identity(rows, cols);
    }
    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
};

inline double rel_fro(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

/// Eigenvalues of a symmetric matrix by Householder tridiagonalization and
/// bisection on the Sturm sequence; nonincreasing.
inline Vector sturm_eigenvalues(Matrix a) {
    const Index n = a.rows();
    for (Index k = 0; k + 2 < n; ++k) {
        Vector x = a.col(k).tail(n - k - 1);
        const double alpha = -std::copysign(x.norm(), x(0));
        if (alpha == 0.0) continue;
        Vector v = x;
        v(0) -= alpha;
        v.normalize();
        Matrix h = Matrix::Identity(n, n);
        h.bottomRightCorner(n - k - 1, n - k - 1) -= 2.0 * v * v.transpose();
        a = h * a * h;
    }
    Vector d = a.diagonal();
    Vector e = Vector::Zero(n);
    for (Index i = 1; i < n; ++i) e(i) = a(i, i - 1);
    auto count_below = [&](double x) {
        Index c = 0;
        double q = 1.0;
        for (Index i = 0; i < n; ++i) {
            q = d(i) - x - (i ? e(i) * e(i) / q : 0.0);
            if (q == 0.0) q = -1e-300;
            if (q < 0.0) ++c;
        }
        return c;
    };
    double bound = 0.0;
    for (Index i = 0; i < n; ++i) bound = std::max(bound, std::abs(d(i)) + std::abs(e(i)) + (i + 1 < n ? std::abs(e(i + 1)) : 0.0));
    Vector out(n);
    for (Index k = 0; k < n; ++k) {
        double lo = -bound - 1.0, hi = bound + 1.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (count_below(mid) > n - 1 - k) hi = mid;
            else lo = mid;
        }
        out(k) = 0.5 * (lo + hi);
    }
    return out;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("romkit-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

/// Straight transcription of the GP posterior with explicit matrix inverses.
struct DenseGpOracle {
    Matrix mean;
    Matrix cov;
};

inline double se(const Vector& a, const Vector& b, double s2, double ell) {
    return s2 * std::exp(-0.5 * (a - b).squaredNorm() / (ell * ell));
}

inline DenseGpOracle dense_gp(const Matrix& X, const Matrix& Y, const Matrix& Q, double s2, double ell, double sigma,
                              const Vector& prior) {
    const Index n = X.cols(), l = Q.cols();
    Matrix K(n, n), Ks(n, l), Kss(l, l);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) K(i, j) = se(X.col(i), X.col(j), s2, ell);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < l; ++j) Ks(i, j) = se(X.col(i), Q.col(j), s2, ell);
    for (Index i = 0; i < l; ++i)
        for (Index j = 0; j < l; ++j) Kss(i, j) = se(Q.col(i), Q.col(j), s2, ell);
    const Matrix inv = (K + sigma * sigma * Matrix::Identity(n, n)).inverse();
    const Matrix centered = Y.colwise() - prior;
    DenseGpOracle o;
    o.mean = (Ks.transpose() * inv * centered.transpose()).transpose();
    o.mean.colwise() += prior;
    o.cov = Kss - Ks.transpose() * inv * Ks;
    return o;
}

/// Central-difference gradient of the squared loss 0.5 sum (y - t)^2.
inline Vector fd_loss_gradient(Mlp net, const Matrix& x, const Matrix& t, double h) {
    const Vector p0 = mlp_parameters(net);
    Vector grad(p0.size());
    for (Index i = 0; i < p0.size(); ++i) {
        Vector p = p0;
        p(i) = p0(i) + h;
        mlp_set_parameters(net, p);
        const double up = 0.5 * (mlp_forward(net, x) - t).squaredNorm();
        p(i) = p0(i) - h;
        mlp_set_parameters(net, p);
        const double down = 0.5 * (mlp_forward(net, x) - t).squaredNorm();
        grad(i) = (up - down) / (2.0 * h);
    }
    return grad;
}

inline double max_rel_deviation(const Vector& a, const Vector& b) {
    return (a - b).cwiseAbs().maxCoeff() / std::max(b.cwiseAbs().maxCoeff(), 1e-12);
}

/// u'' = 2 on (0, 1) with u(0) = u(1) = 0; the solution is x^2 - x.
inline PinnProblem poisson_1d() {
    PinnProblem p;
    p.space_dim = 1;
    p.fd_step = 1e-3;
    p.interior.count = 32;
    p.interior.sampler = [](std::mt19937_64& g) {
        CollocationPoint c;
        c.x = Vector::Constant(1, std::uniform_real_distribution<double>(0.0, 1.0)(g));
        return c;
    };
    p.interior.residual = [h = p.fd_step](FieldProbe& f, const CollocationPoint& c) { return f.dxx(c, 0, h) - 2.0; };
    p.boundary.count = 2;
    p.boundary.weight = 10.0;
    p.boundary.sampler = [](std::mt19937_64& g) {
        CollocationPoint c;
        c.x = Vector::Constant(1, (g() & 1u) ? 1.0 : 0.0);
        return c;
    };
    p.boundary.residual = [](FieldProbe& f, const CollocationPoint& c) { return f.value(c); };
    return p;
}

inline double relative_l2_on_line(const Mlp& net, const std::function<double(double)>& exact) {
    double num = 0.0, den = 0.0;
    for (int i = 0; i <= 200; ++i) {
        const double x = i / 200.0;
        const double u = mlp_forward(net, Vector(Vector::Constant(1, x)))(0);
        num += (u - exact(x)) * (u - exact(x));
        den += exact(x) * exact(x);
    }
    return std::sqrt(num / den);
}

}  // namespace romkit::testing
