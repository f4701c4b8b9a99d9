#include "romkit/kernel.hpp"

#include "romkit/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace romkit {

std::string to_string(RbfKernel kernel) {
    switch (kernel) {
    case RbfKernel::gaussian: return "gaussian";
    case RbfKernel::multiquadric: return "multiquadric";
    case RbfKernel::thin_plate: return "thin_plate";
    case RbfKernel::linear: return "linear";
    }
    return "gaussian";
}

std::string to_string(RbfTail tail) {
    switch (tail) {
    case RbfTail::none: return "none";
    case RbfTail::affine: return "affine";
    case RbfTail::coordinates: return "coordinates";
    }
    return "none";
}

RbfKernel parse_rbf_kernel(const std::string& tag) {
    if (tag == "gaussian") return RbfKernel::gaussian;
    if (tag == "multiquadric") return RbfKernel::multiquadric;
    if (tag == "thin_plate") return RbfKernel::thin_plate;
    if (tag == "linear") return RbfKernel::linear;
    throw ConfigError("unknown RBF kernel '" + tag + "'");
}

RbfTail parse_rbf_tail(const std::string& tag) {
    if (tag == "none") return RbfTail::none;
    if (tag == "affine") return RbfTail::affine;
    if (tag == "coordinates") return RbfTail::coordinates;
    throw ConfigError("unknown RBF tail '" + tag + "'");
}

double rbf_psi(RbfKernel kernel, double eps, double r) {
    switch (kernel) {
    case RbfKernel::gaussian: return std::exp(-(eps * r) * (eps * r));
    case RbfKernel::multiquadric: return std::sqrt(1.0 + (eps * r) * (eps * r));
    case RbfKernel::thin_plate: return r > 0.0 ? r * r * std::log(r) : 0.0;
    case RbfKernel::linear: return r;
    }
    return 0.0;
}

namespace {

Index tail_size(RbfTail tail, Index dim) {
    switch (tail) {
    case RbfTail::none: return 0;
    case RbfTail::affine: return dim + 1;
    case RbfTail::coordinates: return dim;
    }
    return 0;
}

void tail_row(RbfTail tail, const Eigen::Ref<const Vector>& x, Eigen::Ref<Vector> out) {
    if (tail == RbfTail::affine) {
        out(0) = 1.0;
        out.tail(x.size()) = x;
    } else if (tail == RbfTail::coordinates) {
        out = x;
    }
}

double median_pairwise_distance(const Matrix& pts) {
    std::vector<double> d;
    for (Index i = 0; i < pts.cols(); ++i)
        for (Index j = i + 1; j < pts.cols(); ++j) d.push_back((pts.col(i) - pts.col(j)).norm());
    if (d.empty()) return 1.0;
    const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    if (d.size() % 2 == 1) return *mid;
    const double upper = *mid;
    const double lower = *std::max_element(d.begin(), mid);
    return 0.5 * (lower + upper);
}

}  // namespace

RbfModel rbf_fit(const Matrix& points, const Matrix& values, const RbfOptions& options) {
    const Index n = points.cols();
    const Index m = points.rows();
    if (n < 1 || m < 1) throw ConfigError("rbf_fit: need at least one point");
    if (values.cols() != n) throw ConfigError("rbf_fit: value count differs from point count");
    require_finite(points, "rbf_fit points");
    require_finite(values, "rbf_fit values");
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j)
            if ((points.col(i) - points.col(j)).norm() < 1e-12) {
                std::ostringstream msg;
                msg << "rbf_fit: duplicate centers " << i << " and " << j;
                throw NumericalError(msg.str());
            }

    RbfModel model;
    model.kernel = options.kernel;
    model.tail = options.tail;
    model.centers = points;
    model.epsilon = options.epsilon > 0.0 ? options.epsilon : 1.0 / median_pairwise_distance(points);
    if (n > 5000)
        model.warnings.push_back("rbf_fit: " + std::to_string(n) + " centers; dense solve scales cubically");

    const Index q = tail_size(options.tail, m);
    Matrix system = Matrix::Zero(n + q, n + q);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j)
            system(i, j) = rbf_psi(model.kernel, model.epsilon, (points.col(i) - points.col(j)).norm());
    if (q > 0) {
        Vector row(q);
        for (Index i = 0; i < n; ++i) {
            tail_row(options.tail, points.col(i), row);
            system.block(i, n, 1, q) = row.transpose();
            system.block(n, i, q, 1) = row;
        }
    }
    Matrix rhs = Matrix::Zero(n + q, values.rows());
    rhs.topRows(n) = values.transpose();

    Matrix sol;
    try {
        LuFactor lu(system);
        sol = lu.solve(rhs);
        // one step of iterative refinement
        sol += lu.solve(rhs - system * sol);
        model.pivot_ratio = lu.pivot_ratio();
    } catch (const NumericalError& e) {
        throw NumericalError(std::string("rbf_fit: augmented system is singular; ") + e.what());
    }
    model.weights = sol.topRows(n).transpose();
    model.tail_coeffs = sol.bottomRows(q).transpose();
    return model;
}

Vector rbf_eval(const RbfModel& model, const Vector& x) {
    if (x.size() != model.dim()) throw ConfigError("rbf_eval: query dimension mismatch");
    const Index n = model.centers.cols();
    Vector psi(n);
    for (Index i = 0; i < n; ++i) psi(i) = rbf_psi(model.kernel, model.epsilon, (x - model.centers.col(i)).norm());
    Vector out = model.weights * psi;
    const Index q = model.tail_coeffs.cols();
    if (q > 0) {
        Vector row(q);
        tail_row(model.tail, x, row);
        out += model.tail_coeffs * row;
    }
    return out;
}

Matrix rbf_eval(const RbfModel& model, const Matrix& queries) {
    Matrix out(model.outputs(), queries.cols());
    for (Index c = 0; c < queries.cols(); ++c) out.col(c) = rbf_eval(model, Vector(queries.col(c)));
    return out;
}

void save_rbf(const RbfModel& model, Archive& ar, const std::string& prefix) {
    ar.put(prefix + ".centers", model.centers);
    ar.put(prefix + ".weights", model.weights);
    ar.put(prefix + ".tail_coeffs", model.tail_coeffs);
    ar.put_scalar(prefix + ".epsilon", model.epsilon);
    ar.put_text(prefix + ".kernel", to_string(model.kernel));
    ar.put_text(prefix + ".tail", to_string(model.tail));
}

RbfModel load_rbf(const Archive& ar, const std::string& prefix) {
    RbfModel m;
    m.centers = ar.matrix(prefix + ".centers");
    m.weights = ar.matrix(prefix + ".weights");
    m.tail_coeffs = ar.matrix(prefix + ".tail_coeffs");
    m.epsilon = ar.scalar(prefix + ".epsilon");
    m.kernel = parse_rbf_kernel(ar.text(prefix + ".kernel"));
    m.tail = parse_rbf_tail(ar.text(prefix + ".tail"));
    if (m.weights.cols() != m.centers.cols() || m.tail_coeffs.rows() != m.weights.rows())
        throw IoError("rbf archive: inconsistent shapes");
    return m;
}

// --- Gaussian process regression ---------------------------------------------

namespace {

Vector expand_scales(const GprHyper& hyper, Index dim) {
    if (hyper.length_scales.size() == 1) return Vector::Constant(dim, hyper.length_scales(0));
    if (hyper.length_scales.size() != dim) throw ConfigError("gpr: length-scale count differs from input dimension");
    return hyper.length_scales;
}

void check_hyper(const GprHyper& h) {
    if (!(h.signal_variance > 0.0)) throw ConfigError("gpr: signal variance must be positive");
    if (h.length_scales.size() < 1 || (h.length_scales.array() <= 0.0).any())
        throw ConfigError("gpr: length scales must be positive");
    if (!(h.noise >= 0.0)) throw ConfigError("gpr: noise must be >= 0");
}

Vector prior_means(const Matrix& Y, GprPrior prior) {
    return prior == GprPrior::constant ? Vector(Y.rowwise().mean()) : Vector(Vector::Zero(Y.rows()));
}

struct Factored {
    CholeskyFactor factor;
    double jitter;
};

Factored factor_with_jitter(const Matrix& k, double noise) {
    const Index n = k.rows();
    Matrix a = k;
    a.diagonal().array() += noise * noise;
    try {
        return {CholeskyFactor(a), 0.0};
    } catch (const NumericalError&) {
    }
    const double scale = std::max(k.trace() / double(n), std::numeric_limits<double>::min());
    for (double j = 1e-12; j <= 1e-6 * (1.0 + 1e-9); j *= 10.0) {
        Matrix b = a;
        b.diagonal().array() += j * scale;
        try {
            return {CholeskyFactor(b), j * scale};
        } catch (const NumericalError&) {
        }
    }
    throw NumericalError("gpr: K + noise^2 I not positive definite even with jitter 1e-6 * trace / N");
}

}  // namespace

Matrix se_kernel(const Matrix& a, const Matrix& b, const GprHyper& hyper) {
    if (a.rows() != b.rows()) throw ConfigError("se_kernel: dimension mismatch");
    const Vector inv = expand_scales(hyper, a.rows()).cwiseInverse();
    const Matrix as = inv.asDiagonal() * a;
    const Matrix bs = inv.asDiagonal() * b;
    Matrix k(a.cols(), b.cols());
    for (Index j = 0; j < b.cols(); ++j)
        for (Index i = 0; i < a.cols(); ++i)
            k(i, j) = hyper.signal_variance * std::exp(-0.5 * (as.col(i) - bs.col(j)).squaredNorm());
    return k;
}

GprModel gpr_fit(const Matrix& X, const Matrix& Y, const GprHyper& hyper, GprPrior prior) {
    check_hyper(hyper);
    if (X.cols() < 1) throw ConfigError("gpr_fit: need at least one sample");
    if (Y.cols() != X.cols()) throw ConfigError("gpr_fit: target count differs from sample count");
    require_finite(X, "gpr_fit inputs");
    require_finite(Y, "gpr_fit targets");

    GprModel model;
    model.X = X;
    model.Y = Y;
    model.hyper = hyper;
    model.prior = prior;
    model.prior_mean = prior_means(Y, prior);

    Factored f = factor_with_jitter(se_kernel(X, X, hyper), hyper.noise);
    model.jitter = f.jitter;
    model.chol_lower = f.factor.lower();
    const Matrix centered = Y.colwise() - model.prior_mean;
    model.alpha = f.factor.solve(Matrix(centered.transpose()));
    return model;
}

Matrix gpr_predict_mean(const GprModel& model, const Matrix& queries) {
    if (queries.rows() != model.dim()) throw ConfigError("gpr_predict: query dimension mismatch");
    const Matrix kq = se_kernel(model.X, queries, model.hyper);  // N x l
    Matrix mean = (kq.transpose() * model.alpha).transpose();
    mean.colwise() += model.prior_mean;
    return mean;
}

GprPosterior gpr_predict(const GprModel& model, const Matrix& queries) {
    GprPosterior post;
    post.mean = gpr_predict_mean(model, queries);
    const Matrix kq = se_kernel(model.X, queries, model.hyper);
    const Matrix v = model.chol_lower.triangularView<Eigen::Lower>().solve(kq);
    post.covariance = se_kernel(queries, queries, model.hyper) - v.transpose() * v;
    post.covariance = 0.5 * (post.covariance + post.covariance.transpose());
    for (Index i = 0; i < post.covariance.rows(); ++i) {
        if (post.covariance(i, i) < 0.0) {
            post.covariance(i, i) = 0.0;
            ++post.clamped;
        }
    }
    return post;
}

double gpr_log_marginal_likelihood(const Matrix& X, const Matrix& Y, const GprHyper& hyper, GprPrior prior) {
    check_hyper(hyper);
    const Index n = X.cols();
    Factored f = factor_with_jitter(se_kernel(X, X, hyper), hyper.noise);
    const Matrix centered = (Y.colwise() - prior_means(Y, prior)).transpose();  // N x out
    const Matrix alpha = f.factor.solve(centered);
    const double logdet = f.factor.log_determinant();
    double lml = 0.0;
    for (Index o = 0; o < centered.cols(); ++o)
        lml += -0.5 * centered.col(o).dot(alpha.col(o)) - 0.5 * logdet -
               0.5 * double(n) * std::log(2.0 * std::numbers::pi);
    return lml;
}

GprHyper gpr_select_hyperparams(const Matrix& X, const Matrix& Y, const std::vector<GprHyper>& grid,
                                GprPrior prior) {
    if (grid.empty()) throw ConfigError("gpr_select_hyperparams: empty grid");
    const GprHyper* best = nullptr;
    double best_lml = -std::numeric_limits<double>::infinity();
    for (const GprHyper& h : grid) {
        double lml;
        try {
            lml = gpr_log_marginal_likelihood(X, Y, h, prior);
        } catch (const NumericalError&) {
            continue;
        }
        if (!std::isfinite(lml)) continue;
        bool take = best == nullptr || lml > best_lml;
        if (!take && lml == best_lml) {
            const double l_new = h.length_scales.maxCoeff(), l_old = best->length_scales.maxCoeff();
            take = l_new < l_old || (l_new == l_old && h.noise < best->noise);
        }
        if (take) {
            best = &h;
            best_lml = lml;
        }
    }
    if (best == nullptr) throw NumericalError("gpr_select_hyperparams: every grid point failed to factorize");
    return *best;
}

void save_gpr(const GprModel& model, Archive& ar, const std::string& prefix) {
    ar.put(prefix + ".X", model.X);
    ar.put(prefix + ".Y", model.Y);
    ar.put_scalar(prefix + ".signal_variance", model.hyper.signal_variance);
    ar.put(prefix + ".length_scales", model.hyper.length_scales);
    ar.put_scalar(prefix + ".noise", model.hyper.noise);
    ar.put_text(prefix + ".prior", model.prior == GprPrior::constant ? "constant" : "zero");
    ar.put_text(prefix + ".kernel", "squared_exponential");
}

GprModel load_gpr(const Archive& ar, const std::string& prefix) {
    GprHyper h;
    h.signal_variance = ar.scalar(prefix + ".signal_variance");
    h.length_scales = ar.vector(prefix + ".length_scales");
    h.noise = ar.scalar(prefix + ".noise");
    const GprPrior prior = ar.text(prefix + ".prior") == "constant" ? GprPrior::constant : GprPrior::zero;
    // Refactorizing reproduces the cached state bitwise.
    return gpr_fit(ar.matrix(prefix + ".X"), ar.matrix(prefix + ".Y"), h, prior);
}

}  // namespace romkit
