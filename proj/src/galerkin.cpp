#include "romkit/galerkin.hpp"

#include "romkit/error.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <regex>

namespace romkit {

Theta theta_named(const std::string& name) {
    if (name == "one") return {name, [](const Vector&) { return 1.0; }};
    static const std::regex indexed(R"((mu|inv\(mu)\[(\d+)\]\)?)");
    std::smatch m;
    if (std::regex_match(name, m, indexed)) {
        const bool inverse = m[1] == "inv(mu";
        if (inverse != (name.back() == ')')) throw ConfigError("unknown theta function '" + name + "'");
        const Index i = std::stol(m[2]);
        auto component = [i, name](const Vector& mu) {
            if (i >= mu.size()) throw ConfigError("theta '" + name + "' needs a longer parameter vector");
            return mu(i);
        };
        if (inverse) return {name, [component](const Vector& mu) { return 1.0 / component(mu); }};
        return {name, component};
    }
    throw ConfigError("unknown theta function '" + name + "'");
}

SparseMatrix AffineProblem::assemble_operator(const Vector& mu) const {
    SparseMatrix a(dof(), dof());
    for (std::size_t q = 0; q < operators.size(); ++q) a += theta_a[q](mu) * operators[q];
    return a;
}

Vector AffineProblem::assemble_rhs(const Vector& mu) const {
    Vector f = Vector::Zero(dof());
    for (std::size_t i = 0; i < rhs.size(); ++i) f += theta_f[i](mu) * rhs[i];
    return f;
}

double AffineProblem::coercivity_lb(const Vector& mu) const {
    double m = std::numeric_limits<double>::infinity();
    for (const Theta& t : theta_a) m = std::min(m, t(mu));
    return m * unit_coercivity;
}

void AffineProblem::validate(const Matrix& probe) const {
    if (operators.empty() || operators.size() != theta_a.size())
        throw ConfigError("affine problem: operator terms and coefficient functions must pair up");
    if (rhs.empty() || rhs.size() != theta_f.size())
        throw ConfigError("affine problem: rhs terms and coefficient functions must pair up");
    const Index n = dof();
    for (const SparseMatrix& a : operators) {
        if (a.rows() != n || a.cols() != n) throw ConfigError("affine problem: operator shape mismatch");
        const SparseMatrix asym = SparseMatrix(a.transpose()) - a;
        const double scale = std::max(1.0, a.norm());
        if (asym.norm() > 1e-12 * scale) throw ConfigError("affine problem: operator term is not symmetric");
    }
    for (const Vector& f : rhs)
        if (f.size() != n) throw ConfigError("affine problem: rhs length mismatch");
    if (!(unit_coercivity > 0.0)) throw ConfigError("affine problem: coercivity constant must be positive");

    for (Index c = 0; c < probe.cols(); ++c) {
        const Vector mu = probe.col(c);
        for (const auto* terms : {&theta_a, &theta_f})
            for (const Theta& t : *terms) {
                const double v = t(mu);
                const double moved = t(Vector(mu.array() + 1e-7 * (1.0 + mu.array().abs())));
                if (!std::isfinite(v) || std::abs(moved - v) > 1e-3 * (1.0 + std::abs(v)))
                    throw ConfigError("affine problem: coefficient '" + t.name + "' is not continuous at a probe");
            }
        if (!(coercivity_lb(mu) > 0.0))
            throw ConfigError("affine problem: coercivity lower bound is not positive at a probe");
        Eigen::SimplicialLLT<SparseMatrix> llt(assemble_operator(mu));
        if (llt.info() != Eigen::Success) throw ConfigError("affine problem: operator not positive definite at a probe");
    }
}

Vector solve_full(const AffineProblem& problem, const Vector& mu) {
    const SparseMatrix a = problem.assemble_operator(mu);
    const Vector f = problem.assemble_rhs(mu);
    Eigen::SimplicialLLT<SparseMatrix> llt(a);
    if (llt.info() != Eigen::Success) throw NumericalError("full-order operator is not positive definite");
    Vector u = llt.solve(f);
    Vector r = f - a * u;
    if (r.norm() > 1e-10 * std::max(1.0, f.norm())) {
        u += llt.solve(r);
        r = f - a * u;
    }
    if (!u.allFinite()) throw NumericalError("full-order solve produced non-finite values");
    return u;
}

Matrix solve_full(const AffineProblem& problem, const Matrix& mus, unsigned threads) {
    Matrix out(problem.dof(), mus.cols());
    auto run = [&](Index begin, Index end) {
        for (Index c = begin; c < end; ++c) out.col(c) = solve_full(problem, Vector(mus.col(c)));
    };
    const Index n = mus.cols();
    if (threads <= 1 || n < 2) {
        run(0, n);
        return out;
    }
    const Index parts = std::min<Index>(threads, n);
    std::vector<std::future<void>> jobs;
    for (Index p = 0; p < parts; ++p) jobs.push_back(std::async(std::launch::async, run, p * n / parts, (p + 1) * n / parts));
    for (auto& j : jobs) j.get();
    return out;
}

Matrix ReducedOperator::assemble(const Vector& mu) const {
    Matrix a = Matrix::Zero(size(), size());
    for (std::size_t q = 0; q < A_hat.size(); ++q) a += theta_a[q](mu) * A_hat[q];
    return a;
}

Vector ReducedOperator::rhs(const Vector& mu) const {
    Vector f = Vector::Zero(size());
    for (std::size_t i = 0; i < F_hat.size(); ++i) f += theta_f[i](mu) * F_hat[i];
    return f;
}

ReducedOperator ReducedOperator::truncated(Index n) const {
    if (n < 1 || n > size()) throw ConfigError("truncated: basis size out of range");
    ReducedOperator op = *this;
    op.Z = Z.leftCols(n);
    for (auto& a : op.A_hat) a = a.topLeftCorner(n, n).eval();
    for (auto& f : op.F_hat) f = f.head(n).eval();
    for (auto& a : op.AF) a = a.topRows(n).eval();
    for (auto& row : op.AA)
        for (auto& a : row) a = a.topLeftCorner(n, n).eval();
    return op;
}

ReducedOperator assemble_reduced(const AffineProblem& problem, const Matrix& Z) {
    if (Z.rows() != problem.dof() || Z.cols() < 1) throw ConfigError("assemble_reduced: basis shape mismatch");
    const Matrix gram = Z.transpose() * Z;
    if ((gram - Matrix::Identity(Z.cols(), Z.cols())).cwiseAbs().maxCoeff() > 1e-8)
        throw ConfigError("assemble_reduced: basis columns are not orthonormal");

    ReducedOperator op;
    op.Z = Z;
    op.theta_a = problem.theta_a;
    op.theta_f = problem.theta_f;
    op.unit_coercivity = problem.unit_coercivity;

    const std::size_t mq = problem.operators.size(), mf = problem.rhs.size();
    Matrix F(problem.dof(), static_cast<Index>(mf));
    for (std::size_t i = 0; i < mf; ++i) F.col(static_cast<Index>(i)) = problem.rhs[i];
    op.FF = F.transpose() * F;

    std::vector<Matrix> AZ(mq);
    for (std::size_t q = 0; q < mq; ++q) {
        AZ[q] = problem.operators[q] * Z;
        Matrix a = Z.transpose() * AZ[q];
        op.A_hat.push_back(0.5 * (a + a.transpose()));
        op.AF.push_back(AZ[q].transpose() * F);
    }
    for (std::size_t i = 0; i < mf; ++i) op.F_hat.push_back(Z.transpose() * problem.rhs[i]);
    op.AA.assign(mq, std::vector<Matrix>(mq));
    for (std::size_t q = 0; q < mq; ++q)
        for (std::size_t p = q; p < mq; ++p) {
            op.AA[q][p] = AZ[q].transpose() * AZ[p];
            if (p != q) op.AA[p][q] = op.AA[q][p].transpose();
        }
    return op;
}

Vector solve_reduced(const ReducedOperator& op, const Vector& mu) {
    try {
        return CholeskyFactor(op.assemble(mu)).solve(op.rhs(mu));
    } catch (const NumericalError& e) {
        throw NumericalError(std::string("reduced operator is not coercive at this parameter: ") + e.what());
    }
}

double error_indicator(const ReducedOperator& op, const Vector& mu, const Vector& alpha) {
    double lb = std::numeric_limits<double>::infinity();
    for (const Theta& t : op.theta_a) lb = std::min(lb, t(mu));
    lb *= op.unit_coercivity;
    if (!(lb > 0.0)) throw NumericalError("error_indicator: coercivity lower bound is not positive");
    if (alpha.size() != op.size()) throw ConfigError("error_indicator: coefficient length mismatch");

    const Index mq = static_cast<Index>(op.theta_a.size()), mf = static_cast<Index>(op.theta_f.size());
    Vector ta(mq), tf(mf);
    for (Index q = 0; q < mq; ++q) ta(q) = op.theta_a[static_cast<std::size_t>(q)](mu);
    for (Index i = 0; i < mf; ++i) tf(i) = op.theta_f[static_cast<std::size_t>(i)](mu);

    double r2 = tf.dot(op.FF * tf);
    for (Index q = 0; q < mq; ++q) {
        r2 -= 2.0 * ta(q) * alpha.dot(op.AF[static_cast<std::size_t>(q)] * tf);
        for (Index p = 0; p < mq; ++p)
            r2 += ta(q) * ta(p) * alpha.dot(op.AA[static_cast<std::size_t>(q)][static_cast<std::size_t>(p)] * alpha);
    }
    return std::sqrt(std::max(r2, 0.0)) / lb;
}

GreedyResult greedy_build(const AffineProblem& problem, const Matrix& training, double tolerance, Index max_size) {
    if (training.cols() < 1) throw ConfigError("greedy_build: empty training set");
    if (max_size < 1) throw ConfigError("greedy_build: basis size cap must be >= 1");

    GreedyResult result;
    Matrix Z(problem.dof(), 0);
    Index next = 0;
    while (true) {
        Vector u = solve_full(problem, Vector(training.col(next)));
        const double original = u.norm();
        for (int pass = 0; pass < 2; ++pass)
            for (Index j = 0; j < Z.cols(); ++j) u -= Z.col(j).dot(u) * Z.col(j);
        const double remaining = u.norm();
        if (remaining <= 1e-10 * std::max(original, std::numeric_limits<double>::min())) {
            result.diagnostic = "stagnation: snapshot at training column " + std::to_string(next) +
                                " lies in the current span";
            if (Z.cols() == 0) throw NumericalError("greedy_build: first snapshot is zero");
            break;
        }
        Z.conservativeResize(Eigen::NoChange, Z.cols() + 1);
        Z.col(Z.cols() - 1) = u / remaining;
        result.selected.push_back(next);
        result.op = assemble_reduced(problem, Z);

        double worst = -1.0;
        for (Index c = 0; c < training.cols(); ++c) {
            const Vector mu = training.col(c);
            const double d = error_indicator(result.op, mu, solve_reduced(result.op, mu));
            if (d > worst) {
                worst = d;
                next = c;
            }
        }
        result.max_indicator.push_back(worst);
        if (worst <= tolerance) {
            result.diagnostic = "tolerance reached";
            break;
        }
        if (Z.cols() >= max_size) {
            result.diagnostic = "basis size cap reached";
            break;
        }
    }
    return result;
}

PodBuildResult pod_build(const AffineProblem& problem, const Matrix& training, const RankCriterion& criterion,
                         unsigned threads) {
    if (training.cols() < 1) throw ConfigError("pod_build: empty training set");
    PodBuildResult result;
    result.snapshots = solve_full(problem, training, threads);
    result.basis = pod_fit(result.snapshots, criterion, false);
    result.op = assemble_reduced(problem, result.basis.modes);
    return result;
}

void save_reduced(const ReducedOperator& op, Archive& ar, const std::string& prefix) {
    auto names = [](const std::vector<Theta>& ts) {
        std::string out;
        for (const Theta& t : ts) {
            if (t.name.empty()) throw ConfigError("save_reduced: anonymous theta functions cannot be persisted");
            out += t.name + "\n";
        }
        return out;
    };
    ar.put(prefix + ".Z", op.Z);
    ar.put_text(prefix + ".theta_a", names(op.theta_a));
    ar.put_text(prefix + ".theta_f", names(op.theta_f));
    ar.put_scalar(prefix + ".unit_coercivity", op.unit_coercivity);
    ar.put(prefix + ".FF", op.FF);
    for (std::size_t q = 0; q < op.A_hat.size(); ++q) {
        ar.put(prefix + ".A" + std::to_string(q), op.A_hat[q]);
        ar.put(prefix + ".AF" + std::to_string(q), op.AF[q]);
        for (std::size_t p = 0; p < op.A_hat.size(); ++p)
            ar.put(prefix + ".AA" + std::to_string(q) + "_" + std::to_string(p), op.AA[q][p]);
    }
    for (std::size_t i = 0; i < op.F_hat.size(); ++i) ar.put(prefix + ".F" + std::to_string(i), op.F_hat[i]);
}

ReducedOperator load_reduced(const Archive& ar, const std::string& prefix) {
    auto thetas = [](const std::string& text) {
        std::vector<Theta> out;
        std::size_t start = 0;
        while (start < text.size()) {
            const std::size_t end = text.find('\n', start);
            out.push_back(theta_named(text.substr(start, end - start)));
            start = end == std::string::npos ? text.size() : end + 1;
        }
        return out;
    };
    ReducedOperator op;
    op.Z = ar.matrix(prefix + ".Z");
    op.theta_a = thetas(ar.text(prefix + ".theta_a"));
    op.theta_f = thetas(ar.text(prefix + ".theta_f"));
    op.unit_coercivity = ar.scalar(prefix + ".unit_coercivity");
    op.FF = ar.matrix(prefix + ".FF");
    const std::size_t mq = op.theta_a.size();
    op.AA.assign(mq, std::vector<Matrix>(mq));
    for (std::size_t q = 0; q < mq; ++q) {
        op.A_hat.push_back(ar.matrix(prefix + ".A" + std::to_string(q)));
        op.AF.push_back(ar.matrix(prefix + ".AF" + std::to_string(q)));
        for (std::size_t p = 0; p < mq; ++p)
            op.AA[q][p] = ar.matrix(prefix + ".AA" + std::to_string(q) + "_" + std::to_string(p));
    }
    for (std::size_t i = 0; i < op.theta_f.size(); ++i) op.F_hat.push_back(ar.vector(prefix + ".F" + std::to_string(i)));
    for (const Matrix& a : op.A_hat)
        if (a.rows() != op.size() || a.cols() != op.size()) throw IoError("reduced operator archive: term shape mismatch");
    return op;
}

}  // namespace romkit
