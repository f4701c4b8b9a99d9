#include "romkit/dmd.hpp"

#include "romkit/error.hpp"

#include <cmath>
#include <complex>

namespace romkit {

namespace {

std::complex<double> step_power(std::complex<double> lambda, double k) {
    const double kr = std::round(k);
    if (std::abs(k - kr) < 1e-12 && kr >= 0.0) {
        auto n = static_cast<long long>(kr);
        std::complex<double> result(1.0, 0.0), base = lambda;
        while (n > 0) {
            if (n & 1) result *= base;
            base *= base;
            n >>= 1;
        }
        return result;
    }
    if (lambda == std::complex<double>(0.0, 0.0)) return {0.0, 0.0};
    return std::exp(k * std::log(lambda));
}

}  // namespace

DmdModel dmd_fit(const Matrix& x, const RankCriterion& rank, double dt, double t0) {
    if (x.cols() < 2) throw ConfigError("dmd_fit: need at least 2 snapshots");
    if (!(dt > 0.0)) throw ConfigError("dmd_fit: time step must be positive");
    require_finite(x, "dmd_fit");
    const Index k = x.cols();
    const Matrix s1 = x.leftCols(k - 1);
    const Matrix s2 = x.rightCols(k - 1);

    DmdModel model;
    model.dt = dt;
    model.t0 = t0;

    SvdResult dec = svd(s1);
    if (dec.rank() == 0) throw NumericalError("dmd_fit: snapshot matrix is zero");
    Index r = select_rank(dec.singular_values, rank);
    if (const auto* requested = std::get_if<RankCount>(&rank); requested && requested->value > r) {
        model.warnings.push_back("requested rank " + std::to_string(requested->value) + " reduced to " +
                                 std::to_string(r) + " (singular values below tolerance)");
    }

    model.U = dec.U.leftCols(r);
    const Vector sigma_inv = dec.singular_values.head(r).cwiseInverse();
    const Matrix s2v = s2 * dec.V.leftCols(r) * sigma_inv.asDiagonal();  // n x r
    model.Atilde = model.U.transpose() * s2v;

    Eigen::EigenSolver<Matrix> es(model.Atilde, true);
    if (es.info() != Eigen::Success) throw NumericalError("dmd_fit: eigensolver failed on the reduced operator");
    model.eigenvalues = es.eigenvalues();
    model.modes = s2v.cast<std::complex<double>>() * es.eigenvectors();

    const ComplexVector x1 = x.col(0).cast<std::complex<double>>();
    model.amplitudes = model.modes.completeOrthogonalDecomposition().solve(x1);
    return model;
}

DmdModel dmd_fit(const SnapshotSet& seq, const RankCriterion& rank) {
    if (seq.count() < 2) throw ConfigError("dmd_fit: need at least 2 snapshots");
    if (seq.distinct_params().cols() != 1) throw ConfigError("dmd_fit: sequence must hold a single parameter");
    const Vector& t = seq.times();
    const double dt = t(1) - t(0);
    if (!(dt > 0.0)) throw ConfigError("dmd_fit: time stamps must increase");
    for (Index i = 1; i < t.size(); ++i) {
        if (std::abs((t(i) - t(i - 1)) - dt) > 1e-9 * std::max(1.0, std::abs(dt)))
            throw ConfigError("dmd_fit: time stamps are not uniformly spaced");
    }
    DmdModel m = dmd_fit(seq.snapshots(), rank, dt, t(0));
    m.param = seq.params().col(0);
    return m;
}

DmdPrediction dmd_predict(const DmdModel& model, double k) {
    ComplexVector scaled(model.rank());
    for (Index i = 0; i < model.rank(); ++i) scaled(i) = step_power(model.eigenvalues(i), k) * model.amplitudes(i);
    const ComplexVector full = model.modes * scaled;
    DmdPrediction p;
    p.state = full.real();
    p.max_imag = full.size() ? full.imag().cwiseAbs().maxCoeff() : 0.0;
    return p;
}

DmdReconstruction dmd_reconstruct(const DmdModel& model, const Vector& times) {
    Matrix states(model.dof(), times.size());
    double max_imag = 0.0;
    for (Index c = 0; c < times.size(); ++c) {
        DmdPrediction p = dmd_predict(model, (times(c) - model.t0) / model.dt);
        states.col(c) = p.state;
        max_imag = std::max(max_imag, p.max_imag);
    }
    Matrix params = model.param.size() ? Matrix(model.param.replicate(1, times.size())) : Matrix(0, times.size());
    return {SnapshotSet(std::move(states), std::move(params), times, R"({"source":"dmd"})"), max_imag};
}

Matrix dmd_full_operator(const DmdModel& model) {
    return model.U * model.Atilde * model.U.transpose();
}

void save_dmd(const DmdModel& model, Archive& ar, const std::string& prefix) {
    ar.put(prefix + ".U", model.U);
    ar.put(prefix + ".Atilde", model.Atilde);
    // eigenvalues interleaved re/im as an r x 2 block
    Matrix eig(model.rank(), 2);
    eig.col(0) = model.eigenvalues.real();
    eig.col(1) = model.eigenvalues.imag();
    ar.put(prefix + ".eigenvalues", eig);
    Matrix amp(model.rank(), 2);
    amp.col(0) = model.amplitudes.real();
    amp.col(1) = model.amplitudes.imag();
    ar.put(prefix + ".amplitudes", amp);
    put_complex(ar, prefix + ".modes", model.modes);
    ar.put_scalar(prefix + ".dt", model.dt);
    ar.put_scalar(prefix + ".t0", model.t0);
    ar.put_scalar(prefix + ".rank", double(model.rank()));
    ar.put(prefix + ".param", model.param);
    ar.put_text(prefix + ".modes_convention", "exact");
}

DmdModel load_dmd(const Archive& ar, const std::string& prefix) {
    DmdModel m;
    m.U = ar.matrix(prefix + ".U");
    m.Atilde = ar.matrix(prefix + ".Atilde");
    const Matrix& eig = ar.matrix(prefix + ".eigenvalues");
    const Matrix& amp = ar.matrix(prefix + ".amplitudes");
    m.eigenvalues.resize(eig.rows());
    m.amplitudes.resize(amp.rows());
    for (Index i = 0; i < eig.rows(); ++i) m.eigenvalues(i) = {eig(i, 0), eig(i, 1)};
    for (Index i = 0; i < amp.rows(); ++i) m.amplitudes(i) = {amp(i, 0), amp(i, 1)};
    m.modes = get_complex(ar, prefix + ".modes");
    m.dt = ar.scalar(prefix + ".dt");
    m.t0 = ar.scalar(prefix + ".t0");
    m.param = ar.vector(prefix + ".param");
    if (static_cast<Index>(ar.scalar(prefix + ".rank")) != m.rank())
        throw IoError("dmd archive: rank field disagrees with stored operator");
    return m;
}

}  // namespace romkit
