#pragma once

#include "romkit/archive.hpp"
#include "romkit/dataset.hpp"
#include "romkit/reduction.hpp"

#include <string>
#include <vector>

namespace romkit {

/// Rank-truncated linear time-advance model x_{k+1} ~ A x_k fitted to one trajectory.
struct DmdModel {
    Matrix U;                   ///< n x r, POD basis of the leading snapshot block
    Matrix Atilde;              ///< r x r reduced operator U^T S2 V Sigma^-1
    ComplexVector eigenvalues;  ///< r
    ComplexMatrix modes;        ///< n x r exact DMD modes S2 V Sigma^-1 w_i
    ComplexVector amplitudes;   ///< least-squares fit of modes * b = x_1
    double dt = 1.0;
    double t0 = 0.0;            ///< time stamp of x_1
    Vector param;               ///< parameter of the fitted trajectory (may be empty)
    std::vector<std::string> warnings;

    Index rank() const { return Atilde.rows(); }
    Index dof() const { return U.rows(); }
};

/// Columns of `sequence` are x_1..x_K at uniform spacing dt.
/// S1 = x_1..x_{K-1}, S2 = x_2..x_K.
DmdModel dmd_fit(const Matrix& sequence, const RankCriterion& rank, double dt = 1.0, double t0 = 0.0);
/// Single-parameter time series; dt and t0 are taken from the time stamps.
DmdModel dmd_fit(const SnapshotSet& sequence, const RankCriterion& rank);

struct DmdPrediction {
    Vector state;             ///< real part of modes * diag(lambda^k) * b
    double max_imag = 0.0;    ///< largest discarded imaginary component
};

/// k counts steps from x_1 (k = 0 reproduces x_1); fractional k is allowed.
DmdPrediction dmd_predict(const DmdModel& model, double k);

struct DmdReconstruction {
    SnapshotSet states;
    double max_imag = 0.0;
};

/// dmd_predict at k = (t - t0) / dt for each time stamp.
DmdReconstruction dmd_reconstruct(const DmdModel& model, const Vector& times);

/// U * Atilde * U^T; only sensible for small n.
Matrix dmd_full_operator(const DmdModel& model);

void save_dmd(const DmdModel& model, Archive& ar, const std::string& prefix = "dmd");
DmdModel load_dmd(const Archive& ar, const std::string& prefix = "dmd");

}  // namespace romkit
