#pragma once

#include "romkit/numerics.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace romkit {

/// Axis-aligned box of admissible parameters.
class ParameterSpace {
public:
    ParameterSpace(Vector lower, Vector upper, std::vector<std::string> labels = {});

    Index dim() const { return lower_.size(); }
    const Vector& lower() const { return lower_; }
    const Vector& upper() const { return upper_; }
    const std::vector<std::string>& labels() const { return labels_; }

    bool contains(const Eigen::Ref<const Vector>& mu) const;
    /// Affine map of the box onto [0,1]^dim.
    Vector to_unit(const Eigen::Ref<const Vector>& mu) const;

private:
    Vector lower_;
    Vector upper_;
    std::vector<std::string> labels_;
};

enum class SamplingKind { uniform, normal, grid };

struct SamplingPlan {
    SamplingKind kind = SamplingKind::uniform;
    Index count = 60;
    std::uint64_t seed = 0;
    /// Normal sampling only; empty center means the box midpoint.
    Vector normal_center;
    /// Normal sampling only; one entry broadcasts to every dimension.
    Vector normal_spread;
};

/// Draws plan.count parameter vectors inside `space`, one per column.
/// Normal draws outside the box are rejected and redrawn.
Matrix sample(const ParameterSpace& space, const SamplingPlan& plan);

/// Column-per-snapshot database: dof x K states with parameter and time stamps.
class SnapshotSet {
public:
    SnapshotSet() = default;
    /// params is param_dim x K; times has K entries.
    SnapshotSet(Matrix snapshots, Matrix params, Vector times, std::string metadata = {});

    Index dof() const { return snapshots_.rows(); }
    Index count() const { return snapshots_.cols(); }
    Index param_dim() const { return params_.rows(); }

    const Matrix& snapshots() const { return snapshots_; }
    const Matrix& params() const { return params_; }
    const Vector& times() const { return times_; }
    const std::string& metadata() const { return metadata_; }

    /// Distinct parameter columns in order of first appearance.
    Matrix distinct_params() const;
    /// Column indices whose parameter equals `mu` exactly, in stored order.
    std::vector<Index> columns_for(const Eigen::Ref<const Vector>& mu) const;
    SnapshotSet select(const std::vector<Index>& columns) const;
    /// Concatenates columns; metadata of `this` is kept.
    SnapshotSet append(const SnapshotSet& other) const;
    SnapshotSet with_metadata(std::string metadata) const;

private:
    Matrix snapshots_{0, 0};
    Matrix params_{0, 0};
    Vector times_{0};
    std::string metadata_;
};

/// Partition by parameter value: every snapshot of one parameter lands on one side.
std::pair<SnapshotSet, SnapshotSet> split_train_test(const SnapshotSet& set, double fraction,
                                                     std::uint64_t seed);

enum class NormalizeMode { none, mean_center, center_and_scale };

/// Per-dof affine normalization fitted on training data only.
struct Normalizer {
    NormalizeMode mode = NormalizeMode::none;
    Vector shift;  ///< per-dof mean (zero when mode == none)
    Vector scale;  ///< per-dof scale, all entries > 0

    Matrix apply(const Matrix& states) const;
    Matrix invert(const Matrix& normalized) const;
};

/// Rows are dofs, columns are samples.
Normalizer normalize_fit(const Matrix& states, NormalizeMode mode);
inline Matrix normalize_apply(const Normalizer& n, const Matrix& states) { return n.apply(states); }
inline Matrix normalize_invert(const Normalizer& n, const Matrix& states) { return n.invert(states); }

enum class SnapshotFormat { binary, csv };

/// Binary layout: "ROMS", u32 version=1, u64 dof, u64 K, u32 param_dim, then
/// little-endian f64 params (K x param_dim, row-major), times (K), snapshots
/// (column-major), then u64 length + UTF-8 metadata.
/// Not safe for concurrent writers on the same path.
void save_snapshots(const SnapshotSet& set, const std::filesystem::path& path, SnapshotFormat format);
SnapshotSet load_snapshots(const std::filesystem::path& path, SnapshotFormat format);
/// Picks the format from the extension (.csv, anything else binary).
SnapshotFormat format_for(const std::filesystem::path& path);

}  // namespace romkit
