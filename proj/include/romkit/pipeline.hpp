#pragma once

#include "romkit/config.hpp"
#include "romkit/dataset.hpp"
#include "romkit/fom.hpp"
#include "romkit/reduction.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace romkit {

enum class Benchmark { cavity, diffusion_rb, morphed_poisson, user_snapshots };
std::string to_string(Benchmark b);
Benchmark parse_benchmark(const std::string& tag);

enum class MethodKind { pod_galerkin, ddnn, pinn, dmd_chain, pod_chain };
enum class RegressorKind { rbf, gpr, ddnn };
std::string to_string(RegressorKind r);

/// One entry of the method chain list, e.g. `pod-galerkin(15)`, `dmd+rbf`.
struct MethodSpec {
    MethodKind kind = MethodKind::pod_chain;
    RegressorKind regressor = RegressorKind::rbf;
    std::optional<RankCriterion> basis;  ///< from the parenthesized argument
    std::string label;

    /// Directory-safe name.
    std::string slug() const;
};

/// Comma-separated list; a parenthesized argument is a rank (integer) or an energy fraction in (0, 1].
std::vector<MethodSpec> parse_methods(const std::string& text);

struct PipelineConfig {
    Config raw;
    Benchmark benchmark = Benchmark::diffusion_rb;
    std::vector<MethodSpec> methods;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::string field = "all";
    Index fom_timing_repeats = 3;
    Index online_repeats = 20;

    /// Validates every setting and the method/benchmark compatibility.
    static PipelineConfig from(Config raw);
    std::string fingerprint() const;
};

enum class Stage { sample, fom, train, evaluate, report, plot };
std::string to_string(Stage s);

struct RunOptions {
    std::filesystem::path out;
    bool force = false;
};

struct StageOutcome {
    bool skipped = false;
    std::string message;
};

/// Runs one stage. A stage whose stamp matches the current fingerprint is
/// skipped unless `force`. On failure `<out>/stamps/<stage>.invalid` records
/// the error and the exception is rethrown with the stage name prefixed.
StageOutcome run_stage(Stage stage, const PipelineConfig& config, const RunOptions& options);
std::vector<StageOutcome> run_all(const PipelineConfig& config, const RunOptions& options);

/// Fingerprint of the settings that influence a stage's artifacts.
std::string stage_fingerprint(const PipelineConfig& config, Stage stage);

// --- reports ------------------------------------------------------------------------

struct ReportRow {
    std::string method;
    double train_error = 0.0;      ///< mean relative error over training snapshots
    double train_error_max = 0.0;
    double test_error = 0.0;
    double test_error_max = 0.0;
    std::optional<double> node_error;  ///< interpolation residual at the regression nodes
    double offline_seconds = 0.0;
    double online_median_seconds = 0.0;
    Index online_evaluations = 0;
    std::optional<double> speedup;
};

struct CurvePoint {
    Index size = 0;
    double test_error = 0.0;
    /// Mean of ‖û - u‖_A(μ) / ‖u‖_A(μ); nonincreasing in size for nested Galerkin bases.
    std::optional<double> energy_error;
};

struct BenchReport {
    std::string benchmark;
    std::string fingerprint;
    std::string field;
    std::optional<double> fom_median_seconds;
    Index fom_solves = 0;
    Index test_parameters = 0;
    std::vector<ReportRow> rows;
    /// Test error against reduced basis size, per Galerkin method label.
    std::vector<std::pair<std::string, std::vector<CurvePoint>>> curves;
};

std::string report_to_json(const BenchReport& report);
BenchReport report_from_json(const std::string& text);

/// Full table with timing provenance.
std::string render_csv(const BenchReport& report);
/// Timing-free error table; bit-stable for a deterministic run.
std::string render_errors_csv(const BenchReport& report);
/// Columns: method, train err, test err, speedup.
std::string render_markdown(const BenchReport& report);
std::string render_curve_svg(const BenchReport& report);

/// Side-by-side heat maps of two fields on a structured n x n grid (x fastest).
std::string render_grid_pair_svg(const Vector& left, const Vector& right, Index n, const std::string& left_title,
                                 const std::string& right_title);
/// Side-by-side heat maps of two nodal fields on a triangle mesh.
std::string render_mesh_pair_svg(const TriMesh& mesh, const Vector& left, const Vector& right,
                                 const std::string& left_title, const std::string& right_title);

/// Mean and max of per-column ‖û - u‖₂ / ‖u‖₂ over `rows` (columns with ‖u‖ = 0 use the absolute error).
std::pair<double, double> relative_errors(const Matrix& predicted, const Matrix& truth, Index row_begin, Index row_count,
                                          std::vector<double>* each = nullptr);

}  // namespace romkit
