#pragma once

#include "romkit/archive.hpp"
#include "romkit/config.hpp"
#include "romkit/dataset.hpp"
#include "romkit/fom.hpp"
#include "romkit/galerkin.hpp"
#include "romkit/kernel.hpp"
#include "romkit/neural.hpp"
#include "romkit/pipeline.hpp"

#include <memory>
#include <optional>

namespace romkit {

/// Everything a surrogate may need from the offline stage.
struct TrainingContext {
    const SnapshotSet* train = nullptr;
    std::optional<ParameterSpace> space;
    bool time_dependent = false;
    const AffineProblem* problem = nullptr;          ///< diffusion-rb only
    const DiffusionConfig* diffusion = nullptr;      ///< diffusion-rb only
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

/// Regression of coefficient vectors over parameters scaled to the unit box.
/// Targets are centered and scaled per output before fitting.
struct CoefficientRegressor {
    RegressorKind kind = RegressorKind::rbf;
    Normalizer normalizer;
    RbfModel rbf;
    GprModel gpr;
    Mlp net;
    /// Largest relative error of the fitted model at its own nodes (original units).
    double node_error = 0.0;

    void fit(const Matrix& inputs, const Matrix& targets, const Config& config, std::uint64_t seed, unsigned threads);
    Matrix predict(const Matrix& inputs) const;
    void save(Archive& ar, const std::string& prefix) const;
    static CoefficientRegressor load(const Archive& ar, const std::string& prefix);
};

class Surrogate {
public:
    virtual ~Surrogate() = default;
    /// Full states (dof x times.size()) at parameter `mu`.
    virtual Matrix predict(const Vector& mu, const Vector& times) const = 0;
    virtual void save(Archive& ar) const = 0;
    /// Regression-node residual when the method interpolates its data.
    virtual std::optional<double> node_error() const { return std::nullopt; }
};

/// Galerkin surrogates also answer for every leading basis size.
class GalerkinSurrogate : public Surrogate {
public:
    explicit GalerkinSurrogate(ReducedOperator op) : op_(std::move(op)) {}
    Matrix predict(const Vector& mu, const Vector& times) const override;
    void save(Archive& ar) const override;
    Vector predict_truncated(const Vector& mu, Index n) const;
    const ReducedOperator& op() const { return op_; }

private:
    ReducedOperator op_;
};

std::unique_ptr<Surrogate> fit_surrogate(const MethodSpec& method, const Config& config, const TrainingContext& ctx);
std::unique_ptr<Surrogate> load_surrogate(const MethodSpec& method, const Archive& ar, const TrainingContext& ctx);

}  // namespace romkit
