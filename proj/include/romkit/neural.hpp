#pragma once

#include "romkit/archive.hpp"
#include "romkit/numerics.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace romkit {

enum class Activation { tanh, relu, sigmoid };
enum class OutputMap { identity, softmax };

std::string to_string(Activation a);
Activation parse_activation(const std::string& tag);

/// Fully connected network x_i = f(A_i x_{i-1} + b_i), last layer uses g.
struct Mlp {
    std::vector<Index> sizes;     ///< l_0 .. l_L
    std::vector<Matrix> weights;  ///< A_i is l_i x l_{i-1}
    std::vector<Vector> biases;   ///< b_i has l_i entries
    Activation hidden = Activation::tanh;
    OutputMap output = OutputMap::identity;

    Index layers() const { return static_cast<Index>(weights.size()); }
    Index input_dim() const { return sizes.front(); }
    Index output_dim() const { return sizes.back(); }
    Index parameter_count() const;
};

/// Glorot-uniform weights in +-sqrt(6 / (l_in + l_out)), zero biases.
Mlp mlp_init(const std::vector<Index>& sizes, Activation hidden, OutputMap output, std::uint64_t seed);

/// Columns of `inputs` are samples.
Matrix mlp_forward(const Mlp& net, const Matrix& inputs);
Vector mlp_forward(const Mlp& net, const Vector& input);

struct ForwardCache {
    std::vector<Matrix> activations;  ///< x_0 .. x_L
};

ForwardCache mlp_forward_cached(const Mlp& net, const Matrix& inputs);

struct MlpGradients {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
};

/// Reverse-mode gradients of a scalar loss given dL/dy for every sample
/// column; contributions of all columns are summed.
MlpGradients mlp_backward(const Mlp& net, const ForwardCache& cache, const Matrix& output_grad);

/// Flat parameter views, ordered A_1, b_1, A_2, b_2, ... (column-major blocks).
Vector mlp_parameters(const Mlp& net);
void mlp_set_parameters(Mlp& net, const Vector& params);
Vector flatten(const MlpGradients& grads);

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
    OptimizerKind optimizer = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    Index epochs = 1000;
    Index batch_size = 0;  ///< 0 = full batch
    std::uint64_t seed = 0;
    /// > 1 splits each batch gradient across threads; summation order then
    /// differs from the single-threaded run, so results are not bitwise equal.
    unsigned threads = 1;
};

struct NetSpec {
    std::vector<Index> hidden;
    Activation activation = Activation::tanh;
    OutputMap output = OutputMap::identity;
};

/// First-order optimizer over a flat parameter vector.
class Optimizer {
public:
    Optimizer(const TrainConfig& config, Index parameter_count);
    void step(Vector& params, const Vector& grad);

private:
    TrainConfig config_;
    Vector m_, v_;
    long t_ = 0;
};

struct DdnnResult {
    Mlp net;
    std::vector<double> loss_history;  ///< mean squared error per epoch, before the update
};

/// Regresses targets (d x K) on inputs (p x K) with a mean-squared-error loss.
DdnnResult ddnn_fit(const Matrix& inputs, const Matrix& targets, const NetSpec& spec, const TrainConfig& config);

/// Mean over samples and outputs of squared error.
double mse(const Mlp& net, const Matrix& inputs, const Matrix& targets);

// --- physics-informed training ------------------------------------------------

struct CollocationPoint {
    Vector mu;
    double t = 0.0;
    Vector x;
};

/// Network evaluation handle passed to residual evaluators. Every call is
/// recorded so the loss gradient can be pushed back through each stencil value.
class FieldProbe {
public:
    double value(const Vector& mu, double t, const Vector& x, Index component = 0);
    double value(const CollocationPoint& p, Index component = 0) { return value(p.mu, p.t, p.x, component); }

    /// Central finite differences of the network output in space / time.
    double dx(const CollocationPoint& p, Index axis, double h, Index component = 0);
    double dxx(const CollocationPoint& p, Index axis, double h, Index component = 0);
    double laplacian(const CollocationPoint& p, double h, Index component = 0);
    double dt(const CollocationPoint& p, double h, Index component = 0);

private:
    friend class PinnEngine;
    struct Record {
        Vector input;
        Index component;
        double value;
    };

    FieldProbe(const Mlp* net, bool steady) : net_(net), steady_(steady) {}
    Vector input_of(const Vector& mu, double t, const Vector& x) const;

    const Mlp* net_;
    bool steady_;
    bool replay_ = false;
    std::size_t cursor_ = 0;
    Index perturbed_ = -1;
    double delta_ = 0.0;
    std::vector<Record> records_;
};

using PinnResidual = std::function<double(FieldProbe&, const CollocationPoint&)>;
using PinnSampler = std::function<CollocationPoint(std::mt19937_64&)>;
using PinnDomain = std::function<bool(const CollocationPoint&)>;

struct PinnTerm {
    PinnResidual residual;
    PinnSampler sampler;
    PinnDomain contains;  ///< optional domain predicate checked on every sample
    double weight = 1.0;
    Index count = 0;

    bool active() const { return residual && sampler && count > 0 && weight > 0.0; }
};

/// Network input layout: [mu (param_dim), t (unsteady only), x (space_dim)].
struct PinnProblem {
    Index param_dim = 0;
    Index space_dim = 1;
    Index outputs = 1;
    bool steady = true;
    /// Finite-difference step for derivatives inside residuals (1e-4 x domain diameter).
    double fd_step = 1e-4;
    PinnTerm interior;
    PinnTerm boundary;
    PinnTerm initial;  ///< ignored when steady

    Index input_dim() const { return param_dim + (steady ? 0 : 1) + space_dim; }
};

struct PinnLoss {
    double total = 0.0;
    double interior = 0.0;
    double boundary = 0.0;
    double initial = 0.0;
};

struct PinnResult {
    Mlp net;
    std::vector<PinnLoss> history;
};

/// Minimizes w_L mean R_L^2 + w_B mean R_B^2 + w_T mean R_T^2 over collocation
/// points drawn afresh every epoch.
PinnResult pinn_fit(const PinnProblem& problem, const NetSpec& spec, const TrainConfig& config);

/// Loss and its decomposition for a fixed set of points per term.
PinnLoss pinn_loss(const PinnProblem& problem, const Mlp& net, const std::vector<CollocationPoint>& interior,
                   const std::vector<CollocationPoint>& boundary, const std::vector<CollocationPoint>& initial);

/// Assembles the network input for a collocation point.
Vector pinn_input(const PinnProblem& problem, const CollocationPoint& p);

void save_mlp(const Mlp& net, Archive& ar, const std::string& prefix = "mlp");
Mlp load_mlp(const Archive& ar, const std::string& prefix = "mlp");

}  // namespace romkit
