#include "romkit/neural.hpp"

#include "romkit/error.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>

namespace romkit {

std::string to_string(Activation a) {
    switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    }
    return "tanh";
}

Activation parse_activation(const std::string& tag) {
    if (tag == "tanh") return Activation::tanh;
    if (tag == "relu") return Activation::relu;
    if (tag == "sigmoid") return Activation::sigmoid;
    throw ConfigError("unknown activation '" + tag + "'");
}

Index Mlp::parameter_count() const {
    Index n = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) n += weights[i].size() + biases[i].size();
    return n;
}

Mlp mlp_init(const std::vector<Index>& sizes, Activation hidden, OutputMap output, std::uint64_t seed) {
    if (sizes.size() < 2) throw ConfigError("mlp: need at least input and output sizes");
    for (Index s : sizes)
        if (s < 1) throw ConfigError("mlp: layer sizes must be >= 1");
    Mlp net;
    net.sizes = sizes;
    net.hidden = hidden;
    net.output = output;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 1; i < sizes.size(); ++i) {
        const double bound = std::sqrt(6.0 / double(sizes[i - 1] + sizes[i]));
        std::uniform_real_distribution<double> dist(-bound, bound);
        Matrix a(sizes[i], sizes[i - 1]);
        for (Index c = 0; c < a.cols(); ++c)
            for (Index r = 0; r < a.rows(); ++r) a(r, c) = dist(rng);
        net.weights.push_back(std::move(a));
        net.biases.push_back(Vector::Zero(sizes[i]));
    }
    return net;
}

namespace {

void activate(Activation f, Matrix& z) {
    switch (f) {
    case Activation::tanh: z = z.array().tanh().matrix(); break;
    case Activation::relu: z = z.cwiseMax(0.0); break;
    case Activation::sigmoid: z = (1.0 / (1.0 + (-z.array()).exp())).matrix(); break;
    }
}

void softmax(Matrix& z) {
    for (Index c = 0; c < z.cols(); ++c) {
        const double mx = z.col(c).maxCoeff();
        z.col(c) = (z.col(c).array() - mx).exp().matrix();
        z.col(c) /= z.col(c).sum();
    }
}

// f'(z) expressed through a = f(z)
Matrix activation_slope(Activation f, const Matrix& a) {
    switch (f) {
    case Activation::tanh: return (1.0 - a.array().square()).matrix();
    case Activation::relu: return (a.array() > 0.0).cast<double>().matrix();
    case Activation::sigmoid: return (a.array() * (1.0 - a.array())).matrix();
    }
    return Matrix::Ones(a.rows(), a.cols());
}

void check_input(const Mlp& net, Index rows) {
    if (rows != net.input_dim()) throw ConfigError("mlp: input dimension mismatch");
}

}  // namespace

ForwardCache mlp_forward_cached(const Mlp& net, const Matrix& inputs) {
    check_input(net, inputs.rows());
    ForwardCache cache;
    cache.activations.reserve(net.weights.size() + 1);
    cache.activations.push_back(inputs);
    for (Index i = 0; i < net.layers(); ++i) {
        Matrix z = net.weights[static_cast<std::size_t>(i)] * cache.activations.back();
        z.colwise() += net.biases[static_cast<std::size_t>(i)];
        if (i + 1 < net.layers())
            activate(net.hidden, z);
        else if (net.output == OutputMap::softmax)
            softmax(z);
        cache.activations.push_back(std::move(z));
    }
    return cache;
}

Matrix mlp_forward(const Mlp& net, const Matrix& inputs) {
    check_input(net, inputs.rows());
    Matrix x = inputs;
    for (Index i = 0; i < net.layers(); ++i) {
        Matrix z = net.weights[static_cast<std::size_t>(i)] * x;
        z.colwise() += net.biases[static_cast<std::size_t>(i)];
        if (i + 1 < net.layers())
            activate(net.hidden, z);
        else if (net.output == OutputMap::softmax)
            softmax(z);
        x = std::move(z);
    }
    return x;
}

Vector mlp_forward(const Mlp& net, const Vector& input) {
    return mlp_forward(net, Matrix(input)).col(0);
}

MlpGradients mlp_backward(const Mlp& net, const ForwardCache& cache, const Matrix& output_grad) {
    const auto L = static_cast<std::size_t>(net.layers());
    if (cache.activations.size() != L + 1) throw ConfigError("mlp_backward: cache does not match network");
    if (output_grad.rows() != net.output_dim() || output_grad.cols() != cache.activations.back().cols())
        throw ConfigError("mlp_backward: output gradient shape mismatch");

    MlpGradients g;
    g.weights.resize(L);
    g.biases.resize(L);
    Matrix delta = output_grad;
    if (net.output == OutputMap::softmax) {
        const Matrix& a = cache.activations.back();
        const Eigen::RowVectorXd dots = (a.array() * delta.array()).colwise().sum();
        delta = (a.array() * (delta.array().rowwise() - dots.array())).matrix();
    }
    for (std::size_t i = L; i-- > 0;) {
        g.weights[i].noalias() = delta * cache.activations[i].transpose();
        g.biases[i] = delta.rowwise().sum();
        if (i > 0) {
            Matrix back = net.weights[i].transpose() * delta;
            delta = back.cwiseProduct(activation_slope(net.hidden, cache.activations[i]));
        }
    }
    return g;
}

Vector mlp_parameters(const Mlp& net) {
    Vector p(net.parameter_count());
    Index o = 0;
    for (std::size_t i = 0; i < net.weights.size(); ++i) {
        p.segment(o, net.weights[i].size()) = Eigen::Map<const Vector>(net.weights[i].data(), net.weights[i].size());
        o += net.weights[i].size();
        p.segment(o, net.biases[i].size()) = net.biases[i];
        o += net.biases[i].size();
    }
    return p;
}

void mlp_set_parameters(Mlp& net, const Vector& p) {
    if (p.size() != net.parameter_count()) throw ConfigError("mlp: parameter vector length mismatch");
    Index o = 0;
    for (std::size_t i = 0; i < net.weights.size(); ++i) {
        Eigen::Map<Vector>(net.weights[i].data(), net.weights[i].size()) = p.segment(o, net.weights[i].size());
        o += net.weights[i].size();
        net.biases[i] = p.segment(o, net.biases[i].size());
        o += net.biases[i].size();
    }
}

Vector flatten(const MlpGradients& g) {
    Index n = 0;
    for (std::size_t i = 0; i < g.weights.size(); ++i) n += g.weights[i].size() + g.biases[i].size();
    Vector p(n);
    Index o = 0;
    for (std::size_t i = 0; i < g.weights.size(); ++i) {
        p.segment(o, g.weights[i].size()) = Eigen::Map<const Vector>(g.weights[i].data(), g.weights[i].size());
        o += g.weights[i].size();
        p.segment(o, g.biases[i].size()) = g.biases[i];
        o += g.biases[i].size();
    }
    return p;
}

Optimizer::Optimizer(const TrainConfig& config, Index n) : config_(config) {
    if (!(config.learning_rate > 0.0)) throw ConfigError("training: learning rate must be positive");
    if (config.epochs < 1) throw ConfigError("training: epochs must be >= 1");
    if (config.optimizer == OptimizerKind::adam) {
        m_ = Vector::Zero(n);
        v_ = Vector::Zero(n);
    }
}

void Optimizer::step(Vector& params, const Vector& grad) {
    if (config_.optimizer == OptimizerKind::sgd) {
        params -= config_.learning_rate * grad;
        return;
    }
    ++t_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    m_ = b1 * m_ + (1.0 - b1) * grad;
    v_ = b2 * v_ + (1.0 - b2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(b1, double(t_));
    const double c2 = 1.0 - std::pow(b2, double(t_));
    params.array() -= config_.learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + config_.adam_epsilon);
}

double mse(const Mlp& net, const Matrix& inputs, const Matrix& targets) {
    const Matrix diff = mlp_forward(net, inputs) - targets;
    return diff.squaredNorm() / double(diff.size());
}

namespace {

// Loss and summed gradient of mean squared error over the given columns.
std::pair<double, Vector> mse_gradient(const Mlp& net, const Matrix& x, const Matrix& y, double denom,
                                       unsigned threads) {
    auto chunk = [&](Index begin, Index end) {
        const ForwardCache cache = mlp_forward_cached(net, x.middleCols(begin, end - begin));
        const Matrix diff = cache.activations.back() - y.middleCols(begin, end - begin);
        const Vector grad = flatten(mlp_backward(net, cache, (2.0 / denom) * diff));
        return std::pair<double, Vector>(diff.squaredNorm() / denom, grad);
    };
    const Index n = x.cols();
    if (threads <= 1 || n < 2) return chunk(0, n);
    const Index parts = std::min<Index>(threads, n);
    std::vector<std::future<std::pair<double, Vector>>> jobs;
    for (Index p = 0; p < parts; ++p)
        jobs.push_back(std::async(std::launch::async, chunk, p * n / parts, (p + 1) * n / parts));
    std::pair<double, Vector> total{0.0, Vector::Zero(net.parameter_count())};
    for (auto& j : jobs) {
        auto part = j.get();
        total.first += part.first;
        total.second += part.second;
    }
    return total;
}

}  // namespace

DdnnResult ddnn_fit(const Matrix& inputs, const Matrix& targets, const NetSpec& spec, const TrainConfig& config) {
    if (inputs.cols() < 1 || inputs.cols() != targets.cols())
        throw ConfigError("ddnn_fit: inputs and targets must have the same positive sample count");
    require_finite(inputs, "ddnn_fit inputs");
    require_finite(targets, "ddnn_fit targets");

    std::vector<Index> sizes{inputs.rows()};
    sizes.insert(sizes.end(), spec.hidden.begin(), spec.hidden.end());
    sizes.push_back(targets.rows());
    DdnnResult result{mlp_init(sizes, spec.activation, spec.output, config.seed), {}};
    Optimizer opt(config, result.net.parameter_count());
    Vector params = mlp_parameters(result.net);

    const Index n = inputs.cols();
    const Index batch = config.batch_size <= 0 ? n : std::min(config.batch_size, n);
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ull);

    Matrix xb, yb;
    for (Index epoch = 0; epoch < config.epochs; ++epoch) {
        double epoch_loss = 0.0;
        if (batch < n) std::shuffle(order.begin(), order.end(), rng);
        for (Index start = 0; start < n; start += batch) {
            const Index len = std::min(batch, n - start);
            const Matrix* xs = &inputs;
            const Matrix* ys = &targets;
            if (batch < n) {
                xb.resize(inputs.rows(), len);
                yb.resize(targets.rows(), len);
                for (Index c = 0; c < len; ++c) {
                    xb.col(c) = inputs.col(order[static_cast<std::size_t>(start + c)]);
                    yb.col(c) = targets.col(order[static_cast<std::size_t>(start + c)]);
                }
                xs = &xb;
                ys = &yb;
            }
            auto [loss, grad] = mse_gradient(result.net, *xs, *ys, double(len * targets.rows()), config.threads);
            if (!std::isfinite(loss) || !grad.allFinite())
                throw NumericalError("ddnn_fit: loss diverged at epoch " + std::to_string(epoch));
            epoch_loss += loss * double(len) / double(n);
            opt.step(params, grad);
            mlp_set_parameters(result.net, params);
        }
        result.loss_history.push_back(epoch_loss);
    }
    return result;
}

// --- PINN -------------------------------------------------------------------------

Vector FieldProbe::input_of(const Vector& mu, double t, const Vector& x) const {
    Vector in(mu.size() + (steady_ ? 0 : 1) + x.size());
    in.head(mu.size()) = mu;
    if (!steady_) in(mu.size()) = t;
    in.tail(x.size()) = x;
    return in;
}

double FieldProbe::value(const Vector& mu, double t, const Vector& x, Index component) {
    if (replay_) {
        if (cursor_ >= records_.size())
            throw ConfigError("pinn: residual evaluator made a different sequence of probe calls on replay");
        const std::size_t i = cursor_++;
        double v = records_[i].value;
        if (static_cast<Index>(i) == perturbed_) v += delta_;
        return v;
    }
    Vector in = input_of(mu, t, x);
    const double v = mlp_forward(*net_, in)(component);
    records_.push_back({std::move(in), component, v});
    return v;
}

double FieldProbe::dx(const CollocationPoint& p, Index axis, double h, Index c) {
    Vector xp = p.x, xm = p.x;
    xp(axis) += h;
    xm(axis) -= h;
    return (value(p.mu, p.t, xp, c) - value(p.mu, p.t, xm, c)) / (2.0 * h);
}

double FieldProbe::dxx(const CollocationPoint& p, Index axis, double h, Index c) {
    Vector xp = p.x, xm = p.x;
    xp(axis) += h;
    xm(axis) -= h;
    return (value(p.mu, p.t, xp, c) - 2.0 * value(p.mu, p.t, p.x, c) + value(p.mu, p.t, xm, c)) / (h * h);
}

double FieldProbe::laplacian(const CollocationPoint& p, double h, Index c) {
    double sum = 0.0;
    for (Index a = 0; a < p.x.size(); ++a) sum += dxx(p, a, h, c);
    return sum;
}

double FieldProbe::dt(const CollocationPoint& p, double h, Index c) {
    return (value(p.mu, p.t + h, p.x, c) - value(p.mu, p.t - h, p.x, c)) / (2.0 * h);
}

Vector pinn_input(const PinnProblem& problem, const CollocationPoint& p) {
    Vector in(problem.input_dim());
    in.head(problem.param_dim) = p.mu;
    if (!problem.steady) in(problem.param_dim) = p.t;
    in.tail(problem.space_dim) = p.x;
    return in;
}

/// Accumulates residual losses and the stencil-level output gradients.
class PinnEngine {
public:
    PinnEngine(const PinnProblem& problem, const Mlp& net) : problem_(problem), net_(net) {}

    // Adds weight * mean(R^2) over `points`; returns mean(R^2).
    double add_term(const PinnTerm& term, const std::vector<CollocationPoint>& points, bool with_gradient) {
        if (points.empty()) return 0.0;
        const double n = double(points.size());
        double sum = 0.0;
        for (const CollocationPoint& p : points) {
            check_point(p);
            FieldProbe probe(&net_, problem_.steady);
            const double r = term.residual(probe, p);
            if (!std::isfinite(r)) throw NumericalError("pinn: non-finite residual");
            sum += r * r;
            if (!with_gradient || r == 0.0) continue;
            const double scale = term.weight / n * 2.0 * r;
            for (std::size_t s = 0; s < probe.records_.size(); ++s) {
                const double delta = 1e-3 * std::max(1.0, std::abs(probe.records_[s].value));
                const double rp = replay(term, probe, p, static_cast<Index>(s), delta);
                const double rm = replay(term, probe, p, static_cast<Index>(s), -delta);
                const double slope = (rp - rm) / (2.0 * delta);
                if (slope == 0.0) continue;
                inputs_.push_back(probe.records_[s].input);
                components_.push_back(probe.records_[s].component);
                coeffs_.push_back(scale * slope);
            }
        }
        return sum / n;
    }

    Vector gradient() const {
        if (inputs_.empty()) return Vector::Zero(net_.parameter_count());
        Matrix x(net_.input_dim(), static_cast<Index>(inputs_.size()));
        Matrix g = Matrix::Zero(net_.output_dim(), x.cols());
        for (Index c = 0; c < x.cols(); ++c) {
            x.col(c) = inputs_[static_cast<std::size_t>(c)];
            g(components_[static_cast<std::size_t>(c)], c) = coeffs_[static_cast<std::size_t>(c)];
        }
        return flatten(mlp_backward(net_, mlp_forward_cached(net_, x), g));
    }

private:
    void check_point(const CollocationPoint& p) const {
        if (p.mu.size() != problem_.param_dim || p.x.size() != problem_.space_dim)
            throw ConfigError("pinn: collocation point has the wrong dimensions");
    }

    double replay(const PinnTerm& term, FieldProbe& probe, const CollocationPoint& p, Index which, double delta) {
        probe.replay_ = true;
        probe.cursor_ = 0;
        probe.perturbed_ = which;
        probe.delta_ = delta;
        const double r = term.residual(probe, p);
        if (probe.cursor_ != probe.records_.size())
            throw ConfigError("pinn: residual evaluator made a different sequence of probe calls on replay");
        probe.replay_ = false;
        return r;
    }

    const PinnProblem& problem_;
    const Mlp& net_;
    std::vector<Vector> inputs_;
    std::vector<Index> components_;
    std::vector<double> coeffs_;
};

namespace {

std::vector<CollocationPoint> draw(const PinnTerm& term, std::mt19937_64& rng, const char* name) {
    std::vector<CollocationPoint> pts;
    if (!term.active()) return pts;
    pts.reserve(static_cast<std::size_t>(term.count));
    for (Index i = 0; i < term.count; ++i) {
        CollocationPoint p = term.sampler(rng);
        if (term.contains && !term.contains(p))
            throw ConfigError(std::string("pinn: ") + name + " sampler produced a point outside its domain");
        pts.push_back(std::move(p));
    }
    return pts;
}

}  // namespace

PinnLoss pinn_loss(const PinnProblem& problem, const Mlp& net, const std::vector<CollocationPoint>& interior,
                   const std::vector<CollocationPoint>& boundary, const std::vector<CollocationPoint>& initial) {
    PinnEngine engine(problem, net);
    PinnLoss loss;
    if (problem.interior.active()) loss.interior = engine.add_term(problem.interior, interior, false);
    if (problem.boundary.active()) loss.boundary = engine.add_term(problem.boundary, boundary, false);
    if (!problem.steady && problem.initial.active()) loss.initial = engine.add_term(problem.initial, initial, false);
    loss.total = problem.interior.weight * loss.interior + problem.boundary.weight * loss.boundary +
                 problem.initial.weight * loss.initial;
    return loss;
}

PinnResult pinn_fit(const PinnProblem& problem, const NetSpec& spec, const TrainConfig& config) {
    const bool use_initial = !problem.steady && problem.initial.active();
    if (!problem.interior.active() && !problem.boundary.active() && !use_initial)
        throw ConfigError("pinn_fit: every loss term is inactive");
    for (const PinnTerm* t : {&problem.interior, &problem.boundary, &problem.initial})
        if (t->weight < 0.0) throw ConfigError("pinn_fit: loss weights must be >= 0");

    std::vector<Index> sizes{problem.input_dim()};
    sizes.insert(sizes.end(), spec.hidden.begin(), spec.hidden.end());
    sizes.push_back(problem.outputs);
    PinnResult result{mlp_init(sizes, spec.activation, spec.output, config.seed), {}};
    Optimizer opt(config, result.net.parameter_count());
    Vector params = mlp_parameters(result.net);
    std::mt19937_64 rng(config.seed ^ 0x5851f42d4c957f2dull);

    for (Index epoch = 0; epoch < config.epochs; ++epoch) {
        const auto interior = draw(problem.interior, rng, "interior");
        const auto boundary = draw(problem.boundary, rng, "boundary");
        const auto initial = use_initial ? draw(problem.initial, rng, "initial") : std::vector<CollocationPoint>{};

        PinnEngine engine(problem, result.net);
        PinnLoss loss;
        if (problem.interior.active()) loss.interior = engine.add_term(problem.interior, interior, true);
        if (problem.boundary.active()) loss.boundary = engine.add_term(problem.boundary, boundary, true);
        if (use_initial) loss.initial = engine.add_term(problem.initial, initial, true);
        loss.total = problem.interior.weight * loss.interior + problem.boundary.weight * loss.boundary +
                     problem.initial.weight * loss.initial;
        const Vector grad = engine.gradient();
        if (!std::isfinite(loss.total) || !grad.allFinite())
            throw NumericalError("pinn_fit: loss diverged at epoch " + std::to_string(epoch));
        result.history.push_back(loss);
        opt.step(params, grad);
        mlp_set_parameters(result.net, params);
    }
    return result;
}

void save_mlp(const Mlp& net, Archive& ar, const std::string& prefix) {
    Matrix sizes(1, static_cast<Index>(net.sizes.size()));
    for (std::size_t i = 0; i < net.sizes.size(); ++i) sizes(0, static_cast<Index>(i)) = double(net.sizes[i]);
    ar.put(prefix + ".sizes", sizes);
    ar.put_text(prefix + ".activation", to_string(net.hidden));
    ar.put_text(prefix + ".output", net.output == OutputMap::softmax ? "softmax" : "identity");
    for (std::size_t i = 0; i < net.weights.size(); ++i) {
        const Matrix& a = net.weights[i];
        Matrix row_major(1, a.size());
        Index o = 0;
        for (Index r = 0; r < a.rows(); ++r)
            for (Index c = 0; c < a.cols(); ++c) row_major(0, o++) = a(r, c);
        ar.put(prefix + ".A" + std::to_string(i + 1), row_major);
        ar.put(prefix + ".b" + std::to_string(i + 1), Matrix(net.biases[i].transpose()));
    }
}

Mlp load_mlp(const Archive& ar, const std::string& prefix) {
    Mlp net;
    const Matrix& sizes = ar.matrix(prefix + ".sizes");
    for (Index i = 0; i < sizes.size(); ++i) net.sizes.push_back(static_cast<Index>(sizes(0, i)));
    net.hidden = parse_activation(ar.text(prefix + ".activation"));
    net.output = ar.text(prefix + ".output") == "softmax" ? OutputMap::softmax : OutputMap::identity;
    for (std::size_t i = 1; i < net.sizes.size(); ++i) {
        const Matrix& flat = ar.matrix(prefix + ".A" + std::to_string(i));
        const Index rows = net.sizes[i], cols = net.sizes[i - 1];
        if (flat.size() != rows * cols) throw IoError("mlp archive: weight block " + std::to_string(i) + " has wrong size");
        Matrix a(rows, cols);
        Index o = 0;
        for (Index r = 0; r < rows; ++r)
            for (Index c = 0; c < cols; ++c) a(r, c) = flat(0, o++);
        net.weights.push_back(std::move(a));
        const Matrix& b = ar.matrix(prefix + ".b" + std::to_string(i));
        if (b.size() != rows) throw IoError("mlp archive: bias block " + std::to_string(i) + " has wrong size");
        net.biases.push_back(Eigen::Map<const Vector>(b.data(), rows));
    }
    return net;
}

}  // namespace romkit
