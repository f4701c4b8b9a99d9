#include "romkit/archive.hpp"
#include "romkit/error.hpp"
#include "romkit/neural.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace romkit;
using romkit::testing::Gen;

namespace {

using romkit::testing::poisson_1d;
using romkit::testing::relative_l2_on_line;

Vector backprop_gradient(const Mlp& net, const Matrix& x, const Matrix& t) {
    const ForwardCache cache = mlp_forward_cached(net, x);
    return flatten(mlp_backward(net, cache, cache.activations.back() - t));
}

}  // namespace

TEST(Mlp, ZeroWeightsGiveOutputBias) {
    Mlp net = mlp_init({3, 4, 2}, Activation::tanh, OutputMap::identity, 1);
    for (auto& a : net.weights) a.setZero();
    net.biases.back() << 0.25, -3.0;
    EXPECT_EQ(mlp_forward(net, Vector(Vector::Ones(3))), net.biases.back());
}

TEST(Mlp, SingleLinearLayerIdentity) {
    Mlp net = mlp_init({3, 3}, Activation::tanh, OutputMap::identity, 1);
    net.weights[0].setIdentity();
    Vector x(3);
    x << 0.5, -2.0, 7.0;
    EXPECT_EQ(mlp_forward(net, x), x);
}

TEST(Mlp, HandSetTwoThreeOne) {
    Mlp net = mlp_init({2, 3, 1}, Activation::tanh, OutputMap::identity, 0);
    net.weights[0] << 0.1, -0.2, 0.3, 0.4, -0.5, 0.6;
    net.biases[0] << 0.01, -0.02, 0.03;
    net.weights[1] << 0.7, -0.8, 0.9;
    net.biases[1] << 0.05;
    const Vector y = mlp_forward(net, Vector(Eigen::Vector2d(0.5, -1.5)));
    EXPECT_NEAR(y(0), -0.084602749159674071, 1e-14);
}

TEST(Mlp, SoftmaxOutputSumsToOne) {
    Gen g(61);
    const Mlp net = mlp_init({2, 5, 4}, Activation::relu, OutputMap::softmax, 3);
    const Matrix y = mlp_forward(net, g.matrix(2, 7));
    EXPECT_LT((y.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-15);
}

TEST(Mlp, InitIsSeededAndBounded) {
    const Mlp a = mlp_init({4, 8, 2}, Activation::tanh, OutputMap::identity, 9);
    const Mlp b = mlp_init({4, 8, 2}, Activation::tanh, OutputMap::identity, 9);
    EXPECT_EQ(mlp_parameters(a), mlp_parameters(b));
    EXPECT_LE(a.weights[0].cwiseAbs().maxCoeff(), std::sqrt(6.0 / 12.0));
    EXPECT_EQ(a.parameter_count(), 4 * 8 + 8 + 8 * 2 + 2);
}

TEST(Backprop, LinearClosedForm) {
    Mlp net = mlp_init({1, 1}, Activation::tanh, OutputMap::identity, 0);
    net.weights[0] << 0.7;
    net.biases[0] << -0.2;
    Matrix x(1, 1), t(1, 1);
    x << 1.5;
    t << 2.0;
    const double yhat = 0.7 * 1.5 - 0.2;
    const ForwardCache cache = mlp_forward_cached(net, x);
    const MlpGradients g = mlp_backward(net, cache, Matrix::Constant(1, 1, 2.0 * (yhat - 2.0)));
    EXPECT_NEAR(g.weights[0](0, 0), 2.0 * (yhat - 2.0) * 1.5, 1e-15);
    EXPECT_NEAR(g.biases[0](0), 2.0 * (yhat - 2.0), 1e-15);
}

TEST(Backprop, DeadUnitBiasHasZeroGradient) {
    Gen g(62);
    Mlp net = mlp_init({2, 4, 1}, Activation::tanh, OutputMap::identity, 5);
    net.weights[1](0, 2) = 0.0;
    const Vector grad = backprop_gradient(net, g.matrix(2, 6), g.matrix(1, 6));
    const MlpGradients full = mlp_backward(net, mlp_forward_cached(net, g.matrix(2, 6)), g.matrix(1, 6));
    EXPECT_EQ(full.biases[0](2), 0.0);
    EXPECT_EQ(grad.size(), net.parameter_count());
}

TEST(Backprop, RandomThreeLayerMatchesFiniteDifferences) {
    Gen g(63);
    const Mlp net = mlp_init({3, 5, 4, 2}, Activation::tanh, OutputMap::identity, 17);
    const Matrix x = g.matrix(3, 4), t = g.matrix(2, 4);
    const Vector fd = romkit::testing::fd_loss_gradient(net, x, t, 1e-6);
    EXPECT_LE(romkit::testing::max_rel_deviation(backprop_gradient(net, x, t), fd), 1e-5);
}

TEST(Backprop, SoftmaxAndSigmoidMatchFiniteDifferences) {
    Gen g(64);
    for (Activation a : {Activation::sigmoid, Activation::tanh}) {
        const Mlp net = mlp_init({2, 6, 3}, a, OutputMap::softmax, 23);
        const Matrix x = g.matrix(2, 5), t = g.matrix(3, 5);
        const Vector fd = romkit::testing::fd_loss_gradient(net, x, t, 1e-6);
        EXPECT_LE(romkit::testing::max_rel_deviation(backprop_gradient(net, x, t), fd), 1e-5) << to_string(a);
    }
}

TEST(Ddnn, ZeroTargetsShrinkPrediction) {
    Gen g(65);
    const Matrix x = g.matrix(2, 20);
    NetSpec spec;
    spec.hidden = {8};
    TrainConfig tc;
    tc.epochs = 1500;
    tc.learning_rate = 1e-2;
    const DdnnResult r = ddnn_fit(x, Matrix::Zero(3, 20), spec, tc);
    EXPECT_LE(r.loss_history.back(), r.loss_history.front());
    EXPECT_LE(mlp_forward(r.net, x).colwise().norm().maxCoeff(), 1e-2);
}

TEST(Ddnn, AffineMapExactWithLinearNet) {
    const Matrix mu = Vector::LinSpaced(11, 0.0, 1.0).transpose();
    const Matrix y = (3.0 * mu).array() + 1.0;
    NetSpec spec;
    TrainConfig tc;
    tc.epochs = 2000;
    tc.learning_rate = 5e-2;
    const DdnnResult r = ddnn_fit(mu, y, spec, tc);
    EXPECT_LE(mse(r.net, mu, y), 1e-10);
}

TEST(Ddnn, SquareMapWithTanhNet) {
    const Matrix mu = Vector::LinSpaced(21, 0.0, 1.0).transpose();
    const Matrix y = mu.array().square();
    NetSpec spec;
    spec.hidden = {16, 16};
    TrainConfig tc;
    tc.epochs = 20000;
    tc.learning_rate = 3e-3;
    tc.seed = 4;
    const DdnnResult r = ddnn_fit(mu, y, spec, tc);
    EXPECT_LE(std::sqrt(mse(r.net, mu, y)), 1e-3);
}

TEST(Ddnn, ShapeMismatchRejected) {
    EXPECT_THROW(ddnn_fit(Matrix::Zero(1, 3), Matrix::Zero(1, 4), NetSpec{}, TrainConfig{}), ConfigError);
}

TEST(Ddnn, ArchiveRoundTrip) {
    Gen g(66);
    const Mlp net = mlp_init({2, 5, 3}, Activation::sigmoid, OutputMap::softmax, 8);
    Archive ar;
    save_mlp(net, ar, "net");
    const Mlp back = load_mlp(ar, "net");
    const Matrix x = g.matrix(2, 4);
    EXPECT_EQ(mlp_forward(back, x), mlp_forward(net, x));
    EXPECT_EQ(back.hidden, Activation::sigmoid);
}

TEST(Pinn, ZeroSolution) {
    PinnProblem p;
    p.space_dim = 1;
    p.interior.count = 16;
    p.interior.sampler = [](std::mt19937_64& g) {
        CollocationPoint c;
        c.x = Vector::Constant(1, std::uniform_real_distribution<double>(0.0, 1.0)(g));
        return c;
    };
    p.interior.residual = [](FieldProbe& f, const CollocationPoint& c) { return f.value(c); };
    NetSpec spec;
    spec.hidden = {8};
    TrainConfig tc;
    tc.epochs = 1500;
    tc.learning_rate = 1e-2;
    const PinnResult r = pinn_fit(p, spec, tc);
    double sup = 0.0;
    for (int i = 0; i <= 50; ++i) sup = std::max(sup, std::abs(mlp_forward(r.net, Vector(Vector::Constant(1, i / 50.0)))(0)));
    EXPECT_LE(sup, 1e-2);
}

TEST(Pinn, Poisson1dManufactured) {
    NetSpec spec;
    spec.hidden = {16, 16};
    TrainConfig tc;
    tc.epochs = 2000;
    tc.learning_rate = 5e-3;
    tc.seed = 7;
    const PinnResult r = pinn_fit(poisson_1d(), spec, tc);
    EXPECT_LE(relative_l2_on_line(r.net, [](double x) { return x * x - x; }), 5e-2);
}

TEST(Pinn, Poisson2dManufactured) {
    PinnProblem p;
    p.space_dim = 2;
    p.fd_step = 1e-3;
    p.interior.count = 64;
    p.interior.sampler = [](std::mt19937_64& g) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        CollocationPoint c;
        c.x = Eigen::Vector2d(u(g), u(g));
        return c;
    };
    p.interior.residual = [h = p.fd_step](FieldProbe& f, const CollocationPoint& c) {
        return -f.laplacian(c, h) - 2.0 * M_PI * M_PI * std::sin(M_PI * c.x(0)) * std::sin(M_PI * c.x(1));
    };
    p.boundary.count = 32;
    p.boundary.weight = 10.0;
    p.boundary.sampler = [](std::mt19937_64& g) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const double s = u(g);
        CollocationPoint c;
        switch (g() % 4) {
        case 0: c.x = Eigen::Vector2d(s, 0.0); break;
        case 1: c.x = Eigen::Vector2d(s, 1.0); break;
        case 2: c.x = Eigen::Vector2d(0.0, s); break;
        default: c.x = Eigen::Vector2d(1.0, s); break;
        }
        return c;
    };
    p.boundary.residual = [](FieldProbe& f, const CollocationPoint& c) { return f.value(c); };
    NetSpec spec;
    spec.hidden = {20, 20};
    TrainConfig tc;
    tc.epochs = 3000;
    tc.learning_rate = 5e-3;
    tc.seed = 2;
    const PinnResult r = pinn_fit(p, spec, tc);
    double num = 0.0, den = 0.0;
    for (int i = 0; i <= 30; ++i)
        for (int j = 0; j <= 30; ++j) {
            const Eigen::Vector2d x(i / 30.0, j / 30.0);
            const double exact = std::sin(M_PI * x(0)) * std::sin(M_PI * x(1));
            const double u = mlp_forward(r.net, Vector(x))(0);
            num += (u - exact) * (u - exact);
            den += exact * exact;
        }
    EXPECT_LE(std::sqrt(num / den), 1e-1);
}

TEST(Pinn, NegativeWeightRejected) {
    PinnProblem p = poisson_1d();
    p.boundary.weight = -1.0;
    EXPECT_THROW(pinn_fit(p, NetSpec{}, TrainConfig{}), ConfigError);
}

// --- properties ---------------------------------------------------------------------

TEST(NeuralProperty, BackpropMatchesFiniteDifferences) {
    Gen g(601);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Index> sizes{g.integer(1, 4)};
        const Index depth = g.integer(1, 3);
        for (Index d = 0; d < depth; ++d) sizes.push_back(g.integer(1, 6));
        sizes.push_back(g.integer(1, 3));
        const Mlp net = mlp_init(sizes, Activation::tanh, OutputMap::identity, static_cast<std::uint64_t>(trial));
        const Index batch = g.integer(1, 5);
        const Matrix x = g.matrix(sizes.front(), batch), t = g.matrix(sizes.back(), batch);
        const Vector fd = romkit::testing::fd_loss_gradient(net, x, t, 1e-6);
        EXPECT_LE(romkit::testing::max_rel_deviation(backprop_gradient(net, x, t), fd), 1e-5);
    }
}

TEST(NeuralProperty, TrainingDeterministic) {
    Gen g(602);
    for (int trial = 0; trial < 3; ++trial) {
        const Matrix x = g.matrix(2, 30), y = g.matrix(2, 30);
        NetSpec spec;
        spec.hidden = {6};
        TrainConfig tc;
        tc.epochs = 50;
        tc.batch_size = 7;
        tc.seed = static_cast<std::uint64_t>(trial);
        EXPECT_EQ(ddnn_fit(x, y, spec, tc).loss_history, ddnn_fit(x, y, spec, tc).loss_history);
    }
}

TEST(NeuralProperty, FullBatchGradientDescentMonotoneOnLinearNet) {
    Gen g(603);
    for (int trial = 0; trial < 10; ++trial) {
        const Index in = g.integer(1, 3), out = g.integer(1, 3);
        const Matrix x = g.matrix(in, 25), y = g.matrix(out, 25);
        TrainConfig tc;
        tc.optimizer = OptimizerKind::sgd;
        tc.learning_rate = 0.05;
        tc.epochs = 200;
        tc.seed = static_cast<std::uint64_t>(trial);
        const DdnnResult r = ddnn_fit(x, y, NetSpec{}, tc);
        for (std::size_t e = 1; e < r.loss_history.size(); ++e) EXPECT_LE(r.loss_history[e], r.loss_history[e - 1] + 1e-15);
    }
}

TEST(NeuralProperty, PinnLossDecomposition) {
    Gen g(604);
    for (int trial = 0; trial < 10; ++trial) {
        PinnProblem p = poisson_1d();
        p.interior.weight = g.uniform(0.1, 5.0);
        p.boundary.weight = g.uniform(0.1, 5.0);
        const Mlp net = mlp_init({1, 5, 1}, Activation::tanh, OutputMap::identity, static_cast<std::uint64_t>(trial));
        std::vector<CollocationPoint> interior, boundary;
        for (int i = 0; i < 10; ++i) interior.push_back(p.interior.sampler(g.engine()));
        for (int i = 0; i < 4; ++i) boundary.push_back(p.boundary.sampler(g.engine()));
        const PinnLoss l = pinn_loss(p, net, interior, boundary, {});
        EXPECT_EQ(l.total, p.interior.weight * l.interior + p.boundary.weight * l.boundary + p.initial.weight * l.initial);
    }
}
