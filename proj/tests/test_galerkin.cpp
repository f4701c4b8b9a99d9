#include "romkit/archive.hpp"
#include "romkit/error.hpp"
#include "romkit/fom.hpp"
#include "romkit/galerkin.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace romkit;
using romkit::testing::Gen;

namespace {

SparseMatrix sparse(const Matrix& dense) { return dense.sparseView(); }

SparseMatrix laplacian_1d(Index n) {
    std::vector<Eigen::Triplet<double>> t;
    for (Index i = 0; i < n; ++i) {
        t.emplace_back(i, i, 2.0);
        if (i + 1 < n) {
            t.emplace_back(i, i + 1, -1.0);
            t.emplace_back(i + 1, i, -1.0);
        }
    }
    SparseMatrix a(n, n);
    a.setFromTriplets(t.begin(), t.end());
    return a;
}

/// A small random SPD two-term problem: (A_0 + mu A_1) u = F.
AffineProblem random_problem(Gen& g, Index n) {
    AffineProblem p;
    p.operators = {sparse(g.spd(n)), sparse(g.spd(n))};
    p.theta_a = {theta_named("one"), theta_named("mu[0]")};
    p.rhs = {g.vector(n)};
    p.theta_f = {theta_named("one")};
    p.unit_coercivity = 1.0;
    return p;
}

/// (L + mu I) u = v_1 + v_2 with v_k Laplacian eigenvectors: u(mu) stays in span{v_1, v_2}.
AffineProblem two_dimensional_manifold(Index n) {
    AffineProblem p;
    SparseMatrix id(n, n);
    id.setIdentity();
    p.operators = {laplacian_1d(n), id};
    p.theta_a = {theta_named("one"), theta_named("mu[0]")};
    Vector f(n);
    for (Index i = 0; i < n; ++i) {
        const double x = double(i + 1) / double(n + 1);
        f(i) = std::sin(M_PI * x) + std::sin(2.0 * M_PI * x);
    }
    p.rhs = {f};
    p.theta_f = {theta_named("one")};
    p.unit_coercivity = 2.0 - 2.0 * std::cos(M_PI / double(n + 1));
    return p;
}

Matrix training(const ParameterSpace& space, Index count, std::uint64_t seed) {
    SamplingPlan plan;
    plan.count = count;
    plan.seed = seed;
    return sample(space, plan);
}

double energy_norm(const SparseMatrix& a, const Vector& e) { return std::sqrt(e.dot(a * e)); }

}  // namespace

TEST(Theta, NamedRegistry) {
    Vector mu(2);
    mu << 4.0, 0.5;
    EXPECT_EQ(theta_named("one")(mu), 1.0);
    EXPECT_EQ(theta_named("mu[1]")(mu), 0.5);
    EXPECT_EQ(theta_named("inv(mu[0])")(mu), 0.25);
    EXPECT_THROW(theta_named("mu[x]"), ConfigError);
}

TEST(AffineProblem, ValidateRejectsAsymmetricOperator) {
    Gen g(71);
    AffineProblem p = random_problem(g, 4);
    Matrix bad = g.spd(4);
    bad(0, 1) += 0.5;
    p.operators[1] = sparse(bad);
    EXPECT_THROW(p.validate(), ConfigError);
}

TEST(AffineProblem, ValidateRejectsMismatchedTerms) {
    Gen g(72);
    AffineProblem p = random_problem(g, 4);
    p.theta_a.pop_back();
    EXPECT_THROW(p.validate(), ConfigError);
}

TEST(Reduced, IdentityBasisKeepsOperators) {
    Gen g(73);
    const AffineProblem p = random_problem(g, 5);
    const ReducedOperator op = assemble_reduced(p, Matrix::Identity(5, 5));
    for (std::size_t q = 0; q < 2; ++q) EXPECT_LT((op.A_hat[q] - Matrix(p.operators[q])).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Reduced, FirstUnitVector) {
    Gen g(74);
    const AffineProblem p = random_problem(g, 5);
    const ReducedOperator op = assemble_reduced(p, Matrix::Identity(5, 1));
    for (std::size_t q = 0; q < 2; ++q) EXPECT_EQ(op.A_hat[q](0, 0), p.operators[q].coeff(0, 0));
}

TEST(Reduced, TripleProductOracle) {
    Gen g(75);
    const AffineProblem p = random_problem(g, 12);
    const Matrix z = g.orthonormal(12, 4);
    const ReducedOperator op = assemble_reduced(p, z);
    for (std::size_t q = 0; q < 2; ++q) {
        const Matrix dense = Matrix(p.operators[q]);
        Matrix oracle(4, 4);
        for (Index i = 0; i < 4; ++i)
            for (Index j = 0; j < 4; ++j) oracle(i, j) = z.col(i).dot(dense * z.col(j));
        EXPECT_LT((op.A_hat[q] - oracle).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Reduced, NonOrthonormalBasisRejected) {
    Gen g(76);
    EXPECT_THROW(assemble_reduced(random_problem(g, 5), g.matrix(5, 2)), ConfigError);
}

TEST(Reduced, FullBasisReproducesFom) {
    Gen g(77);
    const AffineProblem p = random_problem(g, 8);
    const ReducedOperator op = assemble_reduced(p, Matrix::Identity(8, 8));
    const Vector mu = Vector::Constant(1, 2.5);
    EXPECT_LT((solve_reduced(op, mu) - solve_full(p, mu)).norm(), 1e-10 * solve_full(p, mu).norm());
}

TEST(Reduced, SingleTermHomogeneity) {
    Gen g(78);
    AffineProblem p;
    p.operators = {sparse(g.spd(6))};
    p.theta_a = {theta_named("mu[0]")};
    p.rhs = {g.vector(6)};
    p.theta_f = {theta_named("one")};
    p.unit_coercivity = 1.0;
    const ReducedOperator op = assemble_reduced(p, g.orthonormal(6, 3));
    const Vector a1 = solve_reduced(op, Vector::Constant(1, 1.0));
    for (double mu : {0.5, 3.0, 40.0})
        EXPECT_LT((solve_reduced(op, Vector::Constant(1, mu)) - a1 / mu).norm(), 1e-13 * a1.norm());
}

TEST(Reduced, ThermalBlockHeldOutErrorBoundedByProjection) {
    DiffusionConfig cfg;
    cfg.interior = 15;
    const AffineProblem p = diffusion_problem(cfg);
    const ParameterSpace space = diffusion_space(cfg);
    const PodBuildResult build = pod_build(p, training(space, 20, 1), EnergyFraction{0.999999});
    const Matrix test = training(space, 5, 2);
    for (Index c = 0; c < test.cols(); ++c) {
        const Vector mu = test.col(c);
        const Vector u = solve_full(p, mu);
        const Vector urb = build.op.Z * solve_reduced(build.op, mu);
        const Vector best = u - build.op.Z * (build.op.Z.transpose() * u);
        // ‖e‖₂ ≤ sqrt(κ(A(μ))) ‖(I - ZZᵀ) u‖₂ from Galerkin optimality in the energy norm.
        const Matrix a = Matrix(p.assemble_operator(mu));
        const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(a).eigenvalues();
        EXPECT_LE((u - urb).norm(), std::sqrt(ev.maxCoeff() / ev.minCoeff()) * best.norm() * (1.0 + 1e-10) + 1e-14);
        EXPECT_LE((u - urb).norm() / u.norm(), 1e-2);
    }
}

TEST(Indicator, FullBasisResidualVanishes) {
    Gen g(79);
    const AffineProblem p = random_problem(g, 8);
    const ReducedOperator op = assemble_reduced(p, Matrix::Identity(8, 8));
    const Vector mu = Vector::Constant(1, 1.7);
    EXPECT_LE(error_indicator(op, mu, solve_reduced(op, mu)) * p.coercivity_lb(mu), 1e-8 * p.rhs[0].norm());
}

TEST(Indicator, SolutionInSpanGivesZero) {
    const AffineProblem p = two_dimensional_manifold(40);
    Matrix span(40, 2);
    for (Index i = 0; i < 40; ++i) {
        const double x = double(i + 1) / 41.0;
        span(i, 0) = std::sin(M_PI * x);
        span(i, 1) = std::sin(2.0 * M_PI * x);
    }
    const Eigen::HouseholderQR<Matrix> qr(span);
    const ReducedOperator op = assemble_reduced(p, qr.householderQ() * Matrix::Identity(40, 2));
    const Vector mu = Vector::Constant(1, 0.7);
    EXPECT_LE(error_indicator(op, mu, solve_reduced(op, mu)), 1e-6 * solve_full(p, mu).norm());
}

TEST(Indicator, BoundsTrueErrorOnThermalBlock) {
    DiffusionConfig cfg;
    cfg.interior = 15;
    const AffineProblem p = diffusion_problem(cfg);
    const ParameterSpace space = diffusion_space(cfg);
    const PodBuildResult build = pod_build(p, training(space, 10, 3), RankCount{4});
    const Matrix probe = training(space, 20, 4);
    for (Index c = 0; c < probe.cols(); ++c) {
        const Vector mu = probe.col(c);
        const Vector alpha = solve_reduced(build.op, mu);
        const double truth = (solve_full(p, mu) - build.op.Z * alpha).norm();
        EXPECT_GE(error_indicator(build.op, mu, alpha), truth);
    }
}

TEST(Greedy, InfiniteToleranceStopsAfterFirstSnapshot) {
    const AffineProblem p = two_dimensional_manifold(30);
    const Matrix train = training(ParameterSpace(Vector::Constant(1, 0.1), Vector::Constant(1, 10.0)), 8, 5);
    const GreedyResult r = greedy_build(p, train, std::numeric_limits<double>::infinity(), 10);
    ASSERT_EQ(r.selected.size(), 1u);
    EXPECT_EQ(r.selected.front(), 0);
    EXPECT_EQ(r.op.size(), 1);
}

TEST(Greedy, TwoDimensionalManifoldNeedsAtMostThree) {
    const AffineProblem p = two_dimensional_manifold(60);
    const Matrix train = training(ParameterSpace(Vector::Constant(1, 0.1), Vector::Constant(1, 10.0)), 30, 6);
    const GreedyResult r = greedy_build(p, train, 1e-8, 10);
    EXPECT_LE(r.op.size(), 3);
    EXPECT_LE(r.max_indicator.back(), 1e-8);
}

TEST(Greedy, MaxIndicatorNonincreasing) {
    DiffusionConfig cfg;
    cfg.interior = 15;
    const AffineProblem p = diffusion_problem(cfg);
    const GreedyResult r = greedy_build(p, training(diffusion_space(cfg), 40, 7), 1e-10, 15);
    ASSERT_GE(r.max_indicator.size(), 2u);
    for (std::size_t i = 1; i < r.max_indicator.size(); ++i) EXPECT_LE(r.max_indicator[i], r.max_indicator[i - 1] + 1e-12);
    EXPECT_FALSE(r.diagnostic.empty());
}

TEST(Reduced, ArchiveRoundTrip) {
    Gen g(80);
    const AffineProblem p = random_problem(g, 7);
    const ReducedOperator op = assemble_reduced(p, g.orthonormal(7, 3));
    Archive ar;
    save_reduced(op, ar);
    const ReducedOperator back = load_reduced(ar);
    const Vector mu = Vector::Constant(1, 0.9);
    EXPECT_EQ(solve_reduced(back, mu), solve_reduced(op, mu));
    EXPECT_EQ(error_indicator(back, mu, solve_reduced(op, mu)), error_indicator(op, mu, solve_reduced(op, mu)));
}

TEST(Reduced, AnonymousThetaCannotBeSaved) {
    Gen g(81);
    AffineProblem p = random_problem(g, 4);
    p.theta_a[1] = Theta{"", [](const Vector& mu) { return mu(0); }};
    Archive ar;
    EXPECT_THROW(save_reduced(assemble_reduced(p, Matrix::Identity(4, 2)), ar), ConfigError);
}

TEST(Reduced, TruncatedMatchesReassembly) {
    Gen g(82);
    const AffineProblem p = random_problem(g, 9);
    const Matrix z = g.orthonormal(9, 5);
    const ReducedOperator cut = assemble_reduced(p, z).truncated(3);
    const ReducedOperator direct = assemble_reduced(p, z.leftCols(3));
    const Vector mu = Vector::Constant(1, 1.3);
    EXPECT_LT((solve_reduced(cut, mu) - solve_reduced(direct, mu)).norm(), 1e-12);
}

// --- properties ---------------------------------------------------------------------

TEST(GalerkinProperty, EnergyOptimalInSpan) {
    Gen g(701);
    DiffusionConfig cfg;
    cfg.interior = 11;
    const AffineProblem p = diffusion_problem(cfg);
    const ParameterSpace space = diffusion_space(cfg);
    const PodBuildResult build = pod_build(p, training(space, 8, 8), RankCount{4});
    const Matrix probe = training(space, 5, 9);
    for (Index c = 0; c < probe.cols(); ++c) {
        const Vector mu = probe.col(c);
        const SparseMatrix a = p.assemble_operator(mu);
        const Vector u = solve_full(p, mu);
        const Vector alpha = solve_reduced(build.op, mu);
        const double galerkin = energy_norm(a, u - build.op.Z * alpha);
        for (int k = 0; k < 100; ++k) {
            const Vector competitor = build.op.Z * (alpha + g.vector(alpha.size()) * g.uniform(0.0, 1.0) * alpha.norm());
            EXPECT_LE(galerkin, energy_norm(a, u - competitor) * (1.0 + 1e-12));
        }
    }
}

TEST(GalerkinProperty, SnapshotsReproduced) {
    Gen g(702);
    for (int trial = 0; trial < 5; ++trial) {
        DiffusionConfig cfg;
        cfg.interior = 9 + 2 * trial;
        const AffineProblem p = diffusion_problem(cfg);
        const Matrix train = training(diffusion_space(cfg), g.integer(2, 6), static_cast<std::uint64_t>(trial));
        const PodBuildResult build = pod_build(p, train, EnergyFraction{1.0});
        for (Index c = 0; c < train.cols(); ++c) {
            const Vector u = build.snapshots.col(c);
            EXPECT_LE((build.op.Z * solve_reduced(build.op, train.col(c)) - u).norm(), 1e-8 * u.norm());
        }
    }
}

TEST(GalerkinProperty, ThermalBlockErrorNonincreasingInSize) {
    DiffusionConfig cfg;
    cfg.interior = 15;
    const AffineProblem p = diffusion_problem(cfg);
    const ParameterSpace space = diffusion_space(cfg);
    const PodBuildResult build = pod_build(p, training(space, 20, 1), RankCount{15});
    const Matrix test = training(space, 10, 2);
    const Matrix truth = solve_full(p, test);
    double previous = 1e300;
    for (Index n = 1; n <= build.op.size(); ++n) {
        const ReducedOperator op = build.op.truncated(n);
        double err = 0.0;
        for (Index c = 0; c < test.cols(); ++c)
            err += (op.Z * solve_reduced(op, test.col(c)) - truth.col(c)).norm() / truth.col(c).norm() / double(test.cols());
        EXPECT_LE(err, previous + 1e-12) << "N_rb = " << n;
        previous = err;
    }
}

TEST(GalerkinProperty, OnlineCostIndependentOfFullDimension) {
    auto median_time = [](Index interior) {
        DiffusionConfig cfg;
        cfg.interior = interior;
        const AffineProblem p = diffusion_problem(cfg);
        const PodBuildResult build = pod_build(p, training(diffusion_space(cfg), 12, 1), RankCount{10});
        const Vector mu = Vector::Constant(3, 2.0);
        std::vector<double> t;
        for (int r = 0; r < 201; ++r) {
            Stopwatch clock;
            const Vector a = solve_reduced(build.op, mu);
            t.push_back(clock.seconds());
            EXPECT_EQ(a.size(), 10);
        }
        std::nth_element(t.begin(), t.begin() + 100, t.end());
        return t[100];
    };
    const double small = median_time(15), large = median_time(31);
    EXPECT_LT(large, 2.0 * small + 2e-6);
}
