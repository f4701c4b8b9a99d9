#include "romkit/archive.hpp"
#include "romkit/dataset.hpp"
#include "romkit/error.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <thread>
#include <set>

using namespace romkit;
using romkit::testing::Gen;
using romkit::testing::scratch_dir;

namespace {

ParameterSpace unit_line() { return ParameterSpace(Vector::Zero(1), Vector::Ones(1)); }

SnapshotSet time_series(Index params, Index steps, Index dof, Gen& g) {
    Matrix s = g.matrix(dof, params * steps);
    Matrix p(1, params * steps);
    Vector t(params * steps);
    for (Index a = 0; a < params; ++a)
        for (Index k = 0; k < steps; ++k) {
            p(0, a * steps + k) = 0.1 * double(a + 1);
            t(a * steps + k) = 0.5 * double(k);
        }
    return SnapshotSet(s, p, t);
}

}  // namespace

TEST(Sampling, UniformDeterministicAndBounded) {
    SamplingPlan plan;
    plan.count = 3;
    plan.seed = 7;
    const Matrix a = sample(unit_line(), plan), b = sample(unit_line(), plan);
    EXPECT_EQ(a, b);
    EXPECT_GE(a.minCoeff(), 0.0);
    EXPECT_LE(a.maxCoeff(), 1.0);
}

TEST(Sampling, GridIsLinspace) {
    SamplingPlan plan;
    plan.kind = SamplingKind::grid;
    plan.count = 5;
    const Matrix m = sample(ParameterSpace(Vector::Constant(1, 0.001), Vector::Constant(1, 0.01)), plan);
    const double expected[] = {0.001, 0.00325, 0.0055, 0.00775, 0.01};
    for (int i = 0; i < 5; ++i) EXPECT_NEAR(m(0, i), expected[i], 1e-17);
}

TEST(Sampling, GridNeedsPerfectPower) {
    SamplingPlan plan;
    plan.kind = SamplingKind::grid;
    plan.count = 5;
    EXPECT_THROW(sample(ParameterSpace(Vector::Zero(2), Vector::Ones(2)), plan), ConfigError);
}

TEST(Sampling, NormalMeanWithinStatisticalBound) {
    SamplingPlan plan;
    plan.kind = SamplingKind::normal;
    plan.count = 10000;
    plan.seed = 3;
    plan.normal_center = Vector::Zero(1);
    plan.normal_spread = Vector::Constant(1, 0.2);
    const Matrix m = sample(ParameterSpace(Vector::Constant(1, -0.4), Vector::Constant(1, 0.4)), plan);
    EXPECT_LE(std::abs(m.mean()), 3.0 * 0.2 / std::sqrt(10000.0));
    EXPECT_GE(m.minCoeff(), -0.4);
    EXPECT_LE(m.maxCoeff(), 0.4);
}

TEST(Sampling, RejectsBadSpace) {
    EXPECT_THROW(ParameterSpace(Vector::Ones(1), Vector::Zero(1)), ConfigError);
    EXPECT_THROW(ParameterSpace(Vector::Zero(2), Vector::Ones(1)), ConfigError);
}

TEST(Split, EightTwo) {
    Gen g(1);
    const Matrix p = Vector::LinSpaced(10, 0.0, 1.0).transpose();
    const SnapshotSet set(g.matrix(4, 10), p, Vector::Zero(10));
    const auto [train, test] = split_train_test(set, 0.8, 5);
    EXPECT_EQ(train.count(), 8);
    EXPECT_EQ(test.count(), 2);
}

TEST(Split, HalfOfTwo) {
    Gen g(2);
    Matrix p(1, 2);
    p << 0.0, 1.0;
    const auto [train, test] = split_train_test(SnapshotSet(g.matrix(3, 2), p, Vector::Zero(2)), 0.5, 0);
    EXPECT_EQ(train.count(), 1);
    EXPECT_EQ(test.count(), 1);
}

TEST(Split, TimeSeriesKeepsTrajectoriesTogether) {
    Gen g(3);
    const SnapshotSet set = time_series(6, 100, 5, g);
    const auto [train, test] = split_train_test(set, 2.0 / 3.0, 11);
    EXPECT_EQ(train.distinct_params().cols(), 4);
    EXPECT_EQ(train.count(), 400);
    EXPECT_EQ(test.count(), 200);
}

TEST(Normalizer, ConstantColumnsCenterToZero) {
    const Matrix s = Vector::LinSpaced(4, 1.0, 4.0).replicate(1, 6);
    const Normalizer n = normalize_fit(s, NormalizeMode::mean_center);
    EXPECT_EQ(n.apply(s), Matrix::Zero(4, 6));
}

TEST(Normalizer, NoneIsIdentity) {
    Gen g(4);
    const Matrix s = g.matrix(3, 5);
    EXPECT_EQ(normalize_fit(s, NormalizeMode::none).apply(s), s);
}

TEST(Normalizer, RoundTrip) {
    Gen g(5);
    const Matrix s = g.matrix(20, 30, -50.0, 50.0);
    for (NormalizeMode mode : {NormalizeMode::mean_center, NormalizeMode::center_and_scale}) {
        const Normalizer n = normalize_fit(s, mode);
        EXPECT_LE((n.invert(n.apply(s)) - s).cwiseAbs().maxCoeff(), 1e-14 * std::max(1.0, s.cwiseAbs().maxCoeff()));
    }
}

TEST(SnapshotIo, BinaryRoundTripIsBitwise) {
    Gen g(6);
    const auto dir = scratch_dir("snap-bin");
    const SnapshotSet set(g.matrix(7, 9), g.matrix(2, 9), g.vector(9), "label=x");
    save_snapshots(set, dir / "s.roms", SnapshotFormat::binary);
    const SnapshotSet back = load_snapshots(dir / "s.roms", SnapshotFormat::binary);
    EXPECT_EQ(back.snapshots(), set.snapshots());
    EXPECT_EQ(back.params(), set.params());
    EXPECT_EQ(back.times(), set.times());
    EXPECT_EQ(back.metadata(), "label=x");
}

TEST(SnapshotIo, EmptySetRejected) {
    const auto dir = scratch_dir("snap-empty");
    EXPECT_THROW(save_snapshots(SnapshotSet(Matrix(3, 0), Matrix(1, 0), Vector(0)), dir / "e.roms", SnapshotFormat::binary),
                 ConfigError);
}

TEST(SnapshotIo, CsvRoundTrip) {
    Gen g(7);
    const auto dir = scratch_dir("snap-csv");
    const SnapshotSet set(g.matrix(1000, 50, -1e3, 1e3), g.matrix(1, 50), g.vector(50));
    save_snapshots(set, dir / "s.csv", SnapshotFormat::csv);
    const SnapshotSet back = load_snapshots(dir / "s.csv", SnapshotFormat::csv);
    EXPECT_LE((back.snapshots() - set.snapshots()).cwiseAbs().maxCoeff(), 1e-15 * set.snapshots().cwiseAbs().maxCoeff());
    EXPECT_EQ(back.params(), set.params());
}

TEST(SnapshotIo, MalformedCsvNamesLine) {
    const auto dir = scratch_dir("snap-bad");
    std::ofstream(dir / "bad.csv") << "t,mu_0,dof_0\n0,1,2\n0,1,oops\n";
    try {
        load_snapshots(dir / "bad.csv", SnapshotFormat::csv);
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
}

TEST(SnapshotIo, BadMagicRejected) {
    const auto dir = scratch_dir("snap-magic");
    std::ofstream(dir / "x.roms") << "NOPE and more bytes";
    EXPECT_THROW(load_snapshots(dir / "x.roms", SnapshotFormat::binary), IoError);
}

TEST(Archive, RoundTrip) {
    Gen g(8);
    const auto dir = scratch_dir("archive");
    Archive ar;
    const Matrix m = g.matrix(3, 4);
    ar.put("m", m);
    ar.put_scalar("s", 2.5);
    ar.put_text("t", "hello\nworld");
    ComplexMatrix c(2, 2);
    c << std::complex<double>(1, 2), 3, std::complex<double>(0, -1), 4;
    put_complex(ar, "c", c);
    ar.save(dir / "a.roma");
    const Archive back = Archive::load(dir / "a.roma");
    EXPECT_EQ(back.matrix("m"), m);
    EXPECT_EQ(back.scalar("s"), 2.5);
    EXPECT_EQ(back.text("t"), "hello\nworld");
    EXPECT_EQ(get_complex(back, "c"), c);
    EXPECT_FALSE(back.has("missing"));
    EXPECT_THROW(back.matrix("missing"), IoError);
}

// --- properties ---------------------------------------------------------------------

TEST(DatasetProperty, SamplingDeterministicAcrossThreads) {
    Gen g(201);
    for (int trial = 0; trial < 10; ++trial) {
        const Index dim = g.integer(1, 4);
        const ParameterSpace space(Vector::Constant(dim, -1.0), g.vector(dim, 0.0, 3.0));
        SamplingPlan plan;
        plan.count = g.integer(1, 50);
        plan.seed = static_cast<std::uint64_t>(g.integer(0, 1 << 30));
        plan.kind = trial % 2 ? SamplingKind::normal : SamplingKind::uniform;
        const Matrix ref = sample(space, plan);
        std::vector<Matrix> results(4);
        std::vector<std::thread> threads;
        for (int t = 0; t < 4; ++t) threads.emplace_back([&, t] { results[t] = sample(space, plan); });
        for (auto& t : threads) t.join();
        for (const Matrix& r : results) EXPECT_EQ(r, ref);
        for (Index k = 0; k < ref.cols(); ++k) EXPECT_TRUE(space.contains(ref.col(k)));
    }
}

TEST(DatasetProperty, SplitIsPartition) {
    Gen g(202);
    for (int trial = 0; trial < 20; ++trial) {
        const Index params = g.integer(2, 12), steps = g.integer(1, 5);
        const SnapshotSet set = time_series(params, steps, 3, g);
        const double fraction = g.uniform(0.05, 0.95);
        const auto [train, test] = split_train_test(set, fraction, static_cast<std::uint64_t>(trial));
        EXPECT_EQ(train.count() + test.count(), set.count());
        std::set<double> a, b;
        for (Index k = 0; k < train.count(); ++k) a.insert(train.params()(0, k));
        for (Index k = 0; k < test.count(); ++k) b.insert(test.params()(0, k));
        for (double v : a) EXPECT_EQ(b.count(v), 0u);
        EXPECT_FALSE(a.empty());
        EXPECT_FALSE(b.empty());
    }
}

TEST(DatasetProperty, BinaryRoundTripRandomShapes) {
    Gen g(203);
    const auto dir = scratch_dir("snap-prop");
    for (int trial = 0; trial < 10; ++trial) {
        const Index dof = g.integer(1, 40), count = g.integer(1, 20), pd = g.integer(1, 3);
        const SnapshotSet set(g.matrix(dof, count, -1e10, 1e10), g.matrix(pd, count), g.vector(count));
        save_snapshots(set, dir / "p.roms", SnapshotFormat::binary);
        const SnapshotSet back = load_snapshots(dir / "p.roms", SnapshotFormat::binary);
        EXPECT_EQ(back.snapshots(), set.snapshots());
        EXPECT_EQ(back.params(), set.params());
    }
}
