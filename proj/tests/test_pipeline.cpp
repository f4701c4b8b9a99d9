#include "romkit/archive.hpp"
#include "romkit/error.hpp"
#include "romkit/pipeline.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

using namespace romkit;
using romkit::testing::scratch_dir;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

PipelineConfig pipeline(const std::string& text) { return PipelineConfig::from(Config::parse(text)); }

BenchReport run(const PipelineConfig& pc, const fs::path& out) {
    run_all(pc, {out, false});
    return report_from_json(slurp(out / "report" / "report.json"));
}

const ReportRow& row(const BenchReport& r, const std::string& method) {
    for (const ReportRow& x : r.rows)
        if (x.method == method) return x;
    throw std::runtime_error("no row " + method);
}

const std::string kSmallDiffusion =
    "[pipeline]\nbenchmark = diffusion-rb\nmethods = pod-galerkin(6), pod+rbf\n"
    "[sampling]\ntrain = 8\ntest = 3\n[diffusion]\ninterior = 15\n";

// One-parameter thermal block: a 2 x 1 split of the unit square.
std::string one_parameter_diffusion(const std::string& methods, const std::string& extra = "") {
    return "[pipeline]\nbenchmark = diffusion-rb\nmethods = " + methods +
           "\n[sampling]\nkind = grid\ntrain = 6\ntest = 3\n" + extra +
           "[diffusion]\ninterior = 15\nblocks_x = 2\nblocks_y = 1\n";
}

BenchReport report_with_rows(Index rows) {
    BenchReport r;
    r.benchmark = "diffusion-rb";
    r.fingerprint = std::string(64, 'a');
    r.field = "all";
    r.test_parameters = rows ? 2 : 0;
    for (Index i = 0; i < rows; ++i) {
        ReportRow x;
        x.method = "pod+rbf";
        x.train_error = 1e-16;
        x.test_error = 0.25;
        x.speedup = 321.5;
        r.rows.push_back(x);
    }
    return r;
}

}  // namespace

TEST(Report, EmptyTestSetIsRejected) {
    const BenchReport r = report_with_rows(0);
    for (auto render : {render_csv, render_errors_csv, render_markdown}) {
        try {
            render(r);
            FAIL() << "expected an error";
        } catch (const ConfigError& e) {
            EXPECT_NE(std::string(e.what()).find("no test rows"), std::string::npos);
        }
    }
}

TEST(Report, SingleRowMarkdownTable) {
    const std::string md = render_markdown(report_with_rows(1));
    EXPECT_NE(md.find("| method | train err | test err | speedup |\n|---|---|---|---|\n"), std::string::npos);
    EXPECT_NE(md.find("| pod+rbf | 1.000e-16 | 2.500e-01 | 321.5x |\n"), std::string::npos);
    EXPECT_EQ(std::count(md.begin(), md.end(), '|'), 2 * 5 + 5);
}

TEST(Report, JsonRoundTripKeepsCsvBitStable) {
    BenchReport r = report_with_rows(2);
    r.rows[1].method = "pod-galerkin(5)";
    r.rows[1].speedup.reset();
    r.rows[1].node_error = 3.0e-17;
    r.fom_median_seconds = 0.1 + 0.2;
    r.curves.push_back({"pod-galerkin(5)", {{1, 0.5, 0.25}, {2, 1.0 / 3.0, std::nullopt}}});
    const BenchReport back = report_from_json(report_to_json(r));
    EXPECT_EQ(render_csv(back), render_csv(r));
    EXPECT_EQ(render_errors_csv(back), render_errors_csv(r));
    EXPECT_NE(render_errors_csv(r).find("pod-galerkin(5)@1,,,0.5,,0.25\npod-galerkin(5)@2,,,0.33333333333333331,,\n"), std::string::npos);
    EXPECT_THROW(report_from_json("{\"benchmark\": 1}"), IoError);
}

TEST(Report, RelativeErrorsFallBackToAbsolute) {
    Matrix truth(2, 2), pred(2, 2);
    truth << 3.0, 0.0, 4.0, 0.0;
    pred << 3.0, 0.5, 4.5, 0.0;
    std::vector<double> each;
    const auto [mean, worst] = relative_errors(pred, truth, 0, 2, &each);
    EXPECT_DOUBLE_EQ(each[0], 0.1);
    EXPECT_DOUBLE_EQ(each[1], 0.5);
    EXPECT_DOUBLE_EQ(mean, 0.3);
    EXPECT_DOUBLE_EQ(worst, 0.5);
    EXPECT_DOUBLE_EQ(relative_errors(pred, truth, 1, 1).second, 0.125);
}

TEST(Pipeline, RerunIsNoOpUnlessForced) {
    const fs::path out = scratch_dir("idempotent");
    PipelineConfig pc = pipeline(kSmallDiffusion);
    for (const StageOutcome& s : run_all(pc, {out, false})) EXPECT_FALSE(s.skipped) << s.message;
    const std::string model = slurp(out / "models" / "pod-galerkin_6_" / "model.roma");
    for (const StageOutcome& s : run_all(pc, {out, false})) EXPECT_TRUE(s.skipped) << s.message;
    EXPECT_EQ(slurp(out / "models" / "pod-galerkin_6_" / "model.roma"), model);

    Config changed = pc.raw;
    changed.set("rbf", "kernel", "multiquadric");
    const auto partial = run_all(PipelineConfig::from(changed), {out, false});
    EXPECT_TRUE(partial[0].skipped);
    EXPECT_TRUE(partial[1].skipped);
    for (std::size_t i = 2; i < partial.size(); ++i) EXPECT_FALSE(partial[i].skipped) << partial[i].message;

    for (const StageOutcome& s : run_all(pc, {out, true})) EXPECT_FALSE(s.skipped) << s.message;
}

TEST(Pipeline, ArtifactsCarryFingerprints) {
    const fs::path out = scratch_dir("fingerprints");
    const PipelineConfig pc = pipeline(kSmallDiffusion);
    const BenchReport r = run(pc, out);
    EXPECT_EQ(r.fingerprint, stage_fingerprint(pc, Stage::evaluate));
    const Archive model = Archive::load(out / "models" / "pod_rbf" / "model.roma");
    EXPECT_EQ(model.text("fingerprint"), stage_fingerprint(pc, Stage::train));
    EXPECT_EQ(model.text("method"), "pod+rbf");
    const SnapshotSet train = load_snapshots(out / "snapshots" / "train.roms", SnapshotFormat::binary);
    EXPECT_NE(train.metadata().find(stage_fingerprint(pc, Stage::fom)), std::string::npos);
    EXPECT_EQ(train.count(), 8);
    EXPECT_EQ(trim(slurp(out / "stamps" / "train.stamp")), stage_fingerprint(pc, Stage::train));
    for (const char* f : {"report/report.csv", "report/errors.csv", "report/report.md", "plots/error_vs_nrb.svg",
                          "plots/field_pod_rbf.svg", "report/predictions/pod_rbf.roms", "timing.jsonl"})
        EXPECT_TRUE(fs::exists(out / f)) << f;
    EXPECT_GE(r.fom_solves, 3);
    for (const ReportRow& x : r.rows) {
        ASSERT_TRUE(x.speedup.has_value());
        EXPECT_GT(*x.speedup, 0.0);
        EXPECT_GE(x.online_evaluations, 3 * 20);
    }
}

TEST(Pipeline, GalerkinFullSizeOnOneParameterFamily) {
    const fs::path out = scratch_dir("galerkin-lowrank");
    const BenchReport r = run(pipeline(one_parameter_diffusion("pod-galerkin(6)")), out);
    EXPECT_LE(row(r, "pod-galerkin(6)").test_error, 1e-6);
    ASSERT_EQ(r.curves.size(), 1u);
    EXPECT_EQ(r.curves[0].second.size(), 6u);
    EXPECT_NEAR(r.curves[0].second.back().test_error, row(r, "pod-galerkin(6)").test_error, 1e-15);
}

TEST(Pipeline, EnergyNormCurveNonincreasing) {
    const fs::path out = scratch_dir("galerkin-energy");
    const BenchReport r = run(pipeline("[pipeline]\nmethods = pod-galerkin(12)\n[sampling]\ntrain = 12\ntest = 6\n[diffusion]\ninterior = 15\n"), out);
    ASSERT_EQ(r.curves.size(), 1u);
    const auto& curve = r.curves[0].second;
    for (std::size_t i = 1; i < curve.size(); ++i) {
        ASSERT_TRUE(curve[i].energy_error.has_value());
        EXPECT_LE(*curve[i].energy_error, *curve[i - 1].energy_error + 1e-12) << "size " << curve[i].size;
    }
}

TEST(Pipeline, FullRankPodRbfReproducesTrainingParameter) {
    const fs::path out = scratch_dir("podrbf-node");
    const std::string methods = "pod+rbf";
    run_stage(Stage::sample, pipeline(one_parameter_diffusion(methods)), {out, false});
    std::ifstream in(out / "samples" / "train.csv");
    std::string header, first;
    std::getline(in, header);
    std::getline(in, first);
    const PipelineConfig pc = pipeline(one_parameter_diffusion(methods, "test_points = " + first + "\n[pod]\nrank = 6\n"));
    const BenchReport r = run(pc, out);
    EXPECT_EQ(r.test_parameters, 1);
    EXPECT_LE(row(r, methods).test_error, 1e-10);
}

TEST(Pipeline, CoincidentTestPointMatchesTrainError) {
    const fs::path dir = scratch_dir("coincident");
    const Index dof = 40, k = 6;
    Matrix snaps(dof, k), params(1, k);
    for (Index j = 0; j < k; ++j) {
        params(0, j) = 1.0 + 0.2 * double(j);
        for (Index i = 0; i < dof; ++i) snaps(i, j) = std::sin(params(0, j) * double(i + 1) / double(dof)) + 0.1 * double(i % 3);
    }
    save_snapshots(SnapshotSet(snaps, params, Vector::Zero(k)), dir / "train.roms", SnapshotFormat::binary);
    save_snapshots(SnapshotSet(snaps.col(3), params.col(3), Vector::Zero(1)), dir / "test.csv", SnapshotFormat::csv);
    const std::string text = "[pipeline]\nbenchmark = user-snapshots\nmethods = pod+rbf\n[pod]\nrank = 6\n[user]\ntrain_file = " +
                             (dir / "train.roms").string() + "\ntest_file = " + (dir / "test.csv").string() + "\n";
    const BenchReport r = run(pipeline(text), dir / "out");
    const ReportRow& x = row(r, "pod+rbf");
    EXPECT_NEAR(x.test_error, x.train_error, 1e-12);
    EXPECT_FALSE(x.speedup.has_value());
}

TEST(Pipeline, MalformedUserSnapshotsFailAtIngestion) {
    const fs::path dir = scratch_dir("malformed");
    std::ofstream(dir / "train.csv") << "t,mu_0,dof_0\n0,1.0\n";
    std::ofstream(dir / "test.csv") << "t,mu_0,dof_0\n0,1.0,2.0\n";
    const std::string text = "[pipeline]\nbenchmark = user-snapshots\nmethods = pod+rbf\n[user]\ntrain_file = " +
                             (dir / "train.csv").string() + "\ntest_file = " + (dir / "test.csv").string() + "\n";
    try {
        run_all(pipeline(text), {dir / "out", false});
        FAIL() << "expected an IoError";
    } catch (const IoError& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("stage sample"), std::string::npos) << what;
        EXPECT_NE(what.find("ingestion"), std::string::npos) << what;
    }
    EXPECT_TRUE(fs::exists(dir / "out" / "stamps" / "sample.invalid"));
    EXPECT_FALSE(fs::exists(dir / "out" / "stamps" / "sample.stamp"));
}

TEST(Pipeline, CavityDmdRbfArtifactInventory) {
    const fs::path out = scratch_dir("cavity-dmd");
    const std::string text =
        "[pipeline]\nbenchmark = cavity\nmethods = dmd+rbf\nfield = u\n[sampling]\nkind = grid\ntrain = 6\n"
        "test_points = 0.004\n[cavity]\ncells = 16\ndt = 0.01\nfinal_time = 1\nsnapshots = 10\n";
    const BenchReport r = run(pipeline(text), out);
    const Archive ar = Archive::load(out / "models" / "dmd_rbf" / "model.roma");
    EXPECT_EQ(ar.scalar("dmd.count"), 6.0);
    for (int i = 0; i < 6; ++i) EXPECT_TRUE(ar.has("dmd" + std::to_string(i) + ".Atilde")) << i;
    EXPECT_EQ(ar.text("regressor.kind"), "rbf");
    EXPECT_EQ(ar.vector("times").size(), 10);
    EXPECT_EQ(ar.matrix("basis.modes").rows(), 2 * 16 * 16);
    const ReportRow& x = row(r, "dmd+rbf");
    ASSERT_TRUE(x.node_error.has_value());
    EXPECT_LE(*x.node_error, 1e-12);
    EXPECT_TRUE(std::isfinite(x.test_error));
    EXPECT_EQ(r.field, "u");
    EXPECT_TRUE(fs::exists(out / "plots" / "field_dmd_rbf.svg"));
}

TEST(Pipeline, StageTimesAccountForTotal) {
    const fs::path out = scratch_dir("timing");
    Stopwatch clock;
    run_all(pipeline("[pipeline]\nmethods = pod-galerkin(10), pod+gpr\n[diffusion]\ninterior = 63\n"), {out, false});
    const double total = clock.seconds();
    std::ifstream log(out / "stage_times.jsonl");
    double sum = 0.0;
    int stages = 0;
    for (std::string line; std::getline(log, line); ++stages) sum += nlohmann::json::parse(line).at("seconds").get<double>();
    EXPECT_EQ(stages, 6);
    EXPECT_NEAR(sum, total, 0.05 * total);
}

TEST(Pipeline, DeterministicAcrossRunsAndThreads) {
    const PipelineConfig one = pipeline(kSmallDiffusion + "[pod]\nrank = 5\n");
    Config threaded = one.raw;
    threaded.set("pipeline", "threads", "3");
    const fs::path a = scratch_dir("determinism-a"), b = scratch_dir("determinism-b"),
                   c = scratch_dir("determinism-c");
    run(one, a);
    run(one, b);
    run(PipelineConfig::from(threaded), c);
    EXPECT_EQ(slurp(a / "report" / "errors.csv"), slurp(b / "report" / "errors.csv"));
    EXPECT_EQ(slurp(a / "snapshots" / "train.roms"), slurp(b / "snapshots" / "train.roms"));
    EXPECT_EQ(slurp(a / "snapshots" / "test.roms"), slurp(c / "snapshots" / "test.roms"));
    const Matrix sa = load_snapshots(a / "snapshots" / "train.roms", SnapshotFormat::binary).snapshots();
    const Matrix sc = load_snapshots(c / "snapshots" / "train.roms", SnapshotFormat::binary).snapshots();
    EXPECT_EQ(sa, sc);
}

TEST(Pipeline, EvaluateNeedsTestParameters) {
    const fs::path out = scratch_dir("no-test");
    const PipelineConfig pc = pipeline("[pipeline]\nmethods = pod+rbf\n[sampling]\ntrain = 4\ntest = 0\n[diffusion]\ninterior = 7\n");
    run_stage(Stage::sample, pc, {out, false});
    run_stage(Stage::fom, pc, {out, false});
    run_stage(Stage::train, pc, {out, false});
    EXPECT_THROW(run_stage(Stage::evaluate, pc, {out, false}), ConfigError);
    EXPECT_TRUE(fs::exists(out / "stamps" / "evaluate.invalid"));
}
