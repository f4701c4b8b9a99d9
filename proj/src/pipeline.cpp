#include "romkit/pipeline.hpp"

#include "romkit/error.hpp"
#include "romkit/surrogate.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <sstream>

namespace romkit {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Benchmark b) {
    switch (b) {
    case Benchmark::cavity: return "cavity";
    case Benchmark::diffusion_rb: return "diffusion-rb";
    case Benchmark::morphed_poisson: return "morphed-poisson";
    case Benchmark::user_snapshots: return "user-snapshots";
    }
    return "diffusion-rb";
}

Benchmark parse_benchmark(const std::string& tag) {
    for (Benchmark b : {Benchmark::cavity, Benchmark::diffusion_rb, Benchmark::morphed_poisson, Benchmark::user_snapshots})
        if (tag == to_string(b)) return b;
    throw ConfigError("unknown benchmark '" + tag + "'");
}

std::string to_string(RegressorKind r) {
    switch (r) {
    case RegressorKind::rbf: return "rbf";
    case RegressorKind::gpr: return "gpr";
    case RegressorKind::ddnn: return "ddnn";
    }
    return "rbf";
}

std::string to_string(Stage s) {
    switch (s) {
    case Stage::sample: return "sample";
    case Stage::fom: return "fom";
    case Stage::train: return "train";
    case Stage::evaluate: return "evaluate";
    case Stage::report: return "report";
    case Stage::plot: return "plot";
    }
    return "sample";
}

std::string MethodSpec::slug() const {
    std::string s;
    for (char c : label) s += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' ? c : '_';
    return s;
}

std::vector<MethodSpec> parse_methods(const std::string& text) {
    std::vector<MethodSpec> out;
    for (const std::string& item : split_list(text, ',')) {
        MethodSpec m;
        std::string name = item, arg;
        if (const auto open = item.find('('); open != std::string::npos) {
            if (item.back() != ')') throw ConfigError("method '" + item + "': unbalanced parenthesis");
            name = trim(item.substr(0, open));
            arg = trim(item.substr(open + 1, item.size() - open - 2));
        }
        if (name == "pod-galerkin") {
            m.kind = MethodKind::pod_galerkin;
        } else if (name == "ddnn") {
            m.kind = MethodKind::ddnn;
        } else if (name == "pinn") {
            m.kind = MethodKind::pinn;
        } else if (name.rfind("dmd+", 0) == 0 || name.rfind("pod+", 0) == 0) {
            m.kind = name[0] == 'd' ? MethodKind::dmd_chain : MethodKind::pod_chain;
            const std::string reg = name.substr(4);
            if (reg == "rbf") m.regressor = RegressorKind::rbf;
            else if (reg == "gpr") m.regressor = RegressorKind::gpr;
            else if (reg == "ddnn") m.regressor = RegressorKind::ddnn;
            else throw ConfigError("method '" + item + "': unknown regressor '" + reg + "'");
        } else {
            throw ConfigError("unknown method '" + item + "'");
        }
        if (!arg.empty()) {
            if (m.kind != MethodKind::pod_galerkin && m.kind != MethodKind::pod_chain && m.kind != MethodKind::dmd_chain)
                throw ConfigError("method '" + item + "' takes no argument");
            if (arg.find_first_of(".eE") == std::string::npos) {
                long long r = 0;
                try {
                    r = std::stoll(arg);
                } catch (const std::exception&) {
                    throw ConfigError("method '" + item + "': bad basis size");
                }
                if (r < 1) throw ConfigError("method '" + item + "': basis size must be >= 1");
                m.basis = RankCount{static_cast<Index>(r)};
            } else {
                double e = 0.0;
                try {
                    e = std::stod(arg);
                } catch (const std::exception&) {
                    throw ConfigError("method '" + item + "': bad energy fraction");
                }
                if (!(e > 0.0 && e <= 1.0)) throw ConfigError("method '" + item + "': energy fraction must lie in (0, 1]");
                m.basis = EnergyFraction{e};
            }
        }
        m.label = arg.empty() ? name : name + "(" + arg + ")";
        if (std::any_of(out.begin(), out.end(), [&](const MethodSpec& o) { return o.label == m.label; }))
            throw ConfigError("method '" + m.label + "' listed twice");
        out.push_back(std::move(m));
    }
    if (out.empty()) throw ConfigError("pipeline.methods is empty");
    return out;
}

PipelineConfig PipelineConfig::from(Config raw) {
    PipelineConfig p;
    p.benchmark = parse_benchmark(raw.get_string("pipeline", "benchmark"));
    p.methods = parse_methods(raw.get_string("pipeline", "methods"));
    const long long seed = raw.get_int("pipeline", "seed");
    if (seed < 0) throw ConfigError("pipeline.seed must be >= 0");
    p.seed = static_cast<std::uint64_t>(seed);
    const long long threads = raw.get_int("pipeline", "threads");
    if (threads < 1) throw ConfigError("pipeline.threads must be >= 1");
    p.threads = static_cast<unsigned>(threads);
    p.field = raw.get_string("pipeline", "field");
    if (p.field != "all" && !(p.benchmark == Benchmark::cavity && (p.field == "u" || p.field == "v")))
        throw ConfigError("pipeline.field '" + p.field + "' is not available for this benchmark");
    p.fom_timing_repeats = static_cast<Index>(raw.get_int("pipeline", "fom_timing_repeats"));
    p.online_repeats = static_cast<Index>(raw.get_int("pipeline", "online_repeats"));
    if (p.fom_timing_repeats < 3) throw ConfigError("pipeline.fom_timing_repeats must be >= 3");
    if (p.online_repeats < 20) throw ConfigError("pipeline.online_repeats must be >= 20");

    for (const MethodSpec& m : p.methods) {
        if ((m.kind == MethodKind::pod_galerkin || m.kind == MethodKind::pinn) && p.benchmark != Benchmark::diffusion_rb)
            throw ConfigError("method '" + m.label + "' requires the diffusion-rb benchmark");
        if (m.kind == MethodKind::dmd_chain && p.benchmark != Benchmark::cavity && p.benchmark != Benchmark::user_snapshots)
            throw ConfigError("method '" + m.label + "' requires time-dependent snapshots");
    }
    const std::string kind = raw.get_string("sampling", "kind");
    if (kind != "uniform" && kind != "normal" && kind != "grid") throw ConfigError("sampling.kind must be uniform, normal or grid");
    if (raw.get_int("sampling", "train") < 2) throw ConfigError("sampling.train must be >= 2");
    if (raw.get_int("sampling", "test") < 0) throw ConfigError("sampling.test must be >= 0");
    p.raw = std::move(raw);
    return p;
}

std::string PipelineConfig::fingerprint() const { return romkit::fingerprint(raw.canonical()); }

std::string stage_fingerprint(const PipelineConfig& config, Stage stage) {
    std::vector<std::string> sections{"pipeline", "sampling", "space", "user"};
    if (stage != Stage::sample) {
        for (const char* s : {"cavity", "diffusion", "poisson"}) sections.emplace_back(s);
    }
    if (stage != Stage::sample && stage != Stage::fom) {
        for (const char* s : {"pod", "dmd", "rbf", "gpr", "ddnn", "pinn", "galerkin"}) sections.emplace_back(s);
    }
    std::string text = config.raw.canonical(sections);
    if (stage == Stage::sample || stage == Stage::fom) {
        // Method lists and evaluation settings do not change samples or snapshots.
        std::string filtered;
        std::stringstream ss(text);
        for (std::string line; std::getline(ss, line);) {
            if (line.rfind("pipeline.", 0) == 0 && line.rfind("pipeline.benchmark=", 0) != 0 &&
                line.rfind("pipeline.seed=", 0) != 0 && line.rfind("pipeline.fom_timing_repeats=", 0) != 0)
                continue;
            filtered += line + "\n";
        }
        text = filtered;
    }
    return romkit::fingerprint(to_string(stage) + "\n" + text);
}

// --- benchmark setup ------------------------------------------------------------------

namespace {

struct BenchmarkSetup {
    Benchmark kind = Benchmark::diffusion_rb;
    std::optional<ParameterSpace> space;
    CavityConfig cavity;
    DiffusionConfig diffusion;
    std::optional<AffineProblem> problem;
    std::optional<MorphedPoissonConfig> poisson;
    bool time_dependent = false;
};

CavityConfig cavity_config(const Config& c) {
    CavityConfig cc;
    cc.cells = static_cast<Index>(c.get_int("cavity", "cells"));
    cc.dt = c.get_double("cavity", "dt");
    cc.final_time = c.get_double("cavity", "final_time");
    cc.snapshot_count = static_cast<Index>(c.get_int("cavity", "snapshots"));
    cc.lid_velocity = c.get_double("cavity", "lid");
    return cc;
}

std::optional<ParameterSpace> space_override(const Config& c) {
    const auto lo = c.get_doubles("space", "lower"), hi = c.get_doubles("space", "upper");
    if (lo.empty() && hi.empty()) return std::nullopt;
    if (lo.size() != hi.size()) throw ConfigError("space.lower and space.upper differ in length");
    return ParameterSpace(Eigen::Map<const Vector>(lo.data(), static_cast<Index>(lo.size())),
                          Eigen::Map<const Vector>(hi.data(), static_cast<Index>(hi.size())));
}

BenchmarkSetup make_setup(const PipelineConfig& pc) {
    const Config& c = pc.raw;
    BenchmarkSetup s;
    s.kind = pc.benchmark;
    switch (pc.benchmark) {
    case Benchmark::cavity:
        s.cavity = cavity_config(c);
        s.space = ParameterSpace(Vector::Constant(1, 0.001), Vector::Constant(1, 0.01), {"nu"});
        s.time_dependent = true;
        break;
    case Benchmark::diffusion_rb:
        s.diffusion.interior = static_cast<Index>(c.get_int("diffusion", "interior"));
        s.diffusion.blocks_x = static_cast<Index>(c.get_int("diffusion", "blocks_x"));
        s.diffusion.blocks_y = static_cast<Index>(c.get_int("diffusion", "blocks_y"));
        s.problem = diffusion_problem(s.diffusion);
        s.space = diffusion_space(s.diffusion);
        break;
    case Benchmark::morphed_poisson: {
        MorphedPoissonConfig mp = MorphedPoissonConfig::disk_default(static_cast<Index>(c.get_int("poisson", "rings")));
        mp.quadrature_order = static_cast<int>(c.get_int("poisson", "quadrature"));
        s.space = morphed_poisson_space(mp);
        s.poisson = std::move(mp);
        break;
    }
    case Benchmark::user_snapshots:
        if (c.get_string("user", "train_file").empty() || c.get_string("user", "test_file").empty())
            throw ConfigError("user-snapshots benchmark needs user.train_file and user.test_file");
        break;
    }
    if (auto o = space_override(c)) {
        if (s.space && o->dim() != s.space->dim())
            throw ConfigError("space override has " + std::to_string(o->dim()) + " entries, benchmark needs " +
                              std::to_string(s.space->dim()));
        s.space = std::move(o);
    }
    return s;
}

std::pair<Index, Index> field_rows(const PipelineConfig& pc, const BenchmarkSetup& s, Index dof) {
    if (pc.field == "all") return {0, dof};
    const Index half = s.cavity.cells * s.cavity.cells;
    if (dof != 2 * half) throw ConfigError("field selection does not match the snapshot layout");
    return pc.field == "u" ? std::pair<Index, Index>{0, half} : std::pair<Index, Index>{half, half};
}

struct FomRun {
    SnapshotSet states;
    double seconds = 0.0;
};

FomRun run_fom(const BenchmarkSetup& s, const Vector& mu) {
    FomRun r;
    switch (s.kind) {
    case Benchmark::cavity: {
        CavityResult cr = solve_cavity(s.cavity, mu(0));
        r.states = std::move(cr.snapshots);
        r.seconds = cr.wall_seconds;
        break;
    }
    case Benchmark::diffusion_rb: {
        Stopwatch clock;
        Vector u = solve_full(*s.problem, mu);
        r.seconds = clock.seconds();
        r.states = SnapshotSet(Matrix(u), Matrix(mu), Vector::Zero(1));
        break;
    }
    case Benchmark::morphed_poisson: {
        PoissonSolution sol = solve_morphed_poisson(*s.poisson, mu);
        r.seconds = sol.wall_seconds;
        r.states = SnapshotSet(Matrix(sol.u), Matrix(mu), Vector::Zero(1));
        break;
    }
    case Benchmark::user_snapshots: throw ConfigError("user-snapshots benchmark has no solver");
    }
    return r;
}

// --- files ----------------------------------------------------------------------------

fs::path stamp_dir(const RunOptions& o) { return o.out / "stamps"; }

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("missing artifact " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_params(const fs::path& path, const Matrix& params) {
    std::string text;
    char buf[64];
    for (Index c = 0; c < params.cols(); ++c) {
        for (Index r = 0; r < params.rows(); ++r) {
            std::snprintf(buf, sizeof buf, "%.17g", params(r, c));
            text += (r ? "," : "") + std::string(buf);
        }
        text += "\n";
    }
    write_text(path, text);
}

Matrix read_params(const fs::path& path) {
    std::vector<std::vector<double>> rows;
    std::stringstream ss(read_text(path));
    for (std::string line; std::getline(ss, line);) {
        if (trim(line).empty()) continue;
        std::vector<double> row;
        for (const std::string& cell : split_list(line, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw IoError(path.string() + ": malformed parameter value '" + cell + "'");
            }
        }
        if (!rows.empty() && row.size() != rows.front().size()) throw IoError(path.string() + ": ragged parameter rows");
        rows.push_back(std::move(row));
    }
    Matrix m(rows.empty() ? 0 : static_cast<Index>(rows.front().size()), static_cast<Index>(rows.size()));
    for (std::size_t c = 0; c < rows.size(); ++c)
        for (std::size_t r = 0; r < rows[c].size(); ++r) m(static_cast<Index>(r), static_cast<Index>(c)) = rows[c][r];
    return m;
}

Matrix parse_points(const std::string& text, Index dim) {
    const auto points = split_list(text, ';');
    Matrix m(dim, static_cast<Index>(points.size()));
    for (std::size_t c = 0; c < points.size(); ++c) {
        const auto comps = split_list(points[c], ',');
        if (static_cast<Index>(comps.size()) != dim)
            throw ConfigError("sampling.test_points: point " + std::to_string(c) + " needs " + std::to_string(dim) + " components");
        for (std::size_t r = 0; r < comps.size(); ++r) {
            try {
                m(static_cast<Index>(r), static_cast<Index>(c)) = std::stod(comps[r]);
            } catch (const std::exception&) {
                throw ConfigError("sampling.test_points: bad number '" + comps[r] + "'");
            }
        }
    }
    return m;
}

SnapshotSet load_user(const std::string& path) {
    try {
        return load_snapshots(path, format_for(path));
    } catch (const Error& e) {
        throw IoError("user snapshot ingestion failed: " + std::string(e.what()));
    }
}

SnapshotSet tag(const SnapshotSet& set, const std::string& fp, Benchmark b) {
    return set.with_metadata("benchmark=" + to_string(b) + ";fingerprint=" + fp);
}

std::optional<ParameterSpace> user_space(const SnapshotSet& train, const std::optional<ParameterSpace>& given) {
    if (given) return given;
    const Matrix& p = train.params();
    Vector lo = p.rowwise().minCoeff(), hi = p.rowwise().maxCoeff();
    for (Index i = 0; i < lo.size(); ++i)
        if (!(hi(i) > lo(i))) hi(i) = lo(i) + 1.0;
    return ParameterSpace(lo, hi);
}

// --- stages ---------------------------------------------------------------------------

void stage_sample(const PipelineConfig& pc, const RunOptions& o, const std::string& fp) {
    const BenchmarkSetup s = make_setup(pc);
    const Config& c = pc.raw;
    Matrix train, test;
    if (s.kind == Benchmark::user_snapshots) {
        train = load_user(c.get_string("user", "train_file")).distinct_params();
        test = load_user(c.get_string("user", "test_file")).distinct_params();
    } else {
        SamplingPlan plan;
        const std::string kind = c.get_string("sampling", "kind");
        plan.kind = kind == "grid" ? SamplingKind::grid : kind == "normal" ? SamplingKind::normal : SamplingKind::uniform;
        plan.count = static_cast<Index>(c.get_int("sampling", "train"));
        plan.seed = pc.seed;
        if (plan.kind == SamplingKind::normal) {
            const auto center = c.get_doubles("sampling", "normal_center"), spread = c.get_doubles("sampling", "normal_spread");
            plan.normal_center = Eigen::Map<const Vector>(center.data(), static_cast<Index>(center.size()));
            plan.normal_spread = Eigen::Map<const Vector>(spread.data(), static_cast<Index>(spread.size()));
        }
        train = sample(*s.space, plan);
        const std::string explicit_points = c.get_string("sampling", "test_points");
        if (!explicit_points.empty()) {
            test = parse_points(explicit_points, s.space->dim());
        } else {
            SamplingPlan tp;
            tp.kind = SamplingKind::uniform;
            tp.count = static_cast<Index>(c.get_int("sampling", "test"));
            tp.seed = pc.seed + 1;
            test = tp.count > 0 ? sample(*s.space, tp) : Matrix(s.space->dim(), 0);
        }
    }
    write_params(o.out / "samples" / "train.csv", train);
    write_params(o.out / "samples" / "test.csv", test);
    write_text(o.out / "samples" / "fingerprint", fp + "\n");
}

void stage_fom(const PipelineConfig& pc, const RunOptions& o, const std::string& fp) {
    const BenchmarkSetup s = make_setup(pc);
    fs::create_directories(o.out / "snapshots");
    if (s.kind == Benchmark::user_snapshots) {
        save_snapshots(tag(load_user(pc.raw.get_string("user", "train_file")), fp, s.kind), o.out / "snapshots" / "train.roms",
                       SnapshotFormat::binary);
        save_snapshots(tag(load_user(pc.raw.get_string("user", "test_file")), fp, s.kind), o.out / "snapshots" / "test.roms",
                       SnapshotFormat::binary);
        write_text(o.out / "timing.jsonl", "");
        return;
    }
    const Matrix train = read_params(o.out / "samples" / "train.csv");
    const Matrix test = read_params(o.out / "samples" / "test.csv");
    struct Job {
        std::string id;
        Vector mu;
        bool test;
    };
    std::vector<Job> jobs;
    for (Index c = 0; c < train.cols(); ++c) jobs.push_back({"train-" + std::to_string(c), train.col(c), false});
    for (Index c = 0; c < test.cols(); ++c) jobs.push_back({"test-" + std::to_string(c), test.col(c), true});
    // Extra solves only feed the timing baseline.
    for (Index extra = 0; static_cast<Index>(jobs.size()) < pc.fom_timing_repeats; ++extra)
        jobs.push_back({"timing-" + std::to_string(extra), test.cols() ? Vector(test.col(0)) : Vector(train.col(0)), true});
    const Index real_jobs = train.cols() + test.cols();

    std::vector<FomRun> runs(jobs.size());
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t j = begin; j < end; ++j) runs[j] = run_fom(s, jobs[j].mu);
    };
    const std::size_t n = jobs.size(), parts = std::min<std::size_t>(pc.threads, n);
    if (parts <= 1) {
        work(0, n);
    } else {
        std::vector<std::future<void>> futures;
        for (std::size_t p = 0; p < parts; ++p) futures.push_back(std::async(std::launch::async, work, p * n / parts, (p + 1) * n / parts));
        for (auto& f : futures) f.get();
    }

    SnapshotSet train_set, test_set;
    std::string timing;
    for (std::size_t j = 0; j < jobs.size(); ++j) {
        json line{{"run_id", jobs[j].id},
                  {"mu", std::vector<double>(jobs[j].mu.data(), jobs[j].mu.data() + jobs[j].mu.size())},
                  {"wall_seconds", runs[j].seconds},
                  {"dof", runs[j].states.dof()}};
        timing += line.dump() + "\n";
        if (static_cast<Index>(j) >= real_jobs) continue;
        SnapshotSet& target = jobs[j].test ? test_set : train_set;
        target = target.count() == 0 ? runs[j].states : target.append(runs[j].states);
    }
    save_snapshots(tag(train_set, fp, s.kind), o.out / "snapshots" / "train.roms", SnapshotFormat::binary);
    if (test_set.count() > 0) save_snapshots(tag(test_set, fp, s.kind), o.out / "snapshots" / "test.roms", SnapshotFormat::binary);
    else fs::remove(o.out / "snapshots" / "test.roms");
    write_text(o.out / "timing.jsonl", timing);
}

struct Loaded {
    BenchmarkSetup setup;
    SnapshotSet train;
    std::optional<SnapshotSet> test;
    TrainingContext ctx;
};

std::unique_ptr<Loaded> load_offline(const PipelineConfig& pc, const RunOptions& o) {
    auto l = std::make_unique<Loaded>();
    l->setup = make_setup(pc);
    l->train = load_snapshots(o.out / "snapshots" / "train.roms", SnapshotFormat::binary);
    if (fs::exists(o.out / "snapshots" / "test.roms"))
        l->test = load_snapshots(o.out / "snapshots" / "test.roms", SnapshotFormat::binary);
    if (l->setup.kind == Benchmark::user_snapshots) {
        l->setup.space = user_space(l->train, l->setup.space);
        l->setup.time_dependent = l->train.count() > l->train.distinct_params().cols();
    }
    l->ctx.train = &l->train;
    l->ctx.space = l->setup.space;
    l->ctx.time_dependent = l->setup.time_dependent;
    l->ctx.problem = l->setup.problem ? &*l->setup.problem : nullptr;
    l->ctx.diffusion = l->setup.kind == Benchmark::diffusion_rb ? &l->setup.diffusion : nullptr;
    l->ctx.seed = pc.seed;
    l->ctx.threads = pc.threads;
    for (const MethodSpec& m : pc.methods)
        if (m.kind == MethodKind::dmd_chain && !l->setup.time_dependent)
            throw ConfigError("method '" + m.label + "' requires time-dependent snapshots");
    return l;
}

fs::path model_path(const RunOptions& o, const MethodSpec& m) { return o.out / "models" / m.slug() / "model.roma"; }

void stage_train(const PipelineConfig& pc, const RunOptions& o, const std::string& fp) {
    auto l = load_offline(pc, o);
    for (const MethodSpec& m : pc.methods) {
        Stopwatch clock;
        std::unique_ptr<Surrogate> s;
        try {
            s = fit_surrogate(m, pc.raw, l->ctx);
        } catch (const Error& e) {
            raise(e.kind(), m.label + ": " + e.what());
        }
        Archive ar;
        s->save(ar);
        ar.put_text("method", m.label);
        ar.put_text("fingerprint", fp);
        ar.put_scalar("offline_seconds", clock.seconds());
        fs::create_directories(model_path(o, m).parent_path());
        ar.save(model_path(o, m));
    }
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> fom_times(const RunOptions& o) {
    std::vector<double> out;
    std::stringstream ss(read_text(o.out / "timing.jsonl"));
    for (std::string line; std::getline(ss, line);) {
        if (trim(line).empty()) continue;
        try {
            out.push_back(json::parse(line).at("wall_seconds").get<double>());
        } catch (const json::exception& e) {
            throw IoError("timing.jsonl: " + std::string(e.what()));
        }
    }
    return out;
}

/// Evaluates a surrogate on every distinct parameter of `set`; returns the
/// predicted snapshot matrix in column order of `set`.
Matrix predict_all(const Surrogate& s, const SnapshotSet& set) {
    Matrix out(set.dof(), set.count());
    const Matrix params = set.distinct_params();
    for (Index m = 0; m < params.cols(); ++m) {
        const std::vector<Index> cols = set.columns_for(params.col(m));
        Vector times(static_cast<Index>(cols.size()));
        for (std::size_t k = 0; k < cols.size(); ++k) times(static_cast<Index>(k)) = set.times()(cols[k]);
        const Matrix pred = s.predict(params.col(m), times);
        if (pred.rows() != set.dof() || pred.cols() != static_cast<Index>(cols.size()))
            throw ConfigError("surrogate output does not match the snapshot layout (dimension drift)");
        for (std::size_t k = 0; k < cols.size(); ++k) out.col(cols[k]) = pred.col(static_cast<Index>(k));
    }
    return out;
}

void stage_evaluate(const PipelineConfig& pc, const RunOptions& o, const std::string& fp) {
    auto l = load_offline(pc, o);
    if (!l->test || l->test->count() == 0) throw ConfigError("evaluate: no test parameters");
    const SnapshotSet& test = *l->test;
    const auto [row0, rows] = field_rows(pc, l->setup, test.dof());

    BenchReport report;
    report.benchmark = to_string(pc.benchmark);
    report.fingerprint = fp;
    report.field = pc.field;
    const std::vector<double> ft = fom_times(o);
    report.fom_solves = static_cast<Index>(ft.size());
    if (!ft.empty()) report.fom_median_seconds = median(ft);
    const Matrix test_params = test.distinct_params();
    report.test_parameters = test_params.cols();

    fs::create_directories(o.out / "report" / "predictions");
    for (const MethodSpec& m : pc.methods) {
        const Archive ar = Archive::load(model_path(o, m));
        if (ar.text("method") != m.label) throw IoError("model archive for " + m.label + " holds " + ar.text("method"));
        std::unique_ptr<Surrogate> s = load_surrogate(m, ar, l->ctx);

        ReportRow row;
        row.method = m.label;
        row.offline_seconds = ar.scalar("offline_seconds");
        row.node_error = s->node_error();
        std::tie(row.train_error, row.train_error_max) = relative_errors(predict_all(*s, l->train), l->train.snapshots(), row0, rows);
        const Matrix pred = predict_all(*s, test);
        std::tie(row.test_error, row.test_error_max) = relative_errors(pred, test.snapshots(), row0, rows);

        std::vector<double> durations;
        for (Index p = 0; p < test_params.cols(); ++p) {
            const std::vector<Index> cols = test.columns_for(test_params.col(p));
            Vector times(static_cast<Index>(cols.size()));
            for (std::size_t k = 0; k < cols.size(); ++k) times(static_cast<Index>(k)) = test.times()(cols[k]);
            const Vector mu = test_params.col(p);
            for (Index r = 0; r < pc.online_repeats; ++r) {
                Stopwatch clock;
                const Matrix out = s->predict(mu, times);
                durations.push_back(clock.seconds());
                if (out.size() == 0) throw NumericalError("empty prediction");
            }
        }
        row.online_evaluations = static_cast<Index>(durations.size());
        row.online_median_seconds = median(durations);
        if (report.fom_median_seconds && row.online_median_seconds > 0.0)
            row.speedup = *report.fom_median_seconds / row.online_median_seconds;
        report.rows.push_back(row);

        if (const auto* g = dynamic_cast<const GalerkinSurrogate*>(s.get())) {
            std::vector<SparseMatrix> energy;
            if (l->setup.problem)
                for (Index c = 0; c < test.count(); ++c) energy.push_back(l->setup.problem->assemble_operator(test.params().col(c)));
            std::vector<CurvePoint> curve;
            for (Index n = 1; n <= g->op().size(); ++n) {
                Matrix p(test.dof(), test.count());
                for (Index c = 0; c < test.count(); ++c) p.col(c) = g->predict_truncated(test.params().col(c), n);
                CurvePoint point{n, relative_errors(p, test.snapshots(), row0, rows).first, std::nullopt};
                if (!energy.empty()) {
                    double sum = 0.0;
                    for (Index c = 0; c < test.count(); ++c) {
                        const auto& a = energy[static_cast<std::size_t>(c)];
                        const Vector u = test.snapshots().col(c), e = p.col(c) - u;
                        sum += std::sqrt(e.dot(a * e) / u.dot(a * u));
                    }
                    point.energy_error = sum / double(test.count());
                }
                curve.push_back(point);
            }
            report.curves.emplace_back(m.label, std::move(curve));
        }

        const std::vector<Index> first = test.columns_for(test_params.col(0));
        SnapshotSet shown = test.select(first);
        Matrix shown_pred(test.dof(), static_cast<Index>(first.size()));
        for (std::size_t k = 0; k < first.size(); ++k) shown_pred.col(static_cast<Index>(k)) = pred.col(first[k]);
        save_snapshots(SnapshotSet(shown_pred, shown.params(), shown.times(), "prediction;method=" + m.label + ";fingerprint=" + fp),
                       o.out / "report" / "predictions" / (m.slug() + ".roms"), SnapshotFormat::binary);
    }
    write_text(o.out / "report" / "report.json", report_to_json(report));
}

void stage_report(const PipelineConfig&, const RunOptions& o, const std::string&) {
    const BenchReport report = report_from_json(read_text(o.out / "report" / "report.json"));
    write_text(o.out / "report" / "report.csv", render_csv(report));
    write_text(o.out / "report" / "errors.csv", render_errors_csv(report));
    write_text(o.out / "report" / "report.md", render_markdown(report));
}

void stage_plot(const PipelineConfig& pc, const RunOptions& o, const std::string&) {
    const BenchReport report = report_from_json(read_text(o.out / "report" / "report.json"));
    fs::create_directories(o.out / "plots");
    if (!report.curves.empty()) write_text(o.out / "plots" / "error_vs_nrb.svg", render_curve_svg(report));
    const BenchmarkSetup s = make_setup(pc);
    for (const MethodSpec& m : pc.methods) {
        const SnapshotSet pred = load_snapshots(o.out / "report" / "predictions" / (m.slug() + ".roms"), SnapshotFormat::binary);
        const SnapshotSet test = load_snapshots(o.out / "snapshots" / "test.roms", SnapshotFormat::binary);
        const std::vector<Index> cols = test.columns_for(pred.params().col(0));
        const Vector truth = test.snapshots().col(cols.back());
        const Vector guess = pred.snapshots().col(pred.count() - 1);
        std::string svg;
        if (s.kind == Benchmark::cavity) {
            const Index n = s.cavity.cells;
            const Index off = pc.field == "v" ? n * n : 0;
            svg = render_grid_pair_svg(truth.segment(off, n * n), guess.segment(off, n * n), n, "FOM", m.label);
        } else if (s.kind == Benchmark::diffusion_rb) {
            svg = render_grid_pair_svg(truth, guess, s.diffusion.interior, "FOM", m.label);
        } else if (s.kind == Benchmark::morphed_poisson) {
            const FfdLattice lat = ffd_from_parameters(s.poisson->lattice, Vector(pred.params().col(0)));
            svg = render_mesh_pair_svg(morph_mesh(lat, s.poisson->reference).mesh, truth, guess, "FOM", m.label);
        } else {
            continue;
        }
        write_text(o.out / "plots" / ("field_" + m.slug() + ".svg"), svg);
    }
}

}  // namespace

std::pair<double, double> relative_errors(const Matrix& predicted, const Matrix& truth, Index row_begin, Index row_count,
                                          std::vector<double>* each) {
    if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols())
        throw ConfigError("relative_errors: shape mismatch");
    if (truth.cols() == 0) throw ConfigError("relative_errors: nothing to compare");
    double sum = 0.0, worst = 0.0;
    for (Index c = 0; c < truth.cols(); ++c) {
        const double ref = truth.col(c).segment(row_begin, row_count).norm();
        const double diff = (predicted.col(c) - truth.col(c)).segment(row_begin, row_count).norm();
        const double e = ref > 0.0 ? diff / ref : diff;
        if (each) each->push_back(e);
        sum += e;
        worst = std::max(worst, e);
    }
    return {sum / double(truth.cols()), worst};
}

StageOutcome run_stage(Stage stage, const PipelineConfig& config, const RunOptions& options) {
    const std::string fp = stage_fingerprint(config, stage);
    const fs::path stamp = stamp_dir(options) / (to_string(stage) + ".stamp");
    const fs::path invalid = stamp_dir(options) / (to_string(stage) + ".invalid");
    if (!options.force && fs::exists(stamp) && trim(read_text(stamp)) == fp)
        return {true, to_string(stage) + ": up to date (fingerprint " + fp.substr(0, 12) + ")"};
    fs::create_directories(stamp_dir(options));
    fs::remove(stamp);
    for (int later = static_cast<int>(stage) + 1; later <= static_cast<int>(Stage::plot); ++later)
        fs::remove(stamp_dir(options) / (to_string(static_cast<Stage>(later)) + ".stamp"));
    Stopwatch clock;
    try {
        switch (stage) {
        case Stage::sample: stage_sample(config, options, fp); break;
        case Stage::fom: stage_fom(config, options, fp); break;
        case Stage::train: stage_train(config, options, fp); break;
        case Stage::evaluate: stage_evaluate(config, options, fp); break;
        case Stage::report: stage_report(config, options, fp); break;
        case Stage::plot: stage_plot(config, options, fp); break;
        }
    } catch (const Error& e) {
        write_text(invalid, fp + "\n" + e.what() + "\n");
        raise(e.kind(), "stage " + to_string(stage) + ": " + e.what());
    } catch (const fs::filesystem_error& e) {
        write_text(invalid, fp + "\n" + e.what() + "\n");
        throw IoError("stage " + to_string(stage) + ": " + e.what());
    }
    fs::remove(invalid);
    const json record{{"stage", to_string(stage)}, {"seconds", clock.seconds()}, {"fingerprint", fp}};
    std::ofstream log(options.out / "stage_times.jsonl", std::ios::app);
    log << record.dump() << "\n";
    write_text(stamp, fp + "\n");
    return {false, to_string(stage) + ": done"};
}

std::vector<StageOutcome> run_all(const PipelineConfig& config, const RunOptions& options) {
    std::vector<StageOutcome> out;
    for (Stage s : {Stage::sample, Stage::fom, Stage::train, Stage::evaluate, Stage::report, Stage::plot})
        out.push_back(run_stage(s, config, options));
    return out;
}

}  // namespace romkit
