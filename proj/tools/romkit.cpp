#include "romkit/config.hpp"
#include "romkit/error.hpp"
#include "romkit/pipeline.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"romkit: reduced order modelling pipelines"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    bool force = false;
    app.add_option("--config", config_path, "Pipeline configuration file");
    app.add_option("--seed", seed, "Override pipeline.seed");
    app.add_option("--out", out_dir, "Output root (default: $ROMKIT_OUT or ./romkit-out)");
    app.add_flag("--force", force, "Rerun stages even when their fingerprint matches");
    app.add_option("--threads", threads, "Override pipeline.threads")->check(CLI::PositiveNumber);

    std::vector<romkit::Stage> stages;
    auto stage_cmd = [&](CLI::App* parent, const std::string& name, const std::string& help,
                         std::vector<romkit::Stage> run) {
        parent->add_subcommand(name, help)->callback([&stages, run] { stages = run; });
    };
    using romkit::Stage;
    stage_cmd(&app, "sample", "Draw training and test parameters", {Stage::sample});
    auto* fom = app.add_subcommand("fom", "Full-order model commands")->require_subcommand(1);
    stage_cmd(fom, "run", "Solve the full-order model at every sampled parameter", {Stage::fom});
    stage_cmd(&app, "train", "Fit every configured surrogate", {Stage::train});
    stage_cmd(&app, "evaluate", "Evaluate surrogates on the test parameters", {Stage::evaluate});
    stage_cmd(&app, "report", "Render CSV and markdown tables", {Stage::report});
    stage_cmd(&app, "plot", "Render SVG plots", {Stage::plot});
    stage_cmd(&app, "run", "Run all stages in order",
              {Stage::sample, Stage::fom, Stage::train, Stage::evaluate, Stage::report, Stage::plot});

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        romkit::Config raw = config_path.empty() ? romkit::Config::defaults() : romkit::Config::load(config_path);
        if (seed) raw.set("pipeline", "seed", std::to_string(*seed));
        if (threads) raw.set("pipeline", "threads", std::to_string(*threads));
        const romkit::PipelineConfig config = romkit::PipelineConfig::from(std::move(raw));

        romkit::RunOptions options;
        if (!out_dir.empty()) options.out = out_dir;
        else if (const char* env = std::getenv("ROMKIT_OUT"); env && *env) options.out = env;
        else options.out = "romkit-out";
        options.force = force;

        for (Stage s : stages) std::cout << romkit::run_stage(s, config, options).message << "\n";
    } catch (const romkit::Error& e) {
        std::cerr << "romkit: " << e.what() << "\n";
        return romkit::exit_code(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "romkit: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
