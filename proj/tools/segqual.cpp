// segqual: track segments, build metric time series and train quality models.
#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "segqual/error.hpp"
#include "segqual/pipeline.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;

int default_threads() {
    if (const char* env = std::getenv("SEGQUAL_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n > 0) return n;
        } catch (const std::exception&) {
        }
        std::cerr << "ignoring invalid SEGQUAL_THREADS=" << env << "\n";
    }
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Segment-wise prediction quality estimation for video segmentation"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_given = false;
    int threads = 0;
    std::string out_dir;
    std::vector<std::string> sequences;

    app.add_option("--config", config_path, "pipeline JSON config");
    app.add_option_function<std::uint64_t>("--seed", [&](std::uint64_t s) { seed = s; seed_given = true; },
                                           "base seed (overrides the config)");
    app.add_option("--threads", threads, "worker threads (default: $SEGQUAL_THREADS or all cores)")
        ->check(CLI::PositiveNumber);
    app.add_option("--out", out_dir, "output directory (overrides the config)");
    app.add_option("--sequence", sequences, "sequence directory; repeatable, replaces the config list");

    auto* track = app.add_subcommand("track", "track segments and write per-sequence track CSVs");
    auto* metrics = app.add_subcommand("metrics", "write per-segment metric CSVs");
    auto* dataset = app.add_subcommand("dataset", "write the time-series dataset CSV");
    auto* train = app.add_subcommand("train-eval", "run the experiment sweep and write reports and models");
    auto* render = app.add_subcommand("render", "write prediction / true / predicted quality panels");
    auto* synth = app.add_subcommand("synth", "generate synthetic sequences and a pipeline.json");
    for (auto* sub : {track, metrics, dataset, train, render, synth}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        segqual::PipelineConfig cfg =
            config_path.empty() ? segqual::parse_pipeline_config("{}") : segqual::load_pipeline_config(config_path);
        if (seed_given) {
            cfg.seed = seed;
            cfg.experiment.seed = seed;
        }
        cfg.experiment.threads = threads > 0 ? threads : default_threads();
        if (!out_dir.empty()) cfg.out = out_dir;
        if (!sequences.empty()) cfg.sequences.assign(sequences.begin(), sequences.end());

        if (*track) segqual::cmd_track(cfg);
        if (*metrics) segqual::cmd_metrics(cfg);
        if (*dataset) segqual::cmd_dataset(cfg);
        if (*train) segqual::cmd_train_eval(cfg);
        if (*render) segqual::cmd_render(cfg);
        if (*synth) segqual::cmd_synth(cfg);
    } catch (const segqual::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code() == segqual::ErrorCode::IoFailure ? kExitIo : kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return 0;
}
