#include "segqual/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "file_bytes.hpp"
#include "segqual/error.hpp"
#include "segqual/render.hpp"
#include "segqual/rng.hpp"

namespace segqual {
namespace fs = std::filesystem;
namespace {

using Json = nlohmann::json;
using OJson = nlohmann::ordered_json;

template <class T>
void read_opt(const Json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

std::string frame_name(int position) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%04d", position);
    return buf;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
    ensure_dir(path.parent_path().empty() ? fs::path(".") : path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
    return out;
}

void finish(std::ofstream& out, const fs::path& path) {
    out.flush();
    if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

/// Re-raises loader errors with the offending file name in front.
template <class Fn>
auto tagged(const fs::path& path, Fn fn) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.message());
    }
}

std::vector<ProcessedSequence> process_all(const PipelineConfig& cfg) {
    if (cfg.sequences.empty()) throw Error(ErrorCode::InvalidArgument, "no sequences configured");
    std::vector<ProcessedSequence> out;
    for (const fs::path& dir : cfg.sequences) out.push_back(process_sequence(load_sequence(dir), cfg.tracker));
    return out;
}

std::string sequence_name(const fs::path& dir) {
    const fs::path p = dir.has_filename() ? dir : dir.parent_path();
    return p.filename().string();
}

FeatureMatrix load_or_build_dataset(const PipelineConfig& cfg, int history) {
    if (!cfg.dataset.empty()) {
        std::ifstream in(cfg.dataset, std::ios::binary);
        if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + cfg.dataset.string());
        return tagged(cfg.dataset, [&] { return read_dataset_csv(in); });
    }
    return build_dataset(process_all(cfg), history);
}

int model_history(const MetaModel& model, int num_classes) {
    const Eigen::Index block = kBaseMetricCount + num_classes;
    if (model.input_dim() % block != 0 || model.input_dim() == 0) {
        throw Error(ErrorCode::DimMismatch, "model input size does not match the class count");
    }
    return static_cast<int>(model.input_dim() / block) - 1;
}

MetaModel fit_render_model(const PipelineConfig& cfg, const std::vector<ProcessedSequence>& seqs) {
    const FeatureMatrix fm = build_dataset(seqs, 0);
    const SplitIndices parts = split(fm, {cfg.experiment.train_fraction, cfg.experiment.val_fraction,
                                          cfg.experiment.test_fraction, derive_seed(cfg.seed, 0),
                                          cfg.experiment.split_by_track});
    const PreparedRun prep = prepare_run(fm, parts, Composition::R, Task::Regress, cfg.experiment, derive_seed(cfg.seed, 2));
    MetaModel model = fit_selected(Family::GB, Task::Regress, prep.x_train, prep.y_train, prep.x_val, prep.y_val,
                                   cfg.experiment.hp, cfg.experiment.lambda_grid, derive_seed(cfg.seed, 1));
    model.stats = prep.stats;
    return model;
}

OJson hp_json(const Hyperparameters& hp) {
    return OJson{{"trees", hp.trees},
                 {"depth", hp.depth},
                 {"shrinkage", hp.shrinkage},
                 {"subsample", hp.subsample},
                 {"min_leaf", hp.min_leaf},
                 {"hidden", hp.hidden},
                 {"activation", hp.activation == Activation::ReLU ? "relu" : "tanh"},
                 {"learning_rate", hp.learning_rate},
                 {"batch", hp.batch},
                 {"max_epochs", hp.max_epochs},
                 {"patience", hp.patience}};
}

void read_hp(const Json& j, Hyperparameters& hp) {
    read_opt(j, "trees", hp.trees);
    read_opt(j, "depth", hp.depth);
    read_opt(j, "shrinkage", hp.shrinkage);
    read_opt(j, "subsample", hp.subsample);
    read_opt(j, "min_leaf", hp.min_leaf);
    read_opt(j, "hidden", hp.hidden);
    if (j.contains("activation")) {
        const auto a = j.at("activation").get<std::string>();
        if (a != "relu" && a != "tanh") throw Error(ErrorCode::InvalidArgument, "activation must be relu or tanh");
        hp.activation = a == "relu" ? Activation::ReLU : Activation::Tanh;
    }
    read_opt(j, "learning_rate", hp.learning_rate);
    read_opt(j, "batch", hp.batch);
    read_opt(j, "max_epochs", hp.max_epochs);
    read_opt(j, "patience", hp.patience);
}

void read_noise(const Json& n, NoiseSpec& noise) {
    read_opt(n, "temperature", noise.temperature);
    read_opt(n, "base_margin", noise.base_margin);
    read_opt(n, "blur_width", noise.blur_width);
    read_opt(n, "flip_scale", noise.flip_scale);
    read_opt(n, "noise_cell", noise.noise_cell);
    read_opt(n, "temperature_jitter", noise.temperature_jitter);
    read_opt(n, "rho_drift", noise.rho_drift);
    read_opt(n, "drift_coeff", noise.drift_coeff);
}

}  // namespace

PipelineConfig parse_pipeline_config(const std::string& text, const fs::path& base) {
    PipelineConfig cfg;
    cfg.experiment.n_c.resize(kMaxHistory + 1);
    std::iota(cfg.experiment.n_c.begin(), cfg.experiment.n_c.end(), 0);
    try {
        const Json j = Json::parse(text);
        for (const auto& s : j.value("sequences", Json::array())) cfg.sequences.push_back(resolve(base, s.get<std::string>()));
        if (j.contains("dataset")) cfg.dataset = resolve(base, j.at("dataset").get<std::string>());
        if (j.contains("out")) cfg.out = resolve(base, j.at("out").get<std::string>());
        read_opt(j, "seed", cfg.seed);
        cfg.experiment.seed = cfg.seed;
        read_opt(j, "history", cfg.history);
        if (cfg.history < 0 || cfg.history > kMaxHistory) throw Error(ErrorCode::InvalidArgument, "history must be in [0, 10]");

        if (j.contains("tracker")) {
            const Json& t = j.at("tracker");
            read_opt(t, "c_near", cfg.tracker.c_near);
            read_opt(t, "c_over", cfg.tracker.c_over);
            read_opt(t, "c_dist", cfg.tracker.c_dist);
            read_opt(t, "c_lin", cfg.tracker.c_lin);
            read_opt(t, "n_lr", cfg.tracker.n_lr);
            read_opt(t, "enable_shift", cfg.tracker.enable_shift);
            read_opt(t, "enable_overlap", cfg.tracker.enable_overlap);
            read_opt(t, "enable_regression", cfg.tracker.enable_regression);
        }
        cfg.tracker.validate();

        if (j.contains("experiment")) {
            const Json& e = j.at("experiment");
            ExperimentConfig& x = cfg.experiment;
            if (e.contains("models")) {
                x.models.clear();
                for (const auto& m : e.at("models")) x.models.push_back(parse_family(m.get<std::string>()));
            }
            if (e.contains("tasks")) {
                x.tasks.clear();
                for (const auto& t : e.at("tasks")) x.tasks.push_back(parse_task(t.get<std::string>()));
            }
            read_opt(e, "n_c", x.n_c);
            if (e.contains("compositions")) {
                x.compositions.clear();
                for (const auto& c : e.at("compositions")) x.compositions.push_back(parse_composition(c.get<std::string>()));
            }
            read_opt(e, "runs", x.runs);
            read_opt(e, "seed", x.seed);
            read_opt(e, "seeds", x.run_seeds);
            read_opt(e, "train", x.train_fraction);
            read_opt(e, "val", x.val_fraction);
            read_opt(e, "test", x.test_fraction);
            read_opt(e, "by_track", x.split_by_track);
            read_opt(e, "standardize", x.standardize);
            read_opt(e, "baselines", x.baselines);
            read_opt(e, "lambda_grid", x.lambda_grid);
            read_opt(e, "threads", x.threads);
            if (e.contains("hyperparameters")) read_hp(e.at("hyperparameters"), x.hp);
            if (e.contains("smoter")) {
                const Json& s = e.at("smoter");
                read_opt(s, "bins", x.smoter.bins);
                read_opt(s, "k", x.smoter.k_neighbors);
                read_opt(s, "ratio", x.smoter.ratio);
            }
        }
        for (int n : cfg.experiment.n_c) {
            if (n < 0 || n > kMaxHistory) throw Error(ErrorCode::InvalidArgument, "n_c values must be in [0, 10]");
        }
        if (cfg.experiment.runs < 1) throw Error(ErrorCode::InvalidArgument, "runs must be positive");

        if (j.contains("render")) {
            const Json& r = j.at("render");
            if (r.contains("model")) cfg.render.model = resolve(base, r.at("model").get<std::string>());
            read_opt(r, "sequence", cfg.render.sequence);
            read_opt(r, "frames", cfg.render.frames);
        }
        if (j.contains("synth")) {
            const Json& s = j.at("synth");
            read_opt(s, "sequences", cfg.synth.sequences);
            read_opt(s, "pseudo_sequences", cfg.synth.pseudo_sequences);
            for (const auto& p : s.value("scenes", Json::array())) cfg.synth.scenes.push_back(resolve(base, p.get<std::string>()));
            if (s.contains("population")) {
                const Json& p = s.at("population");
                PopulationSpec& pop = cfg.synth.population;
                read_opt(p, "height", pop.height);
                read_opt(p, "width", pop.width);
                read_opt(p, "num_classes", pop.num_classes);
                read_opt(p, "frames", pop.frames);
                read_opt(p, "min_blobs", pop.min_blobs);
                read_opt(p, "max_blobs", pop.max_blobs);
                read_opt(p, "min_radius", pop.min_radius);
                read_opt(p, "max_radius", pop.max_radius);
                read_opt(p, "max_speed", pop.max_speed);
                read_opt(p, "ghost_probability", pop.ghost_probability);
                read_opt(p, "waypoint_probability", pop.waypoint_probability);
                if (p.contains("noise")) read_noise(p.at("noise"), pop.noise);
            }
        }
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("malformed config: ") + e.what());
    }
    return cfg;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return tagged(path, [&] { return parse_pipeline_config(text.str(), path.parent_path()); });
}

std::string pipeline_config_json(const PipelineConfig& cfg) {
    OJson j;
    j["sequences"] = OJson::array();
    for (const auto& s : cfg.sequences) j["sequences"].push_back(s.generic_string());
    if (!cfg.dataset.empty()) j["dataset"] = cfg.dataset.generic_string();
    j["out"] = cfg.out.generic_string();
    j["seed"] = cfg.seed;
    j["history"] = cfg.history;
    const TrackerConfig& t = cfg.tracker;
    j["tracker"] = {{"c_near", t.c_near},
                    {"c_over", t.c_over},
                    {"c_dist", t.c_dist},
                    {"c_lin", t.c_lin},
                    {"n_lr", t.n_lr},
                    {"enable_shift", t.enable_shift},
                    {"enable_overlap", t.enable_overlap},
                    {"enable_regression", t.enable_regression}};
    const ExperimentConfig& x = cfg.experiment;
    OJson e;
    e["models"] = OJson::array();
    for (Family f : x.models) e["models"].push_back(std::string(to_string(f)));
    e["tasks"] = OJson::array();
    for (Task task : x.tasks) e["tasks"].push_back(std::string(to_string(task)));
    e["n_c"] = x.n_c;
    e["compositions"] = OJson::array();
    for (Composition c : x.compositions) e["compositions"].push_back(std::string(to_string(c)));
    e["runs"] = x.runs;
    e["seed"] = x.seed;
    if (!x.run_seeds.empty()) e["seeds"] = x.run_seeds;
    e["train"] = x.train_fraction;
    e["val"] = x.val_fraction;
    e["test"] = x.test_fraction;
    e["by_track"] = x.split_by_track;
    e["standardize"] = x.standardize;
    e["baselines"] = x.baselines;
    e["lambda_grid"] = x.lambda_grid;
    e["threads"] = x.threads;
    e["hyperparameters"] = hp_json(x.hp);
    e["smoter"] = {{"bins", x.smoter.bins}, {"k", x.smoter.k_neighbors}, {"ratio", x.smoter.ratio}};
    j["experiment"] = std::move(e);
    return j.dump(2) + "\n";
}

SequenceInput load_sequence(const fs::path& dir) {
    const fs::path prob_dir = dir / "prob";
    if (!fs::is_directory(prob_dir)) throw Error(ErrorCode::IoFailure, "missing directory " + prob_dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(prob_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".sqtf") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw Error(ErrorCode::IoFailure, "no .sqtf frames in " + prob_dir.string());

    SequenceInput seq;
    seq.name = sequence_name(dir);
    for (const fs::path& f : files) {
        seq.probs.push_back(tagged(f, [&] { return load_prob_tensor(f); }));
        const fs::path g = dir / "gt" / f.filename();
        if (fs::exists(g)) {
            const int c = seq.probs.back().num_classes();
            seq.gt.emplace_back(tagged(g, [&] { return load_label_map(g, c); }));
        } else {
            seq.gt.emplace_back(std::nullopt);
        }
    }
    return seq;
}

ProcessedSequence process_sequence(const SequenceInput& input, const TrackerConfig& cfg) {
    ProcessedSequence out;
    out.num_classes = input.probs.front().num_classes();
    std::vector<SegmentFrame> frames;
    for (std::size_t t = 0; t < input.probs.size(); ++t) {
        if (input.probs[t].num_classes() != out.num_classes) {
            throw Error(ErrorCode::DimMismatch, input.name + ": class count changes within the sequence");
        }
        frames.push_back(segment_frame(argmax_labels(input.probs[t]), static_cast<int>(t)));
    }
    out.tracked = track_sequence(frames, cfg);
    for (std::size_t t = 0; t < frames.size(); ++t) {
        const SegmentFrame& sf = out.tracked.frames[t];
        const DispersionMaps maps = dispersion_maps(input.probs[t]);
        std::vector<MetricRecord> recs = frame_metrics(sf, maps, input.probs[t]);
        for (MetricRecord& r : recs) r.track_id = out.tracked.track_of(t, r.seg_id);
        if (input.gt[t]) out.targets[sf.frame_index] = frame_targets(sf, *input.gt[t]);
        out.metrics.insert(out.metrics.end(), recs.begin(), recs.end());
    }
    attach_targets(out.metrics, out.targets);
    return out;
}

FeatureMatrix build_dataset(const std::vector<ProcessedSequence>& sequences, int history, bool include_unlabeled) {
    FeatureMatrix all;
    for (std::size_t i = 0; i < sequences.size(); ++i) {
        const ProcessedSequence& s = sequences[i];
        FeatureMatrix fm = build_timeseries(s.tracked, s.metrics, s.targets, history, static_cast<int>(i),
                                            include_unlabeled);
        if (fm.rows() == 0) continue;
        if (all.rows() > 0 && all.num_classes != fm.num_classes) {
            throw Error(ErrorCode::DimMismatch, "sequences differ in class count");
        }
        all.append(fm);
    }
    all.n_c = history;
    return all;
}

void cmd_track(const PipelineConfig& cfg) {
    for (const fs::path& dir : cfg.sequences) {
        const SequenceInput input = load_sequence(dir);
        std::vector<SegmentFrame> frames;
        for (std::size_t t = 0; t < input.probs.size(); ++t) {
            frames.push_back(segment_frame(argmax_labels(input.probs[t]), static_cast<int>(t)));
        }
        const TrackedSequence tracked = track_sequence(frames, cfg.tracker);
        const fs::path path = cfg.out / "tracks" / (input.name + ".csv");
        std::ofstream out = open_out(path);
        write_track_csv(out, tracked);
        finish(out, path);
    }
}

void cmd_metrics(const PipelineConfig& cfg) {
    for (const fs::path& dir : cfg.sequences) {
        const SequenceInput input = load_sequence(dir);
        const ProcessedSequence seq = process_sequence(input, cfg.tracker);
        const fs::path path = cfg.out / "metrics" / (input.name + ".csv");
        std::ofstream out = open_out(path);
        write_metrics_csv(out, seq.metrics, seq.num_classes);
        finish(out, path);
    }
}

void cmd_dataset(const PipelineConfig& cfg) {
    const FeatureMatrix fm = build_dataset(process_all(cfg), cfg.history, true);
    const fs::path path = cfg.out / "dataset.csv";
    std::ofstream out = open_out(path);
    write_dataset_csv(out, fm);
    finish(out, path);
}

ExperimentResult cmd_train_eval(const PipelineConfig& cfg) {
    int history = 0;
    for (int n : cfg.experiment.n_c) history = std::max(history, n);
    FeatureMatrix fm = load_or_build_dataset(cfg, history);
    if (!cfg.dataset.empty()) {
        // Stored datasets may hold unlabeled rows; experiments use labeled ones.
        std::vector<Eigen::Index> labeled;
        for (Eigen::Index i = 0; i < fm.rows(); ++i) {
            if (fm.labeled(i)) labeled.push_back(i);
        }
        fm = fm.select(labeled);
    }
    ExperimentResult result = run_experiment(fm, cfg.experiment);

    const fs::path json_path = cfg.out / "report.json";
    std::ofstream json = open_out(json_path);
    json << report_json(result.reports);
    finish(json, json_path);
    const fs::path csv_path = cfg.out / "report.csv";
    std::ofstream csv = open_out(csv_path);
    write_report_csv(csv, result.reports);
    finish(csv, csv_path);

    for (const auto& [index, model] : result.models) {
        const RunReport& r = result.reports[index];
        if (!r.best_n_c || *r.best_n_c != r.n_c) continue;
        const std::string name = r.model + "_" + std::string(to_string(r.task)) + "_" +
                                 std::string(to_string(r.composition)) + "_nc" + std::to_string(r.n_c) + ".sqmm";
        ensure_dir(cfg.out / "models");
        save_model(model, cfg.out / "models" / name);
    }
    return result;
}

void cmd_render(const PipelineConfig& cfg) {
    const std::vector<ProcessedSequence> seqs = process_all(cfg);
    if (cfg.render.sequence < 0 || static_cast<std::size_t>(cfg.render.sequence) >= seqs.size()) {
        throw Error(ErrorCode::InvalidArgument, "render sequence index out of range");
    }
    const MetaModel model = cfg.render.model.empty() ? fit_render_model(cfg, seqs)
                                                     : tagged(cfg.render.model, [&] { return load_model(cfg.render.model); });
    if (model.task != Task::Regress) throw Error(ErrorCode::InvalidArgument, "render needs a regression model");
    const auto idx = static_cast<std::size_t>(cfg.render.sequence);
    const ProcessedSequence& seq = seqs[idx];
    const int n_c = model_history(model, seq.num_classes);
    const FeatureMatrix rows = build_timeseries(seq.tracked, seq.metrics, seq.targets, n_c, cfg.render.sequence, true);
    const Eigen::VectorXd pred = rows.rows() > 0 ? model.predict(rows.features) : Eigen::VectorXd();

    std::map<int, std::map<std::int32_t, std::optional<double>>> truth_values, pred_values;
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        const RowKey& k = rows.keys[static_cast<std::size_t>(i)];
        if (rows.labeled(i)) truth_values[k.frame][k.seg_id] = rows.iou_adj[static_cast<std::size_t>(i)];
        pred_values[k.frame][k.seg_id] = pred[i];
    }

    std::vector<int> frames = cfg.render.frames;
    if (frames.empty()) {
        frames.resize(seq.tracked.frames.size());
        std::iota(frames.begin(), frames.end(), 0);
    }
    const std::string name = sequence_name(cfg.sequences[idx]);
    for (int t : frames) {
        if (t < 0 || static_cast<std::size_t>(t) >= seq.tracked.frames.size()) {
            throw Error(ErrorCode::InvalidArgument, "render frame out of range");
        }
        const SegmentFrame& sf = seq.tracked.frames[static_cast<std::size_t>(t)];
        std::map<std::int32_t, std::optional<double>> tv, pv;
        for (const Segment& s : sf.segments) {
            tv[s.id] = std::nullopt;
            pv[s.id] = std::nullopt;
        }
        for (const auto& [id, v] : truth_values[sf.frame_index]) tv[id] = v;
        for (const auto& [id, v] : pred_values[sf.frame_index]) pv[id] = v;
        const std::vector<RgbImage> panels = {render_classes(sf), render_quality(sf, tv), render_quality(sf, pv)};
        ensure_dir(cfg.out / "render");
        write_ppm(side_by_side(panels), cfg.out / "render" / (name + "_" + frame_name(t) + ".ppm"));
    }
}

void write_scene(const GeneratedScene& scene, const fs::path& dir) {
    ensure_dir(dir / "prob");
    ensure_dir(dir / "gt");
    ensure_dir(dir / "truth");
    for (std::size_t t = 0; t < scene.probs.size(); ++t) {
        const std::string file = frame_name(static_cast<int>(t)) + ".sqtf";
        store_tensor(scene.probs[t], dir / "prob" / file);
        store_tensor(scene.gt[t], dir / "gt" / file);
        store_tensor(scene.truth[t], dir / "truth" / file);
    }
}

void cmd_synth(const PipelineConfig& cfg) {
    std::vector<SceneSpec> specs;
    if (!cfg.synth.scenes.empty()) {
        for (const fs::path& p : cfg.synth.scenes) specs.push_back(tagged(p, [&] { return load_scene(p); }));
    } else {
        for (int i = 0; i < cfg.synth.sequences; ++i) {
            specs.push_back(random_scene(cfg.synth.population, derive_seed(cfg.seed, 5000 + static_cast<std::uint64_t>(i))));
        }
        for (int i = 0; i < cfg.synth.pseudo_sequences; ++i) {
            SceneSpec s = random_scene(cfg.synth.population, derive_seed(cfg.seed, 9000 + static_cast<std::uint64_t>(i)));
            s.provenance = Provenance::Pseudo;
            specs.push_back(std::move(s));
        }
    }
    PipelineConfig listing = cfg;
    listing.sequences.clear();
    listing.out = "out";
    for (std::size_t i = 0; i < specs.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "seq_%03zu", i);
        const fs::path dir = cfg.out / name;
        write_scene(generate(specs[i]), dir);
        const fs::path spec_path = dir / "scene.json";
        std::ofstream spec_out = open_out(spec_path);
        spec_out << scene_json(specs[i]);
        finish(spec_out, spec_path);
        listing.sequences.push_back(name);
    }
    const fs::path path = cfg.out / "pipeline.json";
    std::ofstream out = open_out(path);
    out << pipeline_config_json(listing);
    finish(out, path);
}

}  // namespace segqual
