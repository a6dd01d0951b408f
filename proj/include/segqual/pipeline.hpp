#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "segqual/dataset.hpp"
#include "segqual/evaluation.hpp"
#include "segqual/groundtruth.hpp"
#include "segqual/synth.hpp"
#include "segqual/tracker.hpp"

namespace segqual {

struct RenderOptions {
    /// Model file to render with; when empty a GB regressor is fitted on the
    /// dataset first.
    std::filesystem::path model;
    int sequence = 0;          // index into PipelineConfig::sequences
    std::vector<int> frames;   // frame positions; empty renders all
};

struct SynthOptions {
    int sequences = 30;
    int pseudo_sequences = 0;
    PopulationSpec population;
    /// Explicit scene specs; when non-empty they replace the random population.
    std::vector<std::filesystem::path> scenes;
};

struct PipelineConfig {
    /// Sequence directories holding prob/frame_NNNN.sqtf and optionally gt/.
    std::vector<std::filesystem::path> sequences;
    TrackerConfig tracker;
    int history = kMaxHistory;  // lag blocks stored in the dataset
    ExperimentConfig experiment;
    std::filesystem::path dataset;  // read this dataset CSV instead of building one
    std::filesystem::path out = "out";
    RenderOptions render;
    SynthOptions synth;
    std::uint64_t seed = 0;
};

/// Parses a JSON config. Relative paths are resolved against `base`.
PipelineConfig parse_pipeline_config(const std::string& text, const std::filesystem::path& base = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
std::string pipeline_config_json(const PipelineConfig& cfg);

struct SequenceInput {
    std::string name;
    std::vector<ProbTensor> probs;
    std::vector<std::optional<LabelMap>> gt;  // nullopt: no ground truth for the frame
};

/// Reads `<dir>/prob/frame_NNNN.sqtf` in name order and the matching gt
/// files. Throws IoFailure for a missing directory or an empty prob/.
SequenceInput load_sequence(const std::filesystem::path& dir);

struct ProcessedSequence {
    TrackedSequence tracked;
    std::vector<MetricRecord> metrics;  // with track ids and targets attached
    std::map<int, std::vector<TargetRecord>> targets;
    int num_classes = 0;
};

ProcessedSequence process_sequence(const SequenceInput& input, const TrackerConfig& cfg);

/// Labeled rows of every sequence with `history` lag blocks.
FeatureMatrix build_dataset(const std::vector<ProcessedSequence>& sequences, int history,
                            bool include_unlabeled = false);

// Subcommands. Each writes into cfg.out and is byte-deterministic.
void cmd_track(const PipelineConfig& cfg);
void cmd_metrics(const PipelineConfig& cfg);
void cmd_dataset(const PipelineConfig& cfg);
ExperimentResult cmd_train_eval(const PipelineConfig& cfg);
void cmd_render(const PipelineConfig& cfg);
/// Writes sequences under cfg.out plus a pipeline.json that lists them.
void cmd_synth(const PipelineConfig& cfg);

/// Writes a generated scene as a sequence directory (prob/, gt/, truth/).
void write_scene(const GeneratedScene& scene, const std::filesystem::path& dir);

}  // namespace segqual
