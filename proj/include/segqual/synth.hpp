#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "segqual/tensor_io.hpp"
#include "segqual/tracker.hpp"

namespace segqual {

enum class BlobShape : std::uint8_t { Disk, Rectangle };

struct Waypoint {
    double frame = 0;
    double row = 0;
    double col = 0;
};

/// Linear motion from `start` with `velocity`, or piecewise-linear motion
/// through waypoints (held constant outside their frame range).
struct Trajectory {
    double row = 0;
    double col = 0;
    double v_row = 0;
    double v_col = 0;
    std::vector<Waypoint> waypoints;

    Center at(int frame) const;
};

/// Frames [begin, end) in which a blob is visible.
struct Window {
    int begin = 0;
    int end = 0;
};

struct BlobSpec {
    BlobShape shape = BlobShape::Disk;
    double radius = 8;       // disk radius, or half height of a rectangle
    double half_width = 8;   // rectangle only
    std::int32_t class_label = 1;
    /// Class predicted inside the corruption region; -1 picks the next
    /// foreground class.
    std::int32_t confuser = -1;
    Trajectory trajectory;
    std::vector<Window> visible;  // empty means always visible
    double rho = 0;               // corruption level in [0, 1]
    bool ghost = false;           // predicted but absent from ground truth

    bool visible_at(int frame) const;
};

struct NoiseSpec {
    double temperature = 1.0;
    double base_margin = 8.0;
    /// Width in pixels of the margin ramp at blob edges; 0 disables blur.
    double blur_width = 2.0;
    /// A pixel is predicted as the confuser class where smooth value noise
    /// falls below rho * flip_scale.
    double flip_scale = 0.7;
    double noise_cell = 6.0;  // lattice spacing of the value noise, pixels
    /// Log-normal spread of a per-(blob, frame) temperature factor.
    double temperature_jitter = 0.0;
    /// Stationary std and AR(1) coefficient of a per-frame drift added to rho.
    double rho_drift = 0.0;
    double drift_coeff = 0.8;
};

struct SceneSpec {
    int height = 64;
    int width = 64;
    int num_classes = 3;
    int frames = 20;
    std::int32_t background = 0;
    std::vector<BlobSpec> blobs;
    NoiseSpec noise;
    Provenance provenance = Provenance::Real;
    std::uint64_t seed = 0;
};

SceneSpec parse_scene_json(const std::string& text);
std::string scene_json(const SceneSpec& spec);
SceneSpec load_scene(const std::filesystem::path& path);

struct GeneratedScene {
    std::vector<ProbTensor> probs;
    std::vector<LabelMap> gt;
    /// Per pixel: 1 + index of the visible non-ghost blob on top, else 0.
    std::vector<LabelMap> truth;
};

/// Throws BlobOutOfBounds when a blob leaves the image in a visible frame,
/// InvalidArgument for other malformed specs.
GeneratedScene generate(const SceneSpec& spec);

struct PopulationSpec {
    int height = 72;
    int width = 96;
    int num_classes = 4;
    int frames = 12;
    int min_blobs = 3;
    int max_blobs = 5;
    double min_radius = 5;
    double max_radius = 11;
    double max_speed = 2.5;
    double ghost_probability = 0.15;
    double waypoint_probability = 0.3;
    NoiseSpec noise;
};

/// Random scene with rho ~ U(0, 1) per blob and in-bounds trajectories.
SceneSpec random_scene(const PopulationSpec& pop, std::uint64_t seed);

/// Mean over true objects of the fraction of visible frames whose
/// best-overlapping same-class predicted segment carries the object's modal
/// track id.
double id_consistency(const TrackedSequence& tracked, std::span<const LabelMap> truth,
                      std::span<const LabelMap> gt);

}  // namespace segqual
