#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include "segqual/segmentation.hpp"

namespace segqual {

struct TrackerConfig {
    double c_near = 10.0;  // aggregation distance, pixels
    double c_over = 0.35;  // overlap acceptance ratio
    double c_dist = 100.0; // center distance for the shift fallback, pixels
    double c_lin = 50.0;   // regression prediction radius, pixels
    int n_lr = 10;         // regression window, frames

    // Ablation switches; all on reproduces the full five-step matcher.
    bool enable_shift = true;
    bool enable_overlap = true;
    bool enable_regression = true;

    void validate() const;
};

/// A Step 1 group: one or more same-class segments closer than c_near that
/// are tracked as a single object.
struct Entity {
    std::int32_t class_label = 0;
    std::vector<std::int32_t> members;  // segment ids, ascending
    std::vector<std::int32_t> pixels;   // union of member pixels, ascending
    Center center;
    std::int32_t track_id = -1;

    std::int64_t size() const noexcept { return static_cast<std::int64_t>(pixels.size()); }
};

struct AggregatedFrame {
    int position = 0;  // index within the sequence
    int height = 0;
    int width = 0;
    /// Sorted by size descending, ties by smallest member id.
    std::vector<Entity> entities;
    /// Entity index per pixel.
    std::vector<std::int32_t> entity_map;
};

struct TrackPoint {
    int position = 0;
    Center center;
    std::int64_t size = 0;
    std::int32_t entity = 0;  // index into the AggregatedFrame at that position
};

struct TrackInfo {
    std::int32_t class_label = 0;
    std::vector<TrackPoint> points;  // strictly increasing positions
};

/// Tracker memory carried from frame to frame.
struct TrackerState {
    std::deque<AggregatedFrame> window;  // back() is the previous frame
    std::map<std::int32_t, TrackInfo> tracks;
    std::int32_t next_id = 1;

    const AggregatedFrame* frame_at(int position) const;
    const TrackPoint* point_at(std::int32_t track_id, int position) const;
};

/// |j ∩ k| / |j| for ascending pixel index sets.
double overlap(std::span<const std::int32_t> j, std::span<const std::int32_t> k);

/// Minimum Euclidean pixel distance, evaluated on boundary pixels only.
/// Requires split_interior_boundary to have populated the boundary sets.
double min_segment_distance(const Segment& a, const Segment& b, int width);

/// Step 1: union of same-class segment pairs closer than c_near.
AggregatedFrame step1_aggregate(const SegmentFrame& frame, int position, const TrackerConfig& cfg);

/// Step 2: match tracks of the previous frame after shifting them by their
/// last displacement, falling back to center distance.
void step2_shift_match(const TrackerState& state, AggregatedFrame& cur, const TrackerConfig& cfg);

/// Step 3: unshifted overlap with the previous frame.
void step3_overlap_match(const TrackerState& state, AggregatedFrame& cur, const TrackerConfig& cfg);

/// Step 4: linear extrapolation of track centers over the last n_lr frames.
void step4_regression_match(const TrackerState& state, AggregatedFrame& cur, const TrackerConfig& cfg);

/// Step 5: fresh ids for every entity still unmatched.
void step5_new_ids(TrackerState& state, AggregatedFrame& cur);

/// Runs steps 1-5 on the next frame and records the result in the state.
const AggregatedFrame& track_next(TrackerState& state, const SegmentFrame& frame, const TrackerConfig& cfg);

struct TrackObservation {
    int frame = 0;
    std::vector<std::int32_t> segment_ids;
    Center center;
    std::int64_t size = 0;
};

struct TrackedSequence {
    std::vector<SegmentFrame> frames;
    /// track_ids[t][i] is the track of frames[t].segments[i].
    std::vector<std::vector<std::int32_t>> track_ids;
    std::map<std::int32_t, std::vector<TrackObservation>> histories;

    std::int32_t track_of(std::size_t t, std::int32_t seg_id) const {
        return track_ids.at(t).at(static_cast<std::size_t>(seg_id - 1));
    }
};

/// Throws DimMismatch when frames differ in size.
TrackedSequence track_sequence(std::span<const SegmentFrame> frames, const TrackerConfig& cfg);

/// Rebuilds a TrackedSequence from segment frames and stored assignments.
TrackedSequence attach_track_ids(std::vector<SegmentFrame> frames,
                                 std::vector<std::vector<std::int32_t>> track_ids);

/// CSV `frame,seg_id,track_id,class,cy,cx,S`, one row per segment.
void write_track_csv(std::ostream& out, const TrackedSequence& seq);

/// Reads track ids back as [frame position][segment index]; frame_count and
/// segment counts must match the CSV.
std::vector<std::vector<std::int32_t>> read_track_csv(std::istream& in, std::span<const SegmentFrame> frames);

}  // namespace segqual
