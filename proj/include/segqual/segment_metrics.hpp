#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "segqual/segmentation.hpp"
#include "segqual/tensor_io.hpp"

namespace segqual {

/// Number of metrics that do not depend on the class count: 15 dispersion,
/// 5 size and 2 center features.
inline constexpr int kBaseMetricCount = 22;

/// Dispersion statistics of one heatmap aggregated over a segment.
struct DispersionStats {
    double mean = 0.0;
    double mean_in = 0.0;
    double mean_bd = 0.0;
    double rel = 0.0;     // mean * S_rel
    double rel_in = 0.0;  // mean_in * S_rel_in
};

struct MetricRecord {
    int frame = 0;
    std::int32_t seg_id = 0;
    std::int32_t track_id = -1;  // -1 until the tracker assigns one
    std::int32_t class_label = 0;
    std::int64_t size = 0;
    std::int64_t size_in = 0;
    std::int64_t size_bd = 0;
    double size_rel = 0.0;     // S / S_bd
    double size_rel_in = 0.0;  // S_in / S_bd
    Center center;
    DispersionStats entropy;
    DispersionStats variation_ratio;
    DispersionStats margin;
    std::vector<double> class_probs;
    std::optional<double> iou_adj;

    int num_classes() const noexcept { return static_cast<int>(class_probs.size()); }

    /// S, S_in, S_bd, S_rel, S_rel_in, cy, cx, then E/V/M blocks
    /// (mean, in, bd, rel, rel_in), then P_0..P_{c-1}.
    std::vector<double> features() const;
};

/// Names matching MetricRecord::features.
std::vector<std::string> feature_names(int num_classes);

enum class Region { All, Interior, Boundary };

double mean_dispersion(const Segment& segment, std::span<const double> heatmap, Region region);

std::vector<double> mean_class_probs(const Segment& segment, const ProbTensor& tensor);

/// Requires split_interior_boundary to have run; throws EmptyInterior for
/// segments without interior pixels.
MetricRecord build_metric_record(const Segment& segment, const DispersionMaps& maps,
                                 const ProbTensor& tensor, int frame);

/// Records for every segment with a non-empty interior, in segment id order.
std::vector<MetricRecord> frame_metrics(const SegmentFrame& frame, const DispersionMaps& maps,
                                        const ProbTensor& tensor);

/// Column names of the metrics CSV for a given class count.
std::vector<std::string> metrics_csv_header(int num_classes);

void write_metrics_csv(std::ostream& out, std::span<const MetricRecord> records, int num_classes);
std::vector<MetricRecord> read_metrics_csv(std::istream& in);

}  // namespace segqual
