#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "segqual/segment_metrics.hpp"
#include "segqual/segmentation.hpp"
#include "segqual/tensor_io.hpp"

namespace segqual {

struct TargetRecord {
    int frame = 0;
    std::int32_t seg_id = 0;
    double iou = 0.0;
    double iou_adj = 0.0;
    int fp_label = 0;  // 1 iff iou_adj == 0
    Provenance provenance = Provenance::Real;
};

/// Plain IoU of k against the union G of same-class ground-truth components
/// that intersect k. Ignore pixels (-1) are removed from both sets.
double iou(const Segment& k, const LabelMap& gt);

/// Like iou but pixels of G claimed by other same-class predicted segments
/// are dropped from the union, so a fragmented object is not penalized once
/// per fragment. `others` may include k itself; it is skipped by id.
double iou_adj(const Segment& k, const LabelMap& gt, std::span<const Segment> others);

/// Targets for every segment of a predicted frame.
std::vector<TargetRecord> frame_targets(const SegmentFrame& frame, const LabelMap& gt);

/// Sets iou_adj on records whose frame has targets; all others become unknown.
void attach_targets(std::span<MetricRecord> records, const std::map<int, std::vector<TargetRecord>>& targets_by_frame);

}  // namespace segqual
