#include "segqual/groundtruth.hpp"

#include <algorithm>
#include <functional>

#include "segqual/error.hpp"

namespace segqual {
namespace {

struct GtComponents {
    std::vector<std::int32_t> comp;                 // 0 for ignore pixels
    std::vector<std::vector<std::int32_t>> pixels;  // index id - 1
};

GtComponents gt_components(const LabelMap& gt) {
    GtComponents out;
    std::int32_t count = 0;
    out.comp = label_components(gt.data(), gt.height(), gt.width(), kIgnoreLabel, count);
    out.pixels.resize(static_cast<std::size_t>(count));
    for (std::size_t i = 0; i < out.comp.size(); ++i) {
        if (out.comp[i] > 0) out.pixels[out.comp[i] - 1].push_back(static_cast<std::int32_t>(i));
    }
    return out;
}

struct Scores {
    double iou;
    double iou_adj;
};

Scores score(std::span<const std::int32_t> k, std::int32_t k_class, const LabelMap& gt, const GtComponents& comps,
             const std::function<bool(std::int32_t)>& claimed_by_sibling) {
    std::int64_t valid = 0;
    std::int64_t inter = 0;
    std::vector<std::int32_t> hit;
    for (std::int32_t p : k) {
        if (static_cast<std::size_t>(p) >= gt.num_pixels()) {
            throw Error(ErrorCode::DimMismatch, "segment pixel outside the ground-truth map");
        }
        const std::int32_t v = gt[static_cast<std::size_t>(p)];
        if (v == kIgnoreLabel) continue;
        ++valid;
        if (v == k_class) {
            ++inter;
            hit.push_back(comps.comp[p]);
        }
    }
    if (inter == 0) return {0.0, 0.0};
    std::sort(hit.begin(), hit.end());
    hit.erase(std::unique(hit.begin(), hit.end()), hit.end());
    std::int64_t q = 0;
    std::int64_t claimed = 0;
    for (std::int32_t c : hit) {
        const auto& px = comps.pixels[c - 1];
        q += static_cast<std::int64_t>(px.size());
        for (std::int32_t p : px) {
            if (claimed_by_sibling(p)) ++claimed;
        }
    }
    const std::int64_t uni = valid + q - inter;
    return {static_cast<double>(inter) / static_cast<double>(uni),
            static_cast<double>(inter) / static_cast<double>(uni - claimed)};
}

}  // namespace

double iou(const Segment& k, const LabelMap& gt) {
    return score(k.pixels, k.class_label, gt, gt_components(gt), [](std::int32_t) { return false; }).iou;
}

double iou_adj(const Segment& k, const LabelMap& gt, std::span<const Segment> others) {
    std::vector<char> claimed(gt.num_pixels(), 0);
    for (const Segment& o : others) {
        if (o.id == k.id || o.class_label != k.class_label) continue;
        for (std::int32_t p : o.pixels) {
            if (static_cast<std::size_t>(p) >= claimed.size()) {
                throw Error(ErrorCode::DimMismatch, "segment pixel outside the ground-truth map");
            }
            claimed[p] = 1;
        }
    }
    // Pixels of k itself never count as claimed.
    for (std::int32_t p : k.pixels) {
        if (static_cast<std::size_t>(p) < claimed.size()) claimed[p] = 0;
    }
    return score(k.pixels, k.class_label, gt, gt_components(gt), [&](std::int32_t p) { return claimed[p] != 0; })
        .iou_adj;
}

std::vector<TargetRecord> frame_targets(const SegmentFrame& frame, const LabelMap& gt) {
    if (frame.height != gt.height() || frame.width != gt.width()) {
        throw Error(ErrorCode::DimMismatch, "ground truth and prediction differ in size");
    }
    const GtComponents comps = gt_components(gt);
    std::vector<TargetRecord> out;
    out.reserve(frame.segments.size());
    for (const Segment& k : frame.segments) {
        const Scores s = score(k.pixels, k.class_label, gt, comps, [&](std::int32_t p) {
            const std::int32_t id = frame.component_map[p];
            return id != k.id && frame.segment(id).class_label == k.class_label;
        });
        TargetRecord t;
        t.frame = frame.frame_index;
        t.seg_id = k.id;
        t.iou = s.iou;
        t.iou_adj = s.iou_adj;
        t.fp_label = s.iou_adj == 0.0 ? 1 : 0;
        t.provenance = gt.provenance();
        out.push_back(t);
    }
    return out;
}

void attach_targets(std::span<MetricRecord> records, const std::map<int, std::vector<TargetRecord>>& targets_by_frame) {
    for (MetricRecord& r : records) {
        r.iou_adj.reset();
        const auto it = targets_by_frame.find(r.frame);
        if (it == targets_by_frame.end()) continue;
        for (const TargetRecord& t : it->second) {
            if (t.seg_id == r.seg_id) {
                r.iou_adj = t.iou_adj;
                break;
            }
        }
    }
}

}  // namespace segqual
