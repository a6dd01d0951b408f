#include "segqual/segment_metrics.hpp"

#include <istream>
#include <ostream>

#include "segqual/csv.hpp"
#include "segqual/error.hpp"

namespace segqual {
namespace {

constexpr std::array<const char*, 3> kHeatmapNames = {"E", "V", "M"};

DispersionStats dispersion_stats(const Segment& segment, std::span<const double> map, double size_rel,
                                 double size_rel_in) {
    DispersionStats s;
    s.mean = mean_dispersion(segment, map, Region::All);
    s.mean_in = mean_dispersion(segment, map, Region::Interior);
    s.mean_bd = mean_dispersion(segment, map, Region::Boundary);
    s.rel = s.mean * size_rel;
    s.rel_in = s.mean_in * size_rel_in;
    return s;
}

void append(std::vector<double>& out, const DispersionStats& s) {
    out.insert(out.end(), {s.mean, s.mean_in, s.mean_bd, s.rel, s.rel_in});
}

}  // namespace

std::vector<double> MetricRecord::features() const {
    std::vector<double> f;
    f.reserve(kBaseMetricCount + class_probs.size());
    f.insert(f.end(), {static_cast<double>(size), static_cast<double>(size_in), static_cast<double>(size_bd),
                       size_rel, size_rel_in, center.row, center.col});
    append(f, entropy);
    append(f, variation_ratio);
    append(f, margin);
    f.insert(f.end(), class_probs.begin(), class_probs.end());
    return f;
}

std::vector<std::string> feature_names(int num_classes) {
    std::vector<std::string> names = {"S", "S_in", "S_bd", "S_rel", "S_rel_in", "cy", "cx"};
    for (const char* d : kHeatmapNames) {
        const std::string b = d;
        names.insert(names.end(), {b, b + "_in", b + "_bd", b + "_rel", b + "_rel_in"});
    }
    for (int y = 0; y < num_classes; ++y) names.push_back("P_" + std::to_string(y));
    return names;
}

double mean_dispersion(const Segment& segment, std::span<const double> heatmap, Region region) {
    const std::vector<std::int32_t>& pixels = region == Region::All        ? segment.pixels
                                              : region == Region::Interior ? segment.interior
                                                                           : segment.boundary;
    if (pixels.empty()) {
        throw Error(ErrorCode::EmptyRegion, "segment " + std::to_string(segment.id) + " has an empty region");
    }
    double sum = 0.0;
    for (std::int32_t p : pixels) sum += heatmap[p];
    return sum / static_cast<double>(pixels.size());
}

std::vector<double> mean_class_probs(const Segment& segment, const ProbTensor& tensor) {
    if (segment.pixels.empty()) throw Error(ErrorCode::EmptyRegion, "empty segment");
    std::vector<double> probs(static_cast<std::size_t>(tensor.num_classes()), 0.0);
    for (std::int32_t p : segment.pixels) {
        const auto px = tensor.pixel(static_cast<std::size_t>(p));
        for (std::size_t y = 0; y < probs.size(); ++y) probs[y] += px[y];
    }
    for (double& v : probs) v /= static_cast<double>(segment.pixels.size());
    return probs;
}

MetricRecord build_metric_record(const Segment& segment, const DispersionMaps& maps, const ProbTensor& tensor,
                                 int frame) {
    if (segment.interior.empty()) {
        throw Error(ErrorCode::EmptyInterior, "segment " + std::to_string(segment.id) + " has no interior");
    }
    MetricRecord r;
    r.frame = frame;
    r.seg_id = segment.id;
    r.class_label = segment.class_label;
    r.size = static_cast<std::int64_t>(segment.pixels.size());
    r.size_in = static_cast<std::int64_t>(segment.interior.size());
    r.size_bd = static_cast<std::int64_t>(segment.boundary.size());
    r.size_rel = static_cast<double>(r.size) / static_cast<double>(r.size_bd);
    r.size_rel_in = static_cast<double>(r.size_in) / static_cast<double>(r.size_bd);
    r.center = segment.center;
    r.entropy = dispersion_stats(segment, maps.entropy, r.size_rel, r.size_rel_in);
    r.variation_ratio = dispersion_stats(segment, maps.variation_ratio, r.size_rel, r.size_rel_in);
    r.margin = dispersion_stats(segment, maps.margin, r.size_rel, r.size_rel_in);
    r.class_probs = mean_class_probs(segment, tensor);
    return r;
}

std::vector<MetricRecord> frame_metrics(const SegmentFrame& frame, const DispersionMaps& maps,
                                        const ProbTensor& tensor) {
    std::vector<MetricRecord> out;
    for (const Segment& s : frame.segments) {
        if (s.interior.empty()) continue;
        out.push_back(build_metric_record(s, maps, tensor, frame.frame_index));
    }
    return out;
}

std::vector<std::string> metrics_csv_header(int num_classes) {
    std::vector<std::string> cols = {"frame", "seg_id", "track_id", "class"};
    for (auto& n : feature_names(num_classes)) cols.push_back(std::move(n));
    cols.push_back("iou_adj");
    return cols;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricRecord> records, int num_classes) {
    const auto header = metrics_csv_header(num_classes);
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    for (const MetricRecord& r : records) {
        if (r.num_classes() != num_classes) {
            throw Error(ErrorCode::DimMismatch, "record class count differs from header");
        }
        out << r.frame << ',' << r.seg_id << ',' << r.track_id << ',' << r.class_label;
        for (double v : r.features()) out << ',' << csv::format(v);
        out << ',';
        if (r.iou_adj) out << csv::format(*r.iou_adj);
        out << '\n';
    }
}

std::vector<MetricRecord> read_metrics_csv(std::istream& in) {
    std::vector<std::string> fields;
    if (!csv::read_row(in, fields)) throw Error(ErrorCode::InvalidArgument, "empty metrics CSV");
    const int fixed = 4 + kBaseMetricCount + 1;
    const int num_classes = static_cast<int>(fields.size()) - fixed;
    if (num_classes < 2 || fields != metrics_csv_header(num_classes)) {
        throw Error(ErrorCode::InvalidArgument, "unexpected metrics CSV header");
    }
    std::vector<MetricRecord> records;
    while (csv::read_row(in, fields)) {
        if (static_cast<int>(fields.size()) != fixed + num_classes) {
            throw Error(ErrorCode::DimMismatch, "metrics CSV row has wrong field count");
        }
        MetricRecord r;
        r.frame = static_cast<int>(csv::parse_int(fields[0]));
        r.seg_id = static_cast<std::int32_t>(csv::parse_int(fields[1]));
        r.track_id = static_cast<std::int32_t>(csv::parse_int(fields[2]));
        r.class_label = static_cast<std::int32_t>(csv::parse_int(fields[3]));
        std::vector<double> f;
        for (int i = 0; i < kBaseMetricCount + num_classes; ++i) f.push_back(csv::parse_double(fields[4 + i]));
        r.size = static_cast<std::int64_t>(f[0]);
        r.size_in = static_cast<std::int64_t>(f[1]);
        r.size_bd = static_cast<std::int64_t>(f[2]);
        r.size_rel = f[3];
        r.size_rel_in = f[4];
        r.center = {f[5], f[6]};
        DispersionStats* blocks[] = {&r.entropy, &r.variation_ratio, &r.margin};
        for (int b = 0; b < 3; ++b) {
            const double* p = f.data() + 7 + 5 * b;
            *blocks[b] = {p[0], p[1], p[2], p[3], p[4]};
        }
        r.class_probs.assign(f.begin() + kBaseMetricCount, f.end());
        if (!fields.back().empty()) r.iou_adj = csv::parse_double(fields.back());
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace segqual
