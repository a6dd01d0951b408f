#include "segqual/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "segqual/error.hpp"

namespace segqual {
namespace {

class DisjointSet {
public:
    std::int32_t make() {
        parent_.push_back(static_cast<std::int32_t>(parent_.size()));
        return parent_.back();
    }

    std::int32_t find(std::int32_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    void unite(std::int32_t a, std::int32_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        // Smaller label wins so roots stay stable under path halving.
        if (b < a) std::swap(a, b);
        parent_[b] = a;
    }

private:
    std::vector<std::int32_t> parent_;
};

}  // namespace

std::vector<std::int32_t> label_components(std::span<const std::int32_t> values, int height, int width,
                                           std::int32_t skip_value, std::int32_t& num_components) {
    const std::size_t n = static_cast<std::size_t>(height) * width;
    std::vector<std::int32_t> provisional(n, -1);
    DisjointSet sets;

    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            const std::size_t idx = static_cast<std::size_t>(r) * width + c;
            const std::int32_t v = values[idx];
            if (v == skip_value) continue;
            std::int32_t label = -1;
            auto visit = [&](int rr, int cc) {
                if (rr < 0 || cc < 0 || cc >= width) return;
                const std::size_t nidx = static_cast<std::size_t>(rr) * width + cc;
                if (values[nidx] != v) return;
                if (label < 0) {
                    label = provisional[nidx];
                } else {
                    sets.unite(label, provisional[nidx]);
                }
            };
            visit(r, c - 1);
            visit(r - 1, c - 1);
            visit(r - 1, c);
            visit(r - 1, c + 1);
            provisional[idx] = label < 0 ? sets.make() : label;
        }
    }

    std::vector<std::int32_t> remap;
    std::vector<std::int32_t> ids(n, 0);
    std::int32_t next = 1;
    for (std::size_t i = 0; i < n; ++i) {
        if (provisional[i] < 0) continue;
        const std::int32_t root = sets.find(provisional[i]);
        if (static_cast<std::size_t>(root) >= remap.size()) remap.resize(root + 1, 0);
        if (remap[root] == 0) remap[root] = next++;
        ids[i] = remap[root];
    }
    num_components = next - 1;
    return ids;
}

Center geometric_center(std::span<const std::int32_t> pixels, int width) {
    if (pixels.empty()) throw Error(ErrorCode::EmptyRegion, "geometric center of an empty pixel set");
    double sum_r = 0.0;
    double sum_c = 0.0;
    for (std::int32_t p : pixels) {
        sum_r += p / width;
        sum_c += p % width;
    }
    const double n = static_cast<double>(pixels.size());
    return {sum_r / n, sum_c / n};
}

SegmentFrame connected_components(const LabelMap& labels, int frame_index) {
    const auto data = labels.data();
    if (std::find(data.begin(), data.end(), kIgnoreLabel) != data.end()) {
        throw Error(ErrorCode::ContainsIgnoreLabel, "prediction map contains the ignore label");
    }
    SegmentFrame frame;
    frame.frame_index = frame_index;
    frame.height = labels.height();
    frame.width = labels.width();
    std::int32_t count = 0;
    frame.component_map = label_components(data, frame.height, frame.width, INT32_MIN, count);
    frame.segments.resize(static_cast<std::size_t>(count));
    for (std::int32_t i = 0; i < count; ++i) frame.segments[i].id = i + 1;
    for (std::size_t idx = 0; idx < frame.component_map.size(); ++idx) {
        Segment& s = frame.segments[frame.component_map[idx] - 1];
        if (s.pixels.empty()) s.class_label = data[idx];
        s.pixels.push_back(static_cast<std::int32_t>(idx));
    }
    for (Segment& s : frame.segments) s.center = geometric_center(s.pixels, frame.width);
    return frame;
}

SegmentFrame split_interior_boundary(SegmentFrame frame) {
    const int h = frame.height;
    const int w = frame.width;
    for (Segment& s : frame.segments) {
        s.interior.clear();
        s.boundary.clear();
        for (std::int32_t p : s.pixels) {
            const int r = p / w;
            const int c = p % w;
            bool inside = r > 0 && c > 0 && r < h - 1 && c < w - 1;
            for (int dr = -1; inside && dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    if (frame.component_map[static_cast<std::size_t>(r + dr) * w + (c + dc)] != s.id) {
                        inside = false;
                        break;
                    }
                }
            }
            (inside ? s.interior : s.boundary).push_back(p);
        }
    }
    return frame;
}

SegmentFrame segment_frame(const LabelMap& labels, int frame_index) {
    return split_interior_boundary(connected_components(labels, frame_index));
}

PixelDispersion pixel_dispersion(std::span<const float> probs) {
    const std::size_t c = probs.size();
    double total = 0.0;
    for (float p : probs) total += p;
    double entropy = 0.0;
    double first = 0.0;
    double second = 0.0;
    for (float raw : probs) {
        const double p = raw / total;
        if (p > 0.0) entropy -= p * std::log(p);
        if (p > first) {
            second = first;
            first = p;
        } else if (p > second) {
            second = p;
        }
    }
    PixelDispersion d;
    d.entropy = std::clamp(entropy / std::log(static_cast<double>(c)), 0.0, 1.0);
    d.variation_ratio = std::clamp(1.0 - first, 0.0, 1.0);
    d.margin = std::clamp(1.0 - first + second, d.variation_ratio, 1.0);
    return d;
}

DispersionMaps dispersion_maps(const ProbTensor& tensor) {
    DispersionMaps maps;
    maps.height = tensor.height();
    maps.width = tensor.width();
    const std::size_t n = tensor.num_pixels();
    maps.entropy.resize(n);
    maps.variation_ratio.resize(n);
    maps.margin.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const PixelDispersion d = pixel_dispersion(tensor.pixel(i));
        maps.entropy[i] = d.entropy;
        maps.variation_ratio[i] = d.variation_ratio;
        maps.margin[i] = d.margin;
    }
    return maps;
}

}  // namespace segqual
