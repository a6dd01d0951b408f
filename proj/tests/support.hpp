// Test helpers and independent oracles. Nothing here calls into the code
// under test except for plain data types.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "segqual/error.hpp"
#include "segqual/segmentation.hpp"
#include "segqual/tensor_io.hpp"

namespace testing {

/// Error code thrown by f, or nullopt when it returns normally.
template <class F>
std::optional<segqual::ErrorCode> error_of(F&& f) {
    try {
        f();
    } catch (const segqual::Error& e) {
        return e.code();
    }
    return std::nullopt;
}

#define CHECK_ERROR(expr, code) CHECK(::testing::error_of([&] { (void)(expr); }) == std::optional(code))

/// Label map from rows of digit characters.
inline segqual::LabelMap labels_from(const std::vector<std::string>& rows) {
    std::vector<std::int32_t> data;
    for (const auto& r : rows) {
        for (char ch : r) data.push_back(ch == '.' ? -1 : ch - '0');
    }
    return segqual::LabelMap(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()), data);
}

/// One-hot tensor of a label map.
inline segqual::ProbTensor one_hot(const segqual::LabelMap& labels, int c) {
    std::vector<float> data(labels.num_pixels() * static_cast<std::size_t>(c), 0.0f);
    for (std::size_t p = 0; p < labels.num_pixels(); ++p) data[p * c + labels[p]] = 1.0f;
    return segqual::ProbTensor(labels.height(), labels.width(), c, data);
}

/// Random softmax field from the std library generators (independent of the
/// library's own RNG helpers).
inline segqual::ProbTensor random_tensor(int h, int w, int c, std::mt19937& gen) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<float> data;
    for (int p = 0; p < h * w; ++p) {
        std::vector<double> v(c);
        double total = 0;
        for (double& x : v) {
            x = std::pow(u(gen), 3.0);
            total += x;
        }
        for (double x : v) data.push_back(static_cast<float>(x / total));
    }
    return segqual::ProbTensor(h, w, c, data);
}

/// 8-connected flood fill; ids in raster order of each region's first pixel.
inline std::vector<std::int32_t> flood_fill(const std::vector<std::int32_t>& values, int h, int w) {
    std::vector<std::int32_t> ids(values.size(), 0);
    std::int32_t next = 0;
    for (int start = 0; start < h * w; ++start) {
        if (ids[start]) continue;
        ids[start] = ++next;
        std::deque<int> queue{start};
        while (!queue.empty()) {
            const int p = queue.front();
            queue.pop_front();
            const int r = p / w, c = p % w;
            for (int dr = -1; dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (rr < 0 || cc < 0 || rr >= h || cc >= w) continue;
                    const int q = rr * w + cc;
                    if (!ids[q] && values[q] == values[p]) {
                        ids[q] = next;
                        queue.push_back(q);
                    }
                }
            }
        }
    }
    return ids;
}

inline double brute_min_distance(const std::vector<std::int32_t>& a, const std::vector<std::int32_t>& b, int w) {
    double best = INFINITY;
    for (int p : a) {
        for (int q : b) best = std::min(best, std::hypot(double(p / w - q / w), double(p % w - q % w)));
    }
    return best;
}

/// Exhaustive IoU_adj over explicit pixel sets.
struct IouOracle {
    double iou = 0;
    double iou_adj = 0;
};

inline IouOracle iou_oracle(const segqual::SegmentFrame& sf, const segqual::LabelMap& gt, std::int32_t seg_id) {
    const int h = sf.height, w = sf.width;
    const auto& k = sf.segment(seg_id);
    std::set<int> kset;
    for (int p : k.pixels) {
        if (gt[p] != -1) kset.insert(p);
    }
    // Same-class gt components (8-connected) touching k.
    std::vector<std::int32_t> gvals(gt.data().begin(), gt.data().end());
    const auto comp = flood_fill(gvals, h, w);
    std::set<int> touched;
    for (int p : kset) {
        if (gt[p] == k.class_label) touched.insert(comp[p]);
    }
    std::set<int> q;
    for (int p = 0; p < h * w; ++p) {
        if (gt[p] == k.class_label && touched.count(comp[p])) q.insert(p);
    }
    std::set<int> claimed;
    for (const auto& o : sf.segments) {
        if (o.id == seg_id || o.class_label != k.class_label) continue;
        for (int p : o.pixels) {
            if (q.count(p) && !kset.count(p)) claimed.insert(p);
        }
    }
    std::set<int> inter, uni;
    std::set_intersection(kset.begin(), kset.end(), q.begin(), q.end(), std::inserter(inter, inter.end()));
    std::set_union(kset.begin(), kset.end(), q.begin(), q.end(), std::inserter(uni, uni.end()));
    IouOracle out;
    if (inter.empty()) return out;
    out.iou = double(inter.size()) / double(uni.size());
    out.iou_adj = double(inter.size()) / double(uni.size() - claimed.size());
    return out;
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("segqual_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing

namespace testing {

struct Rect {
    int row, col, height, width, cls;
};

/// Rectangles painted in order over a class-0 background.
inline segqual::LabelMap paint(int h, int w, const std::vector<Rect>& rects) {
    std::vector<std::int32_t> v(static_cast<std::size_t>(h) * w, 0);
    for (const auto& r : rects) {
        for (int y = std::max(0, r.row); y < std::min(h, r.row + r.height); ++y) {
            for (int x = std::max(0, r.col); x < std::min(w, r.col + r.width); ++x) v[y * w + x] = r.cls;
        }
    }
    return segqual::LabelMap(h, w, v);
}

inline segqual::SegmentFrame painted_frame(int h, int w, const std::vector<Rect>& rects, int index = 0) {
    return segqual::segment_frame(paint(h, w, rects), index);
}

}  // namespace testing
