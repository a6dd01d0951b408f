#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "segqual/tensor_io.hpp"

namespace segqual {

struct Center {
    double row = 0.0;
    double col = 0.0;

    friend bool operator==(const Center&, const Center&) = default;
};

/// A maximal 8-connected region of one predicted class. Pixel sets hold
/// row-major linear indices in ascending order.
struct Segment {
    std::int32_t id = 0;
    std::int32_t class_label = 0;
    std::vector<std::int32_t> pixels;
    std::vector<std::int32_t> interior;
    std::vector<std::int32_t> boundary;
    Center center;

    std::size_t size() const noexcept { return pixels.size(); }
};

struct SegmentFrame {
    int frame_index = 0;
    int height = 0;
    int width = 0;
    /// Segment id per pixel; ids start at 1 and follow raster discovery order.
    std::vector<std::int32_t> component_map;
    /// segments[i].id == i + 1.
    std::vector<Segment> segments;

    const Segment& segment(std::int32_t id) const { return segments.at(static_cast<std::size_t>(id - 1)); }
    std::size_t num_pixels() const noexcept { return static_cast<std::size_t>(height) * width; }
};

/// Labels 8-connected same-value regions with a two-pass union-find scan.
/// Pixels equal to skip_value get id 0 and never join a component. Returns the
/// per-pixel ids (raster discovery order from 1) and writes the count.
std::vector<std::int32_t> label_components(std::span<const std::int32_t> values, int height, int width,
                                           std::int32_t skip_value, std::int32_t& num_components);

/// Throws ContainsIgnoreLabel if the map holds -1. Interior/boundary sets are
/// left empty; see split_interior_boundary.
SegmentFrame connected_components(const LabelMap& labels, int frame_index = 0);

/// A pixel is interior iff all eight neighbours exist in-image and carry the
/// same segment id. Image-border pixels are therefore always boundary.
SegmentFrame split_interior_boundary(SegmentFrame frame);

/// connected_components followed by split_interior_boundary.
SegmentFrame segment_frame(const LabelMap& labels, int frame_index = 0);

/// Mean (row, col) of the given linear pixel indices.
Center geometric_center(std::span<const std::int32_t> pixels, int width);
inline Center geometric_center(const Segment& segment, int width) {
    return geometric_center(segment.pixels, width);
}

struct PixelDispersion {
    double entropy = 0.0;
    double variation_ratio = 0.0;
    double margin = 0.0;
};

/// Normalized entropy, variation ratio and probability margin of one softmax
/// vector. The vector is renormalized in double precision first so that a
/// single-precision uniform pixel yields exactly E = M = 1.
PixelDispersion pixel_dispersion(std::span<const float> probs);

struct DispersionMaps {
    int height = 0;
    int width = 0;
    std::vector<double> entropy;
    std::vector<double> variation_ratio;
    std::vector<double> margin;
};

DispersionMaps dispersion_maps(const ProbTensor& tensor);

}  // namespace segqual
