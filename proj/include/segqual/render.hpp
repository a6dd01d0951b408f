#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "segqual/segmentation.hpp"

namespace segqual {

using Rgb = std::array<std::uint8_t, 3>;

struct RgbImage {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;  // row-major RGB triples

    RgbImage() = default;
    RgbImage(int h, int w, Rgb fill);
    Rgb at(int row, int col) const;
    void set(int row, int col, Rgb color);
};

/// Red (0) to green (1) linear ramp, rounded to the nearest level.
Rgb quality_color(double value);

/// Fills each segment by its value; nullopt renders white (no ground truth).
/// Segment boundaries are black. Throws MissingValue for a segment absent
/// from `values`.
RgbImage render_quality(const SegmentFrame& sf, const std::map<std::int32_t, std::optional<double>>& values);

/// Predicted classes in a fixed palette, boundaries black.
RgbImage render_classes(const SegmentFrame& sf);

/// Panels left to right separated by white gaps; heights must agree.
RgbImage side_by_side(std::span<const RgbImage> panels, int gap = 4);

std::vector<std::uint8_t> encode_ppm(const RgbImage& img);
/// Binary P6, maxval 255. Throws InvalidArgument on an empty image and
/// IoFailure when the file cannot be written.
void write_ppm(const RgbImage& img, const std::filesystem::path& path);

}  // namespace segqual
