#include "segqual/render.hpp"

#include <cmath>
#include <string>

#include "file_bytes.hpp"
#include "segqual/error.hpp"

namespace segqual {
namespace {

constexpr Rgb kWhite = {255, 255, 255};
constexpr Rgb kBlack = {0, 0, 0};

void draw_boundaries(const SegmentFrame& sf, RgbImage& img) {
    for (int r = 0; r < sf.height; ++r) {
        for (int c = 0; c < sf.width; ++c) {
            const std::size_t p = static_cast<std::size_t>(r) * sf.width + c;
            const std::int32_t id = sf.component_map[p];
            const bool right = c + 1 < sf.width && sf.component_map[p + 1] != id;
            const bool below = r + 1 < sf.height && sf.component_map[p + static_cast<std::size_t>(sf.width)] != id;
            if (right || below) img.set(r, c, kBlack);
        }
    }
}

}  // namespace

RgbImage::RgbImage(int h, int w, Rgb fill) : height(h), width(w) {
    if (h < 0 || w < 0) throw Error(ErrorCode::InvalidArgument, "negative image size");
    pixels.reserve(static_cast<std::size_t>(h) * w * 3);
    for (int i = 0; i < h * w; ++i) pixels.insert(pixels.end(), fill.begin(), fill.end());
}

Rgb RgbImage::at(int row, int col) const {
    const std::size_t p = (static_cast<std::size_t>(row) * width + col) * 3;
    return {pixels[p], pixels[p + 1], pixels[p + 2]};
}

void RgbImage::set(int row, int col, Rgb color) {
    const std::size_t p = (static_cast<std::size_t>(row) * width + col) * 3;
    pixels[p] = color[0];
    pixels[p + 1] = color[1];
    pixels[p + 2] = color[2];
}

Rgb quality_color(double value) {
    if (!(value >= 0.0 && value <= 1.0)) throw Error(ErrorCode::InvalidArgument, "quality value outside [0, 1]");
    return {static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - value))),
            static_cast<std::uint8_t>(std::lround(255.0 * value)), 0};
}

RgbImage render_quality(const SegmentFrame& sf, const std::map<std::int32_t, std::optional<double>>& values) {
    std::vector<Rgb> fill(sf.segments.size() + 1, kWhite);
    for (const Segment& s : sf.segments) {
        const auto it = values.find(s.id);
        if (it == values.end()) throw Error(ErrorCode::MissingValue, "no value for segment " + std::to_string(s.id));
        if (it->second) fill[static_cast<std::size_t>(s.id)] = quality_color(*it->second);
    }
    RgbImage img(sf.height, sf.width, kWhite);
    for (int r = 0; r < sf.height; ++r) {
        for (int c = 0; c < sf.width; ++c) {
            img.set(r, c, fill[static_cast<std::size_t>(sf.component_map[static_cast<std::size_t>(r) * sf.width + c])]);
        }
    }
    draw_boundaries(sf, img);
    return img;
}

RgbImage render_classes(const SegmentFrame& sf) {
    static constexpr std::array<Rgb, 8> palette = {{{128, 64, 128},
                                                    {220, 20, 60},
                                                    {70, 130, 180},
                                                    {250, 170, 30},
                                                    {107, 142, 35},
                                                    {0, 0, 142},
                                                    {153, 153, 153},
                                                    {190, 153, 153}}};
    RgbImage img(sf.height, sf.width, kWhite);
    for (int r = 0; r < sf.height; ++r) {
        for (int c = 0; c < sf.width; ++c) {
            const std::int32_t id = sf.component_map[static_cast<std::size_t>(r) * sf.width + c];
            const auto cls = static_cast<std::size_t>(sf.segment(id).class_label);
            img.set(r, c, palette[cls % palette.size()]);
        }
    }
    draw_boundaries(sf, img);
    return img;
}

RgbImage side_by_side(std::span<const RgbImage> panels, int gap) {
    if (panels.empty()) return {};
    if (gap < 0) throw Error(ErrorCode::InvalidArgument, "negative gap");
    int width = 0;
    for (const RgbImage& p : panels) {
        if (p.height != panels.front().height) throw Error(ErrorCode::DimMismatch, "panel heights differ");
        width += p.width;
    }
    width += gap * static_cast<int>(panels.size() - 1);
    RgbImage out(panels.front().height, width, kWhite);
    int offset = 0;
    for (const RgbImage& p : panels) {
        for (int r = 0; r < p.height; ++r) {
            for (int c = 0; c < p.width; ++c) out.set(r, offset + c, p.at(r, c));
        }
        offset += p.width + gap;
    }
    return out;
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& img) {
    if (img.height < 1 || img.width < 1) throw Error(ErrorCode::InvalidArgument, "cannot write an empty image");
    const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    return out;
}

void write_ppm(const RgbImage& img, const std::filesystem::path& path) { detail::write_file(encode_ppm(img), path); }

}  // namespace segqual
