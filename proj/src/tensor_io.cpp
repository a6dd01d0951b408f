#include "segqual/tensor_io.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "segqual/error.hpp"
#include "file_bytes.hpp"

namespace segqual {
namespace {

constexpr std::array<std::uint8_t, 4> kMagic = {'S', 'Q', 'T', 'F'};
constexpr std::uint8_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;
constexpr std::uint8_t kDtypeI32 = 1;
constexpr std::size_t kFixedHeader = 8;
constexpr double kRowSumTolerance = 1e-4;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void check_dims(int height, int width) {
    if (height < 1 || width < 1) {
        throw Error(ErrorCode::DimMismatch,
                    "dimensions must be positive, got " + std::to_string(height) + "x" +
                        std::to_string(width));
    }
}

std::vector<std::uint8_t> header(std::uint8_t dtype, std::uint8_t provenance,
                                 std::initializer_list<std::uint32_t> dims) {
    std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
    out.push_back(kVersion);
    out.push_back(dtype);
    out.push_back(static_cast<std::uint8_t>(dims.size()));
    out.push_back(provenance);
    for (std::uint32_t d : dims) put_u32(out, d);
    return out;
}

}  // namespace

ProbTensor::ProbTensor(int height, int width, int num_classes, std::vector<float> data)
    : height_(height), width_(width), num_classes_(num_classes), data_(std::move(data)) {
    check_dims(height, width);
    if (num_classes < 2) {
        throw Error(ErrorCode::DimMismatch, "need at least 2 classes, got " + std::to_string(num_classes));
    }
    if (data_.size() != num_pixels() * static_cast<std::size_t>(num_classes)) {
        throw Error(ErrorCode::DimMismatch, "payload holds " + std::to_string(data_.size()) +
                                                " values, header implies " +
                                                std::to_string(num_pixels() * num_classes));
    }
    for (std::size_t i = 0; i < num_pixels(); ++i) {
        double sum = 0.0;
        for (float p : pixel(i)) {
            if (!(p >= 0.0f && p <= 1.0f)) {
                throw Error(ErrorCode::InvalidProbability,
                            "entry out of [0,1] at pixel " + std::to_string(i));
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > kRowSumTolerance) {
            throw Error(ErrorCode::InvalidProbability,
                        "row sum " + std::to_string(sum) + " at pixel " + std::to_string(i));
        }
    }
}

LabelMap::LabelMap(int height, int width, std::vector<std::int32_t> data, Provenance provenance,
                   std::optional<int> num_classes)
    : height_(height), width_(width), provenance_(provenance), data_(std::move(data)) {
    check_dims(height, width);
    if (data_.size() != num_pixels()) {
        throw Error(ErrorCode::DimMismatch, "payload holds " + std::to_string(data_.size()) +
                                                " labels, header implies " + std::to_string(num_pixels()));
    }
    const std::int32_t upper = num_classes ? *num_classes : INT32_MAX;
    for (std::size_t i = 0; i < data_.size(); ++i) {
        const std::int32_t v = data_[i];
        if (v != kIgnoreLabel && (v < 0 || v >= upper)) {
            throw Error(ErrorCode::InvalidLabel,
                        "label " + std::to_string(v) + " at pixel " + std::to_string(i));
        }
    }
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes, TensorKind expected_kind,
                     std::optional<int> num_classes) {
    if (bytes.size() < kMagic.size() || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
        throw Error(ErrorCode::BadMagic, "missing SQTF magic");
    }
    if (bytes.size() < kFixedHeader) throw Error(ErrorCode::DimMismatch, "truncated header");
    if (bytes[4] != kVersion) {
        throw Error(ErrorCode::BadVersion, "unsupported version " + std::to_string(bytes[4]));
    }
    const std::uint8_t dtype = bytes[5];
    const std::uint8_t ndim = bytes[6];
    const std::uint8_t provenance = bytes[7];
    const bool want_prob = expected_kind == TensorKind::Prob;
    if (dtype != (want_prob ? kDtypeF32 : kDtypeI32)) {
        throw Error(ErrorCode::InvalidArgument, "unexpected dtype " + std::to_string(dtype));
    }
    if (ndim != (want_prob ? 3 : 2)) {
        throw Error(ErrorCode::DimMismatch, "unexpected ndim " + std::to_string(ndim));
    }
    if (provenance > 1 || (want_prob && provenance != 0)) {
        throw Error(ErrorCode::InvalidArgument, "invalid provenance byte " + std::to_string(provenance));
    }
    const std::size_t header_size = kFixedHeader + 4u * ndim;
    if (bytes.size() < header_size) throw Error(ErrorCode::DimMismatch, "truncated dimension block");

    std::uint64_t count = 1;
    std::array<std::uint32_t, 3> dims{};
    for (std::size_t d = 0; d < ndim; ++d) {
        dims[d] = get_u32(bytes.data() + kFixedHeader + 4 * d);
        if (dims[d] == 0 || dims[d] > static_cast<std::uint32_t>(INT32_MAX)) {
            throw Error(ErrorCode::DimMismatch, "invalid dimension " + std::to_string(dims[d]));
        }
        count *= dims[d];
    }
    const std::uint64_t payload = bytes.size() - header_size;
    if (count > payload / 4 || count * 4 != payload) {
        throw Error(ErrorCode::DimMismatch, "payload of " + std::to_string(payload) +
                                                " bytes does not match header dims");
    }
    const std::uint8_t* p = bytes.data() + header_size;
    if (want_prob) {
        std::vector<float> data(count);
        for (std::size_t i = 0; i < count; ++i) data[i] = std::bit_cast<float>(get_u32(p + 4 * i));
        return ProbTensor(static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2]),
                          std::move(data));
    }
    std::vector<std::int32_t> data(count);
    for (std::size_t i = 0; i < count; ++i) data[i] = std::bit_cast<std::int32_t>(get_u32(p + 4 * i));
    return LabelMap(static_cast<int>(dims[0]), static_cast<int>(dims[1]), std::move(data),
                    static_cast<Provenance>(provenance), num_classes);
}

Tensor load_tensor(const std::filesystem::path& path, TensorKind expected_kind,
                   std::optional<int> num_classes) {
    const auto bytes = detail::read_file(path);
    return decode_tensor(bytes, expected_kind, num_classes);
}

ProbTensor load_prob_tensor(const std::filesystem::path& path) {
    return std::get<ProbTensor>(load_tensor(path, TensorKind::Prob));
}

LabelMap load_label_map(const std::filesystem::path& path, std::optional<int> num_classes) {
    return std::get<LabelMap>(load_tensor(path, TensorKind::Label, num_classes));
}

std::vector<std::uint8_t> encode_tensor(const ProbTensor& tensor) {
    auto out = header(kDtypeF32, 0,
                      {static_cast<std::uint32_t>(tensor.height()), static_cast<std::uint32_t>(tensor.width()),
                       static_cast<std::uint32_t>(tensor.num_classes())});
    out.reserve(out.size() + tensor.data().size() * 4);
    for (float v : tensor.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

std::vector<std::uint8_t> encode_tensor(const LabelMap& labels) {
    auto out = header(kDtypeI32, static_cast<std::uint8_t>(labels.provenance()),
                      {static_cast<std::uint32_t>(labels.height()), static_cast<std::uint32_t>(labels.width())});
    out.reserve(out.size() + labels.data().size() * 4);
    for (std::int32_t v : labels.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

void store_tensor(const ProbTensor& tensor, const std::filesystem::path& path) {
    detail::write_file(encode_tensor(tensor), path);
}

void store_tensor(const LabelMap& labels, const std::filesystem::path& path) {
    detail::write_file(encode_tensor(labels), path);
}

LabelMap argmax_labels(const ProbTensor& tensor) {
    std::vector<std::int32_t> out(tensor.num_pixels());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto px = tensor.pixel(i);
        std::int32_t best = 0;
        for (std::int32_t y = 1; y < tensor.num_classes(); ++y) {
            if (px[y] > px[best]) best = y;
        }
        out[i] = best;
    }
    return LabelMap(tensor.height(), tensor.width(), std::move(out), Provenance::Real, tensor.num_classes());
}

}  // namespace segqual
