#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <variant>
#include <vector>

namespace segqual {

/// Per-pixel softmax field, row-major with the class index fastest.
class ProbTensor {
public:
    /// Validates shape and every per-pixel distribution; throws Error.
    ProbTensor(int height, int width, int num_classes, std::vector<float> data);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    int num_classes() const noexcept { return num_classes_; }
    std::size_t num_pixels() const noexcept { return static_cast<std::size_t>(height_) * width_; }

    std::span<const float> pixel(std::size_t index) const {
        return {data_.data() + index * num_classes_, static_cast<std::size_t>(num_classes_)};
    }
    std::span<const float> pixel(int row, int col) const {
        return pixel(static_cast<std::size_t>(row) * width_ + col);
    }
    std::span<const float> data() const noexcept { return data_; }

    friend bool operator==(const ProbTensor&, const ProbTensor&) = default;

private:
    int height_;
    int width_;
    int num_classes_;
    std::vector<float> data_;
};

enum class Provenance : std::uint8_t { Real = 0, Pseudo = 1 };

inline constexpr std::int32_t kIgnoreLabel = -1;

/// Row-major grid of class labels. Holds ground truth (real or pseudo) or
/// argmax predictions.
class LabelMap {
public:
    /// When num_classes is given every value must be -1 or in [0, num_classes).
    LabelMap(int height, int width, std::vector<std::int32_t> data,
             Provenance provenance = Provenance::Real,
             std::optional<int> num_classes = std::nullopt);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t num_pixels() const noexcept { return static_cast<std::size_t>(height_) * width_; }
    Provenance provenance() const noexcept { return provenance_; }

    std::int32_t operator[](std::size_t index) const { return data_[index]; }
    std::int32_t at(int row, int col) const { return data_[static_cast<std::size_t>(row) * width_ + col]; }
    std::span<const std::int32_t> data() const noexcept { return data_; }

    friend bool operator==(const LabelMap&, const LabelMap&) = default;

private:
    int height_;
    int width_;
    Provenance provenance_;
    std::vector<std::int32_t> data_;
};

enum class TensorKind { Prob, Label };

using Tensor = std::variant<ProbTensor, LabelMap>;

/// Reads an SQTF file. Label ranges are only checked against num_classes when
/// it is supplied, because the label header does not record a class count.
Tensor load_tensor(const std::filesystem::path& path, TensorKind expected_kind,
                   std::optional<int> num_classes = std::nullopt);
ProbTensor load_prob_tensor(const std::filesystem::path& path);
LabelMap load_label_map(const std::filesystem::path& path,
                        std::optional<int> num_classes = std::nullopt);

/// Parses an in-memory SQTF image; load_tensor is a thin wrapper over this.
Tensor decode_tensor(std::span<const std::uint8_t> bytes, TensorKind expected_kind,
                     std::optional<int> num_classes = std::nullopt);
std::vector<std::uint8_t> encode_tensor(const ProbTensor& tensor);
std::vector<std::uint8_t> encode_tensor(const LabelMap& labels);

void store_tensor(const ProbTensor& tensor, const std::filesystem::path& path);
void store_tensor(const LabelMap& labels, const std::filesystem::path& path);

/// Per-pixel argmax, ties resolved to the smallest class index.
LabelMap argmax_labels(const ProbTensor& tensor);

}  // namespace segqual
