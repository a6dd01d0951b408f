#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "segqual/groundtruth.hpp"
#include "segqual/segment_metrics.hpp"
#include "segqual/tracker.hpp"

namespace segqual {

enum class RowOrigin : std::uint8_t { Real, Augmented, Pseudo };

std::string_view to_string(RowOrigin origin);

/// Training-data compositions: real, real+augmented, real+augmented+pseudo,
/// real+pseudo, pseudo only. Validation and test always use real rows.
enum class Composition { R, RA, RAP, RP, P };

std::string_view to_string(Composition c);
Composition parse_composition(std::string_view text);
bool uses_real(Composition c);
bool uses_augmented(Composition c);
bool uses_pseudo(Composition c);

struct RowKey {
    int sequence = 0;
    int frame = -1;
    std::int32_t seg_id = -1;
    std::int32_t track_id = -1;
    std::int32_t class_label = -1;

    friend bool operator==(const RowKey&, const RowKey&) = default;
};

/// One row per metric record; columns are n_c + 1 metric blocks, lag 0
/// (the row's own frame) first.
struct FeatureMatrix {
    int n_c = 0;
    int num_classes = 0;
    Eigen::MatrixXd features;
    std::vector<double> iou_adj;  // NaN when unknown
    std::vector<RowOrigin> origin;
    std::vector<RowKey> keys;

    int block_dim() const noexcept { return kBaseMetricCount + num_classes; }
    Eigen::Index rows() const noexcept { return features.rows(); }
    bool labeled(Eigen::Index row) const { return iou_adj[static_cast<std::size_t>(row)] == iou_adj[static_cast<std::size_t>(row)]; }
    /// 1 iff iou_adj == 0; undefined for unlabeled rows.
    int fp_label(Eigen::Index row) const { return iou_adj[static_cast<std::size_t>(row)] == 0.0 ? 1 : 0; }

    FeatureMatrix select(std::span<const Eigen::Index> rows) const;
    /// Keeps the first n + 1 lag blocks.
    FeatureMatrix with_history(int n) const;
    /// Column of a named feature (e.g. "E" or "S_lag3"); throws InvalidArgument.
    Eigen::Index column_index(std::string_view name) const;
    void append(const FeatureMatrix& other);

    std::vector<std::string> column_names() const;

    Eigen::VectorXd targets() const;
    Eigen::VectorXd fp_labels() const;
};

inline constexpr int kMaxHistory = 10;

/// Assembles per-track time series. Each record's lag blocks are the track's
/// representative records (largest member with a record) at earlier frames,
/// most recent first; short histories repeat the oldest available block.
/// Targets supply provenance; records without a target are kept only when
/// include_unlabeled is set.
FeatureMatrix build_timeseries(const TrackedSequence& seq, std::span<const MetricRecord> metrics,
                               const std::map<int, std::vector<TargetRecord>>& targets, int n_c,
                               int sequence_id = 0, bool include_unlabeled = false);

struct SplitSpec {
    double train = 0.70;
    double val = 0.10;
    double test = 0.20;
    std::uint64_t seed = 0;
    bool by_track = false;
};

struct SplitIndices {
    std::vector<Eigen::Index> train;   // real rows
    std::vector<Eigen::Index> pseudo;  // pseudo rows, training only
    std::vector<Eigen::Index> val;
    std::vector<Eigen::Index> test;
};

/// Splits the labeled real rows; pseudo rows go to the training pool only.
/// Throws TooFewRows with fewer than 10 labeled real rows.
SplitIndices split(const FeatureMatrix& fm, const SplitSpec& spec);

/// Z-score statistics from a training matrix. Zero-variance columns are
/// passed through unchanged (mean 0, scale 1).
struct Standardizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;

    static Standardizer fit(const Eigen::MatrixXd& train);
    static Standardizer identity(Eigen::Index dim);
    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
    Eigen::Index dim() const noexcept { return mean.size(); }
};

/// Fits on train and transforms all three in place.
Standardizer standardize(Eigen::MatrixXd& train, Eigen::MatrixXd& val, Eigen::MatrixXd& test);

struct SmoterParams {
    int bins = 10;
    int k_neighbors = 5;
    /// Target bin count as a fraction of the largest bin; 1.0 means parity.
    double ratio = 1.0;
};

struct SmoterResult {
    Eigen::MatrixXd features;
    std::vector<double> targets;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> parents;  // (base, neighbour)
};

/// SMOTE for regression targets in [0, 1]: equal-width target bins below the
/// target count are filled with interpolations between a member and one of
/// its k nearest same-bin neighbours. Throws BinTooSmall for a bin that needs
/// samples but has a single member.
SmoterResult smoter(const Eigen::MatrixXd& x, std::span<const double> y, const SmoterParams& params,
                    std::uint64_t seed);

/// Appends SMOTER rows (origin Augmented, keys -1) to a training matrix.
FeatureMatrix smoter_augment(const FeatureMatrix& train, const SmoterParams& params, std::uint64_t seed);

/// Metrics CSV columns, then `provenance,seq`, then lag columns `<name>_lag<i>`.
void write_dataset_csv(std::ostream& out, const FeatureMatrix& fm);
FeatureMatrix read_dataset_csv(std::istream& in);

}  // namespace segqual
