#include "segqual/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>

#include "segqual/csv.hpp"
#include "segqual/error.hpp"
#include "segqual/rng.hpp"

namespace segqual {
namespace {

constexpr double kUnknown = std::numeric_limits<double>::quiet_NaN();

std::string lag_suffix(int lag) { return lag == 0 ? "" : "_lag" + std::to_string(lag); }

}  // namespace

std::string_view to_string(RowOrigin origin) {
    switch (origin) {
        case RowOrigin::Real: return "real";
        case RowOrigin::Augmented: return "augmented";
        case RowOrigin::Pseudo: return "pseudo";
    }
    return "real";
}

std::string_view to_string(Composition c) {
    switch (c) {
        case Composition::R: return "R";
        case Composition::RA: return "RA";
        case Composition::RAP: return "RAP";
        case Composition::RP: return "RP";
        case Composition::P: return "P";
    }
    return "R";
}

Composition parse_composition(std::string_view text) {
    for (Composition c : {Composition::R, Composition::RA, Composition::RAP, Composition::RP, Composition::P}) {
        if (to_string(c) == text) return c;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown composition '" + std::string(text) + "'");
}

bool uses_real(Composition c) { return c != Composition::P; }
bool uses_augmented(Composition c) { return c == Composition::RA || c == Composition::RAP; }
bool uses_pseudo(Composition c) { return c == Composition::RAP || c == Composition::RP || c == Composition::P; }

FeatureMatrix FeatureMatrix::select(std::span<const Eigen::Index> rows) const {
    FeatureMatrix out;
    out.n_c = n_c;
    out.num_classes = num_classes;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.features.row(static_cast<Eigen::Index>(i)) = features.row(rows[i]);
        out.iou_adj.push_back(iou_adj[static_cast<std::size_t>(rows[i])]);
        out.origin.push_back(origin[static_cast<std::size_t>(rows[i])]);
        out.keys.push_back(keys[static_cast<std::size_t>(rows[i])]);
    }
    return out;
}

FeatureMatrix FeatureMatrix::with_history(int n) const {
    if (n < 0 || n > n_c) throw Error(ErrorCode::InvalidArgument, "history length exceeds the built n_c");
    FeatureMatrix out = *this;
    out.n_c = n;
    out.features = features.leftCols(static_cast<Eigen::Index>(n + 1) * block_dim());
    return out;
}

Eigen::Index FeatureMatrix::column_index(std::string_view name) const {
    const auto names = column_names();
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw Error(ErrorCode::InvalidArgument, "no column '" + std::string(name) + "'");
    return static_cast<Eigen::Index>(it - names.begin());
}

void FeatureMatrix::append(const FeatureMatrix& other) {
    if (rows() == 0 && iou_adj.empty()) {
        *this = other;
        return;
    }
    if (other.n_c != n_c || other.num_classes != num_classes) {
        throw Error(ErrorCode::DimMismatch, "cannot append feature matrices of different shape");
    }
    Eigen::MatrixXd merged(rows() + other.rows(), features.cols());
    merged.topRows(rows()) = features;
    merged.bottomRows(other.rows()) = other.features;
    features = std::move(merged);
    iou_adj.insert(iou_adj.end(), other.iou_adj.begin(), other.iou_adj.end());
    origin.insert(origin.end(), other.origin.begin(), other.origin.end());
    keys.insert(keys.end(), other.keys.begin(), other.keys.end());
}

std::vector<std::string> FeatureMatrix::column_names() const {
    const auto base = feature_names(num_classes);
    std::vector<std::string> names;
    for (int lag = 0; lag <= n_c; ++lag) {
        for (const auto& b : base) names.push_back(b + lag_suffix(lag));
    }
    return names;
}

Eigen::VectorXd FeatureMatrix::targets() const {
    return Eigen::Map<const Eigen::VectorXd>(iou_adj.data(), static_cast<Eigen::Index>(iou_adj.size()));
}

Eigen::VectorXd FeatureMatrix::fp_labels() const {
    Eigen::VectorXd out(rows());
    for (Eigen::Index i = 0; i < rows(); ++i) out[i] = fp_label(i);
    return out;
}

FeatureMatrix build_timeseries(const TrackedSequence& seq, std::span<const MetricRecord> metrics,
                               const std::map<int, std::vector<TargetRecord>>& targets, int n_c, int sequence_id,
                               bool include_unlabeled) {
    if (n_c < 0 || n_c > kMaxHistory) throw Error(ErrorCode::InvalidArgument, "n_c must be in [0, 10]");
    FeatureMatrix fm;
    fm.n_c = n_c;
    if (metrics.empty()) {
        fm.num_classes = 0;
        return fm;
    }
    fm.num_classes = metrics.front().num_classes();
    const int dim = fm.block_dim();

    std::map<int, std::size_t> position;
    for (std::size_t t = 0; t < seq.frames.size(); ++t) position[seq.frames[t].frame_index] = t;

    // Representative record per (track, position): the largest member segment.
    std::map<std::int32_t, std::map<std::size_t, const MetricRecord*>> representative;
    std::vector<std::size_t> record_position(metrics.size());
    for (std::size_t i = 0; i < metrics.size(); ++i) {
        const MetricRecord& r = metrics[i];
        if (r.num_classes() != fm.num_classes) throw Error(ErrorCode::DimMismatch, "mixed class counts");
        const auto it = position.find(r.frame);
        if (it == position.end()) throw Error(ErrorCode::DimMismatch, "record frame not in tracked sequence");
        record_position[i] = it->second;
        const std::int32_t track = seq.track_of(it->second, r.seg_id);
        const MetricRecord*& slot = representative[track][it->second];
        if (slot == nullptr || r.size > slot->size || (r.size == slot->size && r.seg_id < slot->seg_id)) slot = &r;
    }

    std::vector<const MetricRecord*> rows;
    std::vector<Provenance> provenance;
    for (const MetricRecord& r : metrics) {
        if (!r.iou_adj && !include_unlabeled) continue;
        rows.push_back(&r);
        Provenance p = Provenance::Real;
        if (const auto it = targets.find(r.frame); it != targets.end()) {
            for (const TargetRecord& t : it->second) {
                if (t.seg_id == r.seg_id) {
                    p = t.provenance;
                    break;
                }
            }
        }
        provenance.push_back(p);
    }

    fm.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(n_c + 1) * dim);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const MetricRecord& r = *rows[i];
        const std::size_t t = record_position[static_cast<std::size_t>(&r - metrics.data())];
        const std::int32_t track = seq.track_of(t, r.seg_id);
        const auto& history = representative[track];

        std::vector<const MetricRecord*> blocks = {&r};
        for (auto it = std::make_reverse_iterator(history.lower_bound(t));
             it != history.rend() && static_cast<int>(blocks.size()) <= n_c; ++it) {
            blocks.push_back(it->second);
        }
        while (static_cast<int>(blocks.size()) <= n_c) blocks.push_back(blocks.back());

        for (int lag = 0; lag <= n_c; ++lag) {
            const auto f = blocks[static_cast<std::size_t>(lag)]->features();
            fm.features.row(static_cast<Eigen::Index>(i)).segment(static_cast<Eigen::Index>(lag) * dim, dim) =
                Eigen::Map<const Eigen::RowVectorXd>(f.data(), dim);
        }
        fm.iou_adj.push_back(r.iou_adj ? *r.iou_adj : kUnknown);
        fm.origin.push_back(provenance[i] == Provenance::Pseudo ? RowOrigin::Pseudo : RowOrigin::Real);
        fm.keys.push_back({sequence_id, r.frame, r.seg_id, track, r.class_label});
    }
    return fm;
}

SplitIndices split(const FeatureMatrix& fm, const SplitSpec& spec) {
    if (std::abs(spec.train + spec.val + spec.test - 1.0) > 1e-9 || spec.train <= 0 || spec.val < 0 ||
        spec.test <= 0) {
        throw Error(ErrorCode::InvalidArgument, "split fractions must be positive and sum to 1");
    }
    SplitIndices out;
    std::vector<Eigen::Index> real;
    for (Eigen::Index i = 0; i < fm.rows(); ++i) {
        if (!fm.labeled(i)) continue;
        const RowOrigin o = fm.origin[static_cast<std::size_t>(i)];
        if (o == RowOrigin::Real) {
            real.push_back(i);
        } else if (o == RowOrigin::Pseudo) {
            out.pseudo.push_back(i);
        }
    }
    if (real.size() < 10) {
        throw Error(ErrorCode::TooFewRows, "need at least 10 labeled real rows, have " + std::to_string(real.size()));
    }
    const std::size_t n = real.size();
    const auto n_train = static_cast<std::size_t>(std::llround(spec.train * static_cast<double>(n)));
    const auto n_val = static_cast<std::size_t>(std::llround(spec.val * static_cast<double>(n)));
    Rng rng(spec.seed);

    if (!spec.by_track) {
        rng.shuffle(std::span(real));
        out.train.assign(real.begin(), real.begin() + static_cast<std::ptrdiff_t>(n_train));
        out.val.assign(real.begin() + static_cast<std::ptrdiff_t>(n_train),
                       real.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
        out.test.assign(real.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), real.end());
    } else {
        std::map<std::pair<int, std::int32_t>, std::vector<Eigen::Index>> groups;
        for (Eigen::Index i : real) {
            const RowKey& k = fm.keys[static_cast<std::size_t>(i)];
            groups[{k.sequence, k.track_id}].push_back(i);
        }
        std::vector<std::vector<Eigen::Index>*> order;
        for (auto& [key, rows] : groups) order.push_back(&rows);
        rng.shuffle(std::span(order));
        std::size_t assigned = 0;
        for (auto* rows : order) {
            auto& dest = assigned < n_train ? out.train : assigned < n_train + n_val ? out.val : out.test;
            dest.insert(dest.end(), rows->begin(), rows->end());
            assigned += rows->size();
        }
    }
    for (auto* v : {&out.train, &out.val, &out.test}) std::sort(v->begin(), v->end());
    return out;
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& train) {
    if (train.rows() == 0) throw Error(ErrorCode::TooFewRows, "cannot standardize an empty training set");
    Standardizer s;
    const double n = static_cast<double>(train.rows());
    s.mean = train.colwise().sum().transpose() / n;
    s.scale.resize(train.cols());
    for (Eigen::Index j = 0; j < train.cols(); ++j) {
        const double var = (train.col(j).array() - s.mean[j]).square().sum() / n;
        const double sd = std::sqrt(var);
        if (sd <= 1e-12 * std::max(1.0, std::abs(s.mean[j]))) {
            s.mean[j] = 0.0;
            s.scale[j] = 1.0;
        } else {
            s.scale[j] = sd;
        }
    }
    return s;
}

Standardizer Standardizer::identity(Eigen::Index dim) {
    return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim)};
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& x) const {
    if (x.cols() != dim()) throw Error(ErrorCode::DimMismatch, "standardizer dimension mismatch");
    return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

Standardizer standardize(Eigen::MatrixXd& train, Eigen::MatrixXd& val, Eigen::MatrixXd& test) {
    Standardizer s = Standardizer::fit(train);
    train = s.apply(train);
    if (val.size() > 0) val = s.apply(val);
    if (test.size() > 0) test = s.apply(test);
    return s;
}

SmoterResult smoter(const Eigen::MatrixXd& x, std::span<const double> y, const SmoterParams& params,
                    std::uint64_t seed) {
    if (params.bins < 1 || params.k_neighbors < 1 || !(params.ratio > 0)) {
        throw Error(ErrorCode::InvalidArgument, "SMOTER parameters must be positive");
    }
    if (static_cast<std::size_t>(x.rows()) != y.size()) throw Error(ErrorCode::DimMismatch, "SMOTER rows vs targets");
    std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(params.bins));
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double v = std::clamp(y[i], 0.0, 1.0);
        const int b = std::min(params.bins - 1, static_cast<int>(std::floor(v * params.bins)));
        members[static_cast<std::size_t>(b)].push_back(static_cast<Eigen::Index>(i));
    }
    std::size_t largest = 0;
    for (const auto& m : members) largest = std::max(largest, m.size());
    const auto target = static_cast<std::size_t>(std::llround(params.ratio * static_cast<double>(largest)));

    SmoterResult out;
    std::vector<Eigen::RowVectorXd> rows;
    Rng rng(seed);
    for (const auto& bin : members) {
        if (bin.empty() || bin.size() >= target) continue;
        if (bin.size() < 2) throw Error(ErrorCode::BinTooSmall, "a target bin to oversample has a single member");
        const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(params.k_neighbors), bin.size() - 1);

        std::vector<std::vector<Eigen::Index>> neighbours(bin.size());
        for (std::size_t a = 0; a < bin.size(); ++a) {
            std::vector<std::pair<double, std::size_t>> dist;
            dist.reserve(bin.size() - 1);
            for (std::size_t b = 0; b < bin.size(); ++b) {
                if (a != b) dist.emplace_back((x.row(bin[a]) - x.row(bin[b])).squaredNorm(), b);
            }
            std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
            for (std::size_t q = 0; q < k; ++q) neighbours[a].push_back(bin[dist[q].second]);
        }

        const std::size_t need = target - bin.size();
        for (std::size_t s = 0; s < need; ++s) {
            const std::size_t a = s % bin.size();
            const Eigen::Index base = bin[a];
            const Eigen::Index nn = neighbours[a][static_cast<std::size_t>(rng.below(k))];
            const double u = rng.uniform();
            const Eigen::RowVectorXd diff = x.row(nn) - x.row(base);
            rows.push_back(x.row(base) + u * diff);
            const double d1 = u * diff.norm();        // to base
            const double d2 = (1.0 - u) * diff.norm(); // to neighbour
            const double ya = y[static_cast<std::size_t>(base)];
            const double yb = y[static_cast<std::size_t>(nn)];
            double t = d1 + d2 > 0 ? (d2 * ya + d1 * yb) / (d1 + d2) : 0.5 * (ya + yb);
            t = std::clamp(t, std::min(ya, yb), std::max(ya, yb));
            out.targets.push_back(t);
            out.parents.emplace_back(base, nn);
        }
    }
    out.features.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.features.row(static_cast<Eigen::Index>(i)) = rows[i];
    return out;
}

FeatureMatrix smoter_augment(const FeatureMatrix& train, const SmoterParams& params, std::uint64_t seed) {
    const SmoterResult res = smoter(train.features, train.iou_adj, params, seed);
    FeatureMatrix synthetic;
    synthetic.n_c = train.n_c;
    synthetic.num_classes = train.num_classes;
    synthetic.features = res.features;
    synthetic.iou_adj = res.targets;
    synthetic.origin.assign(res.targets.size(), RowOrigin::Augmented);
    synthetic.keys.assign(res.targets.size(), RowKey{});
    FeatureMatrix out = train;
    if (synthetic.rows() > 0) out.append(synthetic);
    return out;
}

void write_dataset_csv(std::ostream& out, const FeatureMatrix& fm) {
    const auto base = feature_names(fm.num_classes);
    const int dim = fm.block_dim();
    out << "frame,seg_id,track_id,class";
    for (const auto& b : base) out << ',' << b;
    out << ",iou_adj,provenance,seq";
    for (int lag = 1; lag <= fm.n_c; ++lag) {
        for (const auto& b : base) out << ',' << b << lag_suffix(lag);
    }
    out << '\n';
    for (Eigen::Index i = 0; i < fm.rows(); ++i) {
        const RowKey& k = fm.keys[static_cast<std::size_t>(i)];
        out << k.frame << ',' << k.seg_id << ',' << k.track_id << ',' << k.class_label;
        for (int c = 0; c < dim; ++c) out << ',' << csv::format(fm.features(i, c));
        out << ',';
        if (fm.labeled(i)) out << csv::format(fm.iou_adj[static_cast<std::size_t>(i)]);
        out << ',';
        if (fm.labeled(i)) out << to_string(fm.origin[static_cast<std::size_t>(i)]);
        out << ',' << k.sequence;
        for (Eigen::Index c = dim; c < fm.features.cols(); ++c) out << ',' << csv::format(fm.features(i, c));
        out << '\n';
    }
}

FeatureMatrix read_dataset_csv(std::istream& in) {
    std::vector<std::string> header;
    if (!csv::read_row(in, header)) throw Error(ErrorCode::InvalidArgument, "empty dataset CSV");
    const auto prov = std::find(header.begin(), header.end(), "provenance");
    if (prov == header.end() || prov - header.begin() < 5 + kBaseMetricCount) {
        throw Error(ErrorCode::InvalidArgument, "dataset CSV lacks a provenance column");
    }
    FeatureMatrix fm;
    fm.num_classes = static_cast<int>(prov - header.begin()) - 5 - kBaseMetricCount;
    const int dim = fm.block_dim();
    const std::size_t lag_cols = header.size() - static_cast<std::size_t>(dim) - 7;
    if (lag_cols % static_cast<std::size_t>(dim) != 0) throw Error(ErrorCode::DimMismatch, "dataset CSV lag columns");
    fm.n_c = static_cast<int>(lag_cols / static_cast<std::size_t>(dim));
    {
        std::vector<std::string> expected = {"frame", "seg_id", "track_id", "class"};
        for (const auto& b : feature_names(fm.num_classes)) expected.push_back(b);
        expected.insert(expected.end(), {"iou_adj", "provenance", "seq"});
        for (int lag = 1; lag <= fm.n_c; ++lag) {
            for (const auto& b : feature_names(fm.num_classes)) expected.push_back(b + lag_suffix(lag));
        }
        if (expected != header) throw Error(ErrorCode::InvalidArgument, "unexpected dataset CSV header");
    }
    std::vector<std::vector<double>> rows;
    std::vector<std::string> f;
    while (csv::read_row(in, f)) {
        if (f.size() != header.size()) throw Error(ErrorCode::DimMismatch, "dataset CSV row has wrong field count");
        RowKey k;
        k.frame = static_cast<int>(csv::parse_int(f[0]));
        k.seg_id = static_cast<std::int32_t>(csv::parse_int(f[1]));
        k.track_id = static_cast<std::int32_t>(csv::parse_int(f[2]));
        k.class_label = static_cast<std::int32_t>(csv::parse_int(f[3]));
        std::vector<double> values;
        for (int c = 0; c < dim; ++c) values.push_back(csv::parse_double(f[4 + static_cast<std::size_t>(c)]));
        const std::size_t tail = 4 + static_cast<std::size_t>(dim);
        fm.iou_adj.push_back(f[tail].empty() ? kUnknown : csv::parse_double(f[tail]));
        const std::string& p = f[tail + 1];
        fm.origin.push_back(p == "pseudo" ? RowOrigin::Pseudo : p == "augmented" ? RowOrigin::Augmented : RowOrigin::Real);
        k.sequence = static_cast<int>(csv::parse_int(f[tail + 2]));
        for (std::size_t c = tail + 3; c < f.size(); ++c) values.push_back(csv::parse_double(f[c]));
        fm.keys.push_back(k);
        rows.push_back(std::move(values));
    }
    fm.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(fm.n_c + 1) * dim);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        fm.features.row(static_cast<Eigen::Index>(i)) =
            Eigen::Map<const Eigen::RowVectorXd>(rows[i].data(), fm.features.cols());
    }
    return fm;
}

}  // namespace segqual
