#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "segqual/dataset.hpp"
#include "support.hpp"

using namespace segqual;
using testing::Rect;

namespace {

struct Scene {
    TrackedSequence seq;
    std::vector<MetricRecord> metrics;
    std::map<int, std::vector<TargetRecord>> targets;
};

/// One blob moving right from frame `birth`, a static blob throughout.
Scene moving_scene(int frames, int birth, std::uint32_t seed) {
    std::mt19937 gen(seed);
    Scene s;
    std::vector<SegmentFrame> sfs;
    std::vector<ProbTensor> tensors;
    for (int t = 0; t < frames; ++t) {
        std::vector<Rect> rects{{20, 40, 6, 6, 2}};
        if (t >= birth) rects.push_back({5, 2 + 2 * t, 6, 6, 1});
        sfs.push_back(testing::painted_frame(32, 64, rects, t));
        tensors.push_back(testing::random_tensor(32, 64, 3, gen));
    }
    s.seq = track_sequence(sfs, TrackerConfig{});
    for (int t = 0; t < frames; ++t) {
        const auto& sf = s.seq.frames[static_cast<std::size_t>(t)];
        auto recs = frame_metrics(sf, dispersion_maps(tensors[static_cast<std::size_t>(t)]),
                                  tensors[static_cast<std::size_t>(t)]);
        std::vector<std::int32_t> v(sf.num_pixels());
        for (std::size_t p = 0; p < sf.num_pixels(); ++p) v[p] = sf.segment(sf.component_map[p]).class_label;
        s.targets[t] = frame_targets(sf, LabelMap(sf.height, sf.width, v));
        for (auto& r : recs) r.track_id = s.seq.track_of(static_cast<std::size_t>(t), r.seg_id);
        s.metrics.insert(s.metrics.end(), recs.begin(), recs.end());
    }
    attach_targets(s.metrics, s.targets);
    return s;
}

/// Record of the given track at frame t.
const MetricRecord& record_of(const Scene& s, std::int32_t track, int t) {
    for (const auto& r : s.metrics) {
        if (r.frame == t && r.track_id == track) return r;
    }
    throw std::runtime_error("missing record");
}

FeatureMatrix random_matrix(int real, int pseudo, std::uint32_t seed) {
    std::mt19937 gen(seed);
    std::uniform_real_distribution<double> u;
    FeatureMatrix fm;
    fm.num_classes = 2;
    fm.features.resize(real + pseudo, fm.block_dim());
    for (Eigen::Index i = 0; i < fm.features.rows(); ++i) {
        for (Eigen::Index j = 0; j < fm.features.cols(); ++j) fm.features(i, j) = u(gen);
        fm.iou_adj.push_back(u(gen) < 0.3 ? 0.0 : u(gen));
        fm.origin.push_back(i < real ? RowOrigin::Real : RowOrigin::Pseudo);
        fm.keys.push_back({0, static_cast<int>(i), 1, static_cast<std::int32_t>(i % 7), 1});
    }
    return fm;
}

}  // namespace

TEST_CASE("n_c = 0 equals the raw record") {
    const auto s = moving_scene(6, 0, 1);
    const auto fm = build_timeseries(s.seq, s.metrics, s.targets, 0);
    CHECK(fm.features.cols() == 22 + 3);
    REQUIRE(fm.rows() == static_cast<Eigen::Index>(s.metrics.size()));
    for (Eigen::Index i = 0; i < fm.rows(); ++i) {
        const auto f = s.metrics[static_cast<std::size_t>(i)].features();
        for (Eigen::Index j = 0; j < fm.features.cols(); ++j) REQUIRE(fm.features(i, j) == f[static_cast<std::size_t>(j)]);
    }
}

TEST_CASE("carry-back for a newborn track") {
    const auto s = moving_scene(8, 7, 2);
    const auto fm = build_timeseries(s.seq, s.metrics, s.targets, 5);
    const int dim = fm.block_dim();
    bool found = false;
    for (Eigen::Index i = 0; i < fm.rows(); ++i) {
        if (fm.keys[static_cast<std::size_t>(i)].frame != 7 || fm.keys[static_cast<std::size_t>(i)].class_label != 1) continue;
        found = true;
        for (int lag = 1; lag <= 5; ++lag) {
            CHECK(fm.features.row(i).segment(lag * dim, dim) == fm.features.row(i).segment(0, dim));
        }
    }
    CHECK(found);
}

TEST_CASE("twelve-frame track with n_c = 10") {
    const auto s = moving_scene(12, 0, 3);
    const auto fm = build_timeseries(s.seq, s.metrics, s.targets, 10);
    const int dim = fm.block_dim();
    CHECK(fm.features.cols() == 11 * dim);
    for (Eigen::Index i = 0; i < fm.rows(); ++i) {
        const auto& key = fm.keys[static_cast<std::size_t>(i)];
        if (key.frame != 11 || key.class_label != 1) continue;
        for (int lag = 0; lag <= 10; ++lag) {
            const auto f = record_of(s, key.track_id, 11 - lag).features();
            for (int j = 0; j < dim; ++j) REQUIRE(fm.features(i, lag * dim + j) == f[static_cast<std::size_t>(j)]);
        }
    }
    const auto trimmed = fm.with_history(3);
    CHECK(trimmed.features.cols() == 4 * dim);
    CHECK(trimmed.features == fm.features.leftCols(4 * dim));
    CHECK(fm.column_index("E") == 7);
    CHECK(fm.column_index("S_lag3") == 3 * dim);
    CHECK_ERROR(fm.column_index("nope"), ErrorCode::InvalidArgument);
    CHECK_ERROR(build_timeseries(s.seq, s.metrics, s.targets, 11), ErrorCode::InvalidArgument);
}

TEST_CASE("unlabeled records only with include_unlabeled") {
    auto s = moving_scene(4, 0, 4);
    for (auto& r : s.metrics) {
        if (r.frame == 2) r.iou_adj.reset();
    }
    const auto labeled = build_timeseries(s.seq, s.metrics, s.targets, 1);
    const auto all = build_timeseries(s.seq, s.metrics, s.targets, 1, 0, true);
    CHECK(all.rows() > labeled.rows());
    for (Eigen::Index i = 0; i < labeled.rows(); ++i) CHECK(labeled.labeled(i));
}

TEST_CASE("split fractions and determinism") {
    const auto fm = random_matrix(100, 0, 5);
    SplitSpec spec;
    spec.seed = 42;
    const auto a = split(fm, spec);
    CHECK(a.train.size() == 70);
    CHECK(a.val.size() == 10);
    CHECK(a.test.size() == 20);
    const auto b = split(fm, spec);
    CHECK(a.train == b.train);
    CHECK(a.val == b.val);
    CHECK(a.test == b.test);
    spec.seed = 43;
    CHECK(split(fm, spec).train != a.train);
}

TEST_CASE("pseudo rows never reach val or test") {
    const auto fm = random_matrix(100, 400, 6);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        for (bool by_track : {false, true}) {
            SplitSpec spec;
            spec.seed = seed;
            spec.by_track = by_track;
            const auto sp = split(fm, spec);
            CHECK(sp.pseudo.size() == 400);
            std::set<Eigen::Index> all;
            for (const auto* v : {&sp.train, &sp.val, &sp.test}) {
                for (auto i : *v) {
                    REQUIRE(i < 100);
                    REQUIRE(all.insert(i).second);
                }
            }
            REQUIRE(all.size() == 100);
            if (!by_track) {
                REQUIRE(sp.val.size() == 10);
                REQUIRE(sp.test.size() == 20);
            } else {
                // Tracks stay whole.
                std::map<std::int32_t, int> side;
                int tag = 0;
                for (const auto* v : {&sp.train, &sp.val, &sp.test}) {
                    ++tag;
                    for (auto i : *v) {
                        const auto [it, fresh] = side.emplace(fm.keys[static_cast<std::size_t>(i)].track_id, tag);
                        REQUIRE(it->second == tag);
                    }
                }
            }
        }
    }
}

TEST_CASE("split needs ten labeled rows") {
    CHECK_ERROR(split(random_matrix(9, 50, 7), SplitSpec{}), ErrorCode::TooFewRows);
    SplitSpec bad;
    bad.train = 0.8;
    CHECK_ERROR(split(random_matrix(20, 0, 7), bad), ErrorCode::InvalidArgument);
}

TEST_CASE("standardize examples") {
    Eigen::MatrixXd train(4, 2);
    train << 3, 7, 3, 7, 7, 7, 7, 7;  // mean 5, population std 2; constant column
    Eigen::MatrixXd val(1, 2), test(1, 2);
    val << 9, 1;
    test << 5, 7;
    const auto st = standardize(train, val, test);
    CHECK(val(0, 0) == 2.0);
    CHECK(val(0, 1) == 1.0);
    CHECK(test(0, 0) == 0.0);
    CHECK(test(0, 1) == 7.0);
    CHECK(st.scale(1) == 1.0);

    std::mt19937 gen(8);
    std::normal_distribution<double> n(3.0, 4.0);
    Eigen::MatrixXd x(200, 5);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(gen);
    const auto z = Standardizer::fit(x).apply(x);
    for (Eigen::Index j = 0; j < 5; ++j) {
        const double mean = z.col(j).mean();
        const double var = (z.col(j).array() - mean).square().mean();
        CHECK(std::abs(mean) <= 1e-10);
        CHECK(std::abs(std::sqrt(var) - 1.0) <= 1e-10);
    }
}

TEST_CASE("smoter rows are convex combinations with interpolated targets") {
    std::mt19937 gen(9);
    std::uniform_real_distribution<double> u;
    const int n = 300;
    Eigen::MatrixXd x(n, 4);
    std::vector<double> y(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < 4; ++j) x(i, j) = u(gen);
        // Skewed targets: most rows in the top bins.
        y[static_cast<std::size_t>(i)] = 1.0 - std::pow(u(gen), 3.0);
    }
    const auto res = smoter(x, y, SmoterParams{}, 17);
    REQUIRE(res.features.rows() > 0);
    for (Eigen::Index s = 0; s < res.features.rows(); ++s) {
        const auto [a, b] = res.parents[static_cast<std::size_t>(s)];
        const Eigen::RowVectorXd d = x.row(b) - x.row(a);
        const double t = (res.features.row(s) - x.row(a)).dot(d) / d.squaredNorm();
        REQUIRE(t >= -1e-12);
        REQUIRE(t <= 1 + 1e-12);
        REQUIRE((x.row(a) + t * d - res.features.row(s)).norm() <= 1e-12);
        const double ya = y[static_cast<std::size_t>(a)], yb = y[static_cast<std::size_t>(b)];
        const double ys = res.targets[static_cast<std::size_t>(s)];
        REQUIRE(ys >= std::min(ya, yb));
        REQUIRE(ys <= std::max(ya, yb));
        REQUIRE(ys == doctest::Approx(ya + t * (yb - ya)).epsilon(1e-9));
        // Parents share a bin.
        REQUIRE(std::min(9, int(ya * 10)) == std::min(9, int(yb * 10)));
    }
    std::vector<int> counts(10, 0);
    for (double v : y) ++counts[static_cast<std::size_t>(std::min(9, int(v * 10)))];
    for (double v : res.targets) ++counts[static_cast<std::size_t>(std::min(9, int(v * 10)))];
    const int hi = *std::max_element(counts.begin(), counts.end());
    for (int c : counts) {
        if (c > 0) CHECK(hi - c <= 1);
    }
}

TEST_CASE("smoter midpoint target") {
    Eigen::MatrixXd x(4, 1);
    x << 0.0, 1.0, 10.0, 11.0;
    const std::vector<double> y{0.2, 0.22, 0.9, 0.92};
    const auto res = smoter(x, y, SmoterParams{10, 1, 2.0}, 3);
    for (Eigen::Index s = 0; s < res.features.rows(); ++s) {
        const auto [a, b] = res.parents[static_cast<std::size_t>(s)];
        const double t = (res.features(s, 0) - x(a, 0)) / (x(b, 0) - x(a, 0));
        CHECK(res.targets[static_cast<std::size_t>(s)] ==
              doctest::Approx((1 - t) * y[static_cast<std::size_t>(a)] + t * y[static_cast<std::size_t>(b)]));
    }
    // Equal weights put the child on the midpoint of its parents' targets.
    Eigen::MatrixXd two(2, 1);
    two << 0.0, 0.0;
    const auto mid = smoter(two, std::vector<double>{0.2, 0.25}, SmoterParams{10, 1, 2.0}, 1);
    for (double t : mid.targets) CHECK(t == doctest::Approx(0.225));
}

TEST_CASE("smoter errors and augment") {
    Eigen::MatrixXd x(5, 1);
    x << 0, 1, 2, 3, 4;
    CHECK_ERROR(smoter(x, std::vector<double>{0.05, 0.95, 0.96, 0.97, 0.98}, SmoterParams{}, 1), ErrorCode::BinTooSmall);
    auto fm = random_matrix(60, 0, 10);
    const auto aug = smoter_augment(fm, SmoterParams{}, 4);
    CHECK(aug.rows() > fm.rows());
    for (Eigen::Index i = fm.rows(); i < aug.rows(); ++i) CHECK(aug.origin[static_cast<std::size_t>(i)] == RowOrigin::Augmented);
    CHECK(aug.features.topRows(fm.rows()) == fm.features);
}

TEST_CASE("dataset CSV round trip") {
    const auto s = moving_scene(5, 1, 11);
    const auto fm = build_timeseries(s.seq, s.metrics, s.targets, 2, 3);
    std::stringstream ss;
    write_dataset_csv(ss, fm);
    const auto back = read_dataset_csv(ss);
    CHECK(back.n_c == 2);
    CHECK(back.num_classes == 3);
    CHECK(back.features == fm.features);
    CHECK(back.iou_adj == fm.iou_adj);
    CHECK(back.keys == fm.keys);
    std::stringstream again;
    write_dataset_csv(again, back);
    std::stringstream first;
    write_dataset_csv(first, fm);
    CHECK(again.str() == first.str());
}

TEST_CASE("composition names") {
    for (auto c : {Composition::R, Composition::RA, Composition::RAP, Composition::RP, Composition::P}) {
        CHECK(parse_composition(to_string(c)) == c);
    }
    CHECK(uses_augmented(Composition::RAP));
    CHECK(!uses_real(Composition::P));
    CHECK(uses_pseudo(Composition::RP));
    CHECK_THROWS_AS(parse_composition("X"), Error);
}
