#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "segqual/segment_metrics.hpp"
#include "support.hpp"

using namespace segqual;

namespace {

DispersionMaps constant_maps(int h, int w, double e, double v, double m) {
    DispersionMaps maps;
    maps.height = h;
    maps.width = w;
    const auto n = static_cast<std::size_t>(h * w);
    maps.entropy.assign(n, e);
    maps.variation_ratio.assign(n, v);
    maps.margin.assign(n, m);
    return maps;
}

const std::vector<std::string> kSquare{"00000", "01110", "01110", "01110", "00000"};
const std::vector<std::string> kWide{"000000000", "000000000", "000000000", "000111000", "000111000",
                                     "000111000", "000000000", "000000000", "000000000"};

}  // namespace

TEST_CASE("mean dispersion") {
    const auto labels = testing::labels_from(kSquare);
    const auto sf = segment_frame(labels);
    const auto& sq = sf.segment(2);
    std::vector<double> map(25, 0.5);
    for (auto r : {Region::All, Region::Interior, Region::Boundary}) CHECK(mean_dispersion(sq, map, r) == 0.5);

    // 4x4 solid block inside 6x6: interior is the 2x2 centre.
    const auto sf2 = segment_frame(testing::labels_from({"000000", "011110", "011110", "011110", "011110", "000000"}));
    std::vector<double> m2(36, 0.9);
    m2[2 * 6 + 2] = 0.2;
    m2[2 * 6 + 3] = 0.4;
    m2[3 * 6 + 2] = 0.2;
    m2[3 * 6 + 3] = 0.4;
    CHECK(mean_dispersion(sf2.segment(2), m2, Region::Interior) == doctest::Approx(0.3));
    CHECK_ERROR(mean_dispersion(sf2.segment(1), m2, Region::Interior), ErrorCode::EmptyRegion);
}

TEST_CASE("mean dispersion matches brute force on random blobs") {
    std::mt19937 gen(4);
    std::uniform_real_distribution<double> u;
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<std::int32_t> v(20 * 20);
        for (auto& x : v) x = gen() % 5 == 0 ? 1 : 0;
        const auto sf = segment_frame(LabelMap(20, 20, v));
        std::vector<double> map(400);
        for (auto& x : map) x = u(gen);
        for (const auto& s : sf.segments) {
            double sum = 0;
            for (int p : s.pixels) sum += map[p];
            REQUIRE(mean_dispersion(s, map, Region::All) == doctest::Approx(sum / s.size()).epsilon(1e-12));
        }
    }
}

TEST_CASE("mean class probs") {
    const ProbTensor one(1, 1, 2, {0.2f, 0.8f});
    const auto sf = segment_frame(argmax_labels(one));
    const auto p = mean_class_probs(sf.segment(1), one);
    CHECK(p[0] == doctest::Approx(0.2));
    CHECK(p[1] == doctest::Approx(0.8));
    const ProbTensor uni(3, 3, 4, std::vector<float>(36, 0.25f));
    for (double x : mean_class_probs(segment_frame(argmax_labels(uni)).segment(1), uni)) CHECK(x == 0.25);

    std::mt19937 gen(8);
    const auto t = testing::random_tensor(12, 12, 3, gen);
    const auto sf2 = segment_frame(argmax_labels(t));
    for (const auto& s : sf2.segments) {
        const auto probs = mean_class_probs(s, t);
        for (int c = 0; c < 3; ++c) {
            double sum = 0;
            for (int px : s.pixels) sum += t.pixel(static_cast<std::size_t>(px))[c];
            REQUIRE(probs[c] == doctest::Approx(sum / s.size()).epsilon(1e-9));
        }
    }
}

TEST_CASE("3x3 square on constant entropy 0.4") {
    const auto labels = testing::labels_from(kSquare);
    const auto sf = segment_frame(labels);
    const auto t = testing::one_hot(labels, 2);
    const auto rec = build_metric_record(sf.segment(2), constant_maps(5, 5, 0.4, 0.1, 0.2), t, 3);
    CHECK(rec.frame == 3);
    CHECK(rec.size == 9);
    CHECK(rec.size_in == 1);
    CHECK(rec.size_bd == 8);
    CHECK(rec.size_rel == 9.0 / 8.0);
    CHECK(rec.entropy.mean == doctest::Approx(0.4));
    CHECK(rec.entropy.mean_in == doctest::Approx(0.4));
    CHECK(rec.entropy.mean_bd == doctest::Approx(0.4));
    CHECK(rec.entropy.rel == doctest::Approx(0.45).epsilon(1e-12));
    CHECK(rec.center.row == 2.0);
    CHECK(rec.center.col == 2.0);
    CHECK(!rec.iou_adj.has_value());
    CHECK(rec.track_id == -1);
    CHECK(rec.features().size() == 22 + 2);
}

TEST_CASE("one-hot tensor has zero dispersion features") {
    const auto labels = testing::labels_from(kWide);
    const auto t = testing::one_hot(labels, 3);
    const auto sf = segment_frame(labels);
    const auto recs = frame_metrics(sf, dispersion_maps(t), t);
    REQUIRE(recs.size() == 2);
    for (const auto& r : recs) {
        const auto f = r.features();
        for (int i = 7; i < 22; ++i) CHECK(f[i] == 0.0);
    }
}

TEST_CASE("strip raises EmptyInterior and is skipped") {
    const LabelMap strip(2, 6, std::vector<std::int32_t>(12, 1));
    const auto t = testing::one_hot(strip, 2);
    const auto sf = segment_frame(strip);
    CHECK_ERROR(build_metric_record(sf.segment(1), dispersion_maps(t), t, 0), ErrorCode::EmptyInterior);
    CHECK(frame_metrics(sf, dispersion_maps(t), t).empty());
}

TEST_CASE("record invariants on random tensors") {
    std::mt19937 gen(21);
    for (int rep = 0; rep < 10; ++rep) {
        // Smooth-ish field so segments have interiors.
        std::vector<std::int32_t> v(30 * 30);
        for (int p = 0; p < 900; ++p) v[p] = ((p / 30) / 6 + (p % 30) / 7 + static_cast<int>(gen() % 2)) % 3;
        const auto t = testing::random_tensor(30, 30, 3, gen);
        const auto sf = segment_frame(LabelMap(30, 30, v));
        const auto recs = frame_metrics(sf, dispersion_maps(t), t);
        for (const auto& r : recs) {
            REQUIRE(r.size_in >= 1);
            REQUIRE(r.size == r.size_in + r.size_bd);
            REQUIRE(r.size_rel >= 1.0);
            REQUIRE(r.size_rel_in < r.size_rel);
            for (const auto* d : {&r.entropy, &r.variation_ratio, &r.margin}) {
                REQUIRE(d->rel == d->mean * r.size_rel);
                REQUIRE(d->rel_in == d->mean_in * r.size_rel_in);
                for (double x : {d->mean, d->mean_in, d->mean_bd}) {
                    REQUIRE(x >= 0.0);
                    REQUIRE(x <= 1.0);
                }
            }
            double total = 0;
            for (double x : r.class_probs) total += x;
            REQUIRE(std::abs(total - 1.0) <= 1e-4);
            REQUIRE(r.features().size() == static_cast<std::size_t>(kBaseMetricCount + 3));
        }
    }
}

TEST_CASE("metrics CSV header and round trip") {
    const auto h = metrics_csv_header(2);
    std::string joined;
    for (const auto& s : h) joined += (joined.empty() ? "" : ",") + s;
    CHECK(joined ==
          "frame,seg_id,track_id,class,S,S_in,S_bd,S_rel,S_rel_in,cy,cx,E,E_in,E_bd,E_rel,E_rel_in,"
          "V,V_in,V_bd,V_rel,V_rel_in,M,M_in,M_bd,M_rel,M_rel_in,P_0,P_1,iou_adj");
    CHECK(feature_names(2).size() == 24);

    std::mt19937 gen(1);
    const auto labels = testing::labels_from(kWide);
    const auto t = testing::random_tensor(9, 9, 2, gen);
    auto recs = frame_metrics(segment_frame(labels), dispersion_maps(t), t);
    REQUIRE(recs.size() == 2);
    recs[0].iou_adj = 0.25;
    std::stringstream ss;
    write_metrics_csv(ss, recs, 2);
    const auto back = read_metrics_csv(ss);
    REQUIRE(back.size() == recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        CHECK(back[i].features() == recs[i].features());
        CHECK(back[i].iou_adj == recs[i].iou_adj);
    }
    std::stringstream again;
    write_metrics_csv(again, back, 2);
    std::stringstream first;
    write_metrics_csv(first, recs, 2);
    CHECK(again.str() == first.str());
    CHECK(first.str().find(",\n") != std::string::npos);
}
