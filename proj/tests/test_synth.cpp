#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "segqual/synth.hpp"
#include "support.hpp"

using namespace segqual;

namespace {

BlobSpec disk(double row, double col, double vr, double vc, int cls, double rho = 0) {
    BlobSpec b;
    b.trajectory = {row, col, vr, vc, {}};
    b.class_label = cls;
    b.rho = rho;
    b.radius = 7;
    return b;
}

double mask_iou(const LabelMap& pred, const LabelMap& gt, int cls) {
    int inter = 0, uni = 0;
    for (std::size_t p = 0; p < pred.num_pixels(); ++p) {
        const bool a = pred[p] == cls, b = gt[p] == cls;
        inter += a && b;
        uni += a || b;
    }
    return uni ? double(inter) / uni : 1.0;
}

std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * double(i + j);
        i = j + 1;
    }
    return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    const auto ra = ranks(a), rb = ranks(b);
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += ra[i] / n;
        mb += rb[i] / n;
    }
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("noiseless scene argmax equals ground truth") {
    SceneSpec spec;
    spec.noise.blur_width = 0;
    spec.blobs = {disk(15, 15, 1, 1, 1), disk(45, 40, -1, 0.5, 2)};
    BlobSpec rect = disk(30, 50, 0.5, -1, 1);
    rect.shape = BlobShape::Rectangle;
    rect.radius = 3;
    rect.half_width = 5;
    spec.blobs.push_back(rect);
    const auto scene = generate(spec);
    REQUIRE(scene.probs.size() == 20);
    for (int t = 0; t < 20; ++t) CHECK(argmax_labels(scene.probs[t]).data().size() == scene.gt[t].data().size());
    for (int t = 0; t < 20; ++t) {
        const auto pred = argmax_labels(scene.probs[t]);
        REQUIRE(std::equal(pred.data().begin(), pred.data().end(), scene.gt[t].data().begin()));
    }
}

TEST_CASE("corrupted blobs overlap ground truth less") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        SceneSpec spec;
        spec.seed = seed;
        spec.frames = 5;
        spec.blobs = {disk(20, 16, 0, 1, 1, 0.0), disk(44, 16, 0, 1, 2, 1.0)};
        const auto scene = generate(spec);
        double clean = 0, dirty = 0;
        for (int t = 0; t < 5; ++t) {
            const auto pred = argmax_labels(scene.probs[t]);
            clean += mask_iou(pred, scene.gt[t], 1);
            dirty += mask_iou(pred, scene.gt[t], 2);
        }
        CHECK(dirty < clean);
    }
}

TEST_CASE("visibility windows hide blobs") {
    SceneSpec spec;
    auto b = disk(30, 30, 0, 0, 2);
    b.visible = {{0, 8}, {10, 20}};
    spec.blobs = {b};
    const auto scene = generate(spec);
    for (int t = 0; t < 20; ++t) {
        const auto pred = argmax_labels(scene.probs[t]);
        const bool present = std::count(pred.data().begin(), pred.data().end(), 2) > 0;
        CHECK(present == (t < 8 || t >= 10));
        CHECK((std::count(scene.truth[t].data().begin(), scene.truth[t].data().end(), 1) > 0) == present);
    }
}

TEST_CASE("ghosts appear only in predictions") {
    SceneSpec spec;
    auto g = disk(30, 30, 0, 0, 1);
    g.ghost = true;
    spec.blobs = {g};
    const auto scene = generate(spec);
    for (int t = 0; t < 20; ++t) {
        const auto pred = argmax_labels(scene.probs[t]);
        CHECK(std::count(pred.data().begin(), pred.data().end(), 1) > 0);
        CHECK(std::count(scene.gt[t].data().begin(), scene.gt[t].data().end(), 1) == 0);
    }
}

TEST_CASE("out-of-bounds blobs are rejected") {
    SceneSpec spec;
    spec.blobs = {disk(30, 30, 0, 2, 1)};
    CHECK_ERROR(generate(spec), ErrorCode::BlobOutOfBounds);
    // Leaving the image while hidden is fine.
    spec.blobs[0].visible = {{0, 8}};
    CHECK_NOTHROW(generate(spec));
    spec.blobs = {disk(30, 30, 0, 0, 5)};
    CHECK_ERROR(generate(spec), ErrorCode::InvalidArgument);
}

TEST_CASE("generation is deterministic and JSON round-trips") {
    PopulationSpec pop;
    pop.noise.temperature_jitter = 0.3;
    pop.noise.rho_drift = 0.1;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto spec = random_scene(pop, seed);
        CHECK(scene_json(random_scene(pop, seed)) == scene_json(spec));
        const auto back = parse_scene_json(scene_json(spec));
        CHECK(scene_json(back) == scene_json(spec));
        const auto a = generate(spec);
        const auto b = generate(back);
        CHECK(a.probs == b.probs);
        CHECK(a.gt == b.gt);
        CHECK(a.truth == b.truth);
    }
    CHECK(scene_json(random_scene(pop, 1)) != scene_json(random_scene(pop, 2)));
    CHECK_THROWS_AS(parse_scene_json("{\"height\": \"x\"}"), Error);
}

TEST_CASE("segment entropy rises with the corruption level") {
    PopulationSpec pop;
    std::vector<double> rho, entropy;
    for (std::uint64_t seed = 0; rho.size() < 220; ++seed) {
        const auto spec = random_scene(pop, 1000 + seed);
        const auto scene = generate(spec);
        for (std::size_t b = 0; b < spec.blobs.size(); ++b) {
            const auto& blob = spec.blobs[b];
            if (blob.ghost) continue;
            double sum = 0;
            int frames = 0;
            for (std::size_t t = 0; t < scene.probs.size(); ++t) {
                const auto sf = segment_frame(argmax_labels(scene.probs[t]));
                const auto maps = dispersion_maps(scene.probs[t]);
                std::map<std::int32_t, int> hits;
                for (std::size_t p = 0; p < sf.num_pixels(); ++p) {
                    if (scene.truth[t][p] != static_cast<std::int32_t>(b + 1)) continue;
                    const auto& seg = sf.segment(sf.component_map[p]);
                    if (seg.class_label == blob.class_label) ++hits[seg.id];
                }
                if (hits.empty()) continue;
                const auto best = std::max_element(hits.begin(), hits.end(), [](auto& x, auto& y) { return x.second < y.second; });
                const auto& seg = sf.segment(best->first);
                double e = 0;
                for (int p : seg.pixels) e += maps.entropy[static_cast<std::size_t>(p)];
                sum += e / static_cast<double>(seg.size());
                ++frames;
            }
            if (frames == 0) continue;
            rho.push_back(blob.rho);
            entropy.push_back(sum / frames);
        }
    }
    const double r = spearman(rho, entropy);
    MESSAGE("spearman " << r << " over " << rho.size() << " blobs");
    CHECK(r > 0.9);
}

TEST_CASE("id consistency scoring") {
    // One object visible in 20 frames, background elsewhere.
    std::vector<SegmentFrame> frames;
    std::vector<LabelMap> truth, gt;
    for (int t = 0; t < 20; ++t) {
        const auto labels = testing::paint(10, 10, {{2, 2, 4, 4, 1}});
        frames.push_back(segment_frame(labels, t));
        gt.push_back(labels);
        std::vector<std::int32_t> ids(100, 0);
        for (int p = 0; p < 100; ++p) ids[p] = labels[p] == 1 ? 1 : 0;
        truth.emplace_back(10, 10, ids);
    }
    std::vector<std::vector<std::int32_t>> same(20), swapped(20);
    for (int t = 0; t < 20; ++t) {
        // Segment 1 is background, segment 2 the object.
        same[t] = {1, 2};
        swapped[t] = {1, t < 10 ? 2 : 3};
    }
    CHECK(id_consistency(attach_track_ids(frames, same), truth, gt) == 1.0);
    CHECK(id_consistency(attach_track_ids(frames, swapped), truth, gt) == 0.5);
}
