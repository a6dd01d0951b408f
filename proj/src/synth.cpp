#include "segqual/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "segqual/error.hpp"
#include "segqual/rng.hpp"

namespace segqual {
namespace {

using Json = nlohmann::json;

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

/// Smooth lattice noise in [0, 1): hashed values at integer lattice points,
/// blended with smoothstep weights.
class ValueNoise {
public:
    ValueNoise(std::uint64_t seed, double cell) : seed_(seed), cell_(cell) {}

    double operator()(double row, double col) const {
        const double y = row / cell_;
        const double x = col / cell_;
        const double fy = std::floor(y);
        const double fx = std::floor(x);
        const auto iy = static_cast<std::int64_t>(fy);
        const auto ix = static_cast<std::int64_t>(fx);
        const double ty = smoothstep(y - fy);
        const double tx = smoothstep(x - fx);
        const double a = lattice(iy, ix) * (1 - tx) + lattice(iy, ix + 1) * tx;
        const double b = lattice(iy + 1, ix) * (1 - tx) + lattice(iy + 1, ix + 1) * tx;
        return a * (1 - ty) + b * ty;
    }

private:
    double lattice(std::int64_t iy, std::int64_t ix) const {
        const auto key = (static_cast<std::uint64_t>(iy) << 32) ^ static_cast<std::uint64_t>(ix & 0xffffffff);
        return static_cast<double>(derive_seed(seed_, key) >> 11) * 0x1.0p-53;
    }

    std::uint64_t seed_;
    double cell_;
};

/// Signed distance of a pixel centre to the blob edge, positive inside.
double inside_depth(const BlobSpec& b, Center c, int row, int col) {
    const double dr = row - c.row;
    const double dc = col - c.col;
    if (b.shape == BlobShape::Disk) return b.radius - std::sqrt(dr * dr + dc * dc);
    return std::min(b.radius - std::abs(dr), b.half_width - std::abs(dc));
}

double half_extent_col(const BlobSpec& b) { return b.shape == BlobShape::Disk ? b.radius : b.half_width; }

void validate(const SceneSpec& spec) {
    if (spec.height < 1 || spec.width < 1 || spec.frames < 1) {
        throw Error(ErrorCode::InvalidArgument, "scene dimensions and frame count must be positive");
    }
    if (spec.num_classes < 2) throw Error(ErrorCode::InvalidArgument, "scenes need at least two classes");
    if (spec.background < 0 || spec.background >= spec.num_classes) {
        throw Error(ErrorCode::InvalidArgument, "background class out of range");
    }
    const NoiseSpec& n = spec.noise;
    if (!(n.temperature > 0) || !(n.base_margin > 0) || n.blur_width < 0 || n.flip_scale < 0 || !(n.noise_cell > 0) ||
        n.temperature_jitter < 0 || n.rho_drift < 0 || !(n.drift_coeff >= 0 && n.drift_coeff < 1)) {
        throw Error(ErrorCode::InvalidArgument, "invalid noise parameters");
    }
    for (std::size_t i = 0; i < spec.blobs.size(); ++i) {
        const BlobSpec& b = spec.blobs[i];
        const std::string name = "blob " + std::to_string(i);
        if (b.class_label < 0 || b.class_label >= spec.num_classes || b.class_label == spec.background) {
            throw Error(ErrorCode::InvalidArgument, name + ": class must be a foreground class");
        }
        if (b.confuser >= spec.num_classes || b.confuser == b.class_label) {
            throw Error(ErrorCode::InvalidArgument, name + ": invalid confuser class");
        }
        if (!(b.radius > 0) || !(half_extent_col(b) > 0)) throw Error(ErrorCode::InvalidArgument, name + ": size");
        if (!(b.rho >= 0 && b.rho <= 1)) throw Error(ErrorCode::InvalidArgument, name + ": rho outside [0, 1]");
        for (int t = 0; t < spec.frames; ++t) {
            if (!b.visible_at(t)) continue;
            const Center c = b.trajectory.at(t);
            const double hc = half_extent_col(b);
            if (c.row - b.radius < 0 || c.row + b.radius > spec.height - 1 || c.col - hc < 0 ||
                c.col + hc > spec.width - 1) {
                throw Error(ErrorCode::BlobOutOfBounds,
                            name + " leaves the image at frame " + std::to_string(t));
            }
        }
    }
}

std::int32_t confuser_of(const SceneSpec& spec, const BlobSpec& b) {
    if (b.confuser >= 0) return b.confuser;
    std::int32_t k = b.class_label;
    do {
        k = (k + 1) % spec.num_classes;
    } while (k == spec.background || k == b.class_label);
    return k;
}

}  // namespace

Center Trajectory::at(int frame) const {
    if (waypoints.empty()) return {row + v_row * frame, col + v_col * frame};
    if (frame <= waypoints.front().frame) return {waypoints.front().row, waypoints.front().col};
    for (std::size_t i = 1; i < waypoints.size(); ++i) {
        const Waypoint& a = waypoints[i - 1];
        const Waypoint& b = waypoints[i];
        if (frame <= b.frame) {
            const double s = b.frame > a.frame ? (frame - a.frame) / (b.frame - a.frame) : 1.0;
            return {a.row + s * (b.row - a.row), a.col + s * (b.col - a.col)};
        }
    }
    return {waypoints.back().row, waypoints.back().col};
}

bool BlobSpec::visible_at(int frame) const {
    if (visible.empty()) return true;
    return std::any_of(visible.begin(), visible.end(), [&](const Window& w) { return frame >= w.begin && frame < w.end; });
}

GeneratedScene generate(const SceneSpec& spec) {
    validate(spec);
    const int h = spec.height;
    const int w = spec.width;
    const int c = spec.num_classes;
    const NoiseSpec& noise = spec.noise;
    const std::size_t nb = spec.blobs.size();

    // Per-(blob, frame) temperature factors and rho drift, drawn up front.
    std::vector<std::vector<double>> temp(nb, std::vector<double>(static_cast<std::size_t>(spec.frames), 1.0));
    std::vector<std::vector<double>> rho(nb, std::vector<double>(static_cast<std::size_t>(spec.frames)));
    std::vector<ValueNoise> field;
    for (std::size_t b = 0; b < nb; ++b) {
        Rng rng(derive_seed(spec.seed, b));
        double drift = noise.rho_drift * rng.normal();
        const double innov = noise.rho_drift * std::sqrt(1.0 - noise.drift_coeff * noise.drift_coeff);
        for (int t = 0; t < spec.frames; ++t) {
            const double jitter = rng.normal();
            if (t > 0) drift = noise.drift_coeff * drift + innov * rng.normal();
            temp[b][static_cast<std::size_t>(t)] = std::exp(noise.temperature_jitter * jitter);
            rho[b][static_cast<std::size_t>(t)] = std::clamp(spec.blobs[b].rho + drift, 0.0, 1.0);
        }
        field.emplace_back(derive_seed(spec.seed, 1000003 + b), noise.noise_cell);
    }

    auto falloff = [&](double depth) {
        if (noise.blur_width <= 0) return 1.0;
        return std::clamp((depth + 0.5) / noise.blur_width, 0.05, 1.0);
    };

    GeneratedScene out;
    const std::size_t n = static_cast<std::size_t>(h) * w;
    std::vector<double> logits(static_cast<std::size_t>(c));
    for (int t = 0; t < spec.frames; ++t) {
        std::vector<Center> centers(nb);
        std::vector<char> shown(nb);
        for (std::size_t b = 0; b < nb; ++b) {
            centers[b] = spec.blobs[b].trajectory.at(t);
            shown[b] = spec.blobs[b].visible_at(t);
        }
        std::vector<float> probs(n * static_cast<std::size_t>(c));
        std::vector<std::int32_t> gt(n, spec.background);
        std::vector<std::int32_t> truth(n, 0);
        for (int r = 0; r < h; ++r) {
            for (int col = 0; col < w; ++col) {
                const std::size_t p = static_cast<std::size_t>(r) * w + col;
                int top = -1;        // topmost blob covering the pixel
                double depth = 0;    // its inside depth
                double outside = 1e9;  // distance to the nearest blob edge
                for (std::size_t b = 0; b < nb; ++b) {
                    if (!shown[b]) continue;
                    const double d = inside_depth(spec.blobs[b], centers[b], r, col);
                    if (d >= 0) {
                        top = static_cast<int>(b);
                        depth = d;
                    } else {
                        outside = std::min(outside, -d);
                    }
                    if (d >= 0 && !spec.blobs[b].ghost) {
                        gt[p] = spec.blobs[b].class_label;
                        truth[p] = static_cast<std::int32_t>(b + 1);
                    }
                }
                // Ghosts shape the prediction only; gt keeps the topmost real blob.
                std::fill(logits.begin(), logits.end(), 0.0);
                double temperature = noise.temperature;
                if (top < 0) {
                    logits[static_cast<std::size_t>(spec.background)] = noise.base_margin * falloff(outside);
                } else {
                    const auto b = static_cast<std::size_t>(top);
                    const BlobSpec& blob = spec.blobs[b];
                    const double level = rho[b][static_cast<std::size_t>(t)];
                    const double m = noise.base_margin * (1.0 - 0.9 * level) * falloff(std::min(depth, outside));
                    temperature *= temp[b][static_cast<std::size_t>(t)];
                    const double v = field[b](r - centers[b].row + 0.37 * noise.noise_cell,
                                              col - centers[b].col + 0.61 * noise.noise_cell);
                    if (v < level * noise.flip_scale) {
                        logits[static_cast<std::size_t>(confuser_of(spec, blob))] = m;
                        logits[static_cast<std::size_t>(blob.class_label)] = 0.5 * m;
                    } else {
                        logits[static_cast<std::size_t>(blob.class_label)] = m;
                    }
                }
                const double peak = *std::max_element(logits.begin(), logits.end());
                double total = 0;
                for (double& l : logits) {
                    l = std::exp((l - peak) / temperature);
                    total += l;
                }
                for (int k = 0; k < c; ++k) {
                    probs[p * static_cast<std::size_t>(c) + static_cast<std::size_t>(k)] =
                        static_cast<float>(logits[static_cast<std::size_t>(k)] / total);
                }
            }
        }
        out.probs.emplace_back(h, w, c, std::move(probs));
        out.gt.emplace_back(h, w, std::move(gt), spec.provenance, c);
        out.truth.emplace_back(h, w, std::move(truth));
    }
    return out;
}

SceneSpec random_scene(const PopulationSpec& pop, std::uint64_t seed) {
    Rng rng(seed);
    SceneSpec spec;
    spec.height = pop.height;
    spec.width = pop.width;
    spec.num_classes = pop.num_classes;
    spec.frames = pop.frames;
    spec.noise = pop.noise;
    spec.seed = derive_seed(seed, 77);
    const int span = pop.max_blobs - pop.min_blobs + 1;
    const int count = pop.min_blobs + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(span, 1))));
    const double last = pop.frames - 1;
    for (int i = 0; i < count; ++i) {
        BlobSpec b;
        b.class_label = 1 + static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(pop.num_classes - 1)));
        b.shape = rng.uniform() < 0.6 ? BlobShape::Disk : BlobShape::Rectangle;
        b.radius = rng.uniform(pop.min_radius, pop.max_radius);
        b.half_width = rng.uniform(pop.min_radius, pop.max_radius);
        b.rho = rng.uniform();
        b.ghost = rng.uniform() < pop.ghost_probability;
        const double hr = b.radius;
        const double hc = half_extent_col(b);
        const double lo_r = hr, hi_r = pop.height - 1 - hr;
        const double lo_c = hc, hi_c = pop.width - 1 - hc;
        if (rng.uniform() < pop.waypoint_probability) {
            for (double f : {0.0, std::floor(last / 2), last}) {
                b.trajectory.waypoints.push_back({f, rng.uniform(lo_r, hi_r), rng.uniform(lo_c, hi_c)});
            }
        } else {
            double vr = rng.uniform(-pop.max_speed, pop.max_speed);
            double vc = rng.uniform(-pop.max_speed, pop.max_speed);
            // Slow down until some start position keeps the blob inside.
            while (std::abs(vr) * last > hi_r - lo_r) vr *= 0.5;
            while (std::abs(vc) * last > hi_c - lo_c) vc *= 0.5;
            b.trajectory.v_row = vr;
            b.trajectory.v_col = vc;
            b.trajectory.row = rng.uniform(lo_r - std::min(0.0, vr * last), hi_r - std::max(0.0, vr * last));
            b.trajectory.col = rng.uniform(lo_c - std::min(0.0, vc * last), hi_c - std::max(0.0, vc * last));
        }
        if (rng.uniform() < 0.2 && pop.frames > 4) {
            const int gap_start = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(pop.frames - 3)));
            const int gap_len = 1 + static_cast<int>(rng.below(2));
            b.visible = {{0, gap_start}, {gap_start + gap_len, pop.frames}};
        }
        spec.blobs.push_back(std::move(b));
    }
    return spec;
}

double id_consistency(const TrackedSequence& tracked, std::span<const LabelMap> truth, std::span<const LabelMap> gt) {
    if (truth.size() != tracked.frames.size() || gt.size() != truth.size()) {
        throw Error(ErrorCode::DimMismatch, "truth and tracked frame counts differ");
    }
    // object -> per visible frame assigned track (-1 when nothing matches)
    std::map<std::int32_t, std::vector<std::int32_t>> assigned;
    for (std::size_t t = 0; t < truth.size(); ++t) {
        const SegmentFrame& sf = tracked.frames[t];
        if (truth[t].num_pixels() != sf.num_pixels()) throw Error(ErrorCode::DimMismatch, "frame size differs");
        std::map<std::int32_t, std::map<std::int32_t, std::int64_t>> overlap;  // object -> segment -> count
        std::map<std::int32_t, std::int32_t> object_class;
        for (std::size_t p = 0; p < sf.num_pixels(); ++p) {
            const std::int32_t obj = truth[t][p];
            if (obj == 0) continue;
            object_class.emplace(obj, gt[t][p]);
            auto& counts = overlap[obj];
            const std::int32_t seg = sf.component_map[p];
            if (seg > 0 && sf.segment(seg).class_label == gt[t][p]) ++counts[seg];
        }
        for (const auto& [obj, counts] : overlap) {
            std::int32_t best_seg = -1;
            std::int64_t best = 0;
            for (const auto& [seg, k] : counts) {
                if (k > best) {
                    best = k;
                    best_seg = seg;
                }
            }
            assigned[obj].push_back(best_seg < 0 ? -1 : tracked.track_of(t, best_seg));
        }
    }
    if (assigned.empty()) return 1.0;
    double total = 0;
    for (const auto& [obj, ids] : assigned) {
        std::map<std::int32_t, int> freq;
        for (std::int32_t id : ids) {
            if (id >= 0) ++freq[id];
        }
        int modal = 0;
        for (const auto& [id, k] : freq) modal = std::max(modal, k);
        total += static_cast<double>(modal) / static_cast<double>(ids.size());
    }
    return total / static_cast<double>(assigned.size());
}

// ---- JSON -----------------------------------------------------------------

namespace {

template <class T>
void read_opt(const Json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

SceneSpec parse_scene_json(const std::string& text) {
    SceneSpec spec;
    try {
        const Json j = Json::parse(text);
        read_opt(j, "height", spec.height);
        read_opt(j, "width", spec.width);
        read_opt(j, "num_classes", spec.num_classes);
        read_opt(j, "frames", spec.frames);
        read_opt(j, "background", spec.background);
        read_opt(j, "seed", spec.seed);
        if (j.contains("provenance")) {
            const auto p = j.at("provenance").get<std::string>();
            if (p != "real" && p != "pseudo") throw Error(ErrorCode::InvalidArgument, "provenance must be real or pseudo");
            spec.provenance = p == "pseudo" ? Provenance::Pseudo : Provenance::Real;
        }
        if (j.contains("noise")) {
            const Json& n = j.at("noise");
            read_opt(n, "temperature", spec.noise.temperature);
            read_opt(n, "base_margin", spec.noise.base_margin);
            read_opt(n, "blur_width", spec.noise.blur_width);
            read_opt(n, "flip_scale", spec.noise.flip_scale);
            read_opt(n, "noise_cell", spec.noise.noise_cell);
            read_opt(n, "temperature_jitter", spec.noise.temperature_jitter);
            read_opt(n, "rho_drift", spec.noise.rho_drift);
            read_opt(n, "drift_coeff", spec.noise.drift_coeff);
        }
        for (const Json& jb : j.value("blobs", Json::array())) {
            BlobSpec b;
            const auto shape = jb.value("shape", std::string("disk"));
            if (shape != "disk" && shape != "rectangle") throw Error(ErrorCode::InvalidArgument, "unknown shape " + shape);
            b.shape = shape == "disk" ? BlobShape::Disk : BlobShape::Rectangle;
            read_opt(jb, "radius", b.radius);
            b.half_width = b.radius;
            read_opt(jb, "half_width", b.half_width);
            read_opt(jb, "class", b.class_label);
            read_opt(jb, "confuser", b.confuser);
            read_opt(jb, "rho", b.rho);
            read_opt(jb, "ghost", b.ghost);
            if (jb.contains("trajectory")) {
                const Json& jt = jb.at("trajectory");
                read_opt(jt, "row", b.trajectory.row);
                read_opt(jt, "col", b.trajectory.col);
                read_opt(jt, "v_row", b.trajectory.v_row);
                read_opt(jt, "v_col", b.trajectory.v_col);
                for (const Json& wp : jt.value("waypoints", Json::array())) {
                    b.trajectory.waypoints.push_back(
                        {wp.at("frame").get<double>(), wp.at("row").get<double>(), wp.at("col").get<double>()});
                }
            }
            for (const Json& w : jb.value("visible", Json::array())) {
                b.visible.push_back({w.at(0).get<int>(), w.at(1).get<int>()});
            }
            spec.blobs.push_back(std::move(b));
        }
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("malformed scene spec: ") + e.what());
    }
    return spec;
}

std::string scene_json(const SceneSpec& spec) {
    nlohmann::ordered_json j;
    j["height"] = spec.height;
    j["width"] = spec.width;
    j["num_classes"] = spec.num_classes;
    j["frames"] = spec.frames;
    j["background"] = spec.background;
    j["seed"] = spec.seed;
    j["provenance"] = spec.provenance == Provenance::Pseudo ? "pseudo" : "real";
    const NoiseSpec& n = spec.noise;
    j["noise"] = {{"temperature", n.temperature},
                  {"base_margin", n.base_margin},
                  {"blur_width", n.blur_width},
                  {"flip_scale", n.flip_scale},
                  {"noise_cell", n.noise_cell},
                  {"temperature_jitter", n.temperature_jitter},
                  {"rho_drift", n.rho_drift},
                  {"drift_coeff", n.drift_coeff}};
    j["blobs"] = nlohmann::ordered_json::array();
    for (const BlobSpec& b : spec.blobs) {
        nlohmann::ordered_json jb;
        jb["shape"] = b.shape == BlobShape::Disk ? "disk" : "rectangle";
        jb["radius"] = b.radius;
        jb["half_width"] = b.half_width;
        jb["class"] = b.class_label;
        jb["confuser"] = b.confuser;
        jb["rho"] = b.rho;
        jb["ghost"] = b.ghost;
        nlohmann::ordered_json jt;
        jt["row"] = b.trajectory.row;
        jt["col"] = b.trajectory.col;
        jt["v_row"] = b.trajectory.v_row;
        jt["v_col"] = b.trajectory.v_col;
        jt["waypoints"] = nlohmann::ordered_json::array();
        for (const Waypoint& wp : b.trajectory.waypoints) {
            jt["waypoints"].push_back({{"frame", wp.frame}, {"row", wp.row}, {"col", wp.col}});
        }
        jb["trajectory"] = std::move(jt);
        jb["visible"] = nlohmann::ordered_json::array();
        for (const Window& w : b.visible) jb["visible"].push_back({w.begin, w.end});
        j["blobs"].push_back(std::move(jb));
    }
    return j.dump(2) + "\n";
}

SceneSpec load_scene(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_scene_json(text.str());
}

}  // namespace segqual
