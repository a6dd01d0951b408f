#include "segqual/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

#include "segqual/csv.hpp"
#include "segqual/error.hpp"

namespace segqual {
namespace {

struct BoundingBox {
    int r0 = std::numeric_limits<int>::max();
    int c0 = std::numeric_limits<int>::max();
    int r1 = std::numeric_limits<int>::min();
    int c1 = std::numeric_limits<int>::min();
};

BoundingBox bounding_box(std::span<const std::int32_t> pixels, int width) {
    BoundingBox b;
    for (std::int32_t p : pixels) {
        const int r = p / width;
        const int c = p % width;
        b.r0 = std::min(b.r0, r);
        b.r1 = std::max(b.r1, r);
        b.c0 = std::min(b.c0, c);
        b.c1 = std::max(b.c1, c);
    }
    return b;
}

double box_gap(const BoundingBox& a, const BoundingBox& b) {
    const int dr = std::max({0, a.r0 - b.r1, b.r0 - a.r1});
    const int dc = std::max({0, a.c0 - b.c1, b.c0 - a.c1});
    return std::hypot(static_cast<double>(dr), static_cast<double>(dc));
}

/// Squared minimum distance between two pixel lists, stopping early once a
/// pair below `stop_below_sq` is found.
long long min_distance_sq(std::span<const std::int32_t> a, std::span<const std::int32_t> b, int width,
                          long long stop_below_sq) {
    long long best = std::numeric_limits<long long>::max();
    for (std::int32_t p : a) {
        const long long pr = p / width;
        const long long pc = p % width;
        for (std::int32_t q : b) {
            const long long dr = pr - q / width;
            const long long dc = pc - q % width;
            const long long d = dr * dr + dc * dc;
            if (d < best) {
                best = d;
                if (best < stop_below_sq) return best;
            }
        }
    }
    return best;
}

class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent_[std::max(a, b)] = std::min(a, b);
    }

private:
    std::vector<std::size_t> parent_;
};

double distance(const Center& a, const Center& b) { return std::hypot(a.row - b.row, a.col - b.col); }

/// Candidate ordering: larger key first, then larger entity, then smaller
/// first member id. Entities are already sorted by (size desc, member asc),
/// so the smaller index wins remaining ties.
bool better(double key_a, std::size_t a, double key_b, std::size_t b) {
    if (key_a != key_b) return key_a > key_b;
    return a < b;
}

std::vector<std::int32_t> shift_pixels(std::span<const std::int32_t> pixels, int height, int width, double dr,
                                       double dc) {
    const long sr = std::lround(dr);
    const long sc = std::lround(dc);
    std::vector<std::int32_t> out;
    out.reserve(pixels.size());
    for (std::int32_t p : pixels) {
        const long r = p / width + sr;
        const long c = p % width + sc;
        if (r < 0 || c < 0 || r >= height || c >= width) continue;
        out.push_back(static_cast<std::int32_t>(r * width + c));
    }
    return out;
}

/// Overlap rule shared by steps 2-4: an unmatched same-class entity j is
/// accepted if O(j, k) >= c_over or j is the argmax of O(., k) over all
/// same-class entities of the frame. The best accepted candidate wins.
int overlap_match(const AggregatedFrame& cur, std::int32_t class_label, std::span<const std::int32_t> pixels,
                  const TrackerConfig& cfg) {
    std::vector<std::int64_t> hits(cur.entities.size(), 0);
    for (std::int32_t p : pixels) {
        const std::int32_t e = cur.entity_map[static_cast<std::size_t>(p)];
        if (cur.entities[e].class_label == class_label) ++hits[e];
    }
    int argmax = -1;
    double argmax_overlap = 0.0;
    for (std::size_t e = 0; e < cur.entities.size(); ++e) {
        if (hits[e] == 0) continue;
        const double o = static_cast<double>(hits[e]) / static_cast<double>(cur.entities[e].size());
        if (argmax < 0 || better(o, e, argmax_overlap, static_cast<std::size_t>(argmax))) {
            argmax = static_cast<int>(e);
            argmax_overlap = o;
        }
    }
    int chosen = -1;
    double chosen_overlap = 0.0;
    for (std::size_t e = 0; e < cur.entities.size(); ++e) {
        if (hits[e] == 0 || cur.entities[e].track_id >= 0) continue;
        const double o = static_cast<double>(hits[e]) / static_cast<double>(cur.entities[e].size());
        if (o < cfg.c_over && static_cast<int>(e) != argmax) continue;
        if (chosen < 0 || better(o, e, chosen_overlap, static_cast<std::size_t>(chosen))) {
            chosen = static_cast<int>(e);
            chosen_overlap = o;
        }
    }
    return chosen;
}

/// Nearest unmatched same-class entity under a caller-supplied cost.
template <class Cost>
int nearest_match(const AggregatedFrame& cur, std::int32_t class_label, Cost cost, double& best_cost) {
    int chosen = -1;
    best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < cur.entities.size(); ++e) {
        const Entity& j = cur.entities[e];
        if (j.track_id >= 0 || j.class_label != class_label) continue;
        const double c = cost(j);
        if (chosen < 0 || better(-c, e, -best_cost, static_cast<std::size_t>(chosen))) {
            chosen = static_cast<int>(e);
            best_cost = c;
        }
    }
    return chosen;
}

bool already_matched(const AggregatedFrame& cur, std::int32_t track_id) {
    return std::any_of(cur.entities.begin(), cur.entities.end(),
                       [&](const Entity& e) { return e.track_id == track_id; });
}

}  // namespace

void TrackerConfig::validate() const {
    if (!(c_near > 0 && c_over > 0 && c_over <= 1 && c_dist > 0 && c_lin > 0 && n_lr > 0)) {
        throw Error(ErrorCode::InvalidArgument, "tracker constants must be positive and c_over in (0,1]");
    }
}

const AggregatedFrame* TrackerState::frame_at(int position) const {
    for (const AggregatedFrame& f : window) {
        if (f.position == position) return &f;
    }
    return nullptr;
}

const TrackPoint* TrackerState::point_at(std::int32_t track_id, int position) const {
    const auto it = tracks.find(track_id);
    if (it == tracks.end()) return nullptr;
    for (auto p = it->second.points.rbegin(); p != it->second.points.rend(); ++p) {
        if (p->position == position) return &*p;
        if (p->position < position) break;
    }
    return nullptr;
}

double overlap(std::span<const std::int32_t> j, std::span<const std::int32_t> k) {
    if (j.empty()) throw Error(ErrorCode::EmptyRegion, "overlap with an empty segment");
    std::size_t common = 0;
    auto a = j.begin();
    auto b = k.begin();
    while (a != j.end() && b != k.end()) {
        if (*a < *b) {
            ++a;
        } else if (*b < *a) {
            ++b;
        } else {
            ++common;
            ++a;
            ++b;
        }
    }
    return static_cast<double>(common) / static_cast<double>(j.size());
}

double min_segment_distance(const Segment& a, const Segment& b, int width) {
    if (a.pixels.empty() || b.pixels.empty()) throw Error(ErrorCode::EmptyRegion, "distance to an empty segment");
    const auto& pa = a.boundary.empty() ? a.pixels : a.boundary;
    const auto& pb = b.boundary.empty() ? b.pixels : b.boundary;
    return std::sqrt(static_cast<double>(min_distance_sq(pa, pb, width, 0)));
}

AggregatedFrame step1_aggregate(const SegmentFrame& frame, int position, const TrackerConfig& cfg) {
    const std::size_t n = frame.segments.size();
    std::vector<BoundingBox> boxes(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Segment& s = frame.segments[i];
        boxes[i] = bounding_box(s.boundary.empty() ? s.pixels : s.boundary, frame.width);
    }
    const long long near_sq_ceiling = static_cast<long long>(std::ceil(cfg.c_near * cfg.c_near));
    UnionFind groups(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Segment& a = frame.segments[i];
        for (std::size_t j = i + 1; j < n; ++j) {
            const Segment& b = frame.segments[j];
            if (a.class_label != b.class_label || box_gap(boxes[i], boxes[j]) >= cfg.c_near) continue;
            if (groups.find(i) == groups.find(j)) continue;
            const auto& pa = a.boundary.empty() ? a.pixels : a.boundary;
            const auto& pb = b.boundary.empty() ? b.pixels : b.boundary;
            const long long d2 = min_distance_sq(pa, pb, frame.width, near_sq_ceiling);
            if (std::sqrt(static_cast<double>(d2)) < cfg.c_near) groups.unite(i, j);
        }
    }

    std::map<std::size_t, Entity> by_root;
    for (std::size_t i = 0; i < n; ++i) {
        Entity& e = by_root[groups.find(i)];
        e.class_label = frame.segments[i].class_label;
        e.members.push_back(frame.segments[i].id);
    }

    AggregatedFrame out;
    out.position = position;
    out.height = frame.height;
    out.width = frame.width;
    for (auto& [root, e] : by_root) {
        for (std::int32_t id : e.members) {
            const auto& px = frame.segment(id).pixels;
            e.pixels.insert(e.pixels.end(), px.begin(), px.end());
        }
        std::sort(e.pixels.begin(), e.pixels.end());
        e.center = geometric_center(e.pixels, frame.width);
        out.entities.push_back(std::move(e));
    }
    std::stable_sort(out.entities.begin(), out.entities.end(), [](const Entity& a, const Entity& b) {
        if (a.size() != b.size()) return a.size() > b.size();
        return a.members.front() < b.members.front();
    });
    out.entity_map.assign(frame.num_pixels(), 0);
    for (std::size_t e = 0; e < out.entities.size(); ++e) {
        for (std::int32_t p : out.entities[e].pixels) out.entity_map[p] = static_cast<std::int32_t>(e);
    }
    return out;
}

void step2_shift_match(const TrackerState& state, AggregatedFrame& cur, const TrackerConfig& cfg) {
    const AggregatedFrame* prev = state.frame_at(cur.position - 1);
    if (prev == nullptr) return;
    for (const Entity& k : prev->entities) {
        if (k.track_id < 0 || already_matched(cur, k.track_id)) continue;
        const TrackPoint* before = state.point_at(k.track_id, cur.position - 2);
        int chosen = -1;
        double cost = 0.0;
        if (before != nullptr) {
            const double vr = k.center.row - before->center.row;
            const double vc = k.center.col - before->center.col;
            const auto shifted = shift_pixels(k.pixels, cur.height, cur.width, vr, vc);
            chosen = overlap_match(cur, k.class_label, shifted, cfg);
            if (chosen < 0) {
                chosen = nearest_match(
                    cur, k.class_label,
                    [&](const Entity& j) {
                        const double jr = j.center.row - k.center.row;
                        const double jc = j.center.col - k.center.col;
                        return std::hypot(jr, jc) + std::hypot(vr - jr, vc - jc);
                    },
                    cost);
                if (chosen >= 0 && cost > cfg.c_dist) chosen = -1;
            }
        } else {
            chosen = nearest_match(
                cur, k.class_label, [&](const Entity& j) { return distance(j.center, k.center); }, cost);
            if (chosen >= 0 && !(cost < cfg.c_dist)) chosen = -1;
        }
        if (chosen >= 0) cur.entities[chosen].track_id = k.track_id;
    }
}

void step3_overlap_match(const TrackerState& state, AggregatedFrame& cur, const TrackerConfig& cfg) {
    const AggregatedFrame* prev = state.frame_at(cur.position - 1);
    if (prev == nullptr) return;
    for (const Entity& k : prev->entities) {
        if (k.track_id < 0 || already_matched(cur, k.track_id)) continue;
        const int chosen = overlap_match(cur, k.class_label, k.pixels, cfg);
        if (chosen >= 0) cur.entities[chosen].track_id = k.track_id;
    }
}

void step4_regression_match(const TrackerState& state, AggregatedFrame& cur, const TrackerConfig& cfg) {
    if (cur.position < 3) return;
    const int first = cur.position - cfg.n_lr;
    struct Candidate {
        std::int32_t track_id;
        const TrackInfo* info;
        std::vector<const TrackPoint*> points;
        const TrackPoint* largest;
    };
    std::vector<Candidate> candidates;
    for (const auto& [id, info] : state.tracks) {
        if (info.points.back().position < first || already_matched(cur, id)) continue;
        Candidate c{id, &info, {}, nullptr};
        for (const TrackPoint& p : info.points) {
            if (p.position < first || p.position >= cur.position) continue;
            c.points.push_back(&p);
            if (c.largest == nullptr || p.size > c.largest->size) c.largest = &p;
        }
        if (c.points.size() >= 2) candidates.push_back(std::move(c));
    }
    std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.largest->size != b.largest->size) return a.largest->size > b.largest->size;
        return a.track_id < b.track_id;
    });

    for (const Candidate& c : candidates) {
        // Least-squares line through (position, center) for each coordinate.
        double mt = 0, mr = 0, mc = 0;
        for (const TrackPoint* p : c.points) {
            mt += p->position;
            mr += p->center.row;
            mc += p->center.col;
        }
        const double n = static_cast<double>(c.points.size());
        mt /= n;
        mr /= n;
        mc /= n;
        double stt = 0, str = 0, stc = 0;
        for (const TrackPoint* p : c.points) {
            const double dt = p->position - mt;
            stt += dt * dt;
            str += dt * (p->center.row - mr);
            stc += dt * (p->center.col - mc);
        }
        const double dt = cur.position - mt;
        const Center predicted{mr + str / stt * dt, mc + stc / stt * dt};

        double cost = 0.0;
        int chosen = nearest_match(
            cur, c.info->class_label, [&](const Entity& j) { return distance(j.center, predicted); }, cost);
        if (chosen >= 0 && !(cost < cfg.c_lin)) chosen = -1;
        if (chosen < 0) {
            const AggregatedFrame* at_max = state.frame_at(c.largest->position);
            if (at_max != nullptr) {
                const Entity& k = at_max->entities[c.largest->entity];
                const auto shifted = shift_pixels(k.pixels, cur.height, cur.width,
                                                  predicted.row - k.center.row, predicted.col - k.center.col);
                chosen = overlap_match(cur, c.info->class_label, shifted, cfg);
            }
        }
        if (chosen >= 0) cur.entities[chosen].track_id = c.track_id;
    }
}

void step5_new_ids(TrackerState& state, AggregatedFrame& cur) {
    for (Entity& e : cur.entities) {
        if (e.track_id < 0) e.track_id = state.next_id++;
    }
}

const AggregatedFrame& track_next(TrackerState& state, const SegmentFrame& frame, const TrackerConfig& cfg) {
    const int position = state.window.empty() ? 0 : state.window.back().position + 1;
    AggregatedFrame cur = step1_aggregate(frame, position, cfg);
    if (cfg.enable_shift) step2_shift_match(state, cur, cfg);
    if (cfg.enable_overlap) step3_overlap_match(state, cur, cfg);
    if (cfg.enable_regression) step4_regression_match(state, cur, cfg);
    step5_new_ids(state, cur);

    for (std::size_t e = 0; e < cur.entities.size(); ++e) {
        const Entity& ent = cur.entities[e];
        TrackInfo& info = state.tracks[ent.track_id];
        if (info.points.empty()) info.class_label = ent.class_label;
        info.points.push_back({position, ent.center, ent.size(), static_cast<std::int32_t>(e)});
    }
    state.window.push_back(std::move(cur));
    const std::size_t keep = static_cast<std::size_t>(std::max(cfg.n_lr, 2));
    while (state.window.size() > keep) state.window.pop_front();
    return state.window.back();
}

TrackedSequence track_sequence(std::span<const SegmentFrame> frames, const TrackerConfig& cfg) {
    cfg.validate();
    TrackedSequence seq;
    if (frames.empty()) return seq;
    TrackerState state;
    std::vector<std::vector<std::int32_t>> ids;
    for (const SegmentFrame& f : frames) {
        if (f.height != frames.front().height || f.width != frames.front().width) {
            throw Error(ErrorCode::DimMismatch, "frame " + std::to_string(f.frame_index) + " differs in size");
        }
        const AggregatedFrame& agg = track_next(state, f, cfg);
        std::vector<std::int32_t> per_segment(f.segments.size(), -1);
        for (const Entity& e : agg.entities) {
            for (std::int32_t id : e.members) per_segment[static_cast<std::size_t>(id - 1)] = e.track_id;
        }
        ids.push_back(std::move(per_segment));
    }
    return attach_track_ids(std::vector<SegmentFrame>(frames.begin(), frames.end()), std::move(ids));
}

TrackedSequence attach_track_ids(std::vector<SegmentFrame> frames, std::vector<std::vector<std::int32_t>> track_ids) {
    if (frames.size() != track_ids.size()) throw Error(ErrorCode::DimMismatch, "track id table length");
    TrackedSequence seq;
    for (std::size_t t = 0; t < frames.size(); ++t) {
        const SegmentFrame& f = frames[t];
        if (track_ids[t].size() != f.segments.size()) throw Error(ErrorCode::DimMismatch, "track id row length");
        std::map<std::int32_t, TrackObservation> obs;
        for (const Segment& s : f.segments) {
            const std::int32_t tid = track_ids[t][static_cast<std::size_t>(s.id - 1)];
            TrackObservation& o = obs[tid];
            o.frame = f.frame_index;
            o.segment_ids.push_back(s.id);
            o.size += static_cast<std::int64_t>(s.size());
        }
        for (auto& [tid, o] : obs) {
            std::vector<std::int32_t> pixels;
            for (std::int32_t id : o.segment_ids) {
                const auto& px = f.segment(id).pixels;
                pixels.insert(pixels.end(), px.begin(), px.end());
            }
            o.center = geometric_center(pixels, f.width);
            seq.histories[tid].push_back(std::move(o));
        }
    }
    seq.frames = std::move(frames);
    seq.track_ids = std::move(track_ids);
    return seq;
}

void write_track_csv(std::ostream& out, const TrackedSequence& seq) {
    out << "frame,seg_id,track_id,class,cy,cx,S\n";
    for (std::size_t t = 0; t < seq.frames.size(); ++t) {
        for (const Segment& s : seq.frames[t].segments) {
            out << seq.frames[t].frame_index << ',' << s.id << ',' << seq.track_of(t, s.id) << ',' << s.class_label
                << ',' << csv::format(s.center.row) << ',' << csv::format(s.center.col) << ',' << s.size() << '\n';
        }
    }
}

std::vector<std::vector<std::int32_t>> read_track_csv(std::istream& in, std::span<const SegmentFrame> frames) {
    std::vector<std::string> fields;
    if (!csv::read_row(in, fields) || fields != std::vector<std::string>{"frame", "seg_id", "track_id", "class",
                                                                         "cy", "cx", "S"}) {
        throw Error(ErrorCode::InvalidArgument, "unexpected track CSV header");
    }
    std::map<int, std::size_t> position;
    std::vector<std::vector<std::int32_t>> ids(frames.size());
    for (std::size_t t = 0; t < frames.size(); ++t) {
        position[frames[t].frame_index] = t;
        ids[t].assign(frames[t].segments.size(), -1);
    }
    while (csv::read_row(in, fields)) {
        if (fields.size() != 7) throw Error(ErrorCode::DimMismatch, "track CSV row has wrong field count");
        const auto it = position.find(static_cast<int>(csv::parse_int(fields[0])));
        if (it == position.end()) throw Error(ErrorCode::DimMismatch, "track CSV frame not in sequence");
        const long long seg = csv::parse_int(fields[1]);
        auto& row = ids[it->second];
        if (seg < 1 || seg > static_cast<long long>(row.size())) {
            throw Error(ErrorCode::DimMismatch, "track CSV segment id out of range");
        }
        row[static_cast<std::size_t>(seg - 1)] = static_cast<std::int32_t>(csv::parse_int(fields[2]));
    }
    for (const auto& row : ids) {
        if (std::find(row.begin(), row.end(), -1) != row.end()) {
            throw Error(ErrorCode::DimMismatch, "track CSV does not cover every segment");
        }
    }
    return ids;
}

}  // namespace segqual
