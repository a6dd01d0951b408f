#include "segqual/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "segqual/csv.hpp"
#include "segqual/error.hpp"
#include "segqual/rng.hpp"

namespace segqual {
namespace {

using Json = nlohmann::ordered_json;

void check_binary(std::span<const double> scores, std::span<const double> labels) {
    if (scores.size() != labels.size()) throw Error(ErrorCode::DimMismatch, "scores and labels differ in length");
    if (labels.empty()) throw Error(ErrorCode::InvalidArgument, "empty label set");
    for (double l : labels) {
        if (l != 0.0 && l != 1.0) throw Error(ErrorCode::InvalidArgument, "labels must be 0 or 1");
    }
}

std::pair<double, double> class_counts(std::span<const double> labels) {
    double pos = 0;
    for (double l : labels) pos += l;
    const double neg = static_cast<double>(labels.size()) - pos;
    if (pos == 0 || neg == 0) throw Error(ErrorCode::SingleClass, "AUROC needs both classes");
    return {pos, neg};
}

std::vector<std::size_t> order_by_score(std::span<const double> scores) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    return idx;
}

std::span<const double> view(const Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

Eigen::VectorXd task_targets(const FeatureMatrix& fm, Task task) {
    Eigen::VectorXd y(fm.rows());
    for (Eigen::Index i = 0; i < fm.rows(); ++i) {
        const double v = fm.iou_adj[static_cast<std::size_t>(i)];
        y[i] = task == Task::Regress ? v : (v == 0.0 ? 1.0 : 0.0);
    }
    return y;
}

template <class Get>
void summarize_metric(const std::vector<RunMetrics>& runs, Get get, std::optional<double>& mean,
                      std::optional<double>& sd) {
    mean.reset();
    sd.reset();
    if (runs.empty()) return;
    double sum = 0.0;
    for (const RunMetrics& r : runs) {
        const std::optional<double>& v = get(r);
        if (!v) return;
        sum += *v;
    }
    const double m = sum / static_cast<double>(runs.size());
    double ss = 0.0;
    for (const RunMetrics& r : runs) ss += (*get(r) - m) * (*get(r) - m);
    mean = m;
    sd = std::sqrt(ss / static_cast<double>(runs.size()));
}

Json opt(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> opt_from(const Json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

Json summary_json(const MetricSummary& s) {
    return Json{{"acc", opt(s.acc)}, {"acc_tuned", opt(s.acc_tuned)}, {"auroc", opt(s.auroc)},
                {"r2", opt(s.r2)},   {"sigma", opt(s.sigma)}};
}

MetricSummary summary_from(const Json& j) {
    return {opt_from(j, "acc"), opt_from(j, "acc_tuned"), opt_from(j, "auroc"), opt_from(j, "r2"),
            opt_from(j, "sigma")};
}

std::string csv_opt(const std::optional<double>& v) { return v ? csv::format(*v) : std::string(); }

/// Runs fn(i) for i in [0, n) on up to `threads` workers; rethrows the
/// exception of the lowest failing index.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn fn) {
    const auto workers = static_cast<std::size_t>(std::clamp(threads, 1, 256));
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (workers == 1 || n <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < std::min(workers, n); ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

enum class CellKind { Family, Entropy, Naive };

struct Cell {
    CellKind kind = CellKind::Family;
    Family family = Family::LR;
    Task task = Task::Regress;
    int n_c = 0;
    Composition composition = Composition::R;
};

FeatureMatrix entropy_only(const FeatureMatrix& fm) {
    FeatureMatrix out = fm.with_history(0);
    const Eigen::Index col = out.column_index("E");
    out.features = fm.features.col(col);
    return out;
}

RunMetrics run_cell(const Cell& cell, const FeatureMatrix& data, const SplitIndices& split, const ExperimentConfig& cfg,
                    std::uint64_t run_seed, MetaModel* keep) {
    if (cell.kind == CellKind::Naive) {
        const Eigen::VectorXd y = task_targets(data.select(split.test), Task::Classify);
        const NaiveScore s = naive_baseline(view(y));
        RunMetrics m;
        m.seed = run_seed;
        m.acc = s.acc;
        m.auroc = s.auroc;
        return m;
    }
    const PreparedRun prep = prepare_run(data, split, cell.composition, cell.task, cfg, derive_seed(run_seed, 2));
    const Family family = cell.kind == CellKind::Entropy ? Family::GB : cell.family;
    MetaModel model = fit_selected(family, cell.task, prep.x_train, prep.y_train, prep.x_val, prep.y_val, cfg.hp,
                                   cfg.lambda_grid, derive_seed(run_seed, 1));
    RunMetrics m = evaluate_predictions(cell.task, model.predict(prep.x_val), prep.y_val, model.predict(prep.x_test),
                                        prep.y_test);
    m.seed = run_seed;
    if (keep) {
        model.stats = prep.stats;
        *keep = std::move(model);
    }
    return m;
}

std::string cell_name(const Cell& c) {
    switch (c.kind) {
        case CellKind::Entropy: return "ENTROPY";
        case CellKind::Naive: return "NAIVE";
        case CellKind::Family: break;
    }
    return std::string(to_string(c.family));
}

}  // namespace

double accuracy(std::span<const double> scores, std::span<const double> labels, double threshold) {
    check_binary(scores, labels);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double predicted = scores[i] >= threshold ? 1.0 : 0.0;
        if (predicted == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double tuned_threshold(std::span<const double> scores, std::span<const double> labels) {
    check_binary(scores, labels);
    const auto idx = order_by_score(scores);
    // Threshold at idx[k]'s score: rows before k predicted 0, the rest 1.
    double positives_above = 0;
    for (double l : labels) positives_above += l;
    double negatives_below = 0;
    double best_correct = -1;
    double best = std::numeric_limits<double>::infinity();
    std::size_t k = 0;
    while (true) {
        const double correct = positives_above + negatives_below;
        const double candidate = k < idx.size() ? scores[idx[k]] : std::numeric_limits<double>::infinity();
        if (correct > best_correct) {
            best_correct = correct;
            best = candidate;
        }
        if (k >= idx.size()) break;
        const double value = scores[idx[k]];
        while (k < idx.size() && scores[idx[k]] == value) {
            if (labels[idx[k]] == 1.0) {
                positives_above -= 1;
            } else {
                negatives_below += 1;
            }
            ++k;
        }
    }
    return best;
}

double auroc(std::span<const double> scores, std::span<const double> labels) {
    check_binary(scores, labels);
    const auto [pos, neg] = class_counts(labels);
    const auto idx = order_by_score(scores);
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
        for (std::size_t q = i; q < j; ++q) {
            if (labels[idx[q]] == 1.0) rank_sum += avg_rank;
        }
        i = j;
    }
    return (rank_sum - pos * (pos + 1) / 2) / (pos * neg);
}

double auroc_trapezoid(std::span<const double> scores, std::span<const double> labels) {
    check_binary(scores, labels);
    const auto [pos, neg] = class_counts(labels);
    auto idx = order_by_score(scores);
    std::reverse(idx.begin(), idx.end());
    double tp = 0, fp = 0, area = 0;
    for (std::size_t i = 0; i < idx.size();) {
        double dp = 0, dn = 0;
        const double value = scores[idx[i]];
        while (i < idx.size() && scores[idx[i]] == value) {
            (labels[idx[i]] == 1.0 ? dp : dn) += 1;
            ++i;
        }
        area += dn * (tp + 0.5 * dp);
        tp += dp;
        fp += dn;
    }
    return area / (pos * neg);
}

RegressionScore r2_sigma(std::span<const double> pred, std::span<const double> y) {
    if (pred.size() != y.size()) throw Error(ErrorCode::DimMismatch, "predictions and targets differ in length");
    if (y.empty()) throw Error(ErrorCode::InvalidArgument, "empty target set");
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    double sse = 0, sst = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        sse += (y[i] - pred[i]) * (y[i] - pred[i]);
        sst += (y[i] - mean) * (y[i] - mean);
    }
    if (sst == 0) throw Error(ErrorCode::ZeroVariance, "targets are constant");
    return {1.0 - sse / sst, std::sqrt(sse / static_cast<double>(y.size()))};
}

NaiveScore naive_baseline(std::span<const double> labels) {
    check_binary(labels, labels);
    double pos = 0;
    for (double l : labels) pos += l;
    const auto n = static_cast<double>(labels.size());
    return {std::max(pos, n - pos) / n, 0.5};
}

void RunReport::summarize() {
    summarize_metric(runs, [](const RunMetrics& r) -> const std::optional<double>& { return r.acc; }, mean.acc, std.acc);
    summarize_metric(runs, [](const RunMetrics& r) -> const std::optional<double>& { return r.acc_tuned; },
                     mean.acc_tuned, std.acc_tuned);
    summarize_metric(runs, [](const RunMetrics& r) -> const std::optional<double>& { return r.auroc; }, mean.auroc,
                     std.auroc);
    summarize_metric(runs, [](const RunMetrics& r) -> const std::optional<double>& { return r.r2; }, mean.r2, std.r2);
    summarize_metric(runs, [](const RunMetrics& r) -> const std::optional<double>& { return r.sigma; }, mean.sigma,
                     std.sigma);
}

std::uint64_t ExperimentConfig::run_seed(int run) const {
    if (!run_seeds.empty()) return run_seeds.at(static_cast<std::size_t>(run));
    return derive_seed(seed, static_cast<std::uint64_t>(run));
}

PreparedRun prepare_run(const FeatureMatrix& fm, const SplitIndices& split, Composition composition, Task task,
                        const ExperimentConfig& cfg, std::uint64_t seed) {
    std::vector<Eigen::Index> pool;
    if (uses_real(composition)) pool = split.train;
    if (uses_pseudo(composition)) pool.insert(pool.end(), split.pseudo.begin(), split.pseudo.end());
    if (pool.empty()) throw Error(ErrorCode::TooFewRows, "composition " + std::string(to_string(composition)) +
                                                             " has no training rows");
    FeatureMatrix train = fm.select(pool);
    const FeatureMatrix val = fm.select(split.val);
    const FeatureMatrix test = fm.select(split.test);

    PreparedRun out;
    out.stats = cfg.standardize ? Standardizer::fit(train.features) : Standardizer::identity(train.features.cols());
    train.features = out.stats.apply(train.features);
    out.x_val = out.stats.apply(val.features);
    out.x_test = out.stats.apply(test.features);

    if (uses_augmented(composition)) {
        std::vector<Eigen::Index> real(split.train.size());
        std::iota(real.begin(), real.end(), Eigen::Index{0});
        const FeatureMatrix base = train.select(real);
        const SmoterResult extra = smoter(base.features, base.iou_adj, cfg.smoter, seed);
        if (extra.features.rows() > 0) {
            FeatureMatrix synthetic;
            synthetic.n_c = train.n_c;
            synthetic.num_classes = train.num_classes;
            synthetic.features = extra.features;
            synthetic.iou_adj = extra.targets;
            synthetic.origin.assign(extra.targets.size(), RowOrigin::Augmented);
            synthetic.keys.assign(extra.targets.size(), RowKey{});
            train.append(synthetic);
        }
    }
    out.y_train = task_targets(train, task);
    out.x_train = std::move(train.features);
    out.y_val = task_targets(val, task);
    out.y_test = task_targets(test, task);
    return out;
}

RunMetrics evaluate_predictions(Task task, const Eigen::VectorXd& val_pred, const Eigen::VectorXd& y_val,
                                const Eigen::VectorXd& test_pred, const Eigen::VectorXd& y_test) {
    RunMetrics m;
    if (task == Task::Classify) {
        m.acc = accuracy(view(test_pred), view(y_test));
        if (y_val.size() > 0) m.acc_tuned = accuracy(view(test_pred), view(y_test), tuned_threshold(view(val_pred), view(y_val)));
        m.auroc = auroc(view(test_pred), view(y_test));
    } else {
        const RegressionScore s = r2_sigma(view(test_pred), view(y_test));
        m.r2 = s.r2;
        m.sigma = s.sigma;
    }
    return m;
}

RunReport entropy_baseline(const FeatureMatrix& fm, Task task, Composition composition, const ExperimentConfig& cfg) {
    ExperimentConfig one = cfg;
    one.models.clear();
    one.tasks = {task};
    one.n_c = {0};
    one.compositions = {composition};
    one.baselines = true;
    const ExperimentResult res = run_experiment(fm, one);
    for (const RunReport& r : res.reports) {
        if (r.model == "ENTROPY") return r;
    }
    throw Error(ErrorCode::InvalidArgument, "entropy baseline missing");
}

ExperimentResult run_experiment(const FeatureMatrix& fm, const ExperimentConfig& cfg) {
    if (cfg.runs < 1) throw Error(ErrorCode::InvalidArgument, "runs must be positive");
    if (!cfg.run_seeds.empty() && cfg.run_seeds.size() != static_cast<std::size_t>(cfg.runs)) {
        throw Error(ErrorCode::InvalidArgument, "run seed count differs from runs");
    }
    for (int n : cfg.n_c) {
        if (n < 0 || n > fm.n_c) throw Error(ErrorCode::InvalidArgument, "n_c exceeds the dataset history");
    }

    std::vector<Cell> cells;
    for (Task task : cfg.tasks) {
        for (Family family : cfg.models) {
            if (!supports(family, task)) continue;
            for (int n : cfg.n_c) {
                for (Composition comp : cfg.compositions) cells.push_back({CellKind::Family, family, task, n, comp});
            }
        }
        if (cfg.baselines) {
            for (Composition comp : cfg.compositions) cells.push_back({CellKind::Entropy, Family::GB, task, 0, comp});
            if (task == Task::Classify) cells.push_back({CellKind::Naive, Family::GB, task, 0, Composition::R});
        }
    }

    // Shared per-n_c views and per-run splits keep every cell on identical rows.
    std::map<int, FeatureMatrix> views;
    for (const Cell& c : cells) {
        if (c.kind == CellKind::Entropy) {
            if (!views.count(-1)) views.emplace(-1, entropy_only(fm));
        } else if (!views.count(c.n_c)) {
            views.emplace(c.n_c, fm.with_history(c.n_c));
        }
    }
    std::vector<SplitIndices> splits;
    for (int r = 0; r < cfg.runs; ++r) {
        SplitSpec spec{cfg.train_fraction, cfg.val_fraction, cfg.test_fraction, derive_seed(cfg.run_seed(r), 0),
                       cfg.split_by_track};
        splits.push_back(split(fm, spec));
    }

    const std::size_t runs = static_cast<std::size_t>(cfg.runs);
    std::vector<RunMetrics> metrics(cells.size() * runs);
    std::vector<std::optional<MetaModel>> kept(cells.size());
    parallel_for(metrics.size(), cfg.threads, [&](std::size_t job) {
        const std::size_t c = job / runs;
        const std::size_t r = job % runs;
        const Cell& cell = cells[c];
        const FeatureMatrix& data = views.at(cell.kind == CellKind::Entropy ? -1 : cell.n_c);
        MetaModel model;
        const bool keep = r == 0 && cell.kind == CellKind::Family;
        metrics[job] = run_cell(cell, data, splits[r], cfg, cfg.run_seed(static_cast<int>(r)), keep ? &model : nullptr);
        if (keep) kept[c] = std::move(model);
    });

    ExperimentResult result;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        RunReport rep;
        rep.model = cell_name(cells[c]);
        rep.task = cells[c].task;
        rep.n_c = cells[c].n_c;
        rep.composition = cells[c].composition;
        rep.runs.assign(metrics.begin() + static_cast<std::ptrdiff_t>(c * runs),
                        metrics.begin() + static_cast<std::ptrdiff_t>((c + 1) * runs));
        rep.summarize();
        if (kept[c]) result.models.emplace(c, std::move(*kept[c]));
        result.reports.push_back(std::move(rep));
    }
    annotate_best_n_c(result.reports);
    return result;
}

void annotate_best_n_c(std::vector<RunReport>& reports) {
    auto score = [](const RunReport& r) {
        const auto& v = r.task == Task::Classify ? r.mean.auroc : r.mean.r2;
        return v ? *v : -std::numeric_limits<double>::infinity();
    };
    for (RunReport& r : reports) {
        std::optional<int> best;
        double best_score = -std::numeric_limits<double>::infinity();
        for (const RunReport& o : reports) {
            if (o.model != r.model || o.task != r.task || o.composition != r.composition) continue;
            const double s = score(o);
            if (!best || s > best_score || (s == best_score && o.n_c < *best)) {
                best = o.n_c;
                best_score = s;
            }
        }
        r.best_n_c = best;
    }
}

std::string report_json(std::span<const RunReport> reports) {
    Json list = Json::array();
    for (const RunReport& r : reports) {
        Json runs = Json::array();
        for (const RunMetrics& m : r.runs) {
            runs.push_back(Json{{"seed", m.seed},   {"acc", opt(m.acc)}, {"acc_tuned", opt(m.acc_tuned)},
                                {"auroc", opt(m.auroc)}, {"r2", opt(m.r2)},   {"sigma", opt(m.sigma)}});
        }
        list.push_back(Json{{"model", r.model},
                            {"task", std::string(to_string(r.task))},
                            {"n_c", r.n_c},
                            {"composition", std::string(to_string(r.composition))},
                            {"runs", std::move(runs)},
                            {"mean", summary_json(r.mean)},
                            {"std", summary_json(r.std)},
                            {"best_n_c", r.best_n_c ? Json(*r.best_n_c) : Json(nullptr)}});
    }
    Json doc{{"best_n_c_selection", "highest test-set mean (optimistic)"},
             {"std", "population"},
             {"reports", std::move(list)}};
    return doc.dump(2) + "\n";
}

std::vector<RunReport> parse_report_json(const std::string& text) {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("malformed report: ") + e.what());
    }
    std::vector<RunReport> out;
    try {
        for (const Json& j : doc.at("reports")) {
            RunReport r;
            r.model = j.at("model").get<std::string>();
            r.task = parse_task(j.at("task").get<std::string>());
            r.n_c = j.at("n_c").get<int>();
            r.composition = parse_composition(j.at("composition").get<std::string>());
            for (const Json& m : j.at("runs")) {
                r.runs.push_back({m.at("seed").get<std::uint64_t>(), opt_from(m, "acc"), opt_from(m, "acc_tuned"),
                                  opt_from(m, "auroc"), opt_from(m, "r2"), opt_from(m, "sigma")});
            }
            r.mean = summary_from(j.at("mean"));
            r.std = summary_from(j.at("std"));
            if (!j.at("best_n_c").is_null()) r.best_n_c = j.at("best_n_c").get<int>();
            out.push_back(std::move(r));
        }
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("malformed report: ") + e.what());
    }
    return out;
}

void write_report_csv(std::ostream& out, std::span<const RunReport> reports) {
    out << "model,task,n_c,composition,row,seed,acc,acc_tuned,auroc,r2,sigma,best_n_c\n";
    for (const RunReport& r : reports) {
        const std::string prefix = r.model + ',' + std::string(to_string(r.task)) + ',' + std::to_string(r.n_c) + ',' +
                                   std::string(to_string(r.composition)) + ',';
        const std::string best = r.best_n_c ? std::to_string(*r.best_n_c) : std::string();
        for (std::size_t i = 0; i < r.runs.size(); ++i) {
            const RunMetrics& m = r.runs[i];
            out << prefix << i << ',' << m.seed << ',' << csv_opt(m.acc) << ',' << csv_opt(m.acc_tuned) << ','
                << csv_opt(m.auroc) << ',' << csv_opt(m.r2) << ',' << csv_opt(m.sigma) << ',' << best << '\n';
        }
        for (const auto& [label, s] : {std::pair{"mean", &r.mean}, std::pair{"std", &r.std}}) {
            out << prefix << label << ",," << csv_opt(s->acc) << ',' << csv_opt(s->acc_tuned) << ','
                << csv_opt(s->auroc) << ',' << csv_opt(s->r2) << ',' << csv_opt(s->sigma) << ',' << best << '\n';
        }
    }
}

}  // namespace segqual
