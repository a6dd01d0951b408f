#include <algorithm>
#include <numeric>

#include "model_common.hpp"
#include "segqual/error.hpp"
#include "segqual/rng.hpp"

namespace segqual {
namespace {

constexpr double kMinGain = 1e-12;
constexpr double kProbFloor = 1e-6;

struct Split {
    double gain = kMinGain;
    std::int32_t feature = -1;
    double threshold = 0.0;
};

/// Level-wise exact greedy tree on gradient targets. Rows not in the sample
/// carry node -1 and are ignored.
class TreeBuilder {
public:
    TreeBuilder(const Eigen::MatrixXd& x, const std::vector<std::vector<Eigen::Index>>& sorted, int depth, int min_leaf)
        : x_(x), sorted_(sorted), depth_(depth), min_leaf_(min_leaf) {}

    RegressionTree build(std::span<const Eigen::Index> sample, const Eigen::VectorXd& grad, const Eigen::VectorXd* hess) {
        RegressionTree tree;
        tree.nodes.emplace_back();
        std::vector<std::int32_t> node_of(static_cast<std::size_t>(x_.rows()), -1);
        for (Eigen::Index i : sample) node_of[static_cast<std::size_t>(i)] = 0;

        std::vector<std::int32_t> frontier = {0};
        for (int level = 0; level < depth_ && !frontier.empty(); ++level) {
            const std::size_t n_nodes = tree.nodes.size();
            std::vector<std::int64_t> count(n_nodes, 0);
            std::vector<double> sum(n_nodes, 0.0);
            std::vector<char> active(n_nodes, 0);
            for (std::int32_t q : frontier) active[q] = 1;
            for (Eigen::Index i : sample) {
                const std::int32_t q = node_of[static_cast<std::size_t>(i)];
                if (active[q]) {
                    ++count[q];
                    sum[q] += grad[i];
                }
            }
            for (std::int32_t q : frontier) {
                if (count[q] < 2 * min_leaf_) active[q] = 0;
            }

            std::vector<Split> best(n_nodes);
            std::vector<std::int64_t> left_count(n_nodes);
            std::vector<double> left_sum(n_nodes);
            std::vector<double> last(n_nodes);
            for (Eigen::Index f = 0; f < x_.cols(); ++f) {
                std::fill(left_count.begin(), left_count.end(), 0);
                std::fill(left_sum.begin(), left_sum.end(), 0.0);
                for (Eigen::Index i : sorted_[static_cast<std::size_t>(f)]) {
                    const std::int32_t q = node_of[static_cast<std::size_t>(i)];
                    if (q < 0 || !active[q]) continue;
                    const double v = x_(i, f);
                    const std::int64_t nl = left_count[q];
                    const std::int64_t nr = count[q] - nl;
                    if (nl >= min_leaf_ && nr >= min_leaf_ && v > last[q]) {
                        const double sl = left_sum[q];
                        const double sr = sum[q] - sl;
                        const double gain = sl * sl / static_cast<double>(nl) + sr * sr / static_cast<double>(nr) -
                                            sum[q] * sum[q] / static_cast<double>(count[q]);
                        if (gain > best[q].gain) {
                            double thr = last[q] + 0.5 * (v - last[q]);
                            if (!(thr < v)) thr = last[q];
                            best[q] = {gain, static_cast<std::int32_t>(f), thr};
                        }
                    }
                    ++left_count[q];
                    left_sum[q] += grad[i];
                    last[q] = v;
                }
            }

            std::vector<std::int32_t> next;
            for (std::int32_t q : frontier) {
                if (!active[q] || best[q].feature < 0) continue;
                const auto l = static_cast<std::int32_t>(tree.nodes.size());
                tree.nodes.emplace_back();
                tree.nodes.emplace_back();
                tree.nodes[q].feature = best[q].feature;
                tree.nodes[q].threshold = best[q].threshold;
                tree.nodes[q].left = l;
                tree.nodes[q].right = l + 1;
                next.push_back(l);
                next.push_back(l + 1);
            }
            for (Eigen::Index i : sample) {
                std::int32_t& q = node_of[static_cast<std::size_t>(i)];
                const TreeNode& node = tree.nodes[q];
                if (node.feature >= 0) q = x_(i, node.feature) <= node.threshold ? node.left : node.right;
            }
            frontier = std::move(next);
        }

        // Leaf values: mean gradient, or a Newton step when a Hessian is given.
        std::vector<double> num(tree.nodes.size(), 0.0);
        std::vector<double> den(tree.nodes.size(), 0.0);
        for (Eigen::Index i : sample) {
            const std::int32_t q = node_of[static_cast<std::size_t>(i)];
            num[q] += grad[i];
            den[q] += hess ? (*hess)[i] : 1.0;
        }
        for (std::size_t q = 0; q < tree.nodes.size(); ++q) {
            if (tree.nodes[q].feature < 0) tree.nodes[q].value = den[q] > 1e-12 ? num[q] / den[q] : 0.0;
        }
        return tree;
    }

private:
    const Eigen::MatrixXd& x_;
    const std::vector<std::vector<Eigen::Index>>& sorted_;
    int depth_;
    int min_leaf_;
};

double mean_loss(Task task, const Eigen::VectorXd& f, const Eigen::VectorXd& y) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (task == Task::Regress) {
            const double d = y[i] - f[i];
            total += d * d;
        } else {
            total += detail::softplus(f[i]) - y[i] * f[i];
        }
    }
    return total / static_cast<double>(y.size());
}

}  // namespace

double RegressionTree::evaluate(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    std::size_t q = 0;
    while (nodes[q].feature >= 0) {
        q = static_cast<std::size_t>(x[nodes[q].feature] <= nodes[q].threshold ? nodes[q].left : nodes[q].right);
    }
    return nodes[q].value;
}

MetaModel fit_gradient_boosting(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Task task,
                                const Hyperparameters& hp, std::uint64_t seed, std::vector<double>* stage_loss) {
    if (x.rows() != y.size()) throw Error(ErrorCode::DimMismatch, "feature rows vs targets");
    if (x.rows() < 20) throw Error(ErrorCode::TooFewRows, "gradient boosting needs at least 20 rows");
    if (hp.trees < 0 || hp.depth < 1 || hp.min_leaf < 1 || !(hp.subsample > 0 && hp.subsample <= 1) ||
        !(hp.shrinkage > 0)) {
        throw Error(ErrorCode::InvalidArgument, "invalid boosting hyperparameters");
    }
    const Eigen::Index n = x.rows();
    std::vector<std::vector<Eigen::Index>> sorted(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
        auto& order = sorted[static_cast<std::size_t>(f)];
        order.resize(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return x(a, f) < x(b, f); });
    }

    TreeEnsemble ensemble;
    ensemble.shrinkage = hp.shrinkage;
    if (task == Task::Regress) {
        ensemble.base = y.mean();
    } else {
        const double p = std::clamp(y.mean(), kProbFloor, 1.0 - kProbFloor);
        ensemble.base = std::log(p / (1.0 - p));
    }
    Eigen::VectorXd f = Eigen::VectorXd::Constant(n, ensemble.base);
    if (stage_loss) {
        stage_loss->clear();
        stage_loss->push_back(mean_loss(task, f, y));
    }

    TreeBuilder builder(x, sorted, hp.depth, hp.min_leaf);
    Rng rng(seed);
    std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    const auto sample_size = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(hp.subsample * static_cast<double>(n))));
    Eigen::VectorXd grad(n);
    Eigen::VectorXd hess(n);
    for (int m = 0; m < hp.trees; ++m) {
        for (Eigen::Index i = 0; i < n; ++i) {
            if (task == Task::Regress) {
                grad[i] = y[i] - f[i];
            } else {
                const double p = detail::sigmoid(f[i]);
                grad[i] = y[i] - p;
                hess[i] = p * (1.0 - p);
            }
        }
        std::vector<Eigen::Index> sample;
        if (sample_size >= all.size()) {
            sample = all;
        } else {
            // Partial Fisher-Yates draw without replacement.
            std::vector<Eigen::Index> pool = all;
            for (std::size_t s = 0; s < sample_size; ++s) {
                const std::size_t j = s + static_cast<std::size_t>(rng.below(pool.size() - s));
                std::swap(pool[s], pool[j]);
            }
            sample.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(sample_size));
            std::sort(sample.begin(), sample.end());
        }
        RegressionTree tree = builder.build(sample, grad, task == Task::Classify ? &hess : nullptr);
        for (Eigen::Index i = 0; i < n; ++i) f[i] += hp.shrinkage * tree.evaluate(x.row(i));
        ensemble.trees.push_back(std::move(tree));
        if (stage_loss) stage_loss->push_back(mean_loss(task, f, y));
    }

    MetaModel model = detail::blank_model(Family::GB, task, x.cols());
    model.hp = hp;
    model.seed = seed;
    model.params = std::move(ensemble);
    return model;
}

MetaModel truncate_stages(const MetaModel& model, std::size_t stages) {
    MetaModel out = model;
    auto& e = std::get<TreeEnsemble>(out.params);
    if (stages < e.trees.size()) e.trees.resize(stages);
    out.hp.trees = static_cast<int>(e.trees.size());
    return out;
}

std::vector<double> staged_loss(const MetaModel& model, const Eigen::MatrixXd& raw, const Eigen::VectorXd& y) {
    const auto& e = std::get<TreeEnsemble>(model.params);
    const Eigen::MatrixXd x = model.stats.apply(raw);
    Eigen::VectorXd f = Eigen::VectorXd::Constant(x.rows(), e.base);
    auto link = [&](const Eigen::VectorXd& score) {
        Eigen::VectorXd out(score.size());
        for (Eigen::Index i = 0; i < score.size(); ++i) {
            out[i] = model.task == Task::Classify ? detail::sigmoid(score[i]) : std::clamp(score[i], 0.0, 1.0);
        }
        return out;
    };
    std::vector<double> losses = {task_loss(model.task, link(f), y)};
    for (const RegressionTree& tree : e.trees) {
        for (Eigen::Index i = 0; i < x.rows(); ++i) f[i] += e.shrinkage * tree.evaluate(x.row(i));
        losses.push_back(task_loss(model.task, link(f), y));
    }
    return losses;
}

}  // namespace segqual
