#include <algorithm>
#include <limits>

#include "model_common.hpp"
#include "segqual/error.hpp"

namespace segqual {

std::string_view to_string(Family f) {
    switch (f) {
        case Family::LR: return "LR";
        case Family::LR_L1: return "LR_L1";
        case Family::LR_L2: return "LR_L2";
        case Family::LOGISTIC_L1: return "LOGISTIC_L1";
        case Family::GB: return "GB";
        case Family::NN_L1: return "NN_L1";
        case Family::NN_L2: return "NN_L2";
    }
    return "?";
}

std::string_view to_string(Task t) { return t == Task::Classify ? "classify" : "regress"; }

Family parse_family(std::string_view text) {
    for (Family f : {Family::LR, Family::LR_L1, Family::LR_L2, Family::LOGISTIC_L1, Family::GB, Family::NN_L1,
                     Family::NN_L2}) {
        if (to_string(f) == text) return f;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown model family: " + std::string(text));
}

Task parse_task(std::string_view text) {
    if (text == "classify") return Task::Classify;
    if (text == "regress") return Task::Regress;
    throw Error(ErrorCode::InvalidArgument, "unknown task: " + std::string(text));
}

bool supports(Family f, Task t) {
    switch (f) {
        case Family::LR:
        case Family::LR_L1:
        case Family::LR_L2: return t == Task::Regress;
        case Family::LOGISTIC_L1: return t == Task::Classify;
        default: return true;
    }
}

Eigen::VectorXd MetaModel::decision(const Eigen::MatrixXd& raw) const {
    if (raw.cols() != input_dim()) throw Error(ErrorCode::DimMismatch, "feature count differs from training");
    const Eigen::MatrixXd x = stats.apply(raw);
    if (const auto* lin = std::get_if<LinearParams>(&params)) {
        return (x * lin->weights).array() + lin->intercept;
    }
    if (const auto* ens = std::get_if<TreeEnsemble>(&params)) {
        Eigen::VectorXd f = Eigen::VectorXd::Constant(x.rows(), ens->base);
        for (const RegressionTree& tree : ens->trees) {
            for (Eigen::Index i = 0; i < x.rows(); ++i) f[i] += ens->shrinkage * tree.evaluate(x.row(i));
        }
        return f;
    }
    const auto& net = std::get<NetworkParams>(params);
    Eigen::MatrixXd a = x * net.w1.transpose();
    a.rowwise() += net.b1.transpose();
    if (hp.activation == Activation::ReLU) {
        a = a.cwiseMax(0.0);
    } else {
        a = a.array().tanh().matrix();
    }
    return (a * net.w2).array() + net.b2;
}

Eigen::VectorXd MetaModel::predict(const Eigen::MatrixXd& raw) const {
    Eigen::VectorXd z = decision(raw);
    const bool squash = task == Task::Classify || std::holds_alternative<NetworkParams>(params);
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = squash ? detail::sigmoid(z[i]) : std::clamp(z[i], 0.0, 1.0);
    return z;
}

double task_loss(Task task, const Eigen::VectorXd& pred, const Eigen::VectorXd& y) {
    if (pred.size() != y.size() || y.size() == 0) throw Error(ErrorCode::DimMismatch, "loss inputs");
    double total = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (task == Task::Classify) {
            const double p = std::clamp(pred[i], 1e-15, 1.0 - 1e-15);
            total -= y[i] * std::log(p) + (1.0 - y[i]) * std::log1p(-p);
        } else {
            const double d = pred[i] - y[i];
            total += d * d;
        }
    }
    return total / static_cast<double>(y.size());
}

MetaModel fit_selected(Family family, Task task, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const Eigen::MatrixXd& x_val, const Eigen::VectorXd& y_val, const Hyperparameters& hp,
                       std::span<const double> lambda_grid, std::uint64_t seed) {
    if (!supports(family, task)) {
        throw Error(ErrorCode::InvalidArgument,
                    std::string(to_string(family)) + " does not support " + std::string(to_string(task)));
    }
    if (family == Family::LR) return fit_linear_reduced(x, y);
    if (family == Family::GB) {
        MetaModel full = fit_gradient_boosting(x, y, task, hp, seed);
        if (x_val.rows() == 0) return full;
        const std::vector<double> losses = staged_loss(full, x_val, y_val);
        const auto best = std::min_element(losses.begin(), losses.end()) - losses.begin();
        return truncate_stages(full, static_cast<std::size_t>(best));
    }

    if (lambda_grid.empty()) throw Error(ErrorCode::InvalidArgument, "empty lambda grid");
    const bool needs_val = family == Family::NN_L1 || family == Family::NN_L2 || lambda_grid.size() > 1;
    if (needs_val && x_val.rows() == 0) throw Error(ErrorCode::NoValidationSet, "selection needs validation rows");
    MetaModel best;
    double best_loss = std::numeric_limits<double>::infinity();
    for (double lambda : lambda_grid) {
        MetaModel m;
        switch (family) {
            case Family::LR_L1: m = fit_linear(x, y, Penalty::L1, lambda); break;
            case Family::LR_L2: m = fit_linear(x, y, Penalty::L2, lambda); break;
            case Family::LOGISTIC_L1: m = fit_logistic_l1(x, y, lambda); break;
            default: {
                Hyperparameters h = hp;
                h.lambda = lambda;
                const Penalty p = family == Family::NN_L1 ? Penalty::L1 : Penalty::L2;
                m = fit_shallow_nn(x, y, task, p, h, x_val, y_val, seed);
            }
        }
        if (x_val.rows() == 0) return m;
        const double loss = task_loss(task, m.predict(x_val), y_val);
        if (loss < best_loss) {
            best_loss = loss;
            best = std::move(m);
        }
    }
    return best;
}

}  // namespace segqual
