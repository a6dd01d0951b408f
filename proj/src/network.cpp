#include <algorithm>
#include <limits>
#include <numeric>

#include "model_common.hpp"
#include "segqual/error.hpp"
#include "segqual/rng.hpp"

namespace segqual {
namespace {

Eigen::MatrixXd activate(const Eigen::MatrixXd& a, Activation act) {
    if (act == Activation::ReLU) return a.cwiseMax(0.0);
    return a.array().tanh().matrix();
}

/// Derivative of the activation written in terms of pre-activation a and output h.
Eigen::MatrixXd activation_slope(const Eigen::MatrixXd& a, const Eigen::MatrixXd& h, Activation act) {
    if (act == Activation::ReLU) return (a.array() > 0.0).cast<double>().matrix();
    return (1.0 - h.array().square()).matrix();
}

double sign(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

double penalty_value(const NetworkParams& net, Penalty penalty) {
    switch (penalty) {
        case Penalty::L1: return net.w1.cwiseAbs().sum() + net.w2.cwiseAbs().sum();
        case Penalty::L2: return net.w1.squaredNorm() + net.w2.squaredNorm();
        case Penalty::None: break;
    }
    return 0.0;
}

Eigen::VectorXd forward_logits(const NetworkParams& net, const Eigen::MatrixXd& x, Activation act) {
    Eigen::MatrixXd a = x * net.w1.transpose();
    a.rowwise() += net.b1.transpose();
    return (activate(a, act) * net.w2).array() + net.b2;
}

double data_loss(const Eigen::VectorXd& z, const Eigen::VectorXd& y, Task task) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        if (task == Task::Classify) {
            total += detail::softplus(z[i]) - y[i] * z[i];
        } else {
            const double d = detail::sigmoid(z[i]) - y[i];
            total += d * d;
        }
    }
    return total / static_cast<double>(z.size());
}

struct AdamSlot {
    Eigen::MatrixXd m, v;
    explicit AdamSlot(const Eigen::MatrixXd& like)
        : m(Eigen::MatrixXd::Zero(like.rows(), like.cols())), v(Eigen::MatrixXd::Zero(like.rows(), like.cols())) {}
};

class Adam {
public:
    Adam(const NetworkParams& net, double lr)
        : lr_(lr), w1_(net.w1), b1_(net.b1), w2_(net.w2), b2_(Eigen::MatrixXd::Zero(1, 1)) {}

    void step(NetworkParams& net, const NetworkParams& g) {
        ++t_;
        const double c1 = 1.0 - std::pow(kBeta1, t_);
        const double c2 = 1.0 - std::pow(kBeta2, t_);
        update(net.w1, g.w1, w1_, c1, c2);
        Eigen::MatrixXd b1 = net.b1;
        update(b1, g.b1, b1_, c1, c2);
        net.b1 = b1;
        Eigen::MatrixXd w2 = net.w2;
        update(w2, g.w2, w2_, c1, c2);
        net.w2 = w2;
        Eigen::MatrixXd b2 = Eigen::MatrixXd::Constant(1, 1, net.b2);
        update(b2, Eigen::MatrixXd::Constant(1, 1, g.b2), b2_, c1, c2);
        net.b2 = b2(0, 0);
    }

private:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

    void update(Eigen::MatrixXd& p, const Eigen::MatrixXd& g, AdamSlot& s, double c1, double c2) const {
        s.m = kBeta1 * s.m + (1.0 - kBeta1) * g;
        s.v = kBeta2 * s.v + (1.0 - kBeta2) * g.cwiseProduct(g);
        p.array() -= lr_ * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + kEps);
    }

    double lr_;
    int t_ = 0;
    AdamSlot w1_, b1_, w2_, b2_;
};

}  // namespace

NetworkGradient network_loss_gradient(const NetworkParams& net, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                      Task task, Penalty penalty, double lambda, Activation activation) {
    const auto n = static_cast<double>(x.rows());
    Eigen::MatrixXd a = x * net.w1.transpose();
    a.rowwise() += net.b1.transpose();
    const Eigen::MatrixXd h = activate(a, activation);
    const Eigen::VectorXd z = (h * net.w2).array() + net.b2;

    NetworkGradient out;
    out.loss = data_loss(z, y, task) + lambda * penalty_value(net, penalty);

    Eigen::VectorXd dz(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        const double p = detail::sigmoid(z[i]);
        dz[i] = task == Task::Classify ? (p - y[i]) / n : 2.0 * (p - y[i]) * p * (1.0 - p) / n;
    }
    out.grad.w2 = h.transpose() * dz;
    out.grad.b2 = dz.sum();
    const Eigen::MatrixXd da = (dz * net.w2.transpose()).cwiseProduct(activation_slope(a, h, activation));
    out.grad.w1 = da.transpose() * x;
    out.grad.b1 = da.colwise().sum().transpose();

    if (penalty == Penalty::L2) {
        out.grad.w1 += 2.0 * lambda * net.w1;
        out.grad.w2 += 2.0 * lambda * net.w2;
    } else if (penalty == Penalty::L1) {
        out.grad.w1 += lambda * net.w1.unaryExpr(&sign);
        out.grad.w2 += lambda * net.w2.unaryExpr(&sign);
    }
    return out;
}

MetaModel fit_shallow_nn(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Task task, Penalty penalty,
                         const Hyperparameters& hp, const Eigen::MatrixXd& x_val, const Eigen::VectorXd& y_val,
                         std::uint64_t seed) {
    if (x_val.rows() == 0 || y_val.size() == 0) throw Error(ErrorCode::NoValidationSet, "network needs validation rows");
    if (x.rows() != y.size() || x_val.rows() != y_val.size() || x_val.cols() != x.cols()) {
        throw Error(ErrorCode::DimMismatch, "network inputs");
    }
    if (x.rows() == 0) throw Error(ErrorCode::TooFewRows, "network needs training rows");
    if (hp.hidden < 1 || hp.batch < 1 || hp.max_epochs < 0 || hp.patience < 1 || !(hp.learning_rate > 0)) {
        throw Error(ErrorCode::InvalidArgument, "invalid network hyperparameters");
    }

    const Eigen::Index d = x.cols();
    const Eigen::Index hidden = hp.hidden;
    Rng rng(seed);
    NetworkParams net;
    const double r1 = std::sqrt(6.0 / static_cast<double>(std::max<Eigen::Index>(d, 1)));
    const double r2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    net.w1.resize(hidden, d);
    for (Eigen::Index i = 0; i < hidden; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) net.w1(i, j) = rng.uniform(-r1, r1);
    }
    net.b1 = Eigen::VectorXd::Zero(hidden);
    net.w2.resize(hidden);
    for (Eigen::Index i = 0; i < hidden; ++i) net.w2[i] = rng.uniform(-r2, r2);
    net.b2 = 0.0;

    Adam adam(net, hp.learning_rate);
    NetworkParams best = net;
    double best_loss = data_loss(forward_logits(net, x_val, hp.activation), y_val, task);
    int stale = 0;

    std::vector<Eigen::Index> order(static_cast<std::size_t>(x.rows()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Eigen::MatrixXd xb;
    Eigen::VectorXd yb;
    for (int epoch = 0; epoch < hp.max_epochs; ++epoch) {
        rng.shuffle(std::span(order));
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(hp.batch)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(hp.batch));
            const auto rows = static_cast<Eigen::Index>(end - start);
            xb.resize(rows, d);
            yb.resize(rows);
            for (Eigen::Index r = 0; r < rows; ++r) {
                const Eigen::Index src = order[start + static_cast<std::size_t>(r)];
                xb.row(r) = x.row(src);
                yb[r] = y[src];
            }
            const NetworkGradient g = network_loss_gradient(net, xb, yb, task, penalty, hp.lambda, hp.activation);
            adam.step(net, g.grad);
        }
        const double val = data_loss(forward_logits(net, x_val, hp.activation), y_val, task);
        if (val < best_loss) {
            best_loss = val;
            best = net;
            stale = 0;
        } else if (++stale >= hp.patience) {
            break;
        }
    }

    const Family family = penalty == Penalty::L1 ? Family::NN_L1 : Family::NN_L2;
    MetaModel model = detail::blank_model(family, task, d);
    model.hp = hp;
    model.seed = seed;
    model.params = std::move(best);
    return model;
}

}  // namespace segqual
