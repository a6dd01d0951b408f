// Independent numerical oracles for the model and metric code.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "segqual/models.hpp"

namespace testing {

/// Ridge by plain gradient descent on centered data, objective
/// (1/2n)||yc - Xc b||^2 + (lambda/2)||b||^2.
inline Eigen::VectorXd ridge_gd(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda) {
    const Eigen::RowVectorXd mx = x.colwise().mean();
    const Eigen::MatrixXd xc = x.rowwise() - mx;
    const Eigen::VectorXd yc = y.array() - y.mean();
    const double n = static_cast<double>(x.rows());
    const Eigen::MatrixXd h = xc.transpose() * xc / n + lambda * Eigen::MatrixXd::Identity(x.cols(), x.cols());
    const double step = 1.0 / Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h).eigenvalues().maxCoeff();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(x.cols());
    for (int it = 0; it < 200000; ++it) {
        const Eigen::VectorXd g = -xc.transpose() * (yc - xc * b) / n + lambda * b;
        b -= step * g;
        if (g.norm() < 1e-13) break;
    }
    return b;
}

/// O(n^2) pair count of P(s+ > s-) + P(tie)/2.
inline double pairwise_auroc(const std::vector<double>& s, const std::vector<double>& y) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[i] != 1 || y[j] != 0) continue;
            den += 1;
            num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
        }
    }
    return num / den;
}

inline segqual::NetworkParams random_net(std::mt19937& gen, int d, int h) {
    std::normal_distribution<double> z;
    segqual::NetworkParams net;
    net.w1.resize(h, d);
    net.b1.resize(h);
    net.w2.resize(h);
    for (Eigen::Index i = 0; i < net.w1.size(); ++i) net.w1.data()[i] = 0.7 * z(gen);
    for (Eigen::Index i = 0; i < h; ++i) {
        net.b1(i) = 0.3 * z(gen);
        net.w2(i) = 0.7 * z(gen);
    }
    net.b2 = 0.1;
    return net;
}

/// Every parameter of a network as one flat list of pointers.
inline std::vector<double*> flat(segqual::NetworkParams& net) {
    std::vector<double*> out;
    for (Eigen::Index i = 0; i < net.w1.size(); ++i) out.push_back(net.w1.data() + i);
    for (Eigen::Index i = 0; i < net.b1.size(); ++i) out.push_back(net.b1.data() + i);
    for (Eigen::Index i = 0; i < net.w2.size(); ++i) out.push_back(net.w2.data() + i);
    out.push_back(&net.b2);
    return out;
}

/// Largest relative gap between the analytic network gradient and central
/// differences of the loss, over entries with magnitude above 1e-7.
inline double network_fd_error(const segqual::NetworkParams& net, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                               segqual::Task task, segqual::Penalty penalty, double lambda,
                               segqual::Activation activation) {
    auto g = segqual::network_loss_gradient(net, x, y, task, penalty, lambda, activation);
    auto probe = net;
    auto params = flat(probe);
    auto grads = flat(g.grad);
    double worst = 0;
    const double h = 1e-6;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double keep = *params[i];
        *params[i] = keep + h;
        const double lp = segqual::network_loss_gradient(probe, x, y, task, penalty, lambda, activation).loss;
        *params[i] = keep - h;
        const double lm = segqual::network_loss_gradient(probe, x, y, task, penalty, lambda, activation).loss;
        *params[i] = keep;
        const double num = (lp - lm) / (2 * h);
        const double scale = std::max(std::abs(num), std::abs(*grads[i]));
        if (scale > 1e-7) worst = std::max(worst, std::abs(num - *grads[i]) / scale);
    }
    return worst;
}

}  // namespace testing
