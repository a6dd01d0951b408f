#include <cmath>

#include "model_common.hpp"
#include "segqual/error.hpp"

namespace segqual {
namespace {

constexpr int kMaxIterations = 10000;
constexpr double kGradientMapTolerance = 1e-6;

double loss_only(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double b) {
    const Eigen::VectorXd z = (x * w).array() + b;
    double total = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) total += detail::softplus(z[i]) - y[i] * z[i];
    return total / static_cast<double>(z.size());
}

}  // namespace

LossGradient logistic_loss_gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& y01, const Eigen::VectorXd& w,
                                    double b) {
    const Eigen::VectorXd z = (x * w).array() + b;
    const double n = static_cast<double>(z.size());
    Eigen::VectorXd resid(z.size());
    double total = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        total += detail::softplus(z[i]) - y01[i] * z[i];
        resid[i] = detail::sigmoid(z[i]) - y01[i];
    }
    return {total / n, x.transpose() * resid / n, resid.sum() / n};
}

MetaModel fit_logistic_l1(const Eigen::MatrixXd& x, const Eigen::VectorXd& y01, double lambda, ProxTrace* trace) {
    if (x.rows() == 0) throw Error(ErrorCode::TooFewRows, "empty training set");
    if (x.rows() != y01.size()) throw Error(ErrorCode::DimMismatch, "feature rows vs labels");
    const double positives = y01.sum();
    if (positives <= 0 || positives >= static_cast<double>(y01.size())) {
        throw Error(ErrorCode::SingleClass, "logistic regression needs both classes");
    }
    if (lambda < 0) throw Error(ErrorCode::InvalidArgument, "lambda must be non-negative");

    const Eigen::Index p = x.cols();
    Eigen::VectorXd w = Eigen::VectorXd::Zero(p);
    double b = 0.0;
    Eigen::VectorXd yw = w;
    double yb = b;
    double t = 1.0;
    double step_inv = 1.0;  // Lipschitz estimate L
    double objective = loss_only(x, y01, w, b) + lambda * w.lpNorm<1>();

    ProxTrace local;
    for (local.iterations = 1; local.iterations <= kMaxIterations; ++local.iterations) {
        const LossGradient g = logistic_loss_gradient(x, y01, yw, yb);
        Eigen::VectorXd zw;
        double zb = 0.0;
        double fz = 0.0;
        // Backtracking on the quadratic upper bound.
        while (true) {
            const double step = 1.0 / step_inv;
            zw = yw - step * g.grad_w;
            for (Eigen::Index j = 0; j < p; ++j) {
                const double v = zw[j];
                zw[j] = v > lambda * step ? v - lambda * step : v < -lambda * step ? v + lambda * step : 0.0;
            }
            zb = yb - step * g.grad_b;
            fz = loss_only(x, y01, zw, zb);
            const Eigen::VectorXd dw = zw - yw;
            const double db = zb - yb;
            const double bound = g.loss + g.grad_w.dot(dw) + g.grad_b * db + 0.5 * step_inv * (dw.squaredNorm() + db * db);
            if (fz <= bound + 1e-15 * std::abs(bound) || step_inv > 1e12) break;
            step_inv *= 2.0;
        }
        local.gradient_map_norm = step_inv * std::sqrt((zw - yw).squaredNorm() + (zb - yb) * (zb - yb));

        const double fz_total = fz + lambda * zw.lpNorm<1>();
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        if (fz_total > objective) {
            // Momentum overshoot: restart from the current iterate.
            t = 1.0;
            yw = w;
            yb = b;
            continue;
        }
        const double momentum = (t - 1.0) / t_next;
        yw = zw + momentum * (zw - w);
        yb = zb + momentum * (zb - b);
        w = std::move(zw);
        b = zb;
        t = t_next;
        objective = fz_total;
        if (local.gradient_map_norm <= kGradientMapTolerance) break;
        step_inv *= 0.95;
    }
    local.iterations = std::min(local.iterations, kMaxIterations);
    if (trace) *trace = local;

    MetaModel model = detail::blank_model(Family::LOGISTIC_L1, Task::Classify, p);
    model.hp.lambda = lambda;
    model.params = LinearParams{b, w};
    return model;
}

}  // namespace segqual
