#include <algorithm>
#include <cmath>
#include <vector>

#include "model_common.hpp"
#include "segqual/error.hpp"

namespace segqual {
namespace {

constexpr int kMaxSweeps = 10000;
constexpr double kGapTolerance = 1e-6;

struct Centered {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    Eigen::RowVectorXd x_mean;
    double y_mean;
};

Centered center(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    Centered c;
    c.x_mean = x.colwise().mean();
    c.y_mean = y.mean();
    c.x = x.rowwise() - c.x_mean;
    c.y = y.array() - c.y_mean;
    return c;
}

double soft_threshold(double v, double t) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
}

void check_shapes(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    if (x.rows() == 0) throw Error(ErrorCode::TooFewRows, "empty training set");
    if (x.rows() != y.size()) throw Error(ErrorCode::DimMismatch, "feature rows vs targets");
}

}  // namespace

double lasso_null_lambda(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    check_shapes(x, y);
    const Centered c = center(x, y);
    return (c.x.transpose() * c.y).cwiseAbs().maxCoeff() / static_cast<double>(x.rows());
}

LinearParams lasso_coordinate_descent(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
                                      LassoTrace* trace) {
    check_shapes(x, y);
    if (lambda < 0) throw Error(ErrorCode::InvalidArgument, "lambda must be non-negative");
    const Centered c = center(x, y);
    const double n = static_cast<double>(x.rows());
    const Eigen::Index p = x.cols();
    const Eigen::VectorXd col_sq = c.x.colwise().squaredNorm().transpose() / n;
    const double y_sq = c.y.squaredNorm();

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd r = c.y;
    LassoTrace local;
    for (local.sweeps = 1; local.sweeps <= kMaxSweeps; ++local.sweeps) {
        for (Eigen::Index j = 0; j < p; ++j) {
            if (col_sq[j] <= 0.0) continue;
            const double rho = c.x.col(j).dot(r) / n + col_sq[j] * beta[j];
            const double updated = soft_threshold(rho, lambda) / col_sq[j];
            if (updated != beta[j]) {
                r.noalias() -= (updated - beta[j]) * c.x.col(j);
                beta[j] = updated;
            }
        }
        const double primal = r.squaredNorm() / (2 * n) + lambda * beta.lpNorm<1>();
        const double corr = (c.x.transpose() * r).cwiseAbs().maxCoeff();
        const double s = corr > 0 ? std::min(1.0, n * lambda / corr) : 1.0;
        const double dual = (y_sq - (c.y - s * r).squaredNorm()) / (2 * n);
        local.duality_gap = primal - dual;
        if (local.duality_gap <= kGapTolerance) break;
    }
    local.sweeps = std::min(local.sweeps, kMaxSweeps);
    if (trace) *trace = local;
    return {c.y_mean - c.x_mean.dot(beta), beta};
}

MetaModel fit_linear(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Penalty penalty, double lambda) {
    check_shapes(x, y);
    const Family family = penalty == Penalty::None ? Family::LR : penalty == Penalty::L1 ? Family::LR_L1 : Family::LR_L2;
    MetaModel model = detail::blank_model(family, Task::Regress, x.cols());
    model.hp.lambda = lambda;
    LinearParams params;

    switch (penalty) {
        case Penalty::None: {
            if (x.rows() < x.cols() + 1) {
                throw Error(ErrorCode::RankDeficient, "fewer rows than features plus intercept");
            }
            Eigen::MatrixXd design(x.rows(), x.cols() + 1);
            design.col(0).setOnes();
            design.rightCols(x.cols()) = x;
            Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
            qr.setThreshold(1e-10);
            if (qr.rank() < design.cols()) {
                throw Error(ErrorCode::RankDeficient, "design matrix has rank " + std::to_string(qr.rank()));
            }
            const Eigen::VectorXd coef = qr.solve(y);
            params.intercept = coef[0];
            params.weights = coef.tail(x.cols());
            break;
        }
        case Penalty::L2: {
            if (lambda < 0) throw Error(ErrorCode::InvalidArgument, "lambda must be non-negative");
            const Centered c = center(x, y);
            const double n = static_cast<double>(x.rows());
            Eigen::MatrixXd gram = c.x.transpose() * c.x;
            gram.diagonal().array() += n * lambda;
            Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
            if (ldlt.info() != Eigen::Success || (lambda == 0 && !ldlt.isPositive())) {
                throw Error(ErrorCode::RankDeficient, "ridge system is singular");
            }
            params.weights = ldlt.solve(c.x.transpose() * c.y);
            params.intercept = c.y_mean - c.x_mean.dot(params.weights);
            break;
        }
        case Penalty::L1:
            params = lasso_coordinate_descent(x, y, lambda);
            break;
    }
    model.params = std::move(params);
    return model;
}

MetaModel fit_linear_reduced(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    check_shapes(x, y);
    const Centered c = center(x, y);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(c.x);
    qr.setThreshold(1e-10);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < qr.rank(); ++i) keep.push_back(qr.colsPermutation().indices()[i]);
    std::sort(keep.begin(), keep.end());

    Eigen::MatrixXd sub(x.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) sub.col(static_cast<Eigen::Index>(j)) = x.col(keep[j]);
    const MetaModel reduced = fit_linear(sub, y, Penalty::None, 0.0);
    const auto& rp = std::get<LinearParams>(reduced.params);

    MetaModel model = detail::blank_model(Family::LR, Task::Regress, x.cols());
    LinearParams params;
    params.intercept = rp.intercept;
    params.weights = Eigen::VectorXd::Zero(x.cols());
    for (std::size_t j = 0; j < keep.size(); ++j) params.weights[keep[j]] = rp.weights[static_cast<Eigen::Index>(j)];
    model.params = std::move(params);
    return model;
}

}  // namespace segqual
