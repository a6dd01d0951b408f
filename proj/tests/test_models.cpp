#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "segqual/models.hpp"
#include "model_oracles.hpp"
#include "support.hpp"

using namespace segqual;
using testing::ridge_gd;
using testing::random_net;

namespace {

Eigen::MatrixXd random_x(std::mt19937& gen, int n, int d) {
    std::normal_distribution<double> z;
    Eigen::MatrixXd x(n, d);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = z(gen);
    return x;
}

Eigen::VectorXd noisy_linear(std::mt19937& gen, const Eigen::MatrixXd& x, double noise) {
    std::normal_distribution<double> z;
    Eigen::VectorXd b(x.cols());
    for (Eigen::Index j = 0; j < b.size(); ++j) b(j) = z(gen) * 0.1;
    Eigen::VectorXd y = (x * b).array() + 0.5;
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += noise * z(gen);
    return y;
}

const LinearParams& linear(const MetaModel& m) { return std::get<LinearParams>(m.params); }

double bce(const Eigen::VectorXd& p, const Eigen::VectorXd& y) {
    double s = 0;
    for (Eigen::Index i = 0; i < p.size(); ++i) s -= y(i) * std::log(p(i)) + (1 - y(i)) * std::log(1 - p(i));
    return s / static_cast<double>(p.size());
}

}  // namespace

TEST_CASE("exact linear fit") {
    std::mt19937 gen(1);
    const auto x = random_x(gen, 40, 6);
    const Eigen::VectorXd y = (0.5 + 0.3 * noisy_linear(gen, x, 0.0).array() - 0.15).matrix();
    REQUIRE(y.minCoeff() > 0.0);
    REQUIRE(y.maxCoeff() < 1.0);
    const auto m = fit_linear(x, y, Penalty::None, 0.0);
    CHECK((m.decision(x) - y).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((m.predict(x) - y).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("plain least squares rejects singular systems") {
    std::mt19937 gen(2);
    auto x = random_x(gen, 30, 4);
    x.col(3) = 2.0 * x.col(1) - x.col(0);
    const auto y = noisy_linear(gen, x, 0.05);
    CHECK_ERROR(fit_linear(x, y, Penalty::None, 0.0), ErrorCode::RankDeficient);
    CHECK_ERROR(fit_linear(random_x(gen, 3, 5), Eigen::VectorXd::Constant(3, 0.5), Penalty::None, 0.0),
                ErrorCode::RankDeficient);
    // The reduced fit drops one column of the dependent set and spans the
    // same space as the fit without it.
    const auto reduced = fit_linear_reduced(x, y);
    const auto direct = fit_linear(x.leftCols(3), y, Penalty::None, 0.0);
    CHECK((linear(reduced).weights.array() == 0.0).count() == 1);
    CHECK((reduced.decision(x) - direct.decision(x.leftCols(3))).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("ridge closed form agrees with gradient descent") {
    std::mt19937 gen(3);
    const auto x = random_x(gen, 50, 10);
    const auto y = noisy_linear(gen, x, 0.1);
    for (double lambda : {1e-3, 0.1, 1.0}) {
        const auto m = fit_linear(x, y, Penalty::L2, lambda);
        const auto b = ridge_gd(x, y, lambda);
        CHECK((linear(m).weights - b).cwiseAbs().maxCoeff() <= 1e-6);
    }
}

TEST_CASE("ridge norm shrinks with lambda") {
    std::mt19937 gen(4);
    const auto x = random_x(gen, 60, 8);
    const auto y = noisy_linear(gen, x, 0.1);
    double prev = INFINITY;
    for (double lambda : {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0}) {
        const double norm = linear(fit_linear(x, y, Penalty::L2, lambda)).weights.norm();
        CHECK(norm <= prev);
        prev = norm;
    }
}

TEST_CASE("lasso null threshold") {
    std::mt19937 gen(5);
    const auto x = random_x(gen, 80, 7);
    const auto y = noisy_linear(gen, x, 0.1);
    const Eigen::MatrixXd xc = x.rowwise() - x.colwise().mean();
    const Eigen::VectorXd yc = y.array() - y.mean();
    const double oracle = (xc.transpose() * yc).cwiseAbs().maxCoeff() / 80.0;
    CHECK(lasso_null_lambda(x, y) == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(linear(fit_linear(x, y, Penalty::L1, oracle)).weights.isZero(0.0));
    CHECK(linear(fit_linear(x, y, Penalty::L1, oracle * 1.5)).weights.isZero(0.0));
    CHECK(!linear(fit_linear(x, y, Penalty::L1, oracle * 0.9)).weights.isZero(0.0));
}

TEST_CASE("lasso solution satisfies the optimality conditions") {
    std::mt19937 gen(6);
    const auto x = random_x(gen, 100, 12);
    const auto y = noisy_linear(gen, x, 0.1);
    const Eigen::MatrixXd xc = x.rowwise() - x.colwise().mean();
    const Eigen::VectorXd yc = y.array() - y.mean();
    int prev_active = 1000;
    for (double lambda : {1e-4, 1e-3, 1e-2, 3e-2, 1e-1}) {
        LassoTrace trace;
        const auto p = lasso_coordinate_descent(x, y, lambda, &trace);
        CHECK(trace.duality_gap <= 1e-6);
        const Eigen::VectorXd corr = xc.transpose() * (yc - xc * p.weights) / 100.0;
        for (Eigen::Index j = 0; j < corr.size(); ++j) {
            if (p.weights(j) != 0) {
                CHECK(corr(j) == doctest::Approx(lambda * (p.weights(j) > 0 ? 1 : -1)).epsilon(1e-3));
            } else {
                CHECK(std::abs(corr(j)) <= lambda * (1 + 1e-3));
            }
        }
        const int active = static_cast<int>((p.weights.array() != 0).count());
        CHECK(active <= prev_active);
        prev_active = active;
    }
}

TEST_CASE("logistic gradient matches finite differences") {
    std::mt19937 gen(7);
    const auto x = random_x(gen, 60, 5);
    Eigen::VectorXd y(60);
    for (int i = 0; i < 60; ++i) y(i) = x(i, 0) + 0.5 * x(i, 1) + 0.3 * std::normal_distribution<double>()(gen) > 0;
    const auto m = fit_logistic_l1(x, y, 1e-3);
    const auto& p = linear(m);
    const auto g = logistic_loss_gradient(x, y, p.weights, p.intercept);
    const double h = 1e-6;
    for (Eigen::Index j = 0; j <= p.weights.size(); ++j) {
        Eigen::VectorXd wp = p.weights, wm = p.weights;
        double bp = p.intercept, bm = p.intercept;
        if (j < p.weights.size()) {
            wp(j) += h;
            wm(j) -= h;
        } else {
            bp += h;
            bm -= h;
        }
        const double num = (logistic_loss_gradient(x, y, wp, bp).loss - logistic_loss_gradient(x, y, wm, bm).loss) / (2 * h);
        const double ana = j < p.weights.size() ? g.grad_w(j) : g.grad_b;
        CHECK(std::abs(num - ana) <= 1e-5 * std::max(1e-3, std::abs(ana)));
    }
    // Independent loss recomputation.
    Eigen::VectorXd prob(60);
    for (int i = 0; i < 60; ++i) prob(i) = 1.0 / (1.0 + std::exp(-(x.row(i).dot(p.weights) + p.intercept)));
    CHECK(g.loss == doctest::Approx(bce(prob, y)).epsilon(1e-12));
}

TEST_CASE("logistic separable toy and full shrinkage") {
    Eigen::MatrixXd x(40, 2);
    Eigen::VectorXd y(40);
    std::mt19937 gen(8);
    std::uniform_real_distribution<double> u(0.2, 1.0);
    for (int i = 0; i < 40; ++i) {
        const double s = i % 2 ? 1 : -1;
        x(i, 0) = s * u(gen);
        x(i, 1) = u(gen) - 0.6;
        y(i) = i % 2;
    }
    y(0) = 0;
    const auto m = fit_logistic_l1(x, y, 1e-4);
    const auto p = m.predict(x);
    for (int i = 0; i < 40; ++i) CHECK((p(i) >= 0.5) == (y(i) == 1));
    const auto big = fit_logistic_l1(x, y, 10.0);
    CHECK(linear(big).weights.isZero(0.0));
    CHECK(big.predict(x)(0) == doctest::Approx(y.mean()).epsilon(1e-6));
    CHECK_ERROR(fit_logistic_l1(x, Eigen::VectorXd::Ones(40), 0.1), ErrorCode::SingleClass);
}

TEST_CASE("logistic sparsity monotone in lambda") {
    std::mt19937 gen(9);
    const auto x = random_x(gen, 120, 10);
    Eigen::VectorXd y(120);
    for (int i = 0; i < 120; ++i) y(i) = x(i, 0) - x(i, 2) + 0.5 * std::normal_distribution<double>()(gen) > 0;
    int prev = 100;
    for (double lambda : {1e-4, 1e-3, 1e-2, 1e-1, 1.0}) {
        ProxTrace trace;
        const auto m = fit_logistic_l1(x, y, lambda, &trace);
        CHECK(trace.gradient_map_norm <= 1e-6);
        const int active = static_cast<int>((linear(m).weights.array() != 0).count());
        CHECK(active <= prev);
        prev = active;
    }
}

TEST_CASE("boosting on constant targets") {
    std::mt19937 gen(10);
    const auto x = random_x(gen, 50, 3);
    const auto m = fit_gradient_boosting(x, Eigen::VectorXd::Constant(50, 0.37), Task::Regress, Hyperparameters{}, 1);
    CHECK((m.predict(x).array() - 0.37).abs().maxCoeff() <= 1e-12);
    for (const auto& t : std::get<TreeEnsemble>(m.params).trees) CHECK(t.nodes.size() == 1);
    CHECK_ERROR(fit_gradient_boosting(random_x(gen, 19, 3), Eigen::VectorXd::Zero(19), Task::Regress,
                                      Hyperparameters{}, 1),
                ErrorCode::TooFewRows);
}

TEST_CASE("boosting training loss is monotone at full batch") {
    std::mt19937 gen(11);
    const auto x = random_x(gen, 300, 5);
    Eigen::VectorXd yr(300), yc(300);
    for (int i = 0; i < 300; ++i) {
        yr(i) = 1.0 / (1.0 + std::exp(-x(i, 0) * x(i, 1)));
        yc(i) = x(i, 0) + x(i, 2) * x(i, 2) > 1.0;
    }
    Hyperparameters hp;
    hp.subsample = 1.0;
    for (auto [task, y] : {std::pair{Task::Regress, yr}, std::pair{Task::Classify, yc}}) {
        std::vector<double> loss;
        fit_gradient_boosting(x, y, task, hp, 3, &loss);
        REQUIRE(loss.size() == 101);
        for (std::size_t m = 1; m < loss.size(); ++m) CHECK(loss[m] <= loss[m - 1] + 1e-12);
    }
}

TEST_CASE("boosting learns a threshold") {
    std::mt19937 gen(12);
    std::uniform_real_distribution<double> u;
    std::normal_distribution<double> z(0.0, 0.1);
    auto make = [&](int n, Eigen::MatrixXd& x, Eigen::VectorXd& y, Eigen::VectorXd& label) {
        x.resize(n, 4);
        y.resize(n);
        label.resize(n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < 4; ++j) x(i, j) = u(gen);
            label(i) = x(i, 0) > 0.5;
            y(i) = std::clamp(label(i) + z(gen), 0.0, 1.0);
        }
    };
    Eigen::MatrixXd xt, xs;
    Eigen::VectorXd yt, ys, lt, ls;
    make(1000, xt, yt, lt);
    make(1000, xs, ys, ls);
    const auto m = fit_gradient_boosting(xt, yt, Task::Regress, Hyperparameters{}, 5);
    const auto p = m.predict(xs);
    int hits = 0;
    for (int i = 0; i < 1000; ++i) hits += (p(i) >= 0.5) == (ls(i) == 1);
    CHECK(hits / 1000.0 >= 0.95);
    const auto c = fit_gradient_boosting(xt, lt, Task::Classify, Hyperparameters{}, 5);
    const auto pc = c.predict(xs);
    hits = 0;
    for (int i = 0; i < 1000; ++i) hits += (pc(i) >= 0.5) == (ls(i) == 1);
    CHECK(hits / 1000.0 >= 0.95);
}

TEST_CASE("network gradient matches finite differences") {
    std::mt19937 gen(13);
    const auto x = random_x(gen, 5, 4);
    Eigen::VectorXd y(5);
    y << 0, 1, 1, 0, 1;
    Eigen::VectorXd yr(5);
    yr << 0.1, 0.8, 0.55, 0.3, 0.95;
    for (auto activation : {Activation::ReLU, Activation::Tanh}) {
        for (auto task : {Task::Classify, Task::Regress}) {
            for (auto penalty : {Penalty::L1, Penalty::L2}) {
                const auto net = random_net(gen, 4, 7);
                const auto& target = task == Task::Classify ? y : yr;
                const double worst = testing::network_fd_error(net, x, target, task, penalty, 0.01, activation);
                INFO("task " << int(task) << " penalty " << int(penalty) << " act " << int(activation));
                CHECK(worst <= 1e-4);
            }
        }
    }
}

TEST_CASE("network fits XOR") {
    std::mt19937 gen(14);
    std::uniform_real_distribution<double> u(-1, 1);
    auto make = [&](int n, Eigen::MatrixXd& x, Eigen::VectorXd& y) {
        x.resize(n, 2);
        y.resize(n);
        for (int i = 0; i < n; ++i) {
            x(i, 0) = u(gen);
            x(i, 1) = u(gen);
            y(i) = (x(i, 0) > 0) != (x(i, 1) > 0);
        }
    };
    Eigen::MatrixXd x, xv;
    Eigen::VectorXd y, yv;
    make(400, x, y);
    make(100, xv, yv);
    Hyperparameters hp;
    hp.lambda = 1e-5;
    hp.learning_rate = 1e-2;
    hp.batch = 32;
    hp.max_epochs = 300;
    hp.patience = 50;
    const auto m = fit_shallow_nn(x, y, Task::Classify, Penalty::L2, hp, xv, yv, 1);
    const auto p = m.predict(x);
    int hits = 0;
    for (int i = 0; i < 400; ++i) hits += (p(i) >= 0.5) == (y(i) == 1);
    CHECK(hits / 400.0 >= 0.95);
}

TEST_CASE("network on identical inputs predicts the label mean") {
    Eigen::MatrixXd x = Eigen::MatrixXd::Constant(200, 3, 0.5);
    Eigen::VectorXd y(200);
    for (int i = 0; i < 200; ++i) y(i) = i % 10 < 3;
    for (auto penalty : {Penalty::L1, Penalty::L2}) {
        Hyperparameters hp;
        hp.lambda = 1e-4;
        hp.learning_rate = 1e-2;
        const auto m = fit_shallow_nn(x, y, Task::Classify, penalty, hp, x.topRows(50), y.head(50), 2);
        CHECK(std::abs(m.predict(x.topRows(1))(0) - 0.3) <= 0.05);
    }
    CHECK_ERROR(fit_shallow_nn(x, y, Task::Classify, Penalty::L2, Hyperparameters{}, Eigen::MatrixXd(0, 3),
                               Eigen::VectorXd(0), 2),
                ErrorCode::NoValidationSet);
}

TEST_CASE("fits are reproducible and round-trip through serialization") {
    std::mt19937 gen(15);
    const auto x = random_x(gen, 120, 6);
    const auto xv = random_x(gen, 40, 6);
    Eigen::VectorXd y(120), yv(40), yb(120), ybv(40);
    for (int i = 0; i < 120; ++i) {
        y(i) = 1.0 / (1.0 + std::exp(-x(i, 0)));
        yb(i) = x(i, 1) > 0;
    }
    for (int i = 0; i < 40; ++i) {
        yv(i) = 1.0 / (1.0 + std::exp(-xv(i, 0)));
        ybv(i) = xv(i, 1) > 0;
    }
    Hyperparameters hp;
    hp.max_epochs = 30;
    const std::vector<double> grid{1e-3, 1e-2, 1e-1};
    const auto dir = testing::scratch_dir("models");
    for (auto family : {Family::LR, Family::LR_L1, Family::LR_L2, Family::LOGISTIC_L1, Family::GB, Family::NN_L1,
                        Family::NN_L2}) {
        for (auto task : {Task::Regress, Task::Classify}) {
            if (!supports(family, task)) continue;
            const auto& t = task == Task::Regress ? y : yb;
            const auto& tv = task == Task::Regress ? yv : ybv;
            const auto a = fit_selected(family, task, x, t, xv, tv, hp, grid, 9);
            const auto b = fit_selected(family, task, x, t, xv, tv, hp, grid, 9);
            CHECK(serialize_model(a) == serialize_model(b));
            const auto p = a.predict(xv);
            CHECK(p.minCoeff() >= 0.0);
            CHECK(p.maxCoeff() <= 1.0);
            const auto file = dir / (std::string(to_string(family)) + ".sqmm");
            save_model(a, file);
            const auto back = load_model(file);
            CHECK(back.family == family);
            CHECK(back.task == task);
            CHECK(back.predict(xv) == p);
            CHECK_ERROR(a.predict(xv.leftCols(5)), ErrorCode::DimMismatch);
        }
    }
}

TEST_CASE("lambda selection uses validation loss") {
    std::mt19937 gen(16);
    const auto x = random_x(gen, 40, 15);
    const auto y = noisy_linear(gen, x, 0.2);
    const auto xv = random_x(gen, 40, 15);
    const auto yv = noisy_linear(gen, xv, 0.2);
    const std::vector<double> grid{1e-4, 1e-3, 1e-2, 1e-1, 1.0};
    for (auto [family, penalty] : {std::pair{Family::LR_L2, Penalty::L2}, std::pair{Family::LR_L1, Penalty::L1}}) {
        double best = INFINITY, best_lambda = -1;
        for (double lambda : grid) {
            const double loss = task_loss(Task::Regress, fit_linear(x, y, penalty, lambda).predict(xv), yv);
            if (loss < best) {
                best = loss;
                best_lambda = lambda;
            }
        }
        const auto m = fit_selected(family, Task::Regress, x, y, xv, yv, Hyperparameters{}, grid, 0);
        CHECK(m.hp.lambda == best_lambda);
    }
    // Boosting keeps the stage count with the lowest validation loss.
    Eigen::VectorXd yb = (x.col(0).array() > 0).cast<double>();
    Eigen::VectorXd ybv = (xv.col(0).array() + 0.8 * xv.col(1).array() > 0).cast<double>();
    const auto full = fit_gradient_boosting(x, yb, Task::Classify, Hyperparameters{}, 0);
    const auto curve = staged_loss(full, xv, ybv);
    const auto best_stage = static_cast<std::size_t>(std::min_element(curve.begin(), curve.end()) - curve.begin());
    const auto sel = fit_selected(Family::GB, Task::Classify, x, yb, xv, ybv, Hyperparameters{}, grid, 0);
    CHECK(std::get<TreeEnsemble>(sel.params).trees.size() == best_stage);
    CHECK(sel.predict(xv) == truncate_stages(full, best_stage).predict(xv));
}

TEST_CASE("model file rejects corruption") {
    std::mt19937 gen(17);
    const auto x = random_x(gen, 30, 3);
    const auto bytes = serialize_model(fit_linear(x, noisy_linear(gen, x, 0.1), Penalty::L2, 0.1));
    auto bad = bytes;
    bad[0] ^= 0xFF;
    CHECK_ERROR(deserialize_model(bad), ErrorCode::BadMagic);
    bad = bytes;
    bad[4] ^= 0xFF;
    CHECK_ERROR(deserialize_model(bad), ErrorCode::BadVersion);
    CHECK_THROWS_AS(deserialize_model(std::span(bytes).first(bytes.size() - 1)), Error);
    auto extra = bytes;
    extra.push_back(1);
    CHECK_THROWS_AS(deserialize_model(extra), Error);
    CHECK_ERROR(load_model("/nonexistent_dir_segqual/m.sqmm"), ErrorCode::IoFailure);
}

TEST_CASE("task loss and names") {
    Eigen::VectorXd p(2), y(2);
    p << 0.25, 0.75;
    y << 0, 1;
    CHECK(task_loss(Task::Regress, p, y) == doctest::Approx(0.0625));
    CHECK(task_loss(Task::Classify, p, y) == doctest::Approx(-std::log(0.75)));
    for (auto f : {Family::LR, Family::LR_L1, Family::LR_L2, Family::LOGISTIC_L1, Family::GB, Family::NN_L1, Family::NN_L2}) {
        CHECK(parse_family(to_string(f)) == f);
    }
    CHECK(!supports(Family::LR, Task::Classify));
    CHECK(!supports(Family::LOGISTIC_L1, Task::Regress));
    CHECK(supports(Family::GB, Task::Classify));
}
