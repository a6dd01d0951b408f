#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "segqual/dataset.hpp"

namespace segqual {

enum class Family : std::uint8_t { LR, LR_L1, LR_L2, LOGISTIC_L1, GB, NN_L1, NN_L2 };
enum class Task : std::uint8_t { Classify, Regress };
enum class Penalty : std::uint8_t { None, L1, L2 };
enum class Activation : std::uint8_t { ReLU, Tanh };

std::string_view to_string(Family f);
std::string_view to_string(Task t);
Family parse_family(std::string_view text);
Task parse_task(std::string_view text);
/// Linear regressors regress only, logistic classifies only, GB/NN do both.
bool supports(Family f, Task t);

struct Hyperparameters {
    double lambda = 0.0;
    // gradient boosting
    int trees = 100;
    int depth = 3;
    double shrinkage = 0.1;
    double subsample = 0.5;
    int min_leaf = 5;
    // shallow network
    int hidden = 50;
    Activation activation = Activation::ReLU;
    double learning_rate = 1e-3;
    int batch = 128;
    int max_epochs = 500;
    int patience = 20;
};

struct LinearParams {
    double intercept = 0.0;
    Eigen::VectorXd weights;
};

struct TreeNode {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;     // go left when x[feature] <= threshold
    std::int32_t left = -1;
    std::int32_t right = -1;
    double value = 0.0;
};

struct RegressionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root
    double evaluate(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

struct TreeEnsemble {
    double base = 0.0;
    double shrinkage = 0.1;
    std::vector<RegressionTree> trees;
};

struct NetworkParams {
    Eigen::MatrixXd w1;  // hidden x inputs
    Eigen::VectorXd b1;
    Eigen::VectorXd w2;  // hidden
    double b2 = 0.0;
};

/// A fitted predictor with the standardization it expects on raw features.
struct MetaModel {
    Family family = Family::LR;
    Task task = Task::Regress;
    Hyperparameters hp;
    Standardizer stats;
    std::uint64_t seed = 0;
    std::variant<LinearParams, TreeEnsemble, NetworkParams> params;

    Eigen::Index input_dim() const noexcept { return stats.dim(); }

    /// Raw score before the output link (logit for classifiers and networks).
    Eigen::VectorXd decision(const Eigen::MatrixXd& raw) const;
    /// Classify: probability of fp_label = 1. Regress: IoU_adj in [0, 1].
    /// Throws DimMismatch on a wrong feature count.
    Eigen::VectorXd predict(const Eigen::MatrixXd& raw) const;
};

// ---- linear models --------------------------------------------------------

/// Least squares (QR), ridge, or lasso with an unpenalized intercept. The
/// penalized objectives are (1/2n)||y - Xb - c||^2 + lambda*||b||_1 and
/// (1/2n)||y - Xb - c||^2 + (lambda/2)||b||^2.
MetaModel fit_linear(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Penalty penalty, double lambda);

/// Plain least squares after dropping columns that are linear combinations of
/// others (pivoted QR on centered data); dropped columns get weight 0.
MetaModel fit_linear_reduced(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

/// Smallest lambda at which the lasso solution is identically zero.
double lasso_null_lambda(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

struct LassoTrace {
    int sweeps = 0;
    double duality_gap = 0.0;
};

/// Cyclic coordinate descent on centered data; stops at duality gap 1e-6 or
/// 1e4 sweeps.
LinearParams lasso_coordinate_descent(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
                                      LassoTrace* trace = nullptr);

// ---- logistic regression --------------------------------------------------

struct LossGradient {
    double loss = 0.0;
    Eigen::VectorXd grad_w;
    double grad_b = 0.0;
};

/// Mean log-loss of sigmoid(Xw + b) and its gradient (no penalty).
LossGradient logistic_loss_gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& y01,
                                    const Eigen::VectorXd& w, double b);

struct ProxTrace {
    int iterations = 0;
    double gradient_map_norm = 0.0;
};

/// Accelerated proximal gradient with backtracking on mean log-loss +
/// lambda*||w||_1; stops at gradient-map norm 1e-6 or 1e4 iterations.
MetaModel fit_logistic_l1(const Eigen::MatrixXd& x, const Eigen::VectorXd& y01, double lambda,
                          ProxTrace* trace = nullptr);

// ---- gradient boosting ----------------------------------------------------

/// Stage-wise depth-limited regression trees on the negative gradient of
/// squared loss (regress) or log-loss (classify). stage_loss, when given,
/// receives the full training loss after the initial constant and after each
/// stage.
MetaModel fit_gradient_boosting(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Task task,
                                const Hyperparameters& hp, std::uint64_t seed,
                                std::vector<double>* stage_loss = nullptr);

/// Copy of a boosted model keeping only its first `stages` trees.
MetaModel truncate_stages(const MetaModel& model, std::size_t stages);

/// Validation loss after 0..M stages.
std::vector<double> staged_loss(const MetaModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

// ---- shallow network ------------------------------------------------------

struct NetworkGradient {
    double loss = 0.0;
    NetworkParams grad;
};

/// Data loss (cross-entropy or squared error on the sigmoid output) plus
/// lambda * penalty over both weight matrices, with its analytic gradient.
NetworkGradient network_loss_gradient(const NetworkParams& net, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                      Task task, Penalty penalty, double lambda, Activation activation);

/// One hidden layer, sigmoid output, Adam, early stopping on validation loss.
/// Throws NoValidationSet when x_val is empty.
MetaModel fit_shallow_nn(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Task task, Penalty penalty,
                         const Hyperparameters& hp, const Eigen::MatrixXd& x_val, const Eigen::VectorXd& y_val,
                         std::uint64_t seed);

// ---- shared entry points --------------------------------------------------

/// Mean log-loss (classify) or mean squared error (regress) of predictions.
double task_loss(Task task, const Eigen::VectorXd& pred, const Eigen::VectorXd& y);

/// Fits one family, choosing lambda from `lambda_grid` and the boosting stage
/// count by validation loss. Inputs are used as given (already standardized).
MetaModel fit_selected(Family family, Task task, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const Eigen::MatrixXd& x_val, const Eigen::VectorXd& y_val, const Hyperparameters& hp,
                       std::span<const double> lambda_grid, std::uint64_t seed);

std::vector<std::uint8_t> serialize_model(const MetaModel& model);
MetaModel deserialize_model(std::span<const std::uint8_t> bytes);
void save_model(const MetaModel& model, const std::filesystem::path& path);
MetaModel load_model(const std::filesystem::path& path);

}  // namespace segqual
