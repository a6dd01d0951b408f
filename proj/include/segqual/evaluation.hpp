#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "segqual/dataset.hpp"
#include "segqual/models.hpp"

namespace segqual {

/// Fraction of rows where (score >= threshold) equals the binary label.
double accuracy(std::span<const double> scores, std::span<const double> labels, double threshold = 0.5);

/// Threshold maximizing accuracy; candidates are the distinct scores and +inf,
/// the smallest best candidate wins.
double tuned_threshold(std::span<const double> scores, std::span<const double> labels);

/// Mann-Whitney statistic by average-rank sums. Throws SingleClass.
double auroc(std::span<const double> scores, std::span<const double> labels);
/// The same quantity as the area under the ROC step curve (trapezoids over
/// tied score groups).
double auroc_trapezoid(std::span<const double> scores, std::span<const double> labels);

struct RegressionScore {
    double r2 = 0.0;
    double sigma = 0.0;  // root mean squared error
};

/// Throws ZeroVariance when y is constant.
RegressionScore r2_sigma(std::span<const double> pred, std::span<const double> y);

struct NaiveScore {
    double acc = 0.0;
    double auroc = 0.5;
};

NaiveScore naive_baseline(std::span<const double> labels);

struct RunMetrics {
    std::uint64_t seed = 0;
    std::optional<double> acc;
    std::optional<double> acc_tuned;
    std::optional<double> auroc;
    std::optional<double> r2;
    std::optional<double> sigma;
};

struct MetricSummary {
    std::optional<double> acc, acc_tuned, auroc, r2, sigma;
};

/// One cell of an experiment sweep.
struct RunReport {
    std::string model;  // family name, "ENTROPY" or "NAIVE"
    Task task = Task::Regress;
    int n_c = 0;
    Composition composition = Composition::R;
    std::vector<RunMetrics> runs;
    MetricSummary mean;
    MetricSummary std;  // population standard deviation over runs
    std::optional<int> best_n_c;

    void summarize();
};

struct ExperimentConfig {
    std::vector<Family> models = {Family::LR,    Family::LR_L1, Family::LR_L2, Family::LOGISTIC_L1,
                                  Family::GB,    Family::NN_L1, Family::NN_L2};
    std::vector<Task> tasks = {Task::Classify, Task::Regress};
    std::vector<int> n_c = {0};
    std::vector<Composition> compositions = {Composition::R};
    int runs = 10;
    std::uint64_t seed = 0;
    /// Explicit per-run seeds; when empty, run r uses derive_seed(seed, r).
    std::vector<std::uint64_t> run_seeds;
    double train_fraction = 0.70;
    double val_fraction = 0.10;
    double test_fraction = 0.20;
    bool split_by_track = false;
    bool standardize = true;
    bool baselines = true;
    Hyperparameters hp;
    std::vector<double> lambda_grid = {1e-4, 1e-3, 1e-2, 1e-1, 1.0};
    SmoterParams smoter;
    int threads = 1;

    std::uint64_t run_seed(int run) const;
};

/// Everything a single run needs once the split is fixed.
struct PreparedRun {
    Eigen::MatrixXd x_train, x_val, x_test;  // standardized
    Eigen::VectorXd y_train, y_val, y_test;  // task targets
    Standardizer stats;
};

/// Builds the training pool for a composition, standardizes on it, applies
/// SMOTER when the composition asks for it, and extracts task targets.
PreparedRun prepare_run(const FeatureMatrix& fm, const SplitIndices& split, Composition composition, Task task,
                        const ExperimentConfig& cfg, std::uint64_t seed);

RunMetrics evaluate_predictions(Task task, const Eigen::VectorXd& val_pred, const Eigen::VectorXd& y_val,
                                const Eigen::VectorXd& test_pred, const Eigen::VectorXd& y_test);

/// Single-frame boosting on the mean entropy column "E".
RunReport entropy_baseline(const FeatureMatrix& fm, Task task, Composition composition, const ExperimentConfig& cfg);

struct ExperimentResult {
    std::vector<RunReport> reports;
    /// First-run model of each family cell, keyed by report index.
    std::map<std::size_t, MetaModel> models;
};

/// Full sweep over models x tasks x n_c x compositions, `runs` resampled
/// splits per cell. fm must be built with n_c >= max(cfg.n_c). Results do
/// not depend on cfg.threads.
ExperimentResult run_experiment(const FeatureMatrix& fm, const ExperimentConfig& cfg);

/// Sets best_n_c on every report: highest test mean AUROC (classify) or R²
/// (regress) among reports sharing model, task and composition.
void annotate_best_n_c(std::vector<RunReport>& reports);

std::string report_json(std::span<const RunReport> reports);
std::vector<RunReport> parse_report_json(const std::string& text);
void write_report_csv(std::ostream& out, std::span<const RunReport> reports);

}  // namespace segqual
