#pragma once

// Binary PCQ classification: SMOTE oversampling, z-score + PCA
// preprocessing, elastic-net logistic regression, stratified k-fold
// evaluation (ROC, AUC, confusion) and multi-condition studies.

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace convq {

struct SyntheticSample {
    std::size_t source = 0;     // row of the minority point
    std::size_t neighbour = 0;  // row of the chosen nearest neighbour
    double u = 0.0;             // interpolation weight in (0, 1)
};

struct SmoteResult {
    Eigen::MatrixXd x;  // original rows followed by synthetic rows
    std::vector<int> y;
    std::vector<SyntheticSample> synthetic;
};

/// Oversamples the minority class (labels 0/1) until both classes are the
/// same size. Minority points are visited cyclically; each draws one of its
/// k nearest minority neighbours (k clamped to minority size - 1). Throws
/// InputError when the minority class has fewer than 2 samples.
SmoteResult smote(const Eigen::MatrixXd& x, const std::vector<int>& y, int k = 5,
                  std::uint64_t seed = 0);

/// Column-wise z-score fitted on one matrix and applied to others. Constant
/// columns are centred only.
struct Standardizer {
    Eigen::RowVectorXd mean;
    Eigen::RowVectorXd scale;

    static Standardizer fit(const Eigen::MatrixXd& x);
    Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const;
};

/// Principal components covering at least `variance` of the total
/// variance (at least one component).
struct Pca {
    Eigen::RowVectorXd mean;
    Eigen::MatrixXd components;  // columns are loadings

    static Pca fit(const Eigen::MatrixXd& x, double variance = 0.95);
    Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const;
};

struct LogisticModel {
    Eigen::VectorXd weights;
    double intercept = 0.0;
    int iterations = 0;
    bool converged = false;

    Eigen::VectorXd decision(const Eigen::MatrixXd& x) const;
};

struct ElasticOptions {
    double lambda = 0.01;
    double alpha = 0.5;  // 1 = lasso, 0 = ridge
    double tolerance = 1e-8;
    int max_iterations = 5000;
};

/// Minimizes mean logistic loss + lambda * (alpha |w|_1 + (1 - alpha)/2 |w|^2)
/// by accelerated proximal gradient (intercept unpenalized). Stops at the
/// iteration cap without throwing; `converged` records the outcome.
LogisticModel fit_elastic_logistic(const Eigen::MatrixXd& x, const std::vector<int>& y,
                                   const ElasticOptions& opt = {});

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

/// Exact ROC over every distinct score, from (0, 0) to (1, 1). Tied scores
/// move diagonally.
std::vector<RocPoint> roc_curve(std::span<const double> scores, const std::vector<int>& y);

/// Trapezoidal area under the exact ROC. Throws StratificationError when
/// only one class is present.
double auc(std::span<const double> scores, const std::vector<int>& y);

/// True-positive rate on the grid fpr = 0, 1/(n-1), ..., 1 by linear
/// interpolation (highest tpr at vertical steps).
std::vector<RocPoint> roc_on_grid(const std::vector<RocPoint>& roc, int points = 101);

struct Confusion {
    int tp = 0, fp = 0, tn = 0, fn = 0;
    Confusion& operator+=(const Confusion& o);
};

/// Fold id per sample. Each class is shuffled and dealt round-robin.
/// Throws StratificationError unless each class has >= 2 * folds samples.
std::vector<int> stratified_folds(const std::vector<int>& y, int folds, std::uint64_t seed);

struct ClassifierConfig {
    int folds = 5;
    double alpha = 0.5;
    std::vector<double> lambdas{0.001, 0.01, 0.1, 1.0};
    int inner_folds = 5;
    int smote_k = 5;
    double pca_variance = 0.95;
    double tolerance = 1e-8;
    int max_iterations = 5000;
    std::uint64_t seed = 20240101;
};

struct FoldResult {
    double auc = 0.0;
    double lambda = 0.0;
    int components = 0;
    Confusion confusion;
    std::vector<RocPoint> roc;  // on the 101-point grid
};

struct ConditionResult {
    std::string name;
    std::vector<FoldResult> folds;
    double auc_mean = 0.0;
    double auc_std = 0.0;  // population std over folds
    Confusion confusion;   // summed over folds
    std::vector<RocPoint> roc;  // vertical average of fold ROCs
};

/// Cross-validated evaluation on the given fold assignment. Per fold the
/// standardizer, PCA and SMOTE are fitted on training rows only; lambda is
/// chosen by inner cross-validated AUC (ties to the larger lambda).
ConditionResult train_eval(const std::string& name, const Eigen::MatrixXd& x,
                           const std::vector<int>& y, const std::vector<int>& fold_of,
                           const ClassifierConfig& cfg = {});

/// Convenience overload drawing stratified folds from cfg.seed.
ConditionResult train_eval(const std::string& name, const Eigen::MatrixXd& x,
                           const std::vector<int>& y, const ClassifierConfig& cfg = {});

struct StudyCondition {
    std::string name;
    Eigen::MatrixXd x;
};

struct StudyResult {
    std::string name;
    std::vector<ConditionResult> ranked;  // by mean AUC, descending; stable
};

/// Evaluates every condition on the same folds. Throws InputError when a
/// condition is empty or its row count differs from the labels.
StudyResult run_study(const std::string& name, const std::vector<StudyCondition>& conditions,
                      const std::vector<int>& y, const ClassifierConfig& cfg = {});

}  // namespace convq
