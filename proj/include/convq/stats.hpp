#pragma once

// Hypothesis-driven models: median (quantile) regression by IRLS with
// bootstrap inference, LASSO by coordinate descent with cross-validated
// penalty, Spearman rank correlation and Bonferroni adjustment.

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace convq {

inline constexpr double kSignificanceLevel = 0.005;

struct RegressionResult {
    std::string model;  // "QLS", "LASSO" or "Spearman"
    std::vector<std::string> predictors;
    double intercept = 0.0;
    std::vector<double> beta;
    std::vector<double> p_value;
    std::vector<double> p_adjusted;
    std::vector<bool> significant;  // p_adjusted < alpha
    double alpha = kSignificanceLevel;
    std::optional<double> lambda;   // LASSO only
    std::vector<bool> filtered;     // LASSO only: coefficient shrunk to zero
};

/// min(1, m * p) for each p.
std::vector<double> bonferroni(std::span<const double> p, int m);

/// Check loss sum of u * (tau - 1{u < 0}).
double check_loss(const Eigen::VectorXd& residuals, double tau);

struct QuantileOptions {
    double tau = 0.5;
    double tolerance = 1e-8;
    int max_iterations = 500;
    double smoothing = 1e-6;  // floor on |residual| in the IRLS weights
    int bootstrap = 1000;
    std::uint64_t seed = 20240101;
    int bonferroni_m = 1;
    double alpha = kSignificanceLevel;
};

/// IRLS solution of the check-loss problem. `design` must already contain
/// the intercept column if one is wanted. Iteration stops when the largest
/// coefficient step falls below the relative tolerance, or earlier when the
/// interpolating fit through the best-fitted rows is provably optimal. Once
/// the objective stalls, the fit is finished exactly by descending along
/// the edges of the vertex polytope from those rows.
/// Throws RankDeficiencyError for a collinear design and ConvergenceError
/// (with the objective trace) when the iteration budget is exhausted.
Eigen::VectorXd fit_quantile(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                             const QuantileOptions& opt = {});

/// Quantile regression of y on [1, X]; p-values from a paired bootstrap
/// over rows (normal approximation with bootstrap standard errors).
RegressionResult quantile_regression(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                     const std::vector<std::string>& names,
                                     const QuantileOptions& opt = {});

struct LassoOptions {
    std::vector<double> lambdas;  // penalty grid on the standardized scale
    int folds = 5;
    double tolerance = 1e-7;
    int max_iterations = 100000;
    int bootstrap = 200;
    std::uint64_t seed = 20240101;
    int bonferroni_m = 1;
    double alpha = kSignificanceLevel;
};

/// Geometric grid from the smallest penalty that zeroes every coefficient
/// down to ratio * that value.
std::vector<double> lasso_lambda_grid(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                      int count = 30, double ratio = 1e-3);

/// Coordinate descent for (1/2n)||y - Xb||^2 + lambda * ||b||_1 on the
/// given (already centred/scaled) data, warm-started from `start`. A sweep
/// ends the descent once max_j ||x_j||^2/n * step_j^2 is at most `tolerance`
/// times the mean square of y.
Eigen::VectorXd lasso_coordinate_descent(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                         double lambda, const Eigen::VectorXd& start,
                                         double tolerance = 1e-7, int max_iterations = 100000);

/// LASSO with internal standardization; lambda picked by k-fold CV mean
/// squared error, coefficients reported on the original scale.
RegressionResult lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const std::vector<std::string>& names, const LassoOptions& opt);

/// Average ranks (1-based); ties get the mean of their positions.
std::vector<double> mid_ranks(std::span<const double> v);

/// Spearman rho and its two-sided p-value from the t approximation with
/// n - 2 degrees of freedom.
std::pair<double, double> spearman(std::span<const double> x, std::span<const double> y);

}  // namespace convq
