#include "convq/stats.hpp"

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>

#include "convq/coordination.hpp"
#include "convq/errors.hpp"
#include "convq/parallel.hpp"
#include "convq/random.hpp"

namespace convq {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_full_rank(const Eigen::MatrixXd& design, const char* who) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(1e-10);
    if (qr.rank() < design.cols()) {
        throw RankDeficiencyError(std::string(who) + ": design matrix is rank deficient (rank " +
                                  std::to_string(qr.rank()) + " < " + std::to_string(design.cols()) + ")");
    }
}

// Two-sided normal-approximation p-value from bootstrap draws.
double bootstrap_p(double estimate, const std::vector<double>& draws) {
    if (draws.size() < 2) return kNaN;
    const double n = static_cast<double>(draws.size());
    const double mean = std::accumulate(draws.begin(), draws.end(), 0.0) / n;
    double ss = 0.0;
    for (double d : draws) ss += (d - mean) * (d - mean);
    const double se = std::sqrt(ss / (n - 1.0));
    if (!(se > 0)) return estimate == 0.0 ? 1.0 : 0.0;
    return std::erfc(std::abs(estimate / se) / std::sqrt(2.0));
}

std::vector<std::size_t> resample_rows(std::size_t n, std::uint64_t seed, std::uint64_t stream) {
    auto rng = seeded_rng(seed, stream);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = pick(rng);
    return idx;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(idx[r]));
    return out;
}

Eigen::VectorXd take_rows(const Eigen::VectorXd& v, const std::vector<std::size_t>& idx) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r) out(static_cast<Eigen::Index>(r)) = v(static_cast<Eigen::Index>(idx[r]));
    return out;
}

void finish_inference(RegressionResult& r, int m, double alpha) {
    r.alpha = alpha;
    r.p_adjusted = bonferroni(r.p_value, m);
    r.significant.clear();
    for (double p : r.p_adjusted) r.significant.push_back(p < alpha);
}

// Distinct rows of [design, y] with their multiplicities. Repeated rows
// (dyad members sharing a rating, bootstrap draws) make every vertex
// degenerate; the weighted problem has the same minimizers without that.
struct WeightedRows {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    Eigen::VectorXd w;
};

WeightedRows collapse_rows(const Eigen::MatrixXd& design, const Eigen::VectorXd& y) {
    const auto n = design.rows();
    const auto p = design.cols();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    auto less = [&](Eigen::Index a, Eigen::Index b) {
        for (Eigen::Index j = 0; j < p; ++j) {
            if (design(a, j) != design(b, j)) return design(a, j) < design(b, j);
        }
        return y(a) < y(b);
    };
    std::sort(order.begin(), order.end(), less);
    std::vector<Eigen::Index> first;
    std::vector<double> count;
    for (auto i : order) {
        if (!first.empty() && !less(first.back(), i)) {
            count.back() += 1.0;
        } else {
            first.push_back(i);
            count.push_back(1.0);
        }
    }
    WeightedRows out{Eigen::MatrixXd(static_cast<Eigen::Index>(first.size()), p),
                     Eigen::VectorXd(static_cast<Eigen::Index>(first.size())),
                     Eigen::VectorXd(static_cast<Eigen::Index>(first.size()))};
    for (std::size_t k = 0; k < first.size(); ++k) {
        const auto r = static_cast<Eigen::Index>(k);
        out.x.row(r) = design.row(first[k]);
        out.y(r) = y(first[k]);
        out.w(r) = count[k];
    }
    return out;
}

// Whether some d with w_i (tau - 1) <= d_i <= w_i tau satisfies A^T d =
// target, by projected coordinate descent on |A^T d - target|^2.
bool box_feasible(const Eigen::MatrixXd& a, const Eigen::VectorXd& w, const Eigen::VectorXd& target, double tau) {
    const auto k = a.rows();
    Eigen::VectorXd d = w * (tau - 0.5);
    Eigen::VectorXd gap = a.transpose() * d - target;
    const Eigen::VectorXd norms = a.rowwise().squaredNorm();
    const double tol = 1e-9 * (1.0 + target.norm());
    double last = std::numeric_limits<double>::infinity();
    for (int sweep = 0; sweep < 5000; ++sweep) {
        for (Eigen::Index i = 0; i < k; ++i) {
            if (!(norms(i) > 0)) continue;
            const double next = std::clamp(d(i) - a.row(i).dot(gap) / norms(i), w(i) * (tau - 1.0), w(i) * tau);
            if (next != d(i)) {
                gap += a.row(i).transpose() * (next - d(i));
                d(i) = next;
            }
        }
        const double now = gap.norm();
        if (now <= tol) return true;
        if (now > 0.999 * last) return false;  // stalled short of feasibility
        last = now;
    }
    return false;
}

// p linearly independent rows with the smallest residuals at beta; empty
// when the rows do not span the column space.
std::vector<Eigen::Index> best_fitted_basis(const WeightedRows& rows, const Eigen::VectorXd& beta) {
    const auto n = rows.x.rows();
    const auto p = rows.x.cols();
    const Eigen::VectorXd r = (rows.y - rows.x * beta).cwiseAbs();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return r(a) < r(b) || (r(a) == r(b) && a < b);
    });
    std::vector<Eigen::Index> basis;
    Eigen::MatrixXd xh(p, p);
    for (auto i : order) {
        const auto k = static_cast<Eigen::Index>(basis.size());
        if (k == p) break;
        xh.row(k) = rows.x.row(i);
        if (Eigen::FullPivLU<Eigen::MatrixXd>(xh.topRows(k + 1)).rank() == k + 1) basis.push_back(i);
    }
    if (static_cast<Eigen::Index>(basis.size()) < p) basis.clear();
    return basis;
}

struct VertexCheck {
    Eigen::VectorXd vertex;
    Eigen::VectorXd residuals;
    double zero = 0.0;        // residuals this small count as exact fits
    bool optimal = false;
    Eigen::Index leave = -1;  // basis position to release when not optimal
    double direction = 0.0;   // +1 moves that row's residual negative, -1 positive
};

// Vertex through the basis rows and the subgradient optimality test of the
// check-loss linear program. Rows the vertex also fits exactly share the
// free subgradient range with the basis rows.
std::optional<VertexCheck> check_vertex(const WeightedRows& rows, const std::vector<Eigen::Index>& basis, double tau) {
    const auto n = rows.x.rows();
    const auto p = rows.x.cols();
    Eigen::MatrixXd xh(p, p);
    Eigen::VectorXd yh(p);
    std::vector<bool> in_basis(static_cast<std::size_t>(n), false);
    for (Eigen::Index k = 0; k < p; ++k) {
        const auto i = basis[static_cast<std::size_t>(k)];
        xh.row(k) = rows.x.row(i);
        yh(k) = rows.y(i);
        in_basis[static_cast<std::size_t>(i)] = true;
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(xh);
    if (!(lu.rcond() > 1e-12)) return std::nullopt;
    VertexCheck out;
    out.vertex = lu.solve(yh);
    out.residuals = rows.y - rows.x * out.vertex;
    out.zero = 1e-10 * (1.0 + rows.y.cwiseAbs().maxCoeff());
    std::vector<Eigen::Index> extra;  // exactly fitted rows outside the basis
    Eigen::VectorXd g = Eigen::VectorXd::Zero(p);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (in_basis[static_cast<std::size_t>(i)]) continue;
        if (std::abs(out.residuals(i)) <= out.zero) extra.push_back(i);
        g += rows.x.row(i).transpose() * (rows.w(i) * (tau - (out.residuals(i) < 0 ? 1.0 : 0.0)));
    }
    const Eigen::VectorXd d = -Eigen::PartialPivLU<Eigen::MatrixXd>(xh.transpose()).solve(g);
    constexpr double slack = 1e-10;
    double worst = slack;
    for (Eigen::Index k = 0; k < p; ++k) {
        const double w = rows.w(basis[static_cast<std::size_t>(k)]);
        const double below = w * (tau - 1.0) - d(k), above = d(k) - w * tau;
        if (below > worst) {
            worst = below;
            out.leave = k;
            out.direction = 1.0;
        }
        if (above > worst) {
            worst = above;
            out.leave = k;
            out.direction = -1.0;
        }
    }
    out.optimal = out.leave < 0;
    if (!out.optimal && !extra.empty()) {
        const auto m = p + static_cast<Eigen::Index>(extra.size());
        Eigen::MatrixXd xz(m, p);
        Eigen::VectorXd wz(m);
        xz.topRows(p) = xh;
        for (Eigen::Index k = 0; k < p; ++k) wz(k) = rows.w(basis[static_cast<std::size_t>(k)]);
        Eigen::VectorXd gz = g;
        for (std::size_t k = 0; k < extra.size(); ++k) {
            const auto r = p + static_cast<Eigen::Index>(k);
            xz.row(r) = rows.x.row(extra[k]);
            wz(r) = rows.w(extra[k]);
            gz -= rows.x.row(extra[k]).transpose() * (rows.w(extra[k]) * tau);
        }
        out.optimal = box_feasible(xz, wz, -gz, tau);
    }
    return out;
}

// Exact finish of the check-loss problem by descending along the edges of
// the vertex polytope: release the basis row with the worst multiplier and
// move to the row where the piecewise-linear loss along that edge bottoms
// out (a weighted median of the breakpoints).
std::optional<Eigen::VectorXd> vertex_descent(const WeightedRows& rows, std::vector<Eigen::Index> basis, double tau,
                                              int max_steps) {
    const auto n = rows.x.rows();
    const auto p = rows.x.cols();
    for (int step = 0; step < max_steps; ++step) {
        const auto check = check_vertex(rows, basis, tau);
        if (!check) return std::nullopt;
        if (check->optimal) return check->vertex;

        Eigen::MatrixXd xh(p, p);
        for (Eigen::Index k = 0; k < p; ++k) xh.row(k) = rows.x.row(basis[static_cast<std::size_t>(k)]);
        const Eigen::VectorXd unit = Eigen::VectorXd::Unit(p, check->leave) * check->direction;
        const Eigen::VectorXd delta = xh.partialPivLu().solve(unit);
        const Eigen::VectorXd& res = check->residuals;
        const Eigen::VectorXd a = rows.x * delta;

        // Slope of the loss at t = 0+ along vertex + t delta, then the
        // breakpoints where some residual changes sign.
        const auto leaving = basis[static_cast<std::size_t>(check->leave)];
        double slope = rows.w(leaving) * (check->direction > 0 ? 1.0 - tau : tau);
        std::vector<std::pair<double, Eigen::Index>> breaks;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (std::find(basis.begin(), basis.end(), i) != basis.end() || a(i) == 0.0) continue;
            if (std::abs(res(i)) <= check->zero) {
                slope -= rows.w(i) * a(i) * (tau - (a(i) > 0 ? 1.0 : 0.0));
                continue;
            }
            slope -= rows.w(i) * a(i) * (tau - (res(i) < 0 ? 1.0 : 0.0));
            const double t = res(i) / a(i);
            if (t > 0) breaks.emplace_back(t, i);
        }
        if (!(slope < 0)) return std::nullopt;
        std::sort(breaks.begin(), breaks.end());
        Eigen::Index entering = -1;
        for (const auto& [t, i] : breaks) {
            slope += rows.w(i) * std::abs(a(i));
            if (slope >= 0) {
                entering = i;
                break;
            }
        }
        if (entering < 0) return std::nullopt;
        basis[static_cast<std::size_t>(check->leave)] = entering;
    }
    return std::nullopt;
}

}  // namespace

std::vector<double> bonferroni(std::span<const double> p, int m) {
    if (m < 1) throw InputError("bonferroni: number of tests must be positive");
    std::vector<double> out;
    out.reserve(p.size());
    for (double v : p) {
        if (std::isnan(v)) {
            out.push_back(v);
            continue;
        }
        if (v < 0 || v > 1) throw DomainError("bonferroni: p-value outside [0, 1]");
        out.push_back(std::min(1.0, m * v));
    }
    return out;
}

double check_loss(const Eigen::VectorXd& residuals, double tau) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < residuals.size(); ++i) {
        const double u = residuals(i);
        s += u * (tau - (u < 0 ? 1.0 : 0.0));
    }
    return s;
}

Eigen::VectorXd fit_quantile(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                             const QuantileOptions& opt) {
    if (design.rows() != y.size()) throw InputError("quantile regression: row count mismatch");
    if (!(opt.tau > 0 && opt.tau < 1)) throw InputError("quantile regression: tau must lie in (0, 1)");
    require_full_rank(design, "quantile regression");

    Eigen::VectorXd beta = design.colPivHouseholderQr().solve(y);
    const WeightedRows rows = collapse_rows(design, y);
    std::vector<double> trace;
    Eigen::MatrixXd weighted(design.rows(), design.cols());
    Eigen::VectorXd wy(y.size());
    for (int it = 0; it < opt.max_iterations; ++it) {
        const Eigen::VectorXd r = y - design * beta;
        trace.push_back(check_loss(r, opt.tau));
        for (Eigen::Index i = 0; i < r.size(); ++i) {
            const double side = r(i) >= 0 ? opt.tau : 1.0 - opt.tau;
            const double w = std::sqrt(side / std::max(std::abs(r(i)), opt.smoothing));
            weighted.row(i) = design.row(i) * w;
            wy(i) = y(i) * w;
        }
        const Eigen::VectorXd next = weighted.colPivHouseholderQr().solve(wy);
        const double step = (next - beta).cwiseAbs().maxCoeff();
        const double scale = 1.0 + next.cwiseAbs().maxCoeff();
        beta = next;
        // IRLS crawls on flat stretches of the check loss; the interpolating
        // fit through the p best-fitted rows is returned as soon as it passes
        // the subgradient optimality test.
        const auto basis = best_fitted_basis(rows, beta);
        if (step <= opt.tolerance * scale) {
            // Small steps do not certify the optimum; polish to the vertex.
            if (!basis.empty()) {
                if (auto v = vertex_descent(rows, basis, opt.tau, 10 * static_cast<int>(rows.x.rows()))) return *v;
            }
            return beta;
        }
        if (basis.empty()) continue;
        if (auto c = check_vertex(rows, basis, opt.tau); c && c->optimal) return c->vertex;
        // Once the objective has stopped moving, finish exactly from there.
        constexpr std::size_t kStall = 10;
        if (trace.size() > kStall &&
            trace[trace.size() - 1 - kStall] - trace.back() <= 1e-8 * (1.0 + std::abs(trace.back()))) {
            if (auto v = vertex_descent(rows, basis, opt.tau, 10 * static_cast<int>(rows.x.rows()))) return *v;
        }
    }
    if (const auto basis = best_fitted_basis(rows, beta); !basis.empty()) {
        if (auto v = vertex_descent(rows, basis, opt.tau, 10 * static_cast<int>(rows.x.rows()))) return *v;
    }
    std::ostringstream msg;
    msg << "quantile regression did not converge in " << opt.max_iterations
        << " iterations; last objective values:";
    for (std::size_t i = trace.size() > 5 ? trace.size() - 5 : 0; i < trace.size(); ++i) msg << ' ' << trace[i];
    throw ConvergenceError(msg.str());
}

RegressionResult quantile_regression(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                     const std::vector<std::string>& names,
                                     const QuantileOptions& opt) {
    const auto n = x.rows();
    const auto p = x.cols();
    if (static_cast<Eigen::Index>(names.size()) != p) throw InputError("quantile regression: one name per column");
    if (n <= p + 1) throw InputError("quantile regression: need more rows than columns + 1");
    Eigen::MatrixXd design(n, p + 1);
    design.col(0).setOnes();
    design.rightCols(p) = x;

    const Eigen::VectorXd beta = fit_quantile(design, y, opt);

    std::vector<std::optional<Eigen::VectorXd>> draws(static_cast<std::size_t>(std::max(0, opt.bootstrap)));
    parallel_for(draws.size(), [&](std::size_t b) {
        const auto idx = resample_rows(static_cast<std::size_t>(n), opt.seed, b + 1);
        try {
            draws[b] = fit_quantile(take_rows(design, idx), take_rows(y, idx), opt);
        } catch (const Error&) {
            // degenerate resample: excluded
        }
    });

    RegressionResult r;
    r.model = "QLS";
    r.predictors = names;
    r.intercept = beta(0);
    for (Eigen::Index j = 1; j <= p; ++j) {
        r.beta.push_back(beta(j));
        std::vector<double> col;
        for (const auto& d : draws) {
            if (d) col.push_back((*d)(j));
        }
        r.p_value.push_back(bootstrap_p(beta(j), col));
    }
    finish_inference(r, opt.bonferroni_m, opt.alpha);
    return r;
}

namespace {

struct Standardized {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;  // 0 for constant columns
    double y_mean = 0.0;
};

Standardized standardize(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    Standardized s;
    const double n = static_cast<double>(x.rows());
    s.mean = x.colwise().mean().transpose();
    s.x = x.rowwise() - s.mean.transpose();
    s.scale = Eigen::VectorXd::Zero(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double sd = std::sqrt(s.x.col(j).squaredNorm() / n);
        if (sd > 1e-12 * (1.0 + std::abs(s.mean(j)))) {
            s.scale(j) = sd;
            s.x.col(j) /= sd;
        } else {
            s.x.col(j).setZero();
        }
    }
    s.y_mean = y.mean();
    s.y = y.array() - s.y_mean;
    return s;
}

}  // namespace

std::vector<double> lasso_lambda_grid(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int count,
                                      double ratio) {
    if (count < 1) throw InputError("lasso grid: need at least one value");
    const auto s = standardize(x, y);
    const double top = (s.x.transpose() * s.y).cwiseAbs().maxCoeff() / static_cast<double>(x.rows());
    std::vector<double> grid;
    const double hi = std::max(top, 1e-12);
    for (int i = 0; i < count; ++i) {
        const double f = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
        grid.push_back(hi * std::pow(ratio, f));
    }
    return grid;
}

Eigen::VectorXd lasso_coordinate_descent(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                         double lambda, const Eigen::VectorXd& start,
                                         double tolerance, int max_iterations) {
    if (lambda < 0) throw InputError("lasso: negative penalty");
    const double n = static_cast<double>(x.rows());
    Eigen::VectorXd beta = start.size() == x.cols() ? start : Eigen::VectorXd::Zero(x.cols());
    Eigen::VectorXd resid = y - x * beta;
    const Eigen::VectorXd norms = x.colwise().squaredNorm().transpose() / n;
    // A sweep converges when no coordinate moved the fit by more than
    // `tolerance` times the mean square of the response.
    const double threshold = tolerance * std::max(y.squaredNorm() / n, std::numeric_limits<double>::min());
    for (int it = 0; it < max_iterations; ++it) {
        double max_step = 0.0;
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            if (!(norms(j) > 0)) continue;
            const double old = beta(j);
            const double rho = x.col(j).dot(resid) / n + norms(j) * old;
            // Round-off can leave |rho| a hair above lambda for a column that ties
            // another exactly; such coordinates stay at zero so filtering is exact.
            const double excess = std::abs(rho) - lambda;
            const double next = excess > 1e-12 * lambda ? std::copysign(excess, rho) / norms(j) : 0.0;
            if (next != old) {
                resid -= x.col(j) * (next - old);
                beta(j) = next;
                max_step = std::max(max_step, norms(j) * (next - old) * (next - old));
            }
        }
        if (max_step <= threshold) return beta;
    }
    throw ConvergenceError("lasso: coordinate descent did not converge");
}

RegressionResult lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const std::vector<std::string>& names, const LassoOptions& opt) {
    if (opt.lambdas.empty()) throw InputError("lasso: empty penalty grid");
    if (static_cast<Eigen::Index>(names.size()) != x.cols()) throw InputError("lasso: one name per column");
    if (x.rows() != y.size()) throw InputError("lasso: row count mismatch");
    if (x.rows() < 3) throw InputError("lasso: need at least 3 rows");

    std::vector<double> grid = opt.lambdas;
    std::sort(grid.begin(), grid.end(), std::greater<>());

    auto fit_path_to = [&](const Standardized& s, std::size_t upto) {
        Eigen::VectorXd beta = Eigen::VectorXd::Zero(s.x.cols());
        std::vector<Eigen::VectorXd> path;
        for (std::size_t l = 0; l <= upto; ++l) {
            beta = lasso_coordinate_descent(s.x, s.y, grid[l], beta, opt.tolerance, opt.max_iterations);
            path.push_back(beta);
        }
        return path;
    };
    auto to_original = [](const Standardized& s, const Eigen::VectorXd& b, double& intercept) {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(b.size());
        for (Eigen::Index j = 0; j < b.size(); ++j) {
            if (s.scale(j) > 0) out(j) = b(j) / s.scale(j);
        }
        intercept = s.y_mean - out.dot(s.mean);
        return out;
    };

    // Cross-validated choice of the penalty.
    std::size_t chosen = 0;
    const auto n = static_cast<std::size_t>(x.rows());
    const int folds = std::min<int>(opt.folds, static_cast<int>(n));
    if (grid.size() > 1 && folds >= 2) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        auto rng = seeded_rng(opt.seed, 0);
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<double> mse(grid.size(), 0.0);
        for (int f = 0; f < folds; ++f) {
            std::vector<std::size_t> train, test;
            for (std::size_t i = 0; i < n; ++i) (static_cast<int>(i % static_cast<std::size_t>(folds)) == f ? test : train).push_back(order[i]);
            const auto s = standardize(take_rows(x, train), take_rows(y, train));
            const auto path = fit_path_to(s, grid.size() - 1);
            const Eigen::MatrixXd xt = take_rows(x, test);
            const Eigen::VectorXd yt = take_rows(y, test);
            for (std::size_t l = 0; l < grid.size(); ++l) {
                double icpt = 0.0;
                const Eigen::VectorXd b = to_original(s, path[l], icpt);
                mse[l] += ((yt - xt * b).array() - icpt).square().sum();
            }
        }
        chosen = static_cast<std::size_t>(std::min_element(mse.begin(), mse.end()) - mse.begin());
    }

    const auto full = standardize(x, y);
    const auto path = fit_path_to(full, chosen);
    RegressionResult r;
    r.model = "LASSO";
    r.predictors = names;
    r.lambda = grid[chosen];
    const Eigen::VectorXd beta = to_original(full, path.back(), r.intercept);

    std::vector<std::optional<Eigen::VectorXd>> draws(static_cast<std::size_t>(std::max(0, opt.bootstrap)));
    parallel_for(draws.size(), [&](std::size_t b) {
        const auto idx = resample_rows(n, opt.seed, b + 1);
        try {
            const auto s = standardize(take_rows(x, idx), take_rows(y, idx));
            const Eigen::VectorXd bs = lasso_coordinate_descent(s.x, s.y, grid[chosen], path.back(),
                                                                opt.tolerance, opt.max_iterations);
            double icpt = 0.0;
            draws[b] = to_original(s, bs, icpt);
        } catch (const Error&) {
        }
    });

    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        r.beta.push_back(beta(j));
        r.filtered.push_back(beta(j) == 0.0);
        if (beta(j) == 0.0) {
            r.p_value.push_back(1.0);
            continue;
        }
        std::vector<double> col;
        for (const auto& d : draws) {
            if (d) col.push_back((*d)(j));
        }
        r.p_value.push_back(bootstrap_p(beta(j), col));
    }
    finish_inference(r, opt.bonferroni_m, opt.alpha);
    return r;
}

std::vector<double> mid_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

std::pair<double, double> spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw InputError("spearman: lengths differ");
    if (x.size() < 4) throw InputError("spearman: need at least 4 observations");
    const auto rx = mid_ranks(x), ry = mid_ranks(y);
    const double rho = pearson(rx, ry);
    const double df = static_cast<double>(x.size()) - 2.0;
    if (std::abs(rho) >= 1.0) return {rho, 0.0};
    const double t = rho * std::sqrt(df / (1.0 - rho * rho));
    const boost::math::students_t dist(df);
    const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
    return {rho, std::min(1.0, p)};
}

}  // namespace convq
