#include "convq/predict.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "convq/errors.hpp"
#include "convq/parallel.hpp"
#include "convq/random.hpp"

namespace convq {

namespace {

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(idx[r]));
    }
    return out;
}

std::vector<int> take(const std::vector<int>& v, const std::vector<std::size_t>& idx) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(v[i]);
    return out;
}

void check_labels(const std::vector<int>& y) {
    for (int v : y) {
        if (v != 0 && v != 1) throw DomainError("labels must be 0 or 1");
    }
}

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// Shuffles each class and deals it round-robin over k folds.
std::vector<int> deal_folds(const std::vector<int>& y, int k, std::uint64_t seed) {
    std::vector<int> fold(y.size(), 0);
    int next = 0;
    for (int c = 0; c <= 1; ++c) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (y[i] == c) idx.push_back(i);
        }
        auto rng = seeded_rng(seed, static_cast<std::uint64_t>(c) + 1);
        std::shuffle(idx.begin(), idx.end(), rng);
        for (auto i : idx) {
            fold[i] = next;
            next = (next + 1) % k;
        }
    }
    return fold;
}

struct FittedPipeline {
    Standardizer standardizer;
    Pca pca;
    LogisticModel model;

    Eigen::VectorXd scores(const Eigen::MatrixXd& x) const {
        return model.decision(pca.transform(standardizer.transform(x)));
    }
};

FittedPipeline fit_pipeline(const Eigen::MatrixXd& x, const std::vector<int>& y, double lambda,
                            const ClassifierConfig& cfg, std::uint64_t smote_seed) {
    FittedPipeline p;
    p.standardizer = Standardizer::fit(x);
    const Eigen::MatrixXd z = p.standardizer.transform(x);
    p.pca = Pca::fit(z, cfg.pca_variance);
    const Eigen::MatrixXd reduced = p.pca.transform(z);
    const auto ones = std::count(y.begin(), y.end(), 1);
    const auto minority = std::min<std::ptrdiff_t>(ones, static_cast<std::ptrdiff_t>(y.size()) - ones);
    // Tiny inner folds can leave a single minority row, which SMOTE cannot
    // interpolate from; such folds are fitted unbalanced.
    const auto balanced = minority >= 2 ? smote(reduced, y, cfg.smote_k, smote_seed) : SmoteResult{reduced, y, {}};
    ElasticOptions opt;
    opt.lambda = lambda;
    opt.alpha = cfg.alpha;
    opt.tolerance = cfg.tolerance;
    opt.max_iterations = cfg.max_iterations;
    p.model = fit_elastic_logistic(balanced.x, balanced.y, opt);
    return p;
}

double choose_lambda(const Eigen::MatrixXd& x, const std::vector<int>& y,
                     const ClassifierConfig& cfg, std::uint64_t seed) {
    std::vector<double> grid = cfg.lambdas;
    std::sort(grid.begin(), grid.end(), std::greater<>());
    if (grid.size() == 1) return grid.front();
    const int minority = std::min<int>(static_cast<int>(std::count(y.begin(), y.end(), 1)),
                                       static_cast<int>(std::count(y.begin(), y.end(), 0)));
    const int k = std::min(cfg.inner_folds, minority);
    if (k < 2) return grid.front();
    const auto fold = deal_folds(y, k, seed);

    double best_auc = -1.0;
    double best = grid.front();
    for (std::size_t l = 0; l < grid.size(); ++l) {
        std::vector<double> pooled(y.size(), 0.0);
        for (int f = 0; f < k; ++f) {
            std::vector<std::size_t> train, test;
            for (std::size_t i = 0; i < y.size(); ++i) (fold[i] == f ? test : train).push_back(i);
            const auto ytr = take(y, train);
            const auto p = fit_pipeline(take_rows(x, train), ytr, grid[l], cfg,
                                        derive_seed(seed, 100 + static_cast<std::uint64_t>(f)));
            const Eigen::VectorXd s = p.scores(take_rows(x, test));
            for (std::size_t t = 0; t < test.size(); ++t) pooled[test[t]] = s(static_cast<Eigen::Index>(t));
        }
        const double a = auc(pooled, y);
        if (a > best_auc) {
            best_auc = a;
            best = grid[l];
        }
    }
    return best;
}

}  // namespace

SmoteResult smote(const Eigen::MatrixXd& x, const std::vector<int>& y, int k, std::uint64_t seed) {
    if (static_cast<std::size_t>(x.rows()) != y.size()) throw InputError("smote: row count mismatch");
    check_labels(y);
    const auto ones = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
    const std::size_t zeros = y.size() - ones;
    SmoteResult out{x, y, {}};
    if (ones == zeros) return out;
    const int minority_label = ones < zeros ? 1 : 0;
    std::vector<std::size_t> minority;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] == minority_label) minority.push_back(i);
    }
    if (minority.size() < 2) throw InputError("smote: minority class needs at least 2 samples");
    if (k < 1) throw InputError("smote: k must be positive");
    const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), minority.size() - 1);

    // k nearest minority neighbours of every minority point, ties by row.
    std::vector<std::vector<std::size_t>> neighbours(minority.size());
    for (std::size_t a = 0; a < minority.size(); ++a) {
        std::vector<std::pair<double, std::size_t>> d;
        for (std::size_t b = 0; b < minority.size(); ++b) {
            if (a == b) continue;
            d.emplace_back((x.row(static_cast<Eigen::Index>(minority[a])) -
                            x.row(static_cast<Eigen::Index>(minority[b]))).squaredNorm(),
                           minority[b]);
        }
        std::sort(d.begin(), d.end());
        for (std::size_t j = 0; j < kk; ++j) neighbours[a].push_back(d[j].second);
    }

    const std::size_t needed = std::max(ones, zeros) - minority.size();
    out.x.conservativeResize(x.rows() + static_cast<Eigen::Index>(needed), x.cols());
    auto rng = seeded_rng(seed, 0);
    std::uniform_int_distribution<std::size_t> pick(0, kk - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t s = 0; s < needed; ++s) {
        const std::size_t a = s % minority.size();
        const std::size_t nb = neighbours[a][pick(rng)];
        double u = 0.0;
        while (u <= 0.0) u = unit(rng);
        const auto src = static_cast<Eigen::Index>(minority[a]);
        out.x.row(x.rows() + static_cast<Eigen::Index>(s)) =
            x.row(src) + u * (x.row(static_cast<Eigen::Index>(nb)) - x.row(src));
        out.y.push_back(minority_label);
        out.synthetic.push_back({minority[a], nb, u});
    }
    return out;
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& x) {
    if (x.rows() < 2) throw InputError("standardizer: need at least 2 rows");
    Standardizer s;
    s.mean = x.colwise().mean();
    s.scale = ((x.rowwise() - s.mean).colwise().squaredNorm() / static_cast<double>(x.rows() - 1))
                  .cwiseSqrt();
    for (Eigen::Index j = 0; j < s.scale.size(); ++j) {
        if (!(s.scale(j) > 1e-12 * (1.0 + std::abs(s.mean(j))))) s.scale(j) = 1.0;
    }
    return s;
}

Eigen::MatrixXd Standardizer::transform(const Eigen::MatrixXd& x) const {
    if (x.cols() != mean.size()) throw InputError("standardizer: column count mismatch");
    return (x.rowwise() - mean).array().rowwise() / scale.array();
}

Pca Pca::fit(const Eigen::MatrixXd& x, double variance) {
    if (!(variance > 0 && variance <= 1)) throw InputError("pca: variance fraction must lie in (0, 1]");
    if (x.rows() < 2 || x.cols() < 1) throw InputError("pca: need at least 2 rows and 1 column");
    Pca p;
    p.mean = x.colwise().mean();
    const Eigen::MatrixXd centred = x.rowwise() - p.mean;
    Eigen::BDCSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeThinV);
    const Eigen::VectorXd power = svd.singularValues().array().square();
    const double total = power.sum();
    Eigen::Index keep = 1;
    if (total > 0) {
        double acc = power(0);
        while (keep < power.size() && acc < variance * total * (1.0 - 1e-12)) acc += power(keep++);
    }
    p.components = svd.matrixV().leftCols(keep);
    for (Eigen::Index c = 0; c < keep; ++c) {
        Eigen::Index arg = 0;
        p.components.col(c).cwiseAbs().maxCoeff(&arg);
        if (p.components(arg, c) < 0) p.components.col(c) *= -1.0;
    }
    return p;
}

Eigen::MatrixXd Pca::transform(const Eigen::MatrixXd& x) const {
    if (x.cols() != mean.size()) throw InputError("pca: column count mismatch");
    return (x.rowwise() - mean) * components;
}

Eigen::VectorXd LogisticModel::decision(const Eigen::MatrixXd& x) const {
    if (x.cols() != weights.size()) throw InputError("logistic: column count mismatch");
    return (x * weights).array() + intercept;
}

LogisticModel fit_elastic_logistic(const Eigen::MatrixXd& x, const std::vector<int>& y,
                                   const ElasticOptions& opt) {
    if (static_cast<std::size_t>(x.rows()) != y.size()) throw InputError("logistic: row count mismatch");
    if (x.rows() == 0) throw InputError("logistic: no rows");
    if (opt.lambda < 0 || opt.alpha < 0 || opt.alpha > 1) throw InputError("logistic: invalid penalty");
    check_labels(y);
    const auto n = x.rows();
    const auto d = x.cols();
    Eigen::MatrixXd xa(n, d + 1);
    xa.leftCols(d) = x;
    xa.col(d).setOnes();
    Eigen::VectorXd target(n);
    for (Eigen::Index i = 0; i < n; ++i) target(i) = y[static_cast<std::size_t>(i)];

    const double ridge = opt.lambda * (1.0 - opt.alpha);
    const double l1 = opt.lambda * opt.alpha;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(xa.transpose() * xa, Eigen::EigenvaluesOnly);
    const double lipschitz = eig.eigenvalues().maxCoeff() / (4.0 * static_cast<double>(n)) + ridge;
    const double step = 1.0 / std::max(lipschitz, 1e-12);

    auto gradient = [&](const Eigen::VectorXd& theta) {
        Eigen::VectorXd p = xa * theta;
        for (Eigen::Index i = 0; i < n; ++i) p(i) = sigmoid(p(i)) - target(i);
        Eigen::VectorXd g = xa.transpose() * p / static_cast<double>(n);
        g.head(d) += ridge * theta.head(d);
        return g;
    };

    Eigen::VectorXd theta = Eigen::VectorXd::Zero(d + 1);
    Eigen::VectorXd z = theta;
    double t = 1.0;
    LogisticModel m;
    for (int it = 1; it <= opt.max_iterations; ++it) {
        Eigen::VectorXd next = z - step * gradient(z);
        for (Eigen::Index j = 0; j < d; ++j) {
            const double v = next(j);
            next(j) = std::copysign(std::max(std::abs(v) - step * l1, 0.0), v);
        }
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        const Eigen::VectorXd delta = next - theta;
        if ((z - next).dot(delta) > 0) {
            // momentum points uphill: restart
            z = next;
            t = 1.0;
        } else {
            z = next + ((t - 1.0) / t_next) * delta;
            t = t_next;
        }
        theta = next;
        m.iterations = it;
        if (delta.cwiseAbs().maxCoeff() <= opt.tolerance * (1.0 + theta.cwiseAbs().maxCoeff())) {
            m.converged = true;
            break;
        }
    }
    m.weights = theta.head(d);
    m.intercept = theta(d);
    return m;
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, const std::vector<int>& y) {
    if (scores.size() != y.size()) throw InputError("roc: score and label counts differ");
    check_labels(y);
    const auto pos = static_cast<double>(std::count(y.begin(), y.end(), 1));
    const auto neg = static_cast<double>(y.size()) - pos;
    if (pos == 0 || neg == 0) throw StratificationError("roc: both classes are required");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<RocPoint> roc{{0.0, 0.0}};
    double tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) {
            (y[order[i]] == 1 ? tp : fp) += 1.0;
            ++i;
        }
        roc.push_back({fp / neg, tp / pos});
    }
    return roc;
}

double auc(std::span<const double> scores, const std::vector<int>& y) {
    const auto roc = roc_curve(scores, y);
    double area = 0.0;
    for (std::size_t i = 1; i < roc.size(); ++i) {
        area += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) * 0.5;
    }
    return area;
}

std::vector<RocPoint> roc_on_grid(const std::vector<RocPoint>& roc, int points) {
    if (points < 2) throw InputError("roc grid: need at least 2 points");
    if (roc.empty()) throw InputError("roc grid: empty curve");
    std::vector<RocPoint> out;
    for (int g = 0; g < points; ++g) {
        const double f = static_cast<double>(g) / (points - 1);
        const auto j = static_cast<std::size_t>(
            std::upper_bound(roc.begin(), roc.end(), f,
                             [](double v, const RocPoint& p) { return v < p.fpr; }) -
            roc.begin());
        double tpr = 1.0;
        if (j == 0) {
            tpr = roc.front().tpr;
        } else if (j < roc.size()) {
            const auto& a = roc[j - 1];
            const auto& b = roc[j];
            tpr = a.fpr == f ? a.tpr : a.tpr + (b.tpr - a.tpr) * (f - a.fpr) / (b.fpr - a.fpr);
        } else {
            tpr = roc.back().tpr;
        }
        out.push_back({f, tpr});
    }
    return out;
}

Confusion& Confusion::operator+=(const Confusion& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
}

std::vector<int> stratified_folds(const std::vector<int>& y, int folds, std::uint64_t seed) {
    if (folds < 2) throw InputError("cross-validation needs at least 2 folds");
    check_labels(y);
    const auto ones = static_cast<int>(std::count(y.begin(), y.end(), 1));
    const int zeros = static_cast<int>(y.size()) - ones;
    if (std::min(ones, zeros) < 2 * folds) {
        throw StratificationError("cannot stratify " + std::to_string(zeros) + " low / " +
                                  std::to_string(ones) + " high samples into " +
                                  std::to_string(folds) + " folds with 2 per class");
    }
    return deal_folds(y, folds, seed);
}

ConditionResult train_eval(const std::string& name, const Eigen::MatrixXd& x,
                           const std::vector<int>& y, const std::vector<int>& fold_of,
                           const ClassifierConfig& cfg) {
    if (static_cast<std::size_t>(x.rows()) != y.size() || fold_of.size() != y.size()) {
        throw InputError("train_eval: rows, labels and folds differ in length");
    }
    if (x.cols() == 0) throw InputError("train_eval: condition '" + name + "' has no features");
    if (!x.allFinite()) throw InputError("train_eval: condition '" + name + "' has non-finite features");
    check_labels(y);
    const int k = *std::max_element(fold_of.begin(), fold_of.end()) + 1;

    ConditionResult r;
    r.name = name;
    for (int f = 0; f < k; ++f) {
        std::vector<std::size_t> train, test;
        for (std::size_t i = 0; i < y.size(); ++i) (fold_of[i] == f ? test : train).push_back(i);
        const auto ytr = take(y, train);
        const auto yte = take(y, test);
        if (std::count(yte.begin(), yte.end(), 1) == 0 || std::count(yte.begin(), yte.end(), 0) == 0) {
            throw StratificationError("fold " + std::to_string(f) + " holds a single class");
        }
        const Eigen::MatrixXd xtr = take_rows(x, train);
        const double lambda =
            choose_lambda(xtr, ytr, cfg, derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(f)));
        const auto p = fit_pipeline(xtr, ytr, lambda, cfg,
                                    derive_seed(cfg.seed, 2000 + static_cast<std::uint64_t>(f)));
        const Eigen::VectorXd s = p.scores(take_rows(x, test));
        const std::vector<double> scores(s.data(), s.data() + s.size());

        FoldResult fr;
        fr.lambda = lambda;
        fr.components = static_cast<int>(p.pca.components.cols());
        fr.auc = auc(scores, yte);
        fr.roc = roc_on_grid(roc_curve(scores, yte));
        for (std::size_t i = 0; i < yte.size(); ++i) {
            const bool high = scores[i] >= 0.0;  // probability >= 0.5
            if (yte[i] == 1) (high ? fr.confusion.tp : fr.confusion.fn)++;
            else (high ? fr.confusion.fp : fr.confusion.tn)++;
        }
        r.confusion += fr.confusion;
        r.folds.push_back(std::move(fr));
    }
    double sum = 0.0;
    for (const auto& f : r.folds) sum += f.auc;
    r.auc_mean = sum / k;
    double ss = 0.0;
    for (const auto& f : r.folds) ss += (f.auc - r.auc_mean) * (f.auc - r.auc_mean);
    r.auc_std = std::sqrt(ss / k);
    r.roc = r.folds.front().roc;
    for (std::size_t g = 0; g < r.roc.size(); ++g) {
        double t = 0.0;
        for (const auto& f : r.folds) t += f.roc[g].tpr;
        r.roc[g].tpr = t / k;
    }
    return r;
}

ConditionResult train_eval(const std::string& name, const Eigen::MatrixXd& x,
                           const std::vector<int>& y, const ClassifierConfig& cfg) {
    return train_eval(name, x, y, stratified_folds(y, cfg.folds, cfg.seed), cfg);
}

StudyResult run_study(const std::string& name, const std::vector<StudyCondition>& conditions,
                      const std::vector<int>& y, const ClassifierConfig& cfg) {
    if (conditions.empty()) throw InputError("study '" + name + "' has no conditions");
    for (const auto& c : conditions) {
        if (c.x.cols() == 0 || static_cast<std::size_t>(c.x.rows()) != y.size()) {
            throw InputError("study '" + name + "': features missing for condition '" + c.name + "'");
        }
    }
    const auto folds = stratified_folds(y, cfg.folds, cfg.seed);
    StudyResult study;
    study.name = name;
    study.ranked.resize(conditions.size());
    parallel_for(conditions.size(), [&](std::size_t i) {
        study.ranked[i] = train_eval(conditions[i].name, conditions[i].x, y, folds, cfg);
    });
    std::stable_sort(study.ranked.begin(), study.ranked.end(),
                     [](const ConditionResult& a, const ConditionResult& b) { return a.auc_mean > b.auc_mean; });
    return study;
}

}  // namespace convq
