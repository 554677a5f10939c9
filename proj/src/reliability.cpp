#include "convq/reliability.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "convq/errors.hpp"

namespace convq {

double pcq_score(std::span<const int> ratings, const std::vector<bool>& negative) {
    if (ratings.size() != negative.size()) {
        throw InputError("pcq_score: expected " + std::to_string(negative.size()) +
                         " item ratings, got " + std::to_string(ratings.size()));
    }
    if (ratings.empty()) throw InputError("pcq_score: no items");
    double sum = 0.0;
    for (std::size_t k = 0; k < ratings.size(); ++k) {
        const int v = ratings[k];
        if (v < 1 || v > 5) throw DomainError("pcq_score: rating outside 1..5");
        sum += negative[k] ? 6 - v : v;
    }
    return sum / static_cast<double>(ratings.size());
}

double qw_kappa(std::span<const int> r1, std::span<const int> r2, int categories) {
    if (r1.size() != r2.size()) throw InputError("qw_kappa: rating vectors differ in length");
    if (r1.size() < 2) throw InputError("qw_kappa: need at least 2 ratings");
    if (categories < 2) throw InputError("qw_kappa: need at least 2 categories");
    const auto k = static_cast<std::size_t>(categories);
    std::vector<double> observed(k * k, 0.0), rows(k, 0.0), cols(k, 0.0);
    for (std::size_t i = 0; i < r1.size(); ++i) {
        if (r1[i] < 1 || r1[i] > categories || r2[i] < 1 || r2[i] > categories) {
            throw DomainError("qw_kappa: rating outside 1.." + std::to_string(categories));
        }
        const auto a = static_cast<std::size_t>(r1[i] - 1), b = static_cast<std::size_t>(r2[i] - 1);
        observed[a * k + b] += 1.0;
        rows[a] += 1.0;
        cols[b] += 1.0;
    }
    const double n = static_cast<double>(r1.size());
    const double scale = static_cast<double>((categories - 1) * (categories - 1));
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            const double d = static_cast<double>(i) - static_cast<double>(j);
            const double w = d * d / scale;
            num += w * observed[i * k + j];
            den += w * rows[i] * cols[j] / n;
        }
    }
    if (!(den > 0)) throw UndefinedError("qw_kappa: expected disagreement is zero");
    return 1.0 - num / den;
}

double mean_pairwise_kappa(const std::vector<std::vector<int>>& raters, int categories) {
    double sum = 0.0;
    int count = 0;
    for (std::size_t a = 0; a < raters.size(); ++a) {
        for (std::size_t b = a + 1; b < raters.size(); ++b) {
            try {
                sum += qw_kappa(raters[a], raters[b], categories);
                ++count;
            } catch (const UndefinedError&) {
                if (raters[a] == raters[b]) {
                    sum += 1.0;
                    ++count;
                }
            }
        }
    }
    return count ? sum / count : std::numeric_limits<double>::quiet_NaN();
}

std::vector<double> normalize_annotator(const std::vector<RaterScore>& scores) {
    std::map<std::string, std::pair<double, int>> totals;
    for (const auto& s : scores) {
        auto& t = totals[s.rater_id];
        t.first += s.score;
        t.second += 1;
    }
    std::vector<double> out;
    out.reserve(scores.size());
    for (const auto& s : scores) {
        const auto& t = totals[s.rater_id];
        out.push_back(s.score - t.first / t.second);
    }
    return out;
}

KappaFilter filter_by_kappa(const std::vector<KappaSample>& samples, double threshold) {
    KappaFilter f;
    for (const auto& s : samples) {
        (s.kappa >= threshold ? f.kept : f.dropped).push_back(s.id);
    }
    return f;
}

PcqLabel binarize(double score, double threshold) {
    return score > threshold ? PcqLabel::high : PcqLabel::low;
}

ValidityReport construct_validity_pca(const Eigen::MatrixXd& items,
                                      const std::vector<bool>& negative) {
    const auto n = items.rows();
    const auto k = items.cols();
    if (n < 2 || k < 2) throw InputError("construct validity: need at least 2 samples and 2 items");
    if (static_cast<Eigen::Index>(negative.size()) != k) {
        throw InputError("construct validity: orientation flags do not match item count");
    }
    Eigen::MatrixXd z = items.rowwise() - items.colwise().mean();
    for (Eigen::Index c = 0; c < k; ++c) {
        const double sd = std::sqrt(z.col(c).squaredNorm() / static_cast<double>(n - 1));
        if (!(sd > 0)) {
            throw UndefinedError("construct validity: item " + std::to_string(c + 1) + " is constant");
        }
        z.col(c) /= sd;
    }
    const Eigen::MatrixXd corr = (z.transpose() * z) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(corr);
    const Eigen::VectorXd values = solver.eigenvalues();  // ascending
    const Eigen::MatrixXd vectors = solver.eigenvectors();

    ValidityReport r;
    const double top = values(k - 1);
    std::vector<Eigen::Index> kept;
    for (Eigen::Index i = k - 1; i >= 0; --i) {
        if (values(i) > 1e-10 * top) kept.push_back(i);
    }
    if (static_cast<Eigen::Index>(kept.size()) < k) {
        r.warnings.push_back("item correlation matrix has rank " + std::to_string(kept.size()) +
                             " < " + std::to_string(k) + "; trailing components omitted");
    }
    double total = 0.0;
    for (auto i : kept) total += values(i);
    double cum = 0.0;
    for (auto i : kept) {
        r.eigenvalues.push_back(values(i));
        r.explained.push_back(values(i) / total);
        cum += values(i) / total;
        r.cumulative.push_back(cum);
    }

    auto loadings = [&](std::size_t rank) {
        std::vector<double> l(static_cast<std::size_t>(k), 0.0);
        if (rank >= kept.size()) return l;
        const auto idx = kept[rank];
        const double s = std::sqrt(values(idx));
        for (Eigen::Index c = 0; c < k; ++c) l[static_cast<std::size_t>(c)] = vectors(c, idx) * s;
        return l;
    };
    r.pc1_loadings = loadings(0);
    r.pc2_loadings = loadings(1);

    int pos_up = 0, pos_down = 0;
    double pos_sum = 0.0;
    for (std::size_t c = 0; c < negative.size(); ++c) {
        if (negative[c]) continue;
        pos_sum += r.pc1_loadings[c];
        if (r.pc1_loadings[c] > 0) ++pos_up;
        if (r.pc1_loadings[c] < 0) ++pos_down;
    }
    if (pos_down > pos_up || (pos_down == pos_up && pos_sum < 0)) {
        for (double& l : r.pc1_loadings) l = -l;
    }
    const auto big = std::max_element(r.pc2_loadings.begin(), r.pc2_loadings.end(),
                                      [](double a, double b) { return std::abs(a) < std::abs(b); });
    if (big != r.pc2_loadings.end() && *big < 0) {
        for (double& l : r.pc2_loadings) l = -l;
    }
    return r;
}

std::size_t ReliabilityReport::kept_count() const {
    return static_cast<std::size_t>(
        std::count_if(samples.begin(), samples.end(), [](const auto& s) { return s.kept; }));
}

ReliabilityReport assess_reliability(const AnnotationSet& set, double threshold) {
    const auto negative = set.negative_flags();
    ReliabilityReport report;
    report.level = set.level;
    report.threshold = threshold;

    std::vector<RaterScore> scores;
    scores.reserve(set.ratings.size());
    for (const auto& row : set.ratings) scores.push_back({row.rater_id, pcq_score(row.values, negative)});
    const auto normalized = normalize_annotator(scores);

    // Group rows by sample, preserving first-seen order.
    std::vector<std::pair<std::string, std::string>> order;
    std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> rows;
    for (std::size_t i = 0; i < set.ratings.size(); ++i) {
        const auto key = std::pair{set.ratings[i].slice_id, set.ratings[i].participant_id};
        auto [it, inserted] = rows.try_emplace(key);
        if (inserted) order.push_back(key);
        it->second.push_back(i);
    }
    for (const auto& key : order) {
        const auto& idx = rows[key];
        SampleReliability s;
        s.slice_id = key.first;
        s.participant_id = key.second;
        s.n_raters = static_cast<int>(idx.size());
        std::vector<std::vector<int>> vectors;
        for (auto i : idx) {
            vectors.push_back(set.ratings[i].values);
            s.mean_pcq += scores[i].score;
            s.normalized_pcq += normalized[i];
        }
        s.mean_pcq /= static_cast<double>(idx.size());
        s.normalized_pcq /= static_cast<double>(idx.size());
        s.mean_kappa = mean_pairwise_kappa(vectors);
        s.kept = s.mean_kappa >= threshold;
        report.samples.push_back(std::move(s));
    }
    return report;
}

Eigen::MatrixXd item_matrix(const AnnotationSet& set) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(set.ratings.size()),
                      static_cast<Eigen::Index>(set.items.size()));
    for (std::size_t r = 0; r < set.ratings.size(); ++r) {
        const auto& v = set.ratings[r].values;
        if (v.size() != set.items.size()) throw InputError("item matrix: incomplete rating row");
        for (std::size_t c = 0; c < v.size(); ++c) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v[c];
        }
    }
    return m;
}

}  // namespace convq
