#pragma once

// Annotation processing: PCQ scoring, quadratic weighted kappa, annotator
// normalization, kappa filtering, construct-validity PCA and binarization.

#include <Eigen/Core>

#include <span>
#include <string>
#include <vector>

#include "convq/core_data.hpp"

namespace convq {

/// Mean item rating after reverse-coding negative items as 6 - x.
double pcq_score(std::span<const int> ratings, const std::vector<bool>& negative);

/// Cohen's kappa with quadratic weights (i - j)^2 / (K - 1)^2 over K
/// ordinal categories 1..K. Throws UndefinedError when the expected
/// disagreement is zero.
double qw_kappa(std::span<const int> r1, std::span<const int> r2, int categories = 5);

/// Mean kappa over all rater pairs. A pair whose kappa is undefined counts
/// as 1 when the two vectors are identical and is skipped otherwise; NaN
/// when no pair is usable.
double mean_pairwise_kappa(const std::vector<std::vector<int>>& raters, int categories = 5);

struct RaterScore {
    std::string rater_id;
    double score = 0.0;
};

/// Subtracts each rater's mean from that rater's scores (order preserved).
std::vector<double> normalize_annotator(const std::vector<RaterScore>& scores);

struct KappaSample {
    std::string id;
    double kappa = 0.0;
};

struct KappaFilter {
    std::vector<std::string> kept;
    std::vector<std::string> dropped;
};

/// Keeps samples with kappa >= threshold; NaN kappa is dropped.
KappaFilter filter_by_kappa(const std::vector<KappaSample>& samples, double threshold = 0.2);

enum class PcqLabel { low, high };

/// high iff score > threshold.
PcqLabel binarize(double score, double threshold = 3.0);

struct ValidityReport {
    std::vector<double> eigenvalues;  // descending, rank-limited
    std::vector<double> explained;
    std::vector<double> cumulative;
    std::vector<double> pc1_loadings;  // one per item
    std::vector<double> pc2_loadings;  // zeros when rank < 2
    std::vector<std::string> warnings;
};

/// Eigen-decomposition of the item correlation matrix (rows = rated
/// samples, columns = items). PC1 is oriented so that most positively
/// oriented items load positively; PC2 so its largest loading is positive.
ValidityReport construct_validity_pca(const Eigen::MatrixXd& items,
                                      const std::vector<bool>& negative);

struct SampleReliability {
    std::string slice_id;
    ParticipantId participant_id;  // empty at group level
    int n_raters = 0;
    double mean_kappa = 0.0;
    double mean_pcq = 0.0;        // raw 1..5 scale, mean over raters
    double normalized_pcq = 0.0;  // mean over raters of rater-centred scores
    bool kept = false;
};

struct ReliabilityReport {
    AnnotationLevel level = AnnotationLevel::group;
    double threshold = 0.2;
    std::vector<SampleReliability> samples;

    std::size_t kept_count() const;
};

/// Per-sample kappa, raw and normalized PCQ, and the keep flag.
ReliabilityReport assess_reliability(const AnnotationSet& set, double threshold = 0.2);

/// Item matrix of all rating rows (rows in file order).
Eigen::MatrixXd item_matrix(const AnnotationSet& set);

}  // namespace convq
