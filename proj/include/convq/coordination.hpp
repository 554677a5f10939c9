#pragma once

// Pairwise bodily-coordination measures: synchrony (correlation, lagged
// correlation, mutual information, mimicry), causality (coherence, Granger
// F statistic) and convergence (symmetric, asymmetric, global).
//
// All functions are pure. Lags and window lengths are given in samples.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "convq/core_data.hpp"

namespace convq {

/// Pearson correlation of two equal-length series (n >= 3). Throws
/// UndefinedError when either series is constant.
double pearson(std::span<const double> a, std::span<const double> b);

struct LaggedCorrelation {
    double min = 0.0;
    double max = 0.0;
    int argmin = 0;
    int argmax = 0;
};

/// Correlation of a_t with b_{t+lag} over the overlapping segment for every
/// lag in [-max_lag, max_lag]. A positive argmax means b trails a. Ties go
/// to the smaller |lag|, then to the positive lag.
LaggedCorrelation lagged_correlation(std::span<const double> a, std::span<const double> b,
                                     int max_lag);

/// Summary of a per-window statistic. Variance is the population variance.
struct WindowStats {
    double min = 0.0;
    double max = 0.0;
    double mean = 0.0;
    double variance = 0.0;
};

WindowStats summarize(std::span<const double> values);

/// Plug-in mutual information (nats) of one window with bins x bins
/// equal-width cells spanning each series' own range.
double histogram_mutual_information(std::span<const double> a, std::span<const double> b,
                                    int bins);

/// Mutual information over consecutive non-overlapping windows (>= 2).
WindowStats mutual_information(std::span<const double> a, std::span<const double> b, int bins,
                               std::size_t window);

struct Mimicry {
    WindowStats lag;   // a (follower) imitates b one window later
    WindowStats lead;  // b imitates a one window later
};

/// Window-w score: corr(follower over window w+1, model over window w).
/// Windows with a constant segment are skipped.
Mimicry mimicry(std::span<const double> follower, std::span<const double> model,
                std::size_t window);

/// Welch magnitude-squared coherence (Hann taper, 50% overlap, mean
/// removed per segment) for bins 1..seg_len/2. Bins where either signal has
/// no power are NaN.
std::vector<double> coherence_spectrum(std::span<const double> a, std::span<const double> b,
                                       std::size_t seg_len);

struct CoherenceRange {
    double min = 0.0;
    double max = 0.0;
};

CoherenceRange coherence(std::span<const double> a, std::span<const double> b,
                         std::size_t seg_len);

/// F statistic for "cause Granger-causes effect" comparing AR(order) fits of
/// the effect with and without lags of the cause. Denominator degrees of
/// freedom are (n - order) - 2*order - 1.
double granger(std::span<const double> cause, std::span<const double> effect, int order);

/// corr(t, |a_t - b_t|); negative when the pair converges.
double symmetric_convergence(std::span<const double> a, std::span<const double> b);

/// corr(t, |self_t - c|) with c the partner's first-half mean.
double convergence_toward(std::span<const double> self, std::span<const double> partner);

struct AsymmetricConvergence {
    double lag = 0.0;   // self approaches partner's baseline
    double lead = 0.0;  // partner approaches self's baseline
};

AsymmetricConvergence asymmetric_convergence(std::span<const double> self,
                                             std::span<const double> partner);

/// Mean |a - b| over the first half minus the same over the second half.
double global_convergence(std::span<const double> a, std::span<const double> b);

// ---------------------------------------------------------------------------
// Pair feature bank

enum class FeatureFamily { turn_taking, synchrony, causality, convergence };

std::string to_string(FeatureFamily f);

/// Short set tags used on the command line: tt, sync, caus, conv.
FeatureFamily family_from_tag(const std::string& tag);
std::string tag(FeatureFamily f);

struct CoordinationConfig {
    double max_lag_s = 3.0;
    int mi_bins = 8;
    double mi_window_s = 10.0;
    double mimicry_window_s = 5.0;
    int granger_order = 2;
    double coherence_segment_s = 4.0;
};

/// Column order of every pair feature; each belongs to one family.
const std::vector<std::string>& pair_feature_names();
FeatureFamily pair_feature_family(const std::string& name);

struct PairFeatureSet {
    ParticipantId first;
    ParticipantId second;
    std::string channel;
    std::map<std::string, double> values;  // NaN where the measure is undefined
};

/// All pair features of the requested families for one channel of a pair.
/// Directional features are oriented with `first` as self.
PairFeatureSet compute_pair_features(const ParticipantId& first, const ParticipantId& second,
                                     const std::string& channel, std::span<const double> a,
                                     std::span<const double> b, double rate_hz,
                                     const CoordinationConfig& cfg,
                                     const std::vector<FeatureFamily>& families);

/// The same feature set seen from the other member of the pair.
PairFeatureSet reoriented(const PairFeatureSet& p);

}  // namespace convq
