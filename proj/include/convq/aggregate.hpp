#pragma once

// Reduction of pairwise and per-member features to group-level and
// individual-level feature vectors.

#include <map>
#include <span>
#include <string>
#include <vector>

#include "convq/coordination.hpp"
#include "convq/turntaking.hpp"

namespace convq {

enum class Aggregator { min, max, mean, mode, median, variance };

std::string to_string(Aggregator a);
Aggregator aggregator_from_string(const std::string& name);
const std::vector<Aggregator>& all_aggregators();

/// Midpoint of the densest of 10 equal-width bins over the value range
/// (lowest bin wins ties); a single distinct value is returned as is.
double mode_of(std::span<const double> values);

/// NaN entries are ignored; returns NaN when no finite value remains.
/// Variance is the population variance.
double apply_aggregator(Aggregator a, std::span<const double> values);

enum class ScopeKind { group, individual };

struct Scope {
    ScopeKind kind = ScopeKind::group;
    std::string slice_id;
    ParticipantId participant_id;  // individual scope only
};

/// "feature__channel__aggregator"
std::string column_name(const std::string& feature, const std::string& channel, Aggregator a);

struct FeatureVector {
    Scope scope;
    std::map<std::string, double> entries;
};

/// Aggregates pair features of one slice. Each PairFeatureSet holds one
/// unordered pair for one channel. Group scope pools every pair in both
/// orientations; individual scope pools the pairs containing the
/// participant, oriented with the participant as self. Throws InputError
/// for an empty set or when a pair of the member list is missing.
FeatureVector aggregate(const std::vector<PairFeatureSet>& pairs,
                        const std::vector<ParticipantId>& members, const Scope& scope,
                        const std::vector<Aggregator>& aggregators);

/// Adds per-member turn features under channel "speaking". Group scope
/// aggregates across members; individual scope uses the member's value.
void add_turn_features(FeatureVector& vec, const std::vector<MemberTurnFeatures>& members,
                       const std::vector<Aggregator>& aggregators);

}  // namespace convq
