#include "convq/aggregate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "convq/errors.hpp"

namespace convq {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::string to_string(Aggregator a) {
    switch (a) {
        case Aggregator::min: return "min";
        case Aggregator::max: return "max";
        case Aggregator::mean: return "mean";
        case Aggregator::mode: return "mode";
        case Aggregator::median: return "median";
        case Aggregator::variance: return "variance";
    }
    return "unknown";
}

Aggregator aggregator_from_string(const std::string& name) {
    for (auto a : all_aggregators()) {
        if (to_string(a) == name) return a;
    }
    throw InputError("unknown aggregator '" + name + "'");
}

const std::vector<Aggregator>& all_aggregators() {
    static const std::vector<Aggregator> all{Aggregator::min,  Aggregator::max,    Aggregator::mean,
                                             Aggregator::mode, Aggregator::median, Aggregator::variance};
    return all;
}

double mode_of(std::span<const double> values) {
    if (values.empty()) throw InputError("mode of an empty set");
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    if (*lo == *hi) return *lo;
    constexpr int kBins = 10;
    const double width = (*hi - *lo) / kBins;
    std::array<int, kBins> counts{};
    for (double v : values) {
        const int k = std::min(kBins - 1, static_cast<int>((v - *lo) / width));
        ++counts[static_cast<std::size_t>(k)];
    }
    const auto best = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    return *lo + (best + 0.5) * width;
}

double apply_aggregator(Aggregator a, std::span<const double> values) {
    std::vector<double> v;
    v.reserve(values.size());
    for (double x : values) {
        if (!std::isnan(x)) v.push_back(x);
    }
    if (v.empty()) return kNaN;
    // Sorting first makes every aggregate independent of input order.
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    switch (a) {
        case Aggregator::min: return v.front();
        case Aggregator::max: return v.back();
        case Aggregator::mean: return std::accumulate(v.begin(), v.end(), 0.0) / n;
        case Aggregator::mode: return mode_of(v);
        case Aggregator::median: {
            const std::size_t m = v.size() / 2;
            return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
        }
        case Aggregator::variance: {
            const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
            double ss = 0.0;
            for (double x : v) ss += (x - mean) * (x - mean);
            return ss / n;
        }
    }
    return kNaN;
}

std::string column_name(const std::string& feature, const std::string& channel, Aggregator a) {
    return feature + "__" + channel + "__" + to_string(a);
}

FeatureVector aggregate(const std::vector<PairFeatureSet>& pairs,
                        const std::vector<ParticipantId>& members, const Scope& scope,
                        const std::vector<Aggregator>& aggregators) {
    if (pairs.empty()) throw InputError("aggregate: empty pair set");
    if (scope.kind == ScopeKind::individual &&
        std::find(members.begin(), members.end(), scope.participant_id) == members.end()) {
        throw InputError("aggregate: " + scope.participant_id + " is not a member of the slice");
    }

    std::set<std::string> channels;
    std::map<std::pair<std::string, std::pair<ParticipantId, ParticipantId>>, const PairFeatureSet*> index;
    for (const auto& p : pairs) {
        channels.insert(p.channel);
        auto key = std::minmax(p.first, p.second);
        index[{p.channel, {key.first, key.second}}] = &p;
    }

    std::vector<std::string> missing;
    FeatureVector out{scope, {}};
    for (const auto& channel : channels) {
        std::vector<PairFeatureSet> pool;
        for (std::size_t i = 0; i < members.size(); ++i) {
            for (std::size_t j = i + 1; j < members.size(); ++j) {
                const bool involves = scope.kind == ScopeKind::group ||
                                      members[i] == scope.participant_id ||
                                      members[j] == scope.participant_id;
                if (!involves) continue;
                auto key = std::minmax(members[i], members[j]);
                auto it = index.find({channel, {key.first, key.second}});
                if (it == index.end()) {
                    missing.push_back(channel + ":" + members[i] + "-" + members[j]);
                    continue;
                }
                const auto& p = *it->second;
                if (scope.kind == ScopeKind::group) {
                    pool.push_back(p);
                    pool.push_back(reoriented(p));
                } else {
                    pool.push_back(p.first == scope.participant_id ? p : reoriented(p));
                }
            }
        }
        if (pool.empty()) continue;
        for (const auto& [feature, unused] : pool.front().values) {
            std::vector<double> values;
            values.reserve(pool.size());
            for (const auto& p : pool) {
                auto it = p.values.find(feature);
                values.push_back(it == p.values.end() ? kNaN : it->second);
            }
            for (auto a : aggregators) {
                out.entries[column_name(feature, channel, a)] = apply_aggregator(a, values);
            }
        }
    }
    if (!missing.empty()) {
        std::string msg = "aggregate: missing pairs";
        for (const auto& m : missing) msg += " " + m;
        throw InputError(msg);
    }
    return out;
}

void add_turn_features(FeatureVector& vec, const std::vector<MemberTurnFeatures>& members,
                       const std::vector<Aggregator>& aggregators) {
    if (members.empty()) throw InputError("turn features: no members");
    for (const auto& name : turn_feature_names()) {
        std::vector<double> values;
        for (const auto& m : members) {
            if (vec.scope.kind == ScopeKind::individual && m.participant_id != vec.scope.participant_id) {
                continue;
            }
            values.push_back(turn_feature_value(m, name));
        }
        if (values.empty()) {
            throw InputError("turn features: no entry for " + vec.scope.participant_id);
        }
        for (auto a : aggregators) {
            vec.entries[column_name(name, "speaking", a)] = apply_aggregator(a, values);
        }
    }
}

}  // namespace convq
