#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "convq/aggregate.hpp"
#include "convq/coordination.hpp"
#include "convq/turntaking.hpp"
#include "support/oracles.hpp"
#include "support/property.hpp"

using namespace convq;

namespace {

using Series = std::vector<double>;
using Status = std::vector<std::uint8_t>;

// AR(1) trace with a random mean and scale, so the pair is never constant.
Series smooth_series(std::mt19937_64& rng, std::size_t n) {
    const auto noise = oracle::normal_series(n, rng);
    const double phi = prop::uniform(rng, 0.0, 0.95), scale = prop::uniform(rng, 0.2, 5.0), shift = prop::uniform(rng, -3, 3);
    Series x(n);
    double s = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        s = phi * s + noise[t];
        x[t] = shift + scale * s;
    }
    return x;
}

// b trails a by `lag` samples plus independent noise.
std::pair<Series, Series> coupled(std::mt19937_64& rng, std::size_t n, int lag, double noise) {
    const auto base = smooth_series(rng, n + static_cast<std::size_t>(lag));
    const auto e = oracle::normal_series(n, rng);
    Series a(base.begin() + lag, base.end()), b(n);
    for (std::size_t t = 0; t < n; ++t) b[t] = base[t] + noise * e[t];
    return {a, b};
}

Status random_status(std::mt19937_64& rng, std::size_t n, double p_flip) {
    std::bernoulli_distribution flip(p_flip);
    Status s(n);
    std::uint8_t cur = static_cast<std::uint8_t>(prop::integer(rng, 0, 1));
    for (auto& x : s) {
        if (flip(rng)) cur = static_cast<std::uint8_t>(1 - cur);
        x = cur;
    }
    return s;
}

std::vector<std::span<const std::uint8_t>> spans(const std::vector<Status>& rows) { return {rows.begin(), rows.end()}; }

bool near(double a, double b, double tol) {
    if (std::isnan(a) || std::isnan(b)) return std::isnan(a) && std::isnan(b);
    return std::abs(a - b) <= tol * (1.0 + std::max(std::abs(a), std::abs(b)));
}

}  // namespace

TEST_CASE("coordination measures stay in range") {
    prop::for_cases(11, [](std::mt19937_64& rng, int) {
        const auto n = static_cast<std::size_t>(prop::integer(rng, 200, 600));
        const auto [a, b] = coupled(rng, n, prop::integer(rng, 0, 8), prop::uniform(rng, 0.1, 3.0));
        const int max_lag = prop::integer(rng, 1, 20);
        const double r = pearson(a, b);
        CHECK(std::abs(r) <= 1.0 + 1e-12);
        const auto lc = lagged_correlation(a, b, max_lag);
        CHECK(lc.min >= -1.0 - 1e-12);
        CHECK(lc.max <= 1.0 + 1e-12);
        CHECK(std::abs(lc.argmax) <= max_lag);
        CHECK(std::abs(lc.argmin) <= max_lag);
        const auto mi = mutual_information(a, b, prop::integer(rng, 2, 10), n / 4);
        CHECK(mi.min >= -1e-12);
        const auto coh = coherence_spectrum(a, b, static_cast<std::size_t>(prop::integer(rng, 8, 64)));
        for (double c : coh) {
            if (!std::isnan(c)) CHECK((c >= -1e-12 && c <= 1.0 + 1e-12));
        }
        CHECK(granger(a, b, prop::integer(rng, 1, 4)) >= 0.0);
        CHECK(granger(b, a, prop::integer(rng, 1, 4)) >= 0.0);
    });
}

TEST_CASE("symmetric measures ignore the order of the pair") {
    prop::for_cases(12, [](std::mt19937_64& rng, int) {
        const auto n = static_cast<std::size_t>(prop::integer(rng, 100, 500));
        const auto [a, b] = coupled(rng, n, prop::integer(rng, 0, 5), prop::uniform(rng, 0.1, 3.0));
        CHECK(near(pearson(a, b), pearson(b, a), 1e-12));
        const int bins = prop::integer(rng, 2, 10);
        CHECK(near(histogram_mutual_information(a, b, bins), histogram_mutual_information(b, a, bins), 1e-12));
        const auto seg = static_cast<std::size_t>(prop::integer(rng, 8, std::min(64, static_cast<int>(n) / 2)));
        const auto ab = coherence_spectrum(a, b, seg), ba = coherence_spectrum(b, a, seg);
        REQUIRE(ab.size() == ba.size());
        for (std::size_t k = 0; k < ab.size(); ++k) CHECK(near(ab[k], ba[k], 1e-10));
        CHECK(near(symmetric_convergence(a, b), symmetric_convergence(b, a), 1e-12));
        CHECK(near(global_convergence(a, b), global_convergence(b, a), 1e-12));
    });
}

TEST_CASE("lag of the maximum flips sign when the pair is swapped") {
    int unique = 0;
    prop::for_cases(13, [&](std::mt19937_64& rng, int) {
        const auto n = static_cast<std::size_t>(prop::integer(rng, 100, 400));
        const auto [a, b] = coupled(rng, n, prop::integer(rng, 0, 8), prop::uniform(rng, 0.1, 2.0));
        const int max_lag = prop::integer(rng, 8, 15);
        const auto profile = oracle::lag_profile(a, b, max_lag);
        std::vector<double> values;
        for (const auto& [lag, r] : profile) values.push_back(r);
        std::sort(values.rbegin(), values.rend());
        if (values[0] - values[1] < 1e-9) return;
        ++unique;
        CHECK(lagged_correlation(a, b, max_lag).argmax == -lagged_correlation(b, a, max_lag).argmax);
    });
    CHECK(unique > prop::kCases / 2);
}

TEST_CASE("positive rescaling leaves correlation, coherence and Granger unchanged") {
    prop::for_cases(14, [](std::mt19937_64& rng, int) {
        const auto n = static_cast<std::size_t>(prop::integer(rng, 150, 500));
        const auto [a, b] = coupled(rng, n, prop::integer(rng, 0, 5), prop::uniform(rng, 0.1, 2.0));
        const double ka = std::exp(prop::uniform(rng, -4, 4)), kb = std::exp(prop::uniform(rng, -4, 4));
        Series sa(a), sb(b);
        for (auto& x : sa) x *= ka;
        for (auto& x : sb) x *= kb;
        CHECK(near(pearson(sa, sb), pearson(a, b), 1e-10));
        const auto l1 = lagged_correlation(a, b, 10), l2 = lagged_correlation(sa, sb, 10);
        CHECK(near(l1.max, l2.max, 1e-10));
        CHECK(near(l1.min, l2.min, 1e-10));
        const auto c1 = coherence(a, b, 32), c2 = coherence(sa, sb, 32);
        CHECK(near(c1.min, c2.min, 1e-9));
        CHECK(near(c1.max, c2.max, 1e-9));
        const int order = prop::integer(rng, 1, 3);
        CHECK(near(granger(a, b, order), granger(sa, sb, order), 1e-7));
        CHECK(near(granger(b, a, order), granger(sb, sa, order), 1e-7));
    });
}

TEST_CASE("relabelling members permutes their turn features") {
    prop::for_cases(21, [](std::mt19937_64& rng, int) {
        const auto m = static_cast<std::size_t>(prop::integer(rng, 2, 6));
        const auto n = static_cast<std::size_t>(prop::integer(rng, 100, 1500));
        std::vector<Status> rows;
        std::vector<ParticipantId> ids;
        for (std::size_t i = 0; i < m; ++i) {
            rows.push_back(random_status(rng, n, prop::uniform(rng, 0.005, 0.1)));
            ids.push_back("p" + std::to_string(i));
        }
        std::vector<std::size_t> perm(m);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<Status> prow;
        std::vector<ParticipantId> pids;
        for (std::size_t k : perm) {
            prow.push_back(rows[k]);
            pids.push_back(ids[k]);
        }
        const auto f = compute_turn_features(ids, spans(rows), 20.0);
        const auto g = compute_turn_features(pids, spans(prow), 20.0);
        for (std::size_t k = 0; k < m; ++k) {
            const auto& x = f[perm[k]];
            const auto& y = g[k];
            CHECK(y.participant_id == x.participant_id);
            for (const auto& name : turn_feature_names()) {
                CHECK(near(turn_feature_value(y, name), turn_feature_value(x, name), 1e-12));
            }
        }
    });
}

TEST_CASE("speaking shares conserve the total speech") {
    prop::for_cases(22, [](std::mt19937_64& rng, int) {
        const auto m = static_cast<std::size_t>(prop::integer(rng, 2, 6));
        const auto n = static_cast<std::size_t>(prop::integer(rng, 20, 3000));
        std::vector<Status> rows;
        std::size_t total = 0;
        for (std::size_t i = 0; i < m; ++i) {
            rows.push_back(random_status(rng, n, prop::uniform(rng, 0.005, 0.3)));
            total += static_cast<std::size_t>(std::count(rows.back().begin(), rows.back().end(), 1));
        }
        if (total == 0) rows[0][0] = 1, total = 1;
        const auto e = equality(spans(rows));
        double sum = 0.0;
        for (double d : e.d_speak) sum += d * static_cast<double>(n);
        CHECK(std::abs(sum - static_cast<double>(total)) < 1e-9 * static_cast<double>(n));
    });
}

TEST_CASE("filling short silences first yields the same turns") {
    prop::for_cases(23, [](std::mt19937_64& rng, int) {
        const auto n = static_cast<std::size_t>(prop::integer(rng, 50, 3000));
        const auto s = random_status(rng, n, prop::uniform(rng, 0.01, 0.3));
        const auto gap = static_cast<std::size_t>(gap_samples(TurnConfig{}, 20.0));
        Status filled = s;
        // Silent runs bounded by speech on both sides and no longer than the gap.
        std::size_t t = 0;
        while (t < n) {
            if (s[t]) {
                ++t;
                continue;
            }
            std::size_t u = t;
            while (u < n && !s[u]) ++u;
            if (t > 0 && u < n && u - t <= gap) std::fill(filled.begin() + static_cast<std::ptrdiff_t>(t), filled.begin() + static_cast<std::ptrdiff_t>(u), 1);
            t = u;
        }
        CHECK(segment_turns("a", filled, 20.0).turns == segment_turns("a", s, 20.0).turns);
    });
}

TEST_CASE("interruptions of a member never exceed the interrupter's turns") {
    prop::for_cases(24, [](std::mt19937_64& rng, int) {
        const auto m = static_cast<std::size_t>(prop::integer(rng, 2, 5));
        const auto n = static_cast<std::size_t>(prop::integer(rng, 100, 2000));
        std::vector<Status> rows;
        std::vector<TurnSequence> turns;
        for (std::size_t i = 0; i < m; ++i) {
            rows.push_back(random_status(rng, n, prop::uniform(rng, 0.005, 0.2)));
            turns.push_back(segment_turns("", rows.back(), 20.0));
        }
        const auto sync = synchronization(spans(rows), turns);
        for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t i = 0; i < m; ++i) {
                CHECK(sync.success_by[j][i] + sync.unsuccess_by[j][i] <= static_cast<int>(turns[j].turns.size()));
            }
        }
    });
}

namespace {

std::vector<PairFeatureSet> random_pairs(std::mt19937_64& rng, const std::vector<ParticipantId>& members) {
    std::vector<PairFeatureSet> pairs;
    for (std::size_t i = 0; i < members.size(); ++i) {
        for (std::size_t j = i + 1; j < members.size(); ++j) {
            PairFeatureSet p{members[i], members[j], "abs_x", {}};
            for (const auto& name : pair_feature_names()) {
                p.values[name] = name.find("arg") != std::string::npos ? prop::integer(rng, -20, 20) : prop::uniform(rng, -1, 1);
            }
            pairs.push_back(std::move(p));
        }
    }
    return pairs;
}

void check_same(const FeatureVector& a, const FeatureVector& b) {
    REQUIRE(a.entries.size() == b.entries.size());
    for (const auto& [key, value] : a.entries) {
        CAPTURE(key);
        CHECK(near(b.entries.at(key), value, 1e-12));
    }
}

}  // namespace

TEST_CASE("aggregates ignore the order and orientation of pairs") {
    prop::for_cases(31, [](std::mt19937_64& rng, int) {
        std::vector<ParticipantId> members;
        const int m = prop::integer(rng, 2, 5);
        for (int i = 0; i < m; ++i) members.push_back("p" + std::to_string(i));
        const auto pairs = random_pairs(rng, members);
        auto shuffled = pairs;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        for (auto& p : shuffled) {
            if (prop::integer(rng, 0, 1)) p = reoriented(p);
        }
        check_same(aggregate(pairs, members, {ScopeKind::group, "s", ""}, all_aggregators()),
                   aggregate(shuffled, members, {ScopeKind::group, "s", ""}, all_aggregators()));
        const auto& who = members[static_cast<std::size_t>(prop::integer(rng, 0, m - 1))];
        check_same(aggregate(pairs, members, {ScopeKind::individual, "s", who}, all_aggregators()),
                   aggregate(shuffled, members, {ScopeKind::individual, "s", who}, all_aggregators()));
    });
}

TEST_CASE("aggregators are bounded and unchanged by duplication") {
    prop::for_cases(32, [](std::mt19937_64& rng, int) {
        std::vector<double> v(static_cast<std::size_t>(prop::integer(rng, 1, 40)));
        // Coarse values so ties and repeated bins occur.
        const bool coarse = prop::integer(rng, 0, 1) == 1;
        for (auto& x : v) x = coarse ? prop::integer(rng, -3, 3) : prop::uniform(rng, -10, 10);
        const double lo = apply_aggregator(Aggregator::min, v), hi = apply_aggregator(Aggregator::max, v);
        const double mean = apply_aggregator(Aggregator::mean, v);
        CHECK(mean >= lo - 1e-12);
        CHECK(mean <= hi + 1e-12);
        CHECK(apply_aggregator(Aggregator::variance, v) >= 0.0);
        auto doubled = v;
        doubled.insert(doubled.end(), v.begin(), v.end());
        std::shuffle(doubled.begin(), doubled.end(), rng);
        for (auto a : {Aggregator::min, Aggregator::max, Aggregator::mean, Aggregator::median, Aggregator::mode}) {
            CAPTURE(to_string(a));
            CHECK(near(apply_aggregator(a, doubled), apply_aggregator(a, v), 1e-12));
        }
    });
}
