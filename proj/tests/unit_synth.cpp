#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "convq/coordination.hpp"
#include "convq/errors.hpp"
#include "convq/reliability.hpp"
#include "convq/synth.hpp"
#include "convq/turntaking.hpp"
#include "support/fixtures.hpp"

using namespace convq;

namespace {

std::vector<std::span<const std::uint8_t>> spans(const std::vector<std::vector<std::uint8_t>>& rows) {
    return {rows.begin(), rows.end()};
}

std::vector<TurnSequence> segment_all(const std::vector<std::vector<std::uint8_t>>& rows) {
    std::vector<TurnSequence> out;
    for (const auto& r : rows) out.push_back(segment_turns("", r, 20.0));
    return out;
}

int total(const std::vector<int>& v) {
    int s = 0;
    for (int x : v) s += x;
    return s;
}

// Mean pairwise kappa per rated sample, grouped by (slice, participant).
std::vector<double> sample_kappas(const AnnotationSet& set) {
    std::vector<double> out;
    for (const auto& s : assess_reliability(set).samples) out.push_back(s.mean_kappa);
    return out;
}

}  // namespace

TEST_CASE("coupled pair recovers the planted lag") {
    const auto [a, b] = gen_coupled_pair(4, 1.0, 0.0, 1000, 61);
    const auto r = lagged_correlation(a.axes[0], b.axes[0], 10);
    CHECK(r.argmax == 4);
    CHECK(r.max == doctest::Approx(1.0));
    CHECK_THROWS_AS(gen_coupled_pair(20, 0.5, 1.0, 100, 1), InputError);
    CHECK_THROWS_AS(gen_coupled_pair(1, 1.5, 1.0, 100, 1), InputError);
}

TEST_CASE("uncoupled pair is uncorrelated") {
    const auto [a, b] = gen_coupled_pair(3, 0.0, 1.0, 2000, 62);
    CHECK(std::abs(pearson(a.axes[1], b.axes[1])) < 0.2);
}

TEST_CASE("coupled pair has the planted causal direction") {
    const auto [a, b] = gen_coupled_pair(1, 0.8, 1.0, 1000, 63);
    CHECK(granger(a.axes[0], b.axes[0], 2) > granger(b.axes[0], a.axes[0], 2));
}

TEST_CASE("unskewed turn sequences share the floor equally") {
    TurnScenarioConfig cfg;
    cfg.members = 4;
    cfg.samples = 20 * 600;
    const auto s = gen_turn_sequence(cfg, 64);
    const auto e = equality(spans(s.status));
    for (double v : e.eq) CHECK(std::abs(v) <= 0.1);
}

TEST_CASE("no planted interruptions means none detected") {
    TurnScenarioConfig cfg;
    cfg.samples = 20 * 300;
    const auto s = gen_turn_sequence(cfg, 65);
    const auto sync = synchronization(spans(s.status), segment_all(s.status));
    CHECK(total(sync.n_success) == 0);
    CHECK(total(sync.n_unsuccess) == 0);
}

TEST_CASE("planted interruptions are recovered exactly") {
    TurnScenarioConfig cfg;
    cfg.members = 3;
    cfg.samples = 20 * 300;
    cfg.exact_success = 7;
    cfg.exact_unsuccess = 4;
    const auto s = gen_turn_sequence(cfg, 66);
    CHECK(total(s.planted_success) == 7);
    const auto sync = synchronization(spans(s.status), segment_all(s.status));
    CHECK(sync.n_success == s.planted_success);
    CHECK(sync.n_unsuccess == s.planted_unsuccess);
}

TEST_CASE("mini-mingle structure and annotation noise") {
    ScenarioConfig cfg;
    cfg.n_groups = 40;
    cfg.min_duration_s = 35;
    cfg.max_duration_s = 40;
    cfg.seed = 67;
    const auto data = gen_mini_mingle(cfg);
    CHECK(data.groups.size() == 40);
    CHECK(data.truth.size() == 40);
    for (std::size_t g = 0; g < data.groups.size(); ++g) {
        CHECK(static_cast<int>(data.groups[g].member_ids.size()) == data.truth[g].cardinality);
    }

    ScenarioConfig exact = cfg;
    exact.n_groups = 6;
    exact.rater_noise = 0.0;
    exact.rater_bias = 0.0;
    for (double k : sample_kappas(gen_mini_mingle(exact).group_annotations)) CHECK(k == 1.0);

    ScenarioConfig noisy = exact;
    noisy.rater_noise = 1.0;
    noisy.n_groups = 20;
    const auto kappas = sample_kappas(gen_mini_mingle(noisy).group_annotations);
    double mean = 0.0;
    for (double k : kappas) mean += k;
    mean /= static_cast<double>(kappas.size());
    CHECK(mean > 0.0);
    CHECK(mean < 1.0);

    ScenarioConfig bad = cfg;
    bad.drift_ar = 1.0;
    CHECK_THROWS_AS(gen_mini_mingle(bad), InputError);
}

TEST_CASE("mini-mingle output is byte-identical for a fixed seed") {
    ScenarioConfig cfg;
    cfg.n_groups = 4;
    cfg.min_duration_s = 35;
    cfg.max_duration_s = 40;
    fixture::TempDir one("synth_a"), two("synth_b");
    write_mini_mingle(gen_mini_mingle(cfg), one.path());
    write_mini_mingle(gen_mini_mingle(cfg), two.path());
    for (const auto& entry : std::filesystem::directory_iterator(one.path())) {
        CHECK(fixture::read_file(entry.path()) == fixture::read_file(two.path() / entry.path().filename()));
    }
}
