// Acceptance checks: one PASS/FAIL line per criterion, tolerances pinned here.
// Exit status is non-zero when any criterion fails.

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "convq/coordination.hpp"
#include "convq/errors.hpp"
#include "convq/pipeline.hpp"
#include "convq/predict.hpp"
#include "convq/reliability.hpp"
#include "convq/stats.hpp"
#include "convq/synth.hpp"
#include "convq/turntaking.hpp"
#include "support/oracles.hpp"

using namespace convq;
namespace fs = std::filesystem;

namespace {

constexpr double kRatioTol = 1e-12;
constexpr double kKappaTol = 1e-12;
constexpr double kQlsSlopeRel = 0.05;
constexpr double kStudySeconds = 120.0;

struct Outcome {
    bool pass = false;
    std::string detail;
    double limit_s = 0.0;  // 0 = no time budget
};

int failures = 0;

void criterion(const std::string& name, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.limit_s > 0 && secs >= o.limit_s) {
        o.pass = false;
        o.detail += "; over the " + std::to_string(static_cast<int>(o.limit_s)) + " s budget";
    }
    if (!o.pass) ++failures;
    std::printf("%s  %-34s %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
}

std::string fmt(double v, int digits = 4) {
    std::ostringstream s;
    s.precision(digits);
    s << v;
    return s.str();
}

using Status = std::vector<std::uint8_t>;

Status run_of(std::size_t n, std::size_t start, std::size_t end) {
    Status s(n, 0);
    for (std::size_t t = start; t < end; ++t) s[t] = 1;
    return s;
}

std::vector<std::span<const std::uint8_t>> spans(const std::vector<Status>& rows) { return {rows.begin(), rows.end()}; }

std::vector<TurnSequence> segment_all(const std::vector<Status>& rows) {
    std::vector<TurnSequence> out;
    for (const auto& r : rows) out.push_back(segment_turns("", r, 20.0));
    return out;
}

Outcome lag_recovery() {
    int ok = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const int lag = 1 + static_cast<int>(seed % 10);
        const auto [a, b] = gen_coupled_pair(lag, 1.0, 0.0, 1000, seed);
        if (std::abs(lagged_correlation(a.axes[0], b.axes[0], 20).argmax - lag) <= 1) ++ok;
    }
    return {ok == 100, std::to_string(ok) + "/100 within +-1 sample", 5.0};
}

Outcome granger_direction() {
    int ok = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const auto [a, b] = gen_coupled_pair(1, 0.8, 1.0, 1000, 1000 + seed);
        if (granger(a.axes[0], b.axes[0], 2) > granger(b.axes[0], a.axes[0], 2)) ++ok;
    }
    return {ok >= 95, std::to_string(ok) + "/100 with F(a->b) > F(b->a)", 10.0};
}

Outcome segmentation() {
    std::mt19937_64 rng(2024);
    const auto gap = gap_samples(TurnConfig{}, 20.0);
    int ok = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = std::uniform_int_distribution<std::size_t>(50, 5000)(rng);
        std::bernoulli_distribution flip(std::uniform_real_distribution<double>(0.002, 0.3)(rng));
        Status s(n);
        std::uint8_t cur = 0;
        for (auto& x : s) {
            if (flip(rng)) cur = static_cast<std::uint8_t>(1 - cur);
            x = cur;
        }
        const auto seq = segment_turns("a", s, 20.0);
        const auto expected = oracle::merge_turns(s, gap);
        bool same = seq.turns.size() == expected.size();
        for (std::size_t k = 0; same && k < expected.size(); ++k) {
            same = seq.turns[k].start == expected[k].start && seq.turns[k].end == expected[k].end &&
                   seq.turns[k].backchannel == (expected[k].end - expected[k].start <= 40);
        }
        ok += same ? 1 : 0;
    }
    return {ok == 1000, std::to_string(ok) + "/1000 strings match the merge oracle"};
}

Outcome turn_scenarios() {
    std::vector<std::string> bad;
    auto expect = [&](bool cond, const std::string& what) {
        if (!cond) bad.push_back(what);
    };
    auto blocks = [](std::initializer_list<std::pair<int, int>> parts) {
        Status s;
        for (const auto& [v, len] : parts) s.insert(s.end(), static_cast<std::size_t>(len), static_cast<std::uint8_t>(v));
        return s;
    };

    const auto merged = segment_turns("a", blocks({{1, 40}, {0, 8}, {1, 40}}), 20.0);
    expect(merged.turns.size() == 1 && merged.turns[0].end - merged.turns[0].start == 88, "400 ms gap merges");
    expect(segment_turns("a", blocks({{1, 40}, {0, 12}, {1, 40}}), 20.0).turns.size() == 2, "600 ms gap splits");
    expect(segment_turns("a", Status(100, 0), 20.0).turns.empty(), "silence has no turns");

    const std::vector<Status> pair{run_of(10, 0, 6), run_of(10, 6, 10)};
    const auto e = equality(spans(pair));
    expect(std::abs(e.eq[0] - 0.2) <= kRatioTol && std::abs(e.eq[1] + 0.2) <= kRatioTol, "eq (0.2, -0.2)");
    const std::vector<Status> same{run_of(10, 0, 5), run_of(10, 5, 10), run_of(10, 2, 7)};
    const auto es = equality(spans(same));
    expect(std::all_of(es.eq.begin(), es.eq.end(), [](double v) { return std::abs(v) <= kRatioTol; }), "equal shares give eq 0");
    try {
        equality(spans(std::vector<Status>{Status(10, 0), Status(10, 0)}));
        bad.push_back("silent group error");
    } catch (const UndefinedError&) {
    }

    const auto s30 = run_of(10, 0, 3);
    expect(std::abs(fluency(s30, segment_turns("a", s30, 20.0)).d_silence - 0.7) <= kRatioTol, "d_silence 0.7");
    const auto bc = blocks({{1, 30}, {0, 40}, {1, 40}, {0, 40}, {1, 50}, {0, 20}});
    expect(fluency(bc, segment_turns("a", bc, 20.0)).n_backchannels == 2, "1.5/2.0/2.5 s gives 2 back-channels");
    const Status quiet(30, 0);
    const auto fq = fluency(quiet, segment_turns("a", quiet, 20.0));
    expect(fq.d_silence == 1.0 && fq.n_backchannels == 0, "no turns");

    const std::vector<Status> both{Status(50, 1), Status(50, 1)};
    const auto sb = synchronization(spans(both), segment_all(both));
    expect(std::abs(sb.d_overlap[0] - 1.0) <= kRatioTol && std::abs(sb.d_overlap[1] - 1.0) <= kRatioTol, "full overlap");
    const std::vector<Status> won{run_of(200, 0, 100), run_of(200, 50, 150)};
    const auto sw = synchronization(spans(won), segment_all(won));
    expect(sw.success_by[1][0] == 1 && sw.unsuccess_by[1][0] == 0 && sw.n_success[0] + sw.n_unsuccess[0] == 0,
           "successful interruption");
    const std::vector<Status> lost{run_of(200, 0, 100), run_of(200, 40, 60)};
    const auto sl = synchronization(spans(lost), segment_all(lost));
    expect(sl.unsuccess_by[1][0] == 1 && sl.success_by[1][0] == 0, "unsuccessful interruption");

    std::string detail = "12 scripted scenarios exact";
    if (!bad.empty()) {
        detail = "mismatch:";
        for (const auto& b : bad) detail += " [" + b + "]";
    }
    return {bad.empty(), detail};
}

Outcome kappa() {
    std::mt19937_64 rng(77);
    double worst = 0.0;
    int compared = 0;
    while (compared < 500) {
        const auto n = std::uniform_int_distribution<std::size_t>(5, 120)(rng);
        std::vector<int> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = std::uniform_int_distribution<int>(1, 5)(rng);
            b[i] = std::clamp(a[i] + std::uniform_int_distribution<int>(-2, 2)(rng), 1, 5);
        }
        double k = 0.0;
        try {
            k = qw_kappa(a, b);
        } catch (const UndefinedError&) {
            continue;
        }
        worst = std::max(worst, std::abs(k - oracle::kappa_table(a, b, 5)));
        ++compared;
    }
    std::vector<int> same{1, 2, 3, 4, 5, 3, 2};
    const double identical = qw_kappa(same, same);
    // Every (r1, r2) combination once: the observed table equals the chance table.
    std::vector<int> r1, r2;
    for (int i = 1; i <= 5; ++i) {
        for (int j = 1; j <= 5; ++j) {
            r1.push_back(i);
            r2.push_back(j);
        }
    }
    const double chance = qw_kappa(r1, r2);
    const bool pass = worst <= kKappaTol && std::abs(identical - 1.0) <= kKappaTol && std::abs(chance) <= kKappaTol;
    return {pass, "500 pairs max |diff| " + fmt(worst) + ", identical " + fmt(identical, 15) + ", chance " + fmt(chance)};
}

Outcome quantile() {
    std::mt19937_64 rng(500);
    const int n = 500;
    std::vector<double> xs(n), ys(n);
    Eigen::MatrixXd design(n, 2);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        xs[static_cast<std::size_t>(i)] = std::uniform_real_distribution<double>(0.0, 10.0)(rng);
        double v = 2.0 * xs[static_cast<std::size_t>(i)];
        if (i % 10 == 0) v += std::uniform_real_distribution<double>(20.0, 100.0)(rng);
        ys[static_cast<std::size_t>(i)] = v;
        design(i, 0) = 1.0;
        design(i, 1) = xs[static_cast<std::size_t>(i)];
        y(i) = v;
    }
    const auto beta = fit_quantile(design, y);
    const double loss = oracle::check_loss(xs, ys, beta(0), beta(1), 0.5);
    const auto [g0, g1] = oracle::grid_quantile_fit(xs, ys, 0.5, -10, 10, -5, 5);
    const double grid_loss = oracle::check_loss(xs, ys, g0, g1, 0.5);
    const double slope_err = std::abs(beta(1) - 2.0) / 2.0;
    const bool pass = slope_err <= kQlsSlopeRel && loss <= grid_loss + 1e-9 && std::abs(g1 - beta(1)) < 0.01;
    return {pass, "slope " + fmt(beta(1), 8) + ", loss " + fmt(loss) + " vs grid " + fmt(grid_loss) + " at slope " + fmt(g1, 6)};
}

Outcome classifier() {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> nd;
    const int n = 200;
    Eigen::MatrixXd x(n, 3);
    std::vector<int> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int label = i % 4 == 0;
        y[static_cast<std::size_t>(i)] = label;
        x(i, 0) = (label ? 3.0 : -3.0) + 0.5 * nd(rng);
        x(i, 1) = nd(rng);
        x(i, 2) = nd(rng);
    }
    ClassifierConfig cfg;
    const auto sep = train_eval("separable", x, y, cfg);
    const bool all_one = std::all_of(sep.folds.begin(), sep.folds.end(), [](const FoldResult& f) { return f.auc == 1.0; });

    auto shuffled = y;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto noise = train_eval("shuffled", x, shuffled, cfg);
    const bool chance = noise.auc_mean >= 0.35 && noise.auc_mean <= 0.65;

    Eigen::MatrixXd m(100, 2);
    std::vector<int> c(100);
    for (int i = 0; i < 100; ++i) {
        c[static_cast<std::size_t>(i)] = i < 20;
        m(i, 0) = nd(rng) + (i < 20 ? 2.0 : 0.0);
        m(i, 1) = nd(rng);
    }
    const auto s = smote(m, c, 5, 3);
    const auto pos = std::count(s.y.begin(), s.y.end(), 1), neg = std::count(s.y.begin(), s.y.end(), 0);
    double worst = 0.0;
    bool convex = true;
    for (std::size_t k = 0; k < s.synthetic.size(); ++k) {
        const auto& g = s.synthetic[k];
        const auto row = static_cast<Eigen::Index>(100 + k);
        convex = convex && g.u > 0 && g.u < 1 && c[g.source] == 1 && c[g.neighbour] == 1;
        const Eigen::RowVectorXd expect = m.row(static_cast<Eigen::Index>(g.source)) +
                                          g.u * (m.row(static_cast<Eigen::Index>(g.neighbour)) - m.row(static_cast<Eigen::Index>(g.source)));
        worst = std::max(worst, (s.x.row(row) - expect).cwiseAbs().maxCoeff());
    }
    convex = convex && worst <= 1e-12;
    return {all_one && chance && pos == neg && convex,
            "separable folds AUC=1: " + std::string(all_one ? "yes" : "no") + ", shuffled mean AUC " + fmt(noise.auc_mean) +
                ", SMOTE " + std::to_string(pos) + "/" + std::to_string(neg) + " convex " + (convex ? "yes" : "no")};
}

// Generates a scenario into a fresh directory and returns its pipeline config.
PipelineConfig prepare(const std::string& scenario_file, const fs::path& root) {
    fs::remove_all(root);
    const auto scenario = load_scenario(fs::path(CONVQ_SCENARIO_DIR) / scenario_file);
    write_mini_mingle(gen_mini_mingle(scenario), root / "data");
    std::ifstream in(fs::path(CONVQ_SCENARIO_DIR) / "example_config.json");
    std::stringstream text;
    text << in.rdbuf();
    return parse_config(text.str(), root);
}

const ConditionResult* find(const StudyResult& s, const std::string& name) {
    for (const auto& c : s.ranked) {
        if (c.name == name) return &c;
    }
    return nullptr;
}

Outcome window_study(const fs::path& work) {
    Pipeline p(prepare("window_coupling.json", work / "window"));
    const auto study = p.predict("window");
    std::string ranking;
    for (const auto& c : study.ranked) ranking += " " + c.name + "=" + fmt(c.auc_mean, 3);
    const bool pass = study.ranked.size() >= 2 && study.ranked[0].name == "none" &&
                      study.ranked[0].auc_mean > study.ranked[1].auc_mean;
    return {pass, "ranking" + ranking, kStudySeconds};
}

Outcome sync_study(const fs::path& work) {
    Pipeline p(prepare("window_coupling.json", work / "sync"));
    const auto study = p.predict("fusion");
    const auto* sync = find(study, "sync");
    if (!sync) return {false, "no sync condition", kStudySeconds};
    return {sync->auc_mean > 0.8, "sync mean AUC " + fmt(sync->auc_mean) + " +- " + fmt(sync->auc_std, 3), kStudySeconds};
}

Outcome cardinality_study(const fs::path& work) {
    Pipeline p(prepare("cardinality.json", work / "cardinality"));
    const auto report = p.stats();
    for (const auto& r : report.rows) {
        if (r.dependent == "GroupPCQ" && r.set == "cardinality" && r.model == "QLS") {
            return {r.beta < 0 && r.p_adjusted < kSignificanceLevel,
                    "GroupPCQ QLS beta " + fmt(r.beta) + ", adjusted p " + fmt(r.p_adjusted, 3), kStudySeconds};
        }
    }
    return {false, "no cardinality QLS row", kStudySeconds};
}

Outcome invariant_suites() {
    const std::string cmd = std::string("\"") + CONVQ_PROPERTY_BINARY + "\" 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return {false, "could not start the property suite"};
    std::string out, summary;
    char buf[4096];
    while (std::fgets(buf, sizeof buf, pipe)) out += buf;
    const int status = pclose(pipe);
    std::istringstream lines(out);
    for (std::string line; std::getline(lines, line);) {
        if (line.find("test cases:") != std::string::npos) summary = line.substr(line.find("test cases:"));
    }
    return {status == 0, summary.empty() ? "no summary" : summary + " (200 random cases each)"};
}

void dataset_mode() {
    const char* cfg = std::getenv("CONVQ_MNM_CONFIG");
    if (!cfg || !*cfg) {
        std::printf("SKIP  %-34s CONVQ_MNM_CONFIG not set\n", "dataset mode");
        return;
    }
    criterion("dataset mode", [&]() -> Outcome {
        Pipeline p(load_config(cfg));
        p.run();
        const auto out = p.config().output_dir;
        std::ifstream grid(out / "stats" / "grid.csv");
        int rows = 0;
        for (std::string line; std::getline(grid, line);) {
            if (!line.empty() && line[0] != '#') ++rows;
        }
        bool studies = true;
        for (const auto& s : p.config().studies) studies = studies && fs::exists(out / "predict" / (s + ".csv"));
        std::string signs;
        for (const auto& c : p.stats().signs) {
            signs += " " + c.predictor + (c.agrees ? "=agrees" : "=differs");
        }
        return {rows - 1 == 18 && studies, std::to_string(rows - 1) + " grid tests; signs (reported only):" + signs};
    });
}

}  // namespace

int main() {
    const fs::path work = fs::temp_directory_path() / "convq_acceptance";
    fs::create_directories(work);

    criterion("lagged correlation lag recovery", lag_recovery);
    criterion("granger directionality", granger_direction);
    criterion("turn segmentation oracle", segmentation);
    criterion("turn-taking scripted scenarios", turn_scenarios);
    criterion("quadratic weighted kappa", kappa);
    criterion("median regression with outliers", quantile);
    criterion("elastic-loss classifier", classifier);
    criterion("mini-mingle window study", [&] { return window_study(work); });
    criterion("mini-mingle synchrony AUC", [&] { return sync_study(work); });
    criterion("mini-mingle cardinality QLS", [&] { return cardinality_study(work); });
    criterion("invariant property suites", invariant_suites);
    dataset_mode();

    fs::remove_all(work);
    std::printf("%s: %d failing criteria\n", failures ? "FAILED" : "OK", failures);
    return failures ? 1 : 0;
}
