#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "convq/pipeline.hpp"
#include "support/fixtures.hpp"

using namespace convq;
namespace fs = std::filesystem;

namespace {

const char* kConfig = R"({
  "inputs": {"accel": "data/accel.csv", "speaking": "data/speaking.csv", "groups": "data/groups.csv",
             "annotations_group": "data/annotations_group.csv",
             "annotations_individual": "data/annotations_individual.csv"},
  "output_dir": "out",
  "features": {"channels": ["abs_x"]},
  "stats": {"qls_bootstrap": 50, "lasso_bootstrap": 20, "lasso_grid": 10},
  "predict": {"folds": 2, "inner_folds": 2, "windows": [null, 2.0]}
})";

// A small synthetic dataset plus config, written once per test.
struct Workspace {
    fixture::TempDir dir{"pipeline"};
    fs::path config;

    Workspace() {
        ScenarioConfig s;
        s.n_groups = 12;
        s.min_duration_s = 40;
        s.max_duration_s = 50;
        s.seed = 3;
        write_mini_mingle(gen_mini_mingle(s), dir.path() / "data");
        config = dir.write("cfg.json", kConfig);
    }
};

std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = fixture::read_file(e.path());
    }
    return files;
}

}  // namespace

TEST_CASE("config schema errors") {
    CHECK_THROWS_AS(parse_config("{not json"), SchemaError);
    CHECK_THROWS_AS(parse_config(R"({"inputs": {}, "colour": 1})"), SchemaError);
    CHECK_THROWS_AS(parse_config(R"({"inputs": {"accel": 3}})"), SchemaError);
    CHECK_THROWS_AS(parse_scenario(R"({"n_groups": "many"})"), SchemaError);
    CHECK(parse_scenario(R"({"n_groups": 5, "label_rule": "cardinality"})").label_rule == LabelRule::cardinality);
}

TEST_CASE("relative paths resolve against the config directory") {
    const auto c = parse_config(kConfig, "/data/run");
    CHECK(c.accel == fs::path("/data/run/data/accel.csv"));
    CHECK(c.output_dir == fs::path("/data/run/out"));
    CHECK(c.channels == std::vector<std::string>{"abs_x"});
    CHECK_FALSE(c.hash.empty());
}

TEST_CASE("load_config names a missing input") {
    fixture::TempDir dir("cfg_missing");
    const auto p = dir.write("cfg.json", kConfig);
    try {
        load_config(p);
        FAIL("expected an input error");
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find("accel.csv") != std::string::npos);
    }
}

TEST_CASE("run writes the full report tree and reruns identically") {
    Workspace ws;
    Pipeline(load_config(ws.config)).run();
    const auto out = ws.dir.path() / "out";
    for (const char* f : {"ingest/participants.csv", "slice/slices.csv", "reliability/group.csv",
                          "reliability/validity_group.csv", "features/group_none.csv", "features/individual_none.csv",
                          "stats/results.csv", "stats/grid.csv", "stats/sign_agreement.csv", "predict/window.csv",
                          "predict/fusion.csv", "predict/aggregator.csv", "predict/fusion_roc.csv"}) {
        CHECK_MESSAGE(fs::exists(out / f), f);
    }
    const auto first = snapshot(out);
    const std::string head = fixture::read_file(out / "stats/results.csv").substr(0, 20);
    CHECK(head.rfind("# convq config_hash=", 0) == 0);

    // Same config, cached upstream outputs on disk.
    Pipeline(load_config(ws.config)).run();
    CHECK(snapshot(out) == first);

    // Same config, nothing cached.
    fs::remove_all(out);
    Pipeline(load_config(ws.config)).run();
    CHECK(snapshot(out) == first);
}

TEST_CASE("feature tables are reused from disk") {
    Workspace ws;
    const auto cfg = load_config(ws.config);
    const auto fresh = Pipeline(cfg).features(AnnotationLevel::group, std::nullopt);
    const auto cached = Pipeline(cfg).features(AnnotationLevel::group, std::nullopt);
    CHECK(cached.columns == fresh.columns);
    CHECK(cached.slice_ids == fresh.slice_ids);
    CHECK(cached.values.rows() == fresh.values.rows());
    for (Eigen::Index i = 0; i < fresh.values.size(); ++i) {
        const double a = fresh.values.data()[i], b = cached.values.data()[i];
        CHECK(((std::isnan(a) && std::isnan(b)) || a == b));
    }

    // A cache written under a different config is ignored.
    auto other = cfg;
    other.hash = "0000000000000000";
    const auto recomputed = Pipeline(other).features(AnnotationLevel::group, std::nullopt);
    CHECK(recomputed.columns == fresh.columns);
}

TEST_CASE("stage failures name the stage") {
    Workspace ws;
    auto cfg = load_config(ws.config);
    cfg.studies = {"aggregator"};
    cfg.aggregators = {Aggregator::mean};
    Pipeline p(cfg);
    try {
        p.predict("aggregator");
        FAIL("expected a stage error");
    } catch (const StageError& e) {
        CHECK(e.stage() == "predict");
        CHECK(e.user_error());
    }
}
