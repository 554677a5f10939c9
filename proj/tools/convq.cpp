// convq: batch runner for the conversation-quality pipeline.
//
// Exit codes: 0 success, 1 user or data error, 2 internal error.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>

#include "convq/parallel.hpp"
#include "convq/pipeline.hpp"

namespace {

using namespace convq;

std::vector<FeatureFamily> parse_sets(const std::string& list) {
    std::vector<FeatureFamily> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(family_from_tag(item));
    }
    if (out.empty()) throw InputError("--sets needs at least one of tt, sync, caus, conv");
    return out;
}

std::optional<WindowConfig> parse_window_flag(const std::string& value) {
    if (value == "none") return std::nullopt;
    try {
        std::size_t used = 0;
        const double s = std::stod(value, &used);
        if (used != value.size() || !(s > 0)) throw std::invalid_argument(value);
        return WindowConfig{s, std::nullopt, 4};
    } catch (const std::logic_error&) {
        throw InputError("--window expects 'none' or a positive length in seconds, got '" + value + "'");
    }
}

void print_study(const StudyResult& study) {
    std::printf("%s study\n", study.name.c_str());
    std::printf("  %-4s %-14s %8s %8s\n", "rank", "condition", "auc", "std");
    for (std::size_t i = 0; i < study.ranked.size(); ++i) {
        const auto& c = study.ranked[i];
        std::printf("  %-4zu %-14s %8.4f %8.4f\n", i + 1, c.name.c_str(), c.auc_mean, c.auc_std);
    }
}

void print_stats(const StatsReport& report) {
    int significant = 0;
    for (const auto& r : report.rows) significant += r.significant ? 1 : 0;
    std::printf("%zu coefficient rows, %d significant after Bonferroni\n", report.rows.size(), significant);
    for (const auto& r : report.rows) {
        if (r.set == "cardinality") {
            std::printf("  %-8s %-9s %-8s beta=%+.4f p_adj=%.3g%s\n", r.dependent.c_str(), r.set.c_str(),
                        r.model.c_str(), r.beta, r.p_adjusted, r.significant ? " *" : "");
        }
    }
    for (const auto& s : report.signs) {
        std::printf("  sign %-8s %-28s expected %c observed %+.4f %s\n", s.dependent.c_str(), s.predictor.c_str(),
                    s.expected > 0 ? '+' : '-', s.beta, s.agrees ? "agree" : "differ");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Perceived conversation quality pipeline"};
    app.require_subcommand(1);
    std::size_t workers = 0;
    app.add_option("--workers", workers, "Worker threads (default: CONVQ_WORKERS or 1)");

    std::string config;
    auto add_config = [&](CLI::App* sub) { sub->add_option("-c,--config", config, "Pipeline config (JSON)")->required(); };

    auto* run = app.add_subcommand("run", "Run every stage and write the full report tree");
    add_config(run);

    auto* synth = app.add_subcommand("synth", "Generate a synthetic mini-mingle dataset");
    std::string out_dir;
    synth->add_option("-c,--config", config, "Scenario config (JSON)")->required();
    synth->add_option("-o,--output", out_dir, "Output directory")->required();

    auto* ingest = app.add_subcommand("ingest", "Load and validate the inputs, then slice the groups");
    add_config(ingest);

    auto* features = app.add_subcommand("features", "Compute and aggregate feature tables");
    add_config(features);
    std::string sets, window = "config", level = "both";
    features->add_option("--sets", sets, "Comma-separated feature sets: tt,sync,caus,conv");
    features->add_option("--window", window, "'none' or a window length in seconds");
    features->add_option("--level", level, "group, individual or both")->check(CLI::IsMember({"group", "individual", "both"}));

    auto* reliability = app.add_subcommand("reliability", "Kappa filtering, PCQ scores and construct validity");
    add_config(reliability);

    auto* stats = app.add_subcommand("stats", "Hypothesis tests (QLS, LASSO, Spearman)");
    add_config(stats);

    auto* predict = app.add_subcommand("predict", "Cross-validated classification studies");
    add_config(predict);
    std::string study;
    predict->add_option("--study", study, "window, fusion or aggregator")
        ->required()
        ->check(CLI::IsMember({"window", "fusion", "aggregator"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (workers > 0) set_worker_count(workers);
        if (synth->parsed()) {
            const auto scenario = load_scenario(config);
            const auto data = gen_mini_mingle(scenario);
            write_mini_mingle(data, out_dir);
            std::printf("wrote %zu groups, %zu participants to %s\n", data.groups.size(), data.accel.size(), out_dir.c_str());
            return 0;
        }

        auto cfg = load_config(config);
        if (workers > 0) cfg.workers = workers;
        if (features->parsed()) {
            if (!sets.empty()) cfg.families = parse_sets(sets);
            if (window != "config") cfg.window = parse_window_flag(window);
        }
        Pipeline pipeline(cfg);

        if (run->parsed()) {
            pipeline.run();
            std::printf("report tree written to %s\n", cfg.output_dir.string().c_str());
        } else if (ingest->parsed()) {
            const auto& d = pipeline.ingest();
            const auto& s = pipeline.slices();
            std::printf("%zu participants, %zu groups, %zu slices (%zu groups dropped), %zu sample gaps\n",
                        d.accel.size(), d.groups.size(), s.slices.size(), s.dropped_group_ids.size(), d.gaps.size());
        } else if (features->parsed()) {
            for (auto l : {AnnotationLevel::group, AnnotationLevel::individual}) {
                if (level != "both" && level != to_string(l)) continue;
                if (l == AnnotationLevel::individual && cfg.individual_annotations.empty() && level == "both") continue;
                const auto& t = pipeline.features(l, pipeline.config().window);
                std::printf("%s features (%s): %lld rows x %zu columns\n", to_string(l).c_str(), t.condition.c_str(),
                            static_cast<long long>(t.values.rows()), t.columns.size());
            }
        } else if (reliability->parsed()) {
            const auto& r = pipeline.reliability();
            std::printf("group: %zu of %zu samples kept (kappa >= %g); PC1 explains %.3f\n", r.group.kept_count(),
                        r.group.samples.size(), cfg.kappa_threshold,
                        r.group_validity.explained.empty() ? 0.0 : r.group_validity.explained[0]);
            if (r.individual) {
                std::printf("individual: %zu of %zu samples kept; PC1 explains %.3f\n", r.individual->kept_count(),
                            r.individual->samples.size(),
                            r.individual_validity->explained.empty() ? 0.0 : r.individual_validity->explained[0]);
            }
        } else if (stats->parsed()) {
            print_stats(pipeline.stats());
        } else if (predict->parsed()) {
            print_study(pipeline.predict(study));
        }
        return 0;
    } catch (const StageError& e) {
        std::cerr << "convq: " << e.what() << '\n';
        return e.user_error() ? 1 : 2;
    } catch (const Error& e) {
        std::cerr << "convq: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "convq: internal error: " << e.what() << '\n';
        return 2;
    }
}
