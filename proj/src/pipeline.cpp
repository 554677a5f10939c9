#include "convq/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

#include "convq/parallel.hpp"
#include "csv.hpp"

namespace convq {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw SchemaError("config: '" + where + "' must be an object");
    for (const auto& [key, _] : obj.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
            throw SchemaError("config: unknown key '" + key + "' in " + where);
        }
    }
}

template <typename T>
void read(const json& obj, const char* key, T& into) {
    if (!obj.contains(key)) return;
    try {
        into = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("config: bad value for '") + key + "': " + e.what());
    }
}

std::optional<WindowConfig> parse_window(const json& j, int default_bands) {
    if (j.is_null()) return std::nullopt;
    if (j.is_number()) return WindowConfig{j.get<double>(), std::nullopt, default_bands};
    check_keys(j, "window", {"length_s", "hop_s", "bands"});
    WindowConfig w;
    w.n_bands = default_bands;
    read(j, "length_s", w.window_len_s);
    if (j.contains("hop_s")) w.hop_s = j.at("hop_s").get<double>();
    read(j, "bands", w.n_bands);
    return w;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw InputError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string join_tags(const std::vector<std::string>& tags) { return csv::join(tags, ';'); }

std::string unit_key(const std::string& slice, const std::string& participant) {
    return participant.empty() ? slice : slice + "/" + participant;
}

std::string level_name(AnnotationLevel l) { return l == AnnotationLevel::group ? "GroupPCQ" : "IndivPCQ"; }

}  // namespace

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

PipelineConfig parse_config(std::string_view json_text, const fs::path& base_dir) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(j, "config", {"inputs", "output_dir", "rate_hz", "slice", "window", "features", "turns",
                             "reliability", "stats", "predict", "seed", "workers"});
    PipelineConfig c;
    c.hash = fnv1a_hex(json_text);
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };

    if (!j.contains("inputs")) throw SchemaError("config: missing 'inputs'");
    const auto& in = j.at("inputs");
    check_keys(in, "inputs", {"accel", "speaking", "groups", "annotations_group", "annotations_individual"});
    for (const char* key : {"accel", "speaking", "groups", "annotations_group"}) {
        if (!in.contains(key)) throw SchemaError(std::string("config: missing inputs.") + key);
    }
    c.accel = resolve(in.at("accel").get<std::string>());
    c.speaking = resolve(in.at("speaking").get<std::string>());
    c.groups = resolve(in.at("groups").get<std::string>());
    c.group_annotations = resolve(in.at("annotations_group").get<std::string>());
    if (in.contains("annotations_individual")) {
        c.individual_annotations = resolve(in.at("annotations_individual").get<std::string>());
    }
    if (j.contains("output_dir")) c.output_dir = resolve(j.at("output_dir").get<std::string>());
    else c.output_dir = base_dir / c.output_dir;
    read(j, "rate_hz", c.rate_hz);
    c.slice_policy.rate_hz = c.rate_hz;
    read(j, "seed", c.seed);
    read(j, "workers", c.workers);

    if (j.contains("slice")) {
        const auto& s = j.at("slice");
        check_keys(s, "slice", {"length_s", "min_duration_s"});
        read(s, "length_s", c.slice_policy.slice_len_s);
        read(s, "min_duration_s", c.slice_policy.min_dur_s);
    }
    if (j.contains("window")) c.window = parse_window(j.at("window"), 4);

    if (j.contains("features")) {
        const auto& f = j.at("features");
        check_keys(f, "features", {"sets", "channels", "aggregators", "max_lag_s", "mi_bins", "mi_window_s",
                                   "mimicry_window_s", "granger_order", "coherence_segment_s"});
        if (f.contains("sets")) {
            c.families.clear();
            for (const auto& t : f.at("sets")) c.families.push_back(family_from_tag(t.get<std::string>()));
        }
        read(f, "channels", c.channels);
        for (const auto& ch : c.channels) {
            const auto& all = channel_names();
            if (std::find(all.begin(), all.end(), ch) == all.end()) throw SchemaError("config: unknown channel '" + ch + "'");
        }
        if (f.contains("aggregators")) {
            for (const auto& a : f.at("aggregators")) c.aggregators.push_back(aggregator_from_string(a.get<std::string>()));
        }
        read(f, "max_lag_s", c.coordination.max_lag_s);
        read(f, "mi_bins", c.coordination.mi_bins);
        read(f, "mi_window_s", c.coordination.mi_window_s);
        read(f, "mimicry_window_s", c.coordination.mimicry_window_s);
        read(f, "granger_order", c.coordination.granger_order);
        read(f, "coherence_segment_s", c.coordination.coherence_segment_s);
    }
    if (j.contains("turns")) {
        const auto& t = j.at("turns");
        check_keys(t, "turns", {"gap_ms", "backchannel_max_s", "overlap"});
        read(t, "gap_ms", c.turns.gap_threshold_ms);
        read(t, "backchannel_max_s", c.turns.backchannel_max_s);
        if (t.contains("overlap")) {
            const auto m = t.at("overlap").get<std::string>();
            if (m == "joint_speech") c.overlap = OverlapMode::joint_speech;
            else if (m == "literal") c.overlap = OverlapMode::literal;
            else throw SchemaError("config: unknown overlap mode '" + m + "'");
        }
    }
    if (j.contains("reliability")) {
        const auto& r = j.at("reliability");
        check_keys(r, "reliability", {"kappa_threshold", "binarize_threshold"});
        read(r, "kappa_threshold", c.kappa_threshold);
        read(r, "binarize_threshold", c.binarize_threshold);
    }
    if (j.contains("stats")) {
        const auto& s = j.at("stats");
        check_keys(s, "stats", {"aggregator", "bonferroni_m", "alpha", "qls_bootstrap", "lasso_bootstrap", "lasso_grid"});
        if (s.contains("aggregator")) c.stats_aggregator = aggregator_from_string(s.at("aggregator").get<std::string>());
        read(s, "bonferroni_m", c.bonferroni_m);
        read(s, "alpha", c.alpha);
        read(s, "qls_bootstrap", c.qls_bootstrap);
        read(s, "lasso_bootstrap", c.lasso_bootstrap);
        read(s, "lasso_grid", c.lasso_grid);
    }
    if (j.contains("predict")) {
        const auto& p = j.at("predict");
        check_keys(p, "predict", {"studies", "windows", "level", "folds", "alpha", "lambdas", "inner_folds",
                                  "smote_k", "pca_variance", "max_iterations"});
        read(p, "studies", c.studies);
        for (const auto& s : c.studies) {
            if (s != "window" && s != "fusion" && s != "aggregator") throw SchemaError("config: unknown study '" + s + "'");
        }
        if (p.contains("windows")) {
            c.study_windows.clear();
            for (const auto& w : p.at("windows")) {
                if (w.is_null()) c.study_windows.emplace_back(std::nullopt);
                else c.study_windows.emplace_back(w.get<double>());
            }
        }
        if (p.contains("level")) {
            const auto l = p.at("level").get<std::string>();
            if (l == "group") c.predict_level = AnnotationLevel::group;
            else if (l == "individual") c.predict_level = AnnotationLevel::individual;
            else throw SchemaError("config: unknown predict level '" + l + "'");
        }
        read(p, "folds", c.classifier.folds);
        read(p, "alpha", c.classifier.alpha);
        read(p, "lambdas", c.classifier.lambdas);
        read(p, "inner_folds", c.classifier.inner_folds);
        read(p, "smote_k", c.classifier.smote_k);
        read(p, "pca_variance", c.classifier.pca_variance);
        read(p, "max_iterations", c.classifier.max_iterations);
    }
    c.classifier.seed = c.seed;
    return c;
}

PipelineConfig load_config(const fs::path& path) {
    const auto text = read_text(path);
    auto c = parse_config(text, path.parent_path().empty() ? fs::path(".") : path.parent_path());
    std::vector<fs::path> inputs{c.accel, c.speaking, c.groups, c.group_annotations};
    if (!c.individual_annotations.empty()) inputs.push_back(c.individual_annotations);
    for (const auto& p : inputs) {
        if (!fs::exists(p)) throw InputError("input path does not exist: " + p.string());
    }
    return c;
}

ScenarioConfig parse_scenario(std::string_view json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("scenario is not valid JSON: ") + e.what());
    }
    check_keys(j, "scenario",
               {"n_groups", "min_members", "max_members", "min_duration_s", "max_duration_s", "max_start_offset_s",
                "rate_hz", "ar_coefficient", "noise_sigma", "min_lag", "max_lag", "low_coupling_min",
                "low_coupling_max", "high_coupling_min", "high_coupling_max", "max_convergence_rate", "drift_sigma", "drift_ar",
                "low_skew_max", "high_skew_min", "high_skew_max", "interruption_rate", "success_fraction",
                "label_rule", "high_fraction", "high_quality", "low_quality", "cardinality_slope",
                "group_jitter", "member_jitter", "n_raters", "rater_noise", "rater_bias", "seed"});
    ScenarioConfig s;
    read(j, "n_groups", s.n_groups);
    read(j, "min_members", s.min_members);
    read(j, "max_members", s.max_members);
    read(j, "min_duration_s", s.min_duration_s);
    read(j, "max_duration_s", s.max_duration_s);
    read(j, "max_start_offset_s", s.max_start_offset_s);
    read(j, "rate_hz", s.rate_hz);
    s.slice_policy.rate_hz = s.rate_hz;
    read(j, "ar_coefficient", s.ar_coefficient);
    read(j, "noise_sigma", s.noise_sigma);
    read(j, "min_lag", s.min_lag);
    read(j, "max_lag", s.max_lag);
    read(j, "low_coupling_min", s.low_coupling_min);
    read(j, "low_coupling_max", s.low_coupling_max);
    read(j, "high_coupling_min", s.high_coupling_min);
    read(j, "high_coupling_max", s.high_coupling_max);
    read(j, "max_convergence_rate", s.max_convergence_rate);
    read(j, "drift_sigma", s.drift_sigma);
    read(j, "drift_ar", s.drift_ar);
    read(j, "low_skew_max", s.low_skew_max);
    read(j, "high_skew_min", s.high_skew_min);
    read(j, "high_skew_max", s.high_skew_max);
    read(j, "interruption_rate", s.interruption_rate);
    read(j, "success_fraction", s.success_fraction);
    if (j.contains("label_rule")) s.label_rule = label_rule_from_string(j.at("label_rule").get<std::string>());
    read(j, "high_fraction", s.high_fraction);
    read(j, "high_quality", s.high_quality);
    read(j, "low_quality", s.low_quality);
    read(j, "cardinality_slope", s.cardinality_slope);
    read(j, "group_jitter", s.group_jitter);
    read(j, "member_jitter", s.member_jitter);
    read(j, "n_raters", s.n_raters);
    read(j, "rater_noise", s.rater_noise);
    read(j, "rater_bias", s.rater_bias);
    read(j, "seed", s.seed);
    return s;
}

ScenarioConfig load_scenario(const fs::path& path) { return parse_scenario(read_text(path)); }

std::string window_label(const std::optional<WindowConfig>& w) {
    if (!w) return "none";
    std::string s = csv::format(w->window_len_s) + "s";
    if (w->hop_s) s += "_hop" + csv::format(*w->hop_s) + "s";
    return s;
}

std::string FeatureTable::column_family(const std::string& column) {
    const auto first = column.find("__");
    if (first == std::string::npos) return "";
    const auto second = column.find("__", first + 2);
    const auto channel = column.substr(first + 2, second - first - 2);
    if (channel == "speaking") return tag(FeatureFamily::turn_taking);
    return tag(pair_feature_family(column.substr(0, first)));
}

Aggregator FeatureTable::column_aggregator(const std::string& column) {
    const auto last = column.rfind("__");
    if (last == std::string::npos) throw InputError("not a feature column: " + column);
    return aggregator_from_string(column.substr(last + 2));
}

Pipeline::Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.channels.empty()) cfg_.channels.assign(channel_names().begin(), channel_names().end());
    if (cfg_.aggregators.empty()) cfg_.aggregators = all_aggregators();
    if (cfg_.workers > 0) set_worker_count(cfg_.workers);
    cfg_.classifier.seed = cfg_.seed;
}

template <typename F>
auto Pipeline::stage(const std::string& name, F&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(name, e.what(), true);
    } catch (const std::exception& e) {
        throw StageError(name, e.what(), false);
    }
}

std::string Pipeline::header() const {
    return "convq config_hash=" + cfg_.hash + " seed=" + std::to_string(cfg_.seed);
}

fs::path Pipeline::out(const std::string& sub, const std::string& file) const {
    const auto dir = cfg_.output_dir / sub;
    fs::create_directories(dir);
    return dir / file;
}

const Dataset& Pipeline::ingest() {
    if (data_) return *data_;
    return stage("ingest", [&]() -> const Dataset& {
        Dataset d;
        auto accel = load_accel(cfg_.accel, cfg_.rate_hz);
        d.accel = std::move(accel.recordings);
        d.gaps = std::move(accel.gaps);
        d.speaking = load_speaking(cfg_.speaking, cfg_.rate_hz);
        d.groups = load_groups(cfg_.groups);
        d.group_annotations = load_annotations(cfg_.group_annotations, AnnotationLevel::group);
        if (!cfg_.individual_annotations.empty()) {
            d.individual_annotations = load_annotations(cfg_.individual_annotations, AnnotationLevel::individual);
        }
        std::vector<ParticipantId> accel_ids, speaking_ids;
        for (const auto& r : d.accel) accel_ids.push_back(r.participant_id);
        for (const auto& s : d.speaking) speaking_ids.push_back(s.participant_id);
        if (const auto missing = orphan_members(d.groups, accel_ids); !missing.empty()) {
            throw SchemaError("group members without accelerometer data: " + csv::join(missing, ';'));
        }
        if (const auto missing = orphan_members(d.groups, speaking_ids); !missing.empty()) {
            throw SchemaError("group members without speaking status: " + csv::join(missing, ';'));
        }

        csv::Writer w(out("ingest", "participants.csv"));
        w.comment(header());
        w.row({"participant_id", "accel_samples", "first_t", "last_t", "gaps"});
        for (const auto& r : d.accel) {
            const auto gaps = std::count_if(d.gaps.begin(), d.gaps.end(),
                                            [&](const SampleGap& g) { return g.participant_id == r.participant_id; });
            w.row({r.participant_id, std::to_string(r.size()), std::to_string(r.t.empty() ? 0 : r.t.front()),
                   std::to_string(r.t.empty() ? 0 : r.t.back()), std::to_string(gaps)});
        }
        w.commit();
        csv::Writer g(out("ingest", "gaps.csv"));
        g.comment(header());
        g.row({"participant_id", "after_t", "missing"});
        for (const auto& gap : d.gaps) g.row({gap.participant_id, std::to_string(gap.after_t), std::to_string(gap.missing)});
        g.commit();
        data_ = std::move(d);
        return *data_;
    });
}

const SliceResult& Pipeline::slices() {
    if (slices_) return *slices_;
    const auto& d = ingest();
    return stage("slice", [&]() -> const SliceResult& {
        auto policy = cfg_.slice_policy;
        policy.rate_hz = cfg_.rate_hz;
        auto result = slice_conversations(d.groups, policy);
        csv::Writer w(out("slice", "slices.csv"));
        w.comment(header());
        w.row({"slice_id", "group_id", "member_ids", "start_t", "end_t", "duration_s"});
        for (const auto& s : result.slices) {
            w.row({s.slice_id, s.group_id, csv::join(s.member_ids, ';'), std::to_string(s.start_t),
                   std::to_string(s.end_t), csv::format(s.duration_s)});
        }
        w.commit();
        csv::Writer dw(out("slice", "dropped_groups.csv"));
        dw.comment(header());
        dw.row({"group_id"});
        for (const auto& g : result.dropped_group_ids) dw.row({g});
        dw.commit();
        slices_ = std::move(result);
        return *slices_;
    });
}

const ReliabilityOutputs& Pipeline::reliability() {
    if (reliability_) return *reliability_;
    const auto& d = ingest();
    const auto& sl = slices();
    return stage("reliability", [&]() -> const ReliabilityOutputs& {
        ReliabilityOutputs r;
        r.group = assess_reliability(d.group_annotations, cfg_.kappa_threshold);
        r.group_validity = construct_validity_pca(item_matrix(d.group_annotations), d.group_annotations.negative_flags());
        if (d.individual_annotations) {
            r.individual = assess_reliability(*d.individual_annotations, cfg_.kappa_threshold);
            r.individual_validity = construct_validity_pca(item_matrix(*d.individual_annotations),
                                                           d.individual_annotations->negative_flags());
        }
        auto write_level = [&](const ReliabilityReport& rep, const ValidityReport& val, const std::string& name) {
            csv::Writer w(out("reliability", name + ".csv"));
            w.comment(header());
            w.row({"slice_id", "participant_id", "n_raters", "mean_kappa", "pcq", "normalized_pcq", "kept", "label"});
            for (const auto& s : rep.samples) {
                w.row({s.slice_id, s.participant_id, std::to_string(s.n_raters), csv::format(s.mean_kappa),
                       csv::format(s.mean_pcq), csv::format(s.normalized_pcq), s.kept ? "1" : "0",
                       binarize(s.mean_pcq, cfg_.binarize_threshold) == PcqLabel::high ? "high" : "low"});
            }
            w.commit();
            csv::Writer v(out("reliability", "validity_" + name + ".csv"));
            v.comment(header());
            v.row({"component", "eigenvalue", "explained", "cumulative"});
            for (std::size_t i = 0; i < val.eigenvalues.size(); ++i) {
                v.row({"PC" + std::to_string(i + 1), csv::format(val.eigenvalues[i]), csv::format(val.explained[i]),
                       csv::format(val.cumulative[i])});
            }
            v.commit();
            csv::Writer l(out("reliability", "loadings_" + name + ".csv"));
            l.comment(header());
            l.row({"item", "pc1", "pc2"});
            const auto& items = name == "group" ? d.group_annotations.items : d.individual_annotations->items;
            for (std::size_t i = 0; i < val.pc1_loadings.size(); ++i) {
                l.row({"item_" + std::to_string(items[i].id), csv::format(val.pc1_loadings[i]),
                       csv::format(val.pc2_loadings[i])});
            }
            l.commit();
            for (const auto& warning : val.warnings) std::cerr << "convq: reliability (" << name << "): " << warning << '\n';
        };
        write_level(r.group, r.group_validity, "group");
        if (r.individual) write_level(*r.individual, *r.individual_validity, "individual");

        csv::Writer o(out("reliability", "orphans.csv"));
        o.comment(header());
        o.row({"level", "unit"});
        for (const auto& u : orphan_annotations(d.group_annotations, sl.slices)) o.row({"group", u});
        if (d.individual_annotations) {
            for (const auto& u : orphan_annotations(*d.individual_annotations, sl.slices)) o.row({"individual", u});
        }
        o.commit();
        reliability_ = std::move(r);
        return *reliability_;
    });
}

const std::map<ParticipantId, AccelRecording>& Pipeline::standardized() {
    if (standardized_) return *standardized_;
    const auto& d = ingest();
    return stage("preprocess", [&]() -> const std::map<ParticipantId, AccelRecording>& {
        std::vector<AccelRecording> z(d.accel.size());
        parallel_for(d.accel.size(), [&](std::size_t i) { z[i] = zscore(d.accel[i]); });
        std::map<ParticipantId, AccelRecording> m;
        for (auto& r : z) m.emplace(r.participant_id, std::move(r));
        standardized_ = std::move(m);
        return *standardized_;
    });
}

FeatureTable Pipeline::compute_features(AnnotationLevel level, const std::optional<WindowConfig>& window) {
    const auto& d = ingest();
    const auto& sl = slices().slices;
    const auto& z = standardized();
    return stage("features", [&] {
        std::map<ParticipantId, const SpeakingStatus*> speaking;
        for (const auto& s : d.speaking) speaking[s.participant_id] = &s;
        std::vector<FeatureFamily> coord;
        bool with_turns = false;
        for (auto f : cfg_.families) {
            if (f == FeatureFamily::turn_taking) with_turns = true;
            else coord.push_back(f);
        }

        std::vector<std::vector<FeatureVector>> per_slice(sl.size());
        std::vector<std::string> skipped(sl.size());
        parallel_for(sl.size(), [&](std::size_t si) {
            const auto& slice = sl[si];
            const auto& ids = slice.member_ids;
            std::vector<WindowedSeries> series;
            try {
                for (const auto& id : ids) {
                    const auto seg = extract_window(z.at(id), slice.start_t, slice.end_t);
                    auto all = smooth_channels(derive_channels(seg), window);
                    WindowedSeries kept{all.rate_hz, {}, {}};
                    for (std::size_t s = 0; s < all.names.size(); ++s) {
                        const auto base = all.names[s].substr(0, all.names[s].find('.'));
                        if (std::find(cfg_.channels.begin(), cfg_.channels.end(), base) != cfg_.channels.end()) {
                            kept.names.push_back(all.names[s]);
                            kept.series.push_back(std::move(all.series[s]));
                        }
                    }
                    series.push_back(std::move(kept));
                }
            } catch (const Error& e) {
                skipped[si] = e.what();
                return;
            }
            std::vector<PairFeatureSet> pairs;
            if (!coord.empty()) {
                for (std::size_t a = 0; a < ids.size(); ++a) {
                    for (std::size_t b = a + 1; b < ids.size(); ++b) {
                        for (std::size_t s = 0; s < series[a].names.size(); ++s) {
                            pairs.push_back(compute_pair_features(ids[a], ids[b], series[a].names[s], series[a].series[s],
                                                                  series[b].series[s], series[a].rate_hz,
                                                                  cfg_.coordination, coord));
                        }
                    }
                }
            }
            std::vector<MemberTurnFeatures> turn_features;
            if (with_turns) {
                std::vector<std::vector<std::uint8_t>> st;
                for (const auto& id : ids) st.push_back(extract_status(*speaking.at(id), slice.start_t, slice.end_t));
                std::vector<std::span<const std::uint8_t>> spans(st.begin(), st.end());
                turn_features = compute_turn_features(ids, spans, cfg_.rate_hz, slice.start_t, cfg_.turns, cfg_.overlap);
            }
            auto make = [&](const Scope& scope) {
                FeatureVector v;
                if (!pairs.empty()) v = aggregate(pairs, ids, scope, cfg_.aggregators);
                v.scope = scope;
                if (with_turns) add_turn_features(v, turn_features, cfg_.aggregators);
                return v;
            };
            if (level == AnnotationLevel::group) {
                per_slice[si].push_back(make({ScopeKind::group, slice.slice_id, ""}));
            } else {
                for (const auto& id : ids) per_slice[si].push_back(make({ScopeKind::individual, slice.slice_id, id}));
            }
        });

        FeatureTable t;
        t.level = level;
        t.condition = window_label(window);
        for (auto f : cfg_.families) t.families.push_back(tag(f));
        std::set<std::string> cols;
        for (const auto& vs : per_slice) {
            for (const auto& v : vs) {
                for (const auto& [k, _] : v.entries) cols.insert(k);
            }
        }
        t.columns.assign(cols.begin(), cols.end());
        std::size_t rows = 0;
        for (const auto& vs : per_slice) rows += vs.size();
        t.values = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(t.columns.size()), kNaN);
        Eigen::Index r = 0;
        for (std::size_t si = 0; si < sl.size(); ++si) {
            if (!skipped[si].empty()) {
                std::cerr << "convq: features: skipping slice " << sl[si].slice_id << ": " << skipped[si] << '\n';
            }
            for (const auto& v : per_slice[si]) {
                t.slice_ids.push_back(v.scope.slice_id);
                t.participant_ids.push_back(v.scope.participant_id);
                t.cardinality.push_back(static_cast<int>(sl[si].member_ids.size()));
                for (std::size_t c = 0; c < t.columns.size(); ++c) {
                    if (auto it = v.entries.find(t.columns[c]); it != v.entries.end()) t.values(r, static_cast<Eigen::Index>(c)) = it->second;
                }
                ++r;
            }
        }
        return t;
    });
}

void Pipeline::write_features(const FeatureTable& t, const fs::path& p) {
    csv::Writer w(p);
    w.comment(header());
    w.comment("condition=" + t.condition + " sets=" + join_tags(t.families));
    std::vector<std::string> head{"slice_id", "participant_id", "cardinality"};
    head.insert(head.end(), t.columns.begin(), t.columns.end());
    w.row(head);
    for (Eigen::Index r = 0; r < t.values.rows(); ++r) {
        std::vector<std::string> row{t.slice_ids[static_cast<std::size_t>(r)], t.participant_ids[static_cast<std::size_t>(r)],
                                     std::to_string(t.cardinality[static_cast<std::size_t>(r)])};
        for (Eigen::Index c = 0; c < t.values.cols(); ++c) row.push_back(csv::format(t.values(r, c)));
        w.row(row);
    }
    w.commit();
}

std::optional<FeatureTable> Pipeline::read_cached(const fs::path& p, AnnotationLevel level, const std::string& condition) {
    if (!fs::exists(p)) return std::nullopt;
    std::vector<std::string> tags;
    for (auto f : cfg_.families) tags.push_back(tag(f));
    {
        std::ifstream in(p);
        std::string l1, l2;
        std::getline(in, l1);
        std::getline(in, l2);
        if (l1 != "# " + header() || l2 != "# condition=" + condition + " sets=" + join_tags(tags)) return std::nullopt;
    }
    csv::Reader reader(p);
    auto head = reader.next();
    if (!head || head->size() < 3) return std::nullopt;
    FeatureTable t;
    t.level = level;
    t.condition = condition;
    t.families = tags;
    t.columns.assign(head->begin() + 3, head->end());
    std::vector<std::vector<double>> rows;
    while (auto row = reader.next()) {
        if (row->size() != head->size()) throw ParseError(p.string(), reader.line(), "wrong field count");
        t.slice_ids.push_back((*row)[0]);
        t.participant_ids.push_back((*row)[1]);
        const auto card = csv::parse_int((*row)[2]);
        if (!card) throw ParseError(p.string(), reader.line(), "bad cardinality");
        t.cardinality.push_back(static_cast<int>(*card));
        std::vector<double> vals;
        for (std::size_t c = 3; c < row->size(); ++c) {
            const auto& f = (*row)[c];
            if (f == "nan") {
                vals.push_back(kNaN);
            } else if (f == "inf" || f == "-inf") {
                vals.push_back(f == "inf" ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity());
            } else {
                const auto v = csv::parse_double(f);
                if (!v) throw ParseError(p.string(), reader.line(), "bad value '" + f + "'");
                vals.push_back(*v);
            }
        }
        rows.push_back(std::move(vals));
    }
    t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.columns.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) t.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
    return t;
}

const FeatureTable& Pipeline::features(AnnotationLevel level, const std::optional<WindowConfig>& window) {
    const auto condition = window_label(window);
    const auto key = to_string(level) + "_" + condition;
    if (auto it = tables_.find(key); it != tables_.end()) return it->second;
    const auto path = cfg_.output_dir / "features" / (key + ".csv");
    auto cached = stage("features", [&] { return read_cached(path, level, condition); });
    if (cached) return tables_.emplace(key, std::move(*cached)).first->second;
    auto t = compute_features(level, window);
    stage("features", [&] { write_features(t, out("features", key + ".csv")); });
    return tables_.emplace(key, std::move(t)).first->second;
}

Pipeline::Targets Pipeline::targets(const FeatureTable& table) {
    const auto& rel = reliability();
    const ReliabilityReport* rep = table.level == AnnotationLevel::group ? &rel.group
                                   : rel.individual                      ? &*rel.individual
                                                                         : nullptr;
    if (!rep) throw InputError("no individual-level annotations configured");
    std::map<std::string, const SampleReliability*> by_unit;
    for (const auto& s : rep->samples) by_unit[unit_key(s.slice_id, s.participant_id)] = &s;
    Targets t;
    for (std::size_t r = 0; r < table.slice_ids.size(); ++r) {
        const auto it = by_unit.find(unit_key(table.slice_ids[r], table.participant_ids[r]));
        if (it == by_unit.end() || !it->second->kept) continue;
        t.rows.push_back(r);
        t.pcq.push_back(it->second->mean_pcq);
        t.labels.push_back(binarize(it->second->mean_pcq, cfg_.binarize_threshold) == PcqLabel::high ? 1 : 0);
    }
    return t;
}

namespace {

// Usable predictor columns: finite on every row, not constant, not an
// exact copy of an earlier column.
std::vector<std::size_t> usable_columns(const Eigen::MatrixXd& x) {
    std::vector<std::size_t> keep;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const auto col = x.col(c);
        if (!col.allFinite() || col.rows() == 0) continue;
        if (col.maxCoeff() - col.minCoeff() <= 1e-12 * (1.0 + col.cwiseAbs().maxCoeff())) continue;
        bool dup = false;
        for (auto k : keep) {
            if (x.col(static_cast<Eigen::Index>(k)) == col) {
                dup = true;
                break;
            }
        }
        if (!dup) keep.push_back(static_cast<std::size_t>(c));
    }
    return keep;
}

Eigen::MatrixXd select(const Eigen::MatrixXd& x, const std::vector<std::size_t>& rows,
                       const std::vector<std::size_t>& cols) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < cols.size(); ++c) {
            out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                x(static_cast<Eigen::Index>(rows[r]), static_cast<Eigen::Index>(cols[c]));
        }
    }
    return out;
}

}  // namespace

StatsReport Pipeline::stats() {
    std::vector<AnnotationLevel> levels{AnnotationLevel::individual, AnnotationLevel::group};
    if (cfg_.individual_annotations.empty()) levels.erase(levels.begin());
    std::vector<std::pair<AnnotationLevel, const FeatureTable*>> tables;
    for (auto level : levels) tables.emplace_back(level, &features(level, cfg_.window));
    reliability();

    return stage("stats", [&] {
        StatsReport report;
        for (const auto& [level, table] : tables) {
            const auto dep = level_name(level);
            const auto tg = targets(*table);
            if (tg.rows.size() < 4) throw InputError(dep + ": fewer than 4 rated samples survive the kappa filter");
            Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(tg.pcq.data(), static_cast<Eigen::Index>(tg.pcq.size()));

            struct Set {
                std::string name;
                std::vector<std::string> names;
                Eigen::MatrixXd x;
            };
            std::vector<Set> sets;
            {
                Set card{"cardinality", {"cardinality"}, Eigen::MatrixXd(static_cast<Eigen::Index>(tg.rows.size()), 1)};
                for (std::size_t r = 0; r < tg.rows.size(); ++r) card.x(static_cast<Eigen::Index>(r), 0) = table->cardinality[tg.rows[r]];
                sets.push_back(std::move(card));
            }
            for (const std::string set : {"turn_taking", "coordination"}) {
                std::vector<std::size_t> cols;
                for (std::size_t c = 0; c < table->columns.size(); ++c) {
                    const auto& name = table->columns[c];
                    const auto fam = FeatureTable::column_family(name);
                    const bool in_set = set == "turn_taking" ? fam == "tt" : fam != "tt";
                    if (in_set && FeatureTable::column_aggregator(name) == cfg_.stats_aggregator) cols.push_back(c);
                }
                const Eigen::MatrixXd all = select(table->values, tg.rows, cols);
                const auto keep = usable_columns(all);
                Set s{set, {}, Eigen::MatrixXd(all.rows(), static_cast<Eigen::Index>(keep.size()))};
                for (std::size_t k = 0; k < keep.size(); ++k) {
                    s.x.col(static_cast<Eigen::Index>(k)) = all.col(static_cast<Eigen::Index>(keep[k]));
                    s.names.push_back(table->columns[cols[keep[k]]]);
                }
                sets.push_back(std::move(s));
            }

            for (const auto& s : sets) {
                if (s.x.cols() == 0) continue;
                const int n = static_cast<int>(s.x.rows());
                QuantileOptions qo;
                qo.bootstrap = cfg_.qls_bootstrap;
                qo.seed = cfg_.seed;
                qo.bonferroni_m = cfg_.bonferroni_m;
                qo.alpha = cfg_.alpha;
                for (Eigen::Index j = 0; j < s.x.cols(); ++j) {
                    try {
                        const auto q = quantile_regression(s.x.col(j), y, {s.names[static_cast<std::size_t>(j)]}, qo);
                        report.rows.push_back({dep, s.name, "QLS", q.predictors[0], n, q.beta[0], q.p_value[0],
                                               q.p_adjusted[0], q.significant[0], std::nullopt});
                    } catch (const Error& e) {
                        std::cerr << "convq: stats: QLS " << dep << " ~ " << s.names[static_cast<std::size_t>(j)]
                                  << " skipped: " << e.what() << '\n';
                    }
                }
                LassoOptions lo;
                lo.lambdas = lasso_lambda_grid(s.x, y, cfg_.lasso_grid);
                lo.bootstrap = cfg_.lasso_bootstrap;
                lo.seed = cfg_.seed;
                lo.bonferroni_m = cfg_.bonferroni_m;
                lo.alpha = cfg_.alpha;
                const auto la = lasso(s.x, y, s.names, lo);
                for (std::size_t j = 0; j < la.beta.size(); ++j) {
                    report.rows.push_back({dep, s.name, "LASSO", la.predictors[j], n, la.beta[j], la.p_value[j],
                                           la.p_adjusted[j], la.significant[j], la.lambda});
                }
                for (std::size_t j = 0; j < la.beta.size(); ++j) {
                    if (la.filtered[j]) continue;
                    const Eigen::VectorXd xj = s.x.col(static_cast<Eigen::Index>(j));
                    const auto [rho, p] = spearman(std::span<const double>(xj.data(), static_cast<std::size_t>(xj.size())),
                                                   std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
                    const double pa = bonferroni(std::vector<double>{p}, cfg_.bonferroni_m)[0];
                    report.rows.push_back({dep, s.name, "Spearman", la.predictors[j], n, rho, p, pa, pa < cfg_.alpha,
                                           std::nullopt});
                }
            }
        }

        const std::vector<std::tuple<std::string, std::string, int>> expected{
            {"IndivPCQ", "eq", +1},
            {"IndivPCQ", "d_silence", -1},
            {"GroupPCQ", "n_success_intr", -1},
            {"GroupPCQ", "n_unsuccess_intr", +1},
        };
        for (const auto& [dep, feat, sign] : expected) {
            const auto col = column_name(feat, "speaking", cfg_.stats_aggregator);
            for (const auto& row : report.rows) {
                if (row.dependent == dep && row.model == "QLS" && row.predictor == col) {
                    report.signs.push_back({dep, col, sign, row.beta, row.beta * sign > 0});
                }
            }
        }
        write_stats_report(report, cfg_.output_dir / "stats", header());
        return report;
    });
}

StudyResult Pipeline::predict(const std::string& study) {
    const auto level = cfg_.predict_level;
    std::vector<StudyCondition> conditions;
    const FeatureTable* base = nullptr;
    std::vector<std::pair<std::string, const FeatureTable*>> sources;
    auto family_filter = [](const std::vector<std::string>& fams) {
        return [fams](const std::string& col) {
            return std::find(fams.begin(), fams.end(), FeatureTable::column_family(col)) != fams.end();
        };
    };
    std::vector<std::pair<std::string, std::function<bool(const std::string&)>>> filters;
    const auto& aggs = cfg_.aggregators;
    auto agg_ok = [aggs](const std::string& col) {
        return std::find(aggs.begin(), aggs.end(), FeatureTable::column_aggregator(col)) != aggs.end();
    };
    const std::vector<std::string> coord{"sync", "caus", "conv"};

    if (study == "window") {
        for (const auto& w : cfg_.study_windows) {
            std::optional<WindowConfig> wc;
            if (w) wc = WindowConfig{*w, std::nullopt, cfg_.window ? cfg_.window->n_bands : 4};
            const auto* t = &features(level, wc);
            const auto f = family_filter(coord);
            sources.emplace_back(window_label(wc), t);
            filters.emplace_back(window_label(wc), [f, agg_ok](const std::string& c) { return f(c) && agg_ok(c); });
        }
    } else if (study == "fusion") {
        base = &features(level, cfg_.window);
        const std::vector<std::pair<std::string, std::vector<std::string>>> subsets{
            {"tt", {"tt"}}, {"sync", {"sync"}}, {"caus", {"caus"}}, {"conv", {"conv"}},
            {"coord", coord}, {"all", {"tt", "sync", "caus", "conv"}}};
        for (const auto& [name, fams] : subsets) {
            const auto f = family_filter(fams);
            sources.emplace_back(name, base);
            filters.emplace_back(name, [f, agg_ok](const std::string& c) { return f(c) && agg_ok(c); });
        }
    } else if (study == "aggregator") {
        base = &features(level, cfg_.window);
        for (auto a : all_aggregators()) {
            sources.emplace_back(to_string(a), base);
            filters.emplace_back(to_string(a), [a](const std::string& c) { return FeatureTable::column_aggregator(c) == a; });
        }
    } else {
        throw StageError("predict", "unknown study '" + study + "'", true);
    }

    return stage("predict", [&] {
        const auto tg = targets(*sources.front().second);
        for (std::size_t i = 0; i < sources.size(); ++i) {
            const auto* t = sources[i].second;
            if (t->slice_ids != sources.front().second->slice_ids) {
                throw InputError("study '" + study + "': conditions cover different samples");
            }
            std::vector<std::size_t> cols;
            for (std::size_t c = 0; c < t->columns.size(); ++c) {
                if (filters[i].second(t->columns[c])) cols.push_back(c);
            }
            const Eigen::MatrixXd all = select(t->values, tg.rows, cols);
            std::vector<std::size_t> finite;
            for (Eigen::Index c = 0; c < all.cols(); ++c) {
                if (all.col(c).allFinite()) finite.push_back(static_cast<std::size_t>(c));
            }
            StudyCondition cond{sources[i].first, Eigen::MatrixXd(all.rows(), static_cast<Eigen::Index>(finite.size()))};
            for (std::size_t k = 0; k < finite.size(); ++k) cond.x.col(static_cast<Eigen::Index>(k)) = all.col(static_cast<Eigen::Index>(finite[k]));
            conditions.push_back(std::move(cond));
        }
        auto result = run_study(study, conditions, tg.labels, cfg_.classifier);
        write_study_report(result, cfg_.output_dir / "predict", header());
        return result;
    });
}

void Pipeline::run() {
    ingest();
    slices();
    reliability();
    standardized();
    features(AnnotationLevel::group, cfg_.window);
    if (!cfg_.individual_annotations.empty()) features(AnnotationLevel::individual, cfg_.window);
    stats();
    for (const auto& s : cfg_.studies) predict(s);
}

void write_stats_report(const StatsReport& report, const fs::path& dir, const std::string& header) {
    fs::create_directories(dir);
    csv::Writer w(dir / "results.csv");
    w.comment(header);
    w.row({"dependent", "set", "model", "predictor", "n", "beta", "p", "p_adjusted", "significant", "lambda"});
    for (const auto& r : report.rows) {
        w.row({r.dependent, r.set, r.model, r.predictor, std::to_string(r.n), csv::format(r.beta), csv::format(r.p),
               csv::format(r.p_adjusted), r.significant ? "1" : "0", r.lambda ? csv::format(*r.lambda) : ""});
    }
    w.commit();

    csv::Writer g(dir / "grid.csv");
    g.comment(header);
    g.row({"dependent", "set", "model", "n_predictors", "n_significant", "min_p_adjusted"});
    for (const std::string dep : {"IndivPCQ", "GroupPCQ"}) {
        for (const std::string set : {"cardinality", "turn_taking", "coordination"}) {
            for (const std::string model : {"QLS", "LASSO", "Spearman"}) {
                int count = 0, sig = 0;
                double best = kNaN;
                for (const auto& r : report.rows) {
                    if (r.dependent != dep || r.set != set || r.model != model) continue;
                    ++count;
                    sig += r.significant ? 1 : 0;
                    if (!std::isnan(r.p_adjusted) && (std::isnan(best) || r.p_adjusted < best)) best = r.p_adjusted;
                }
                g.row({dep, set, model, std::to_string(count), std::to_string(sig), csv::format(best)});
            }
        }
    }
    g.commit();

    csv::Writer s(dir / "sign_agreement.csv");
    s.comment(header);
    s.row({"dependent", "predictor", "expected_sign", "beta", "agrees"});
    for (const auto& c : report.signs) {
        s.row({c.dependent, c.predictor, c.expected > 0 ? "+" : "-", csv::format(c.beta), c.agrees ? "1" : "0"});
    }
    s.commit();
}

void write_study_report(const StudyResult& study, const fs::path& dir, const std::string& header) {
    fs::create_directories(dir);
    csv::Writer w(dir / (study.name + ".csv"));
    w.comment(header);
    w.row({"rank", "condition", "auc_mean", "auc_std", "tp", "fp", "tn", "fn", "fold_auc", "fold_lambda", "fold_components"});
    for (std::size_t i = 0; i < study.ranked.size(); ++i) {
        const auto& c = study.ranked[i];
        std::vector<std::string> aucs, lambdas, comps;
        for (const auto& f : c.folds) {
            aucs.push_back(csv::format(f.auc));
            lambdas.push_back(csv::format(f.lambda));
            comps.push_back(std::to_string(f.components));
        }
        w.row({std::to_string(i + 1), c.name, csv::format(c.auc_mean), csv::format(c.auc_std),
               std::to_string(c.confusion.tp), std::to_string(c.confusion.fp), std::to_string(c.confusion.tn),
               std::to_string(c.confusion.fn), csv::join(aucs, ';'), csv::join(lambdas, ';'), csv::join(comps, ';')});
    }
    w.commit();
    csv::Writer r(dir / (study.name + "_roc.csv"));
    r.comment(header);
    r.row({"condition", "fpr", "tpr"});
    for (const auto& c : study.ranked) {
        for (const auto& p : c.roc) r.row({c.name, csv::format(p.fpr), csv::format(p.tpr)});
    }
    r.commit();
}

}  // namespace convq
