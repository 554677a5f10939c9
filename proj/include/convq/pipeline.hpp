#pragma once

// Batch pipeline: ingest -> slice -> reliability -> preprocess -> features
// -> aggregate -> stats / predict, driven by one JSON config file. Every
// output file starts with a "# convq config_hash=... seed=..." line.

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "convq/aggregate.hpp"
#include "convq/coordination.hpp"
#include "convq/core_data.hpp"
#include "convq/errors.hpp"
#include "convq/predict.hpp"
#include "convq/preprocess.hpp"
#include "convq/reliability.hpp"
#include "convq/stats.hpp"
#include "convq/synth.hpp"
#include "convq/turntaking.hpp"

namespace convq {

/// Raised when a pipeline stage fails; the message names the stage.
class StageError : public Error {
public:
    StageError(const std::string& stage, const std::string& cause, bool user_error)
        : Error("stage '" + stage + "' failed: " + cause), stage_(stage), user_error_(user_error) {}
    const std::string& stage() const noexcept { return stage_; }
    bool user_error() const noexcept { return user_error_; }

private:
    std::string stage_;
    bool user_error_;
};

/// 64-bit FNV-1a digest as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

struct PipelineConfig {
    std::filesystem::path accel;
    std::filesystem::path speaking;
    std::filesystem::path groups;
    std::filesystem::path group_annotations;
    std::filesystem::path individual_annotations;  // optional
    std::filesystem::path output_dir = "convq_out";

    double rate_hz = kDefaultSampleRateHz;
    SlicePolicy slice_policy;
    std::optional<WindowConfig> window;  // window of the main feature table
    std::vector<FeatureFamily> families{FeatureFamily::turn_taking, FeatureFamily::synchrony,
                                        FeatureFamily::causality, FeatureFamily::convergence};
    std::vector<std::string> channels;  // empty = all seven
    std::vector<Aggregator> aggregators;  // empty = all six
    CoordinationConfig coordination;
    TurnConfig turns;
    OverlapMode overlap = OverlapMode::joint_speech;

    double kappa_threshold = 0.2;
    double binarize_threshold = 3.0;

    // hypothesis tests
    Aggregator stats_aggregator = Aggregator::mean;
    int bonferroni_m = 18;
    double alpha = kSignificanceLevel;
    int qls_bootstrap = 200;
    int lasso_bootstrap = 200;
    int lasso_grid = 30;

    // prediction studies
    std::vector<std::string> studies{"window", "fusion", "aggregator"};
    std::vector<std::optional<double>> study_windows{std::nullopt, 1.0, 3.0, 5.0, 10.0};
    AnnotationLevel predict_level = AnnotationLevel::group;
    ClassifierConfig classifier;

    std::uint64_t seed = 20240101;
    std::size_t workers = 0;  // 0 keeps CONVQ_WORKERS
    std::string hash;         // digest of the config text
};

/// Parses a JSON config. Relative paths resolve against `base_dir`.
PipelineConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir = ".");

/// Reads and parses a config file and checks that every input path exists.
PipelineConfig load_config(const std::filesystem::path& path);

/// Scenario settings for the synthetic generator from a JSON file.
ScenarioConfig parse_scenario(std::string_view json_text);
ScenarioConfig load_scenario(const std::filesystem::path& path);

/// Short label of a window setting: "none" or e.g. "3s".
std::string window_label(const std::optional<WindowConfig>& w);

struct Dataset {
    std::vector<AccelRecording> accel;
    std::vector<SpeakingStatus> speaking;
    std::vector<ConversationGroup> groups;
    AnnotationSet group_annotations;
    std::optional<AnnotationSet> individual_annotations;
    std::vector<SampleGap> gaps;
    std::vector<std::string> warnings;
};

struct ReliabilityOutputs {
    ReliabilityReport group;
    std::optional<ReliabilityReport> individual;
    ValidityReport group_validity;
    std::optional<ValidityReport> individual_validity;
};

/// One row per rated unit (slice, or slice and participant).
struct FeatureTable {
    AnnotationLevel level = AnnotationLevel::group;
    std::string condition;
    std::vector<std::string> families;  // tags present in the table
    std::vector<std::string> slice_ids;
    std::vector<ParticipantId> participant_ids;  // empty strings at group level
    std::vector<int> cardinality;
    std::vector<std::string> columns;
    Eigen::MatrixXd values;  // rows x columns, NaN where undefined

    /// Family tag of a column: tt for "speaking" columns, else from the feature.
    static std::string column_family(const std::string& column);
    static Aggregator column_aggregator(const std::string& column);
};

struct StatsRow {
    std::string dependent;  // IndivPCQ or GroupPCQ
    std::string set;        // cardinality, turn_taking, coordination
    std::string model;      // QLS, LASSO, Spearman
    std::string predictor;
    int n = 0;
    double beta = 0.0;
    double p = 0.0;
    double p_adjusted = 0.0;
    bool significant = false;
    std::optional<double> lambda;
};

struct SignCheck {
    std::string dependent;
    std::string predictor;
    int expected = 0;
    double beta = 0.0;
    bool agrees = false;
};

struct StatsReport {
    std::vector<StatsRow> rows;
    std::vector<SignCheck> signs;
};

class Pipeline {
public:
    explicit Pipeline(PipelineConfig cfg);

    const PipelineConfig& config() const noexcept { return cfg_; }

    const Dataset& ingest();
    const SliceResult& slices();
    const ReliabilityOutputs& reliability();
    /// Z-scored recordings, one per participant.
    const std::map<ParticipantId, AccelRecording>& standardized();
    /// Feature tables for a window setting; cached on disk and in memory.
    const FeatureTable& features(AnnotationLevel level, const std::optional<WindowConfig>& window);
    StatsReport stats();
    StudyResult predict(const std::string& study);

    /// All stages in order, writing every report.
    void run();

    /// Labels (0/1) and raw PCQ of the table rows that survived the kappa
    /// filter; rows without a rating are dropped from the returned index.
    struct Targets {
        std::vector<std::size_t> rows;
        std::vector<double> pcq;
        std::vector<int> labels;
    };
    Targets targets(const FeatureTable& table);

private:
    template <typename F>
    auto stage(const std::string& name, F&& fn) -> decltype(fn());

    std::string header() const;
    std::filesystem::path out(const std::string& sub, const std::string& file) const;
    FeatureTable compute_features(AnnotationLevel level, const std::optional<WindowConfig>& window);
    std::optional<FeatureTable> read_cached(const std::filesystem::path& p, AnnotationLevel level,
                                            const std::string& condition);
    void write_features(const FeatureTable& t, const std::filesystem::path& p);

    PipelineConfig cfg_;
    std::optional<Dataset> data_;
    std::optional<SliceResult> slices_;
    std::optional<ReliabilityOutputs> reliability_;
    std::optional<std::map<ParticipantId, AccelRecording>> standardized_;
    std::map<std::string, FeatureTable> tables_;
};

/// Writers for the report files (also used by the CLI).
void write_stats_report(const StatsReport& report, const std::filesystem::path& dir,
                        const std::string& header);
void write_study_report(const StudyResult& study, const std::filesystem::path& dir,
                        const std::string& header);

}  // namespace convq
