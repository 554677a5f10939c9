#pragma once

// Data model and delimited-file ingestion for accelerometer, speaking-status,
// group-membership and annotation streams, plus thin-slicing of groups.
//
// Every stream is indexed on one integer sample clock. Files are
// comma-separated with a header row, UTF-8, LF line endings.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace convq {

using ParticipantId = std::string;
using SampleIndex = std::int64_t;

inline constexpr double kDefaultSampleRateHz = 20.0;

/// Tri-axial acceleration of one participant, stored axis-major.
struct AccelRecording {
    ParticipantId participant_id;
    double sample_rate_hz = kDefaultSampleRateHz;
    std::vector<SampleIndex> t;
    std::array<std::vector<double>, 3> axes;  // x, y, z

    std::size_t size() const noexcept { return t.size(); }
    bool operator==(const AccelRecording&) const = default;
};

/// Binary speaking status of one participant starting at `start_t`.
struct SpeakingStatus {
    ParticipantId participant_id;
    double rate_hz = kDefaultSampleRateHz;
    SampleIndex start_t = 0;
    std::vector<std::uint8_t> status;

    bool operator==(const SpeakingStatus&) const = default;
};

/// Free-standing conversation group over [start_t, end_t).
struct ConversationGroup {
    std::string group_id;
    std::vector<ParticipantId> member_ids;  // sorted, unique, >= 2
    SampleIndex start_t = 0;
    SampleIndex end_t = 0;

    bool operator==(const ConversationGroup&) const = default;
};

struct ConversationSlice {
    std::string slice_id;
    std::string group_id;
    std::vector<ParticipantId> member_ids;
    SampleIndex start_t = 0;
    SampleIndex end_t = 0;
    double duration_s = 0.0;

    bool operator==(const ConversationSlice&) const = default;
};

enum class AnnotationLevel { group, individual };

std::string to_string(AnnotationLevel level);

struct QuestionnaireItem {
    int id = 0;             // numbering of the original questionnaire (1-based)
    bool negative = false;  // true for reverse-oriented items
    bool operator==(const QuestionnaireItem&) const = default;
};

/// The ten-item PCQ questionnaire for the given level, ordered by item id.
std::vector<QuestionnaireItem> questionnaire(AnnotationLevel level);

struct AnnotationRow {
    std::string rater_id;
    std::string slice_id;
    ParticipantId participant_id;  // empty at group level
    std::vector<int> values;       // one per item of the owning set, in {1..5}
    bool operator==(const AnnotationRow&) const = default;
};

struct AnnotationSet {
    AnnotationLevel level = AnnotationLevel::group;
    std::vector<QuestionnaireItem> items;
    std::vector<AnnotationRow> ratings;

    std::vector<bool> negative_flags() const;
    bool operator==(const AnnotationSet&) const = default;
};

struct SampleGap {
    ParticipantId participant_id;
    SampleIndex after_t = 0;
    SampleIndex missing = 0;
};

struct AccelLoadResult {
    std::vector<AccelRecording> recordings;  // sorted by participant id
    std::vector<SampleGap> gaps;
};

/// Reads `participant_id,t,ax,ay,az`. Rows may be interleaved across
/// participants; each recording is returned sorted by t. Gaps are reported
/// in the result, never filled.
AccelLoadResult load_accel(const std::filesystem::path& path,
                           double sample_rate_hz = kDefaultSampleRateHz);

/// Reads `participant_id,t,status`. All participants must cover the same
/// contiguous range of the clock.
std::vector<SpeakingStatus> load_speaking(const std::filesystem::path& path,
                                          double rate_hz = kDefaultSampleRateHz);

/// Reads `group_id,member_ids,start_t,end_t` with members joined by ';'.
std::vector<ConversationGroup> load_groups(const std::filesystem::path& path);

/// Reads `rater_id,slice_id[,participant_id],item_<k>...`. Item columns must
/// name items of the level's questionnaire.
AnnotationSet load_annotations(const std::filesystem::path& path, AnnotationLevel level);

void write_accel(const std::filesystem::path& path, const std::vector<AccelRecording>& recs);
void write_speaking(const std::filesystem::path& path, const std::vector<SpeakingStatus>& s);
void write_groups(const std::filesystem::path& path, const std::vector<ConversationGroup>& g);
void write_annotations(const std::filesystem::path& path, const AnnotationSet& set);

/// Nearest-neighbour resampling of a recording onto a clock of `target_rate_hz`.
AccelRecording resample_nearest(const AccelRecording& rec, double target_rate_hz);

/// Participant ids referenced by groups but absent from the known id list.
std::vector<ParticipantId> orphan_members(const std::vector<ConversationGroup>& groups,
                                          const std::vector<ParticipantId>& known_ids);

/// Individual-level rows whose participant is not a member of the rated
/// slice, or rows naming an unknown slice. Returned as "slice/participant".
std::vector<std::string> orphan_annotations(const AnnotationSet& set,
                                            const std::vector<ConversationSlice>& slices);

struct SlicePolicy {
    double slice_len_s = 60.0;
    double min_dur_s = 30.0;
    double rate_hz = kDefaultSampleRateHz;
};

struct SliceResult {
    std::vector<ConversationSlice> slices;
    std::vector<std::string> dropped_group_ids;
};

/// Splits long groups (> 2 slice lengths) into consecutive slices, keeps
/// medium groups whole and drops groups shorter than the minimum. A trailing
/// remainder shorter than a slice becomes its own slice when it meets the
/// minimum duration and is merged into the last full slice otherwise.
SliceResult slice_conversations(const std::vector<ConversationGroup>& groups,
                                const SlicePolicy& policy = {});

/// Slices re-expressed as groups (group_id = slice_id), for re-slicing.
std::vector<ConversationGroup> as_groups(const std::vector<ConversationSlice>& slices);

/// Contiguous copy of samples [start_t, end_t) of one axis; throws
/// InputError if any sample in the range is missing.
std::vector<double> extract_axis(const AccelRecording& rec, int axis,
                                 SampleIndex start_t, SampleIndex end_t);

AccelRecording extract_window(const AccelRecording& rec, SampleIndex start_t,
                              SampleIndex end_t);

std::vector<std::uint8_t> extract_status(const SpeakingStatus& s, SampleIndex start_t,
                                         SampleIndex end_t);

}  // namespace convq
