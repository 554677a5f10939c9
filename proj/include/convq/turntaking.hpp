#pragma once

// Speaking turns and turn-taking features (equality, fluency,
// synchronisation) computed from binary speaking status.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "convq/core_data.hpp"

namespace convq {

struct TurnConfig {
    double gap_threshold_ms = 500.0;  // silences up to this long are bridged
    double backchannel_max_s = 2.0;   // inclusive
};

struct Turn {
    SampleIndex start = 0;  // inclusive
    SampleIndex end = 0;    // exclusive
    bool backchannel = false;
    bool operator==(const Turn&) const = default;
};

struct TurnSequence {
    ParticipantId participant_id;
    double rate_hz = kDefaultSampleRateHz;
    TurnConfig config;
    std::vector<Turn> turns;
};

/// Gap threshold in samples: round(gap_threshold_ms / 1000 * rate).
SampleIndex gap_samples(const TurnConfig& cfg, double rate_hz);

/// Merges speech runs separated by at most gap_samples() silent samples and
/// flags turns no longer than the back-channel limit. `offset` is the clock
/// index of status[0].
TurnSequence segment_turns(const ParticipantId& id, std::span<const std::uint8_t> status,
                           double rate_hz, SampleIndex offset = 0, const TurnConfig& cfg = {});

TurnSequence segment_turns(const SpeakingStatus& status, const TurnConfig& cfg = {});

struct Equality {
    std::vector<double> d_speak;
    std::vector<double> eq;
};

/// d_speak = fraction of speaking samples; eq = (d_speak - mean) / mean.
/// Throws UndefinedError when nobody speaks.
Equality equality(const std::vector<std::span<const std::uint8_t>>& statuses);

struct Fluency {
    double d_silence = 1.0;
    int n_backchannels = 0;
};

Fluency fluency(std::span<const std::uint8_t> status, const TurnSequence& turns);

enum class OverlapMode {
    joint_speech,  // i speaks and at least one other member speaks
    literal,       // every other member's status equals i's status
};

struct Synchronization {
    std::vector<double> d_overlap;
    std::vector<int> n_success;    // interruptions made by member i that took the floor
    std::vector<int> n_unsuccess;  // interruptions made by member i that did not
    // success_by[j][i]: successful interruptions of i by j (same for unsuccess_by)
    std::vector<std::vector<int>> success_by;
    std::vector<std::vector<int>> unsuccess_by;
};

/// Interruption: j starts a turn strictly inside a turn of i. It succeeds
/// when i's turn ends before j's and fails otherwise.
Synchronization synchronization(const std::vector<std::span<const std::uint8_t>>& statuses,
                                const std::vector<TurnSequence>& turns,
                                OverlapMode mode = OverlapMode::joint_speech);

struct MemberTurnFeatures {
    ParticipantId participant_id;
    double d_speak = 0.0;
    double eq = 0.0;
    double d_silence = 1.0;
    int n_backchannels = 0;
    double d_overlap = 0.0;
    int n_success_intr = 0;
    int n_unsuccess_intr = 0;
};

/// Names of the per-member turn-taking features passed on to aggregation.
const std::vector<std::string>& turn_feature_names();

/// Value of the named feature (see turn_feature_names()); "abs_eq" is |eq|.
double turn_feature_value(const MemberTurnFeatures& f, const std::string& name);

/// Segments every member and computes all per-member features of a slice.
/// eq is NaN for a silent group.
std::vector<MemberTurnFeatures> compute_turn_features(
    const std::vector<ParticipantId>& ids,
    const std::vector<std::span<const std::uint8_t>>& statuses, double rate_hz,
    SampleIndex offset = 0, const TurnConfig& cfg = {},
    OverlapMode mode = OverlapMode::joint_speech,
    std::vector<TurnSequence>* turns_out = nullptr);

}  // namespace convq
