#pragma once

// Synthetic "mini-mingle" data with known coordination, turn-taking and
// PCQ parameters, written in the same file formats the loaders read.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "convq/core_data.hpp"
#include "convq/turntaking.hpp"

namespace convq {

/// Unit-variance AR(1) process.
std::vector<double> ar1_process(std::size_t n, double phi, std::mt19937_64& rng);

/// Leader `a` is an AR(1) process per axis; follower b_t = c a_{t-lag} +
/// (1 - c) sigma e_t with white e. Recordings use ids "a" and "b" on the
/// clock 0..n-1. Throws InputError unless n > 10 * lag and c is in [0, 1].
std::pair<AccelRecording, AccelRecording> gen_coupled_pair(int lag, double coupling, double sigma,
                                                           std::size_t n, std::uint64_t seed,
                                                           double ar_coefficient = 0.95,
                                                           double rate_hz = kDefaultSampleRateHz);

struct TurnScenarioConfig {
    int members = 3;
    double equality_skew = 0.0;          // target share of member i is proportional to (1 - skew)^i
    double interruption_rate = 0.0;      // planted interruptions per minute
    double success_fraction = 0.5;       // share of planted interruptions that take the floor
    int exact_success = -1;              // when >= 0, plant exactly this many (if turns allow)
    int exact_unsuccess = -1;
    std::size_t samples = 1200;
    double rate_hz = kDefaultSampleRateHz;
    double min_turn_s = 1.0;
    double max_turn_s = 6.0;
    TurnConfig turn_config;
};

struct TurnScenario {
    std::vector<std::vector<std::uint8_t>> status;  // one row per member
    std::vector<int> planted_success;    // per interrupting member
    std::vector<int> planted_unsuccess;  // per interrupting member
};

/// Floor-holding chain: the next speaker is the member furthest below its
/// target share, turns are separated by silences longer than the gap
/// threshold, and interruptions are planted with known outcomes.
TurnScenario gen_turn_sequence(const TurnScenarioConfig& cfg, std::uint64_t seed);

enum class LabelRule {
    coupling_equality,  // high iff strong coupling and low equality skew
    coupling,           // high iff strong coupling
    cardinality,        // latent quality decays with group size
};

std::string to_string(LabelRule r);
LabelRule label_rule_from_string(const std::string& s);

struct ScenarioConfig {
    int n_groups = 40;
    int min_members = 2;
    int max_members = 6;
    double min_duration_s = 40.0;
    double max_duration_s = 100.0;
    double max_start_offset_s = 5.0;
    double rate_hz = kDefaultSampleRateHz;
    double ar_coefficient = 0.95;
    double noise_sigma = 1.0;
    int min_lag = 1;  // samples
    int max_lag = 10;
    double low_coupling_min = 0.0;
    double low_coupling_max = 0.3;
    double high_coupling_min = 0.7;
    double high_coupling_max = 0.95;
    double max_convergence_rate = 0.5;  // follower noise shrinks by up to this fraction
    double drift_sigma = 0.0;           // independent slow posture drift added to every member
    double drift_ar = 0.995;
    double low_skew_max = 0.2;
    double high_skew_min = 0.5;
    double high_skew_max = 0.8;
    double interruption_rate = 2.0;  // per minute
    double success_fraction = 0.5;
    LabelRule label_rule = LabelRule::coupling_equality;
    double high_fraction = 0.5;
    double high_quality = 4.0;  // latent PCQ of a high group
    double low_quality = 2.0;
    double cardinality_slope = 0.4;  // latent drop per extra member (cardinality rule)
    double group_jitter = 0.25;
    double member_jitter = 0.3;
    int n_raters = 3;
    double rater_noise = 0.5;  // sd of per-rating noise in categories
    double rater_bias = 0.2;   // sd of per-rater offsets
    SlicePolicy slice_policy;
    std::uint64_t seed = 7;
};

struct GroupTruth {
    std::string group_id;
    int cardinality = 0;
    double duration_s = 0.0;
    int label = 0;  // 1 = high PCQ
    double latent = 0.0;
    double coupling = 0.0;
    std::vector<int> lags;  // per follower, samples
    double equality_skew = 0.0;
    double convergence_rate = 0.0;
    int planted_success = 0;
    int planted_unsuccess = 0;
};

struct MiniMingle {
    std::vector<AccelRecording> accel;
    std::vector<SpeakingStatus> speaking;
    std::vector<ConversationGroup> groups;
    AnnotationSet group_annotations;
    AnnotationSet individual_annotations;
    std::vector<GroupTruth> truth;
};

MiniMingle gen_mini_mingle(const ScenarioConfig& cfg);

/// Writes accel.csv, speaking.csv, groups.csv, annotations_group.csv,
/// annotations_individual.csv and ground_truth.csv into `dir`.
void write_mini_mingle(const MiniMingle& data, const std::filesystem::path& dir);

}  // namespace convq
