#include "convq/turntaking.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "convq/errors.hpp"

namespace convq {

SampleIndex gap_samples(const TurnConfig& cfg, double rate_hz) {
    return std::llround(cfg.gap_threshold_ms / 1000.0 * rate_hz);
}

TurnSequence segment_turns(const ParticipantId& id, std::span<const std::uint8_t> status,
                           double rate_hz, SampleIndex offset, const TurnConfig& cfg) {
    if (!(rate_hz > 0)) throw InputError("segment_turns: rate must be positive");
    TurnSequence seq{id, rate_hz, cfg, {}};
    const SampleIndex gap = gap_samples(cfg, rate_hz);
    const auto n = static_cast<SampleIndex>(status.size());
    SampleIndex i = 0;
    while (i < n) {
        if (!status[static_cast<std::size_t>(i)]) {
            ++i;
            continue;
        }
        SampleIndex j = i;
        while (j < n && status[static_cast<std::size_t>(j)]) ++j;
        if (!seq.turns.empty() && (offset + i) - seq.turns.back().end <= gap) {
            seq.turns.back().end = offset + j;
        } else {
            seq.turns.push_back({offset + i, offset + j, false});
        }
        i = j;
    }
    for (auto& t : seq.turns) {
        t.backchannel = static_cast<double>(t.end - t.start) / rate_hz <= cfg.backchannel_max_s + 1e-9;
    }
    return seq;
}

TurnSequence segment_turns(const SpeakingStatus& status, const TurnConfig& cfg) {
    return segment_turns(status.participant_id, status.status, status.rate_hz, status.start_t, cfg);
}

Equality equality(const std::vector<std::span<const std::uint8_t>>& statuses) {
    if (statuses.empty()) throw InputError("equality: empty group");
    const std::size_t len = statuses.front().size();
    if (len == 0) throw InputError("equality: zero-length conversation");
    Equality out;
    for (const auto& s : statuses) {
        if (s.size() != len) throw InputError("equality: status lengths differ");
        const auto spoken = std::accumulate(s.begin(), s.end(), std::size_t{0});
        out.d_speak.push_back(static_cast<double>(spoken) / static_cast<double>(len));
    }
    const double mean = std::accumulate(out.d_speak.begin(), out.d_speak.end(), 0.0) /
                        static_cast<double>(out.d_speak.size());
    if (!(mean > 0)) throw UndefinedError("equality undefined: nobody in the group speaks");
    for (double d : out.d_speak) out.eq.push_back((d - mean) / mean);
    return out;
}

Fluency fluency(std::span<const std::uint8_t> status, const TurnSequence& turns) {
    Fluency f;
    if (!status.empty()) {
        const auto spoken = std::accumulate(status.begin(), status.end(), std::size_t{0});
        f.d_silence = 1.0 - static_cast<double>(spoken) / static_cast<double>(status.size());
    }
    for (const auto& t : turns.turns) f.n_backchannels += t.backchannel ? 1 : 0;
    return f;
}

Synchronization synchronization(const std::vector<std::span<const std::uint8_t>>& statuses,
                                const std::vector<TurnSequence>& turns, OverlapMode mode) {
    const std::size_t n = statuses.size();
    if (n < 2) throw InputError("synchronization: need at least 2 members");
    if (turns.size() != n) throw InputError("synchronization: one turn sequence per member");
    const std::size_t len = statuses.front().size();
    for (const auto& s : statuses) {
        if (s.size() != len) throw InputError("synchronization: status lengths differ");
    }
    Synchronization out;
    out.d_overlap.assign(n, 0.0);
    out.n_success.assign(n, 0);
    out.n_unsuccess.assign(n, 0);
    out.success_by.assign(n, std::vector<int>(n, 0));
    out.unsuccess_by.assign(n, std::vector<int>(n, 0));

    if (len > 0) {
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t hits = 0;
            for (std::size_t t = 0; t < len; ++t) {
                if (mode == OverlapMode::joint_speech) {
                    if (!statuses[i][t]) continue;
                    for (std::size_t j = 0; j < n; ++j) {
                        if (j != i && statuses[j][t]) {
                            ++hits;
                            break;
                        }
                    }
                } else {
                    bool all_equal = true;
                    for (std::size_t j = 0; j < n && all_equal; ++j) {
                        if (j != i && statuses[j][t] != statuses[i][t]) all_equal = false;
                    }
                    hits += all_equal ? 1 : 0;
                }
            }
            out.d_overlap[i] = static_cast<double>(hits) / static_cast<double>(len);
        }
    }

    for (std::size_t j = 0; j < n; ++j) {
        for (const auto& tj : turns[j].turns) {
            for (std::size_t i = 0; i < n; ++i) {
                if (i == j) continue;
                for (const auto& ti : turns[i].turns) {
                    if (ti.start < tj.start && tj.start < ti.end) {
                        if (ti.end < tj.end) {
                            ++out.success_by[j][i];
                            ++out.n_success[j];
                        } else {
                            ++out.unsuccess_by[j][i];
                            ++out.n_unsuccess[j];
                        }
                        break;  // i's turns do not overlap each other
                    }
                }
            }
        }
    }
    return out;
}

const std::vector<std::string>& turn_feature_names() {
    static const std::vector<std::string> names{"eq",        "abs_eq",         "d_silence",
                                                "n_backchannels", "d_overlap", "n_success_intr",
                                                "n_unsuccess_intr"};
    return names;
}

double turn_feature_value(const MemberTurnFeatures& f, const std::string& name) {
    if (name == "eq") return f.eq;
    if (name == "abs_eq") return std::abs(f.eq);
    if (name == "d_speak") return f.d_speak;
    if (name == "d_silence") return f.d_silence;
    if (name == "n_backchannels") return f.n_backchannels;
    if (name == "d_overlap") return f.d_overlap;
    if (name == "n_success_intr") return f.n_success_intr;
    if (name == "n_unsuccess_intr") return f.n_unsuccess_intr;
    throw InputError("unknown turn feature '" + name + "'");
}

std::vector<MemberTurnFeatures> compute_turn_features(
    const std::vector<ParticipantId>& ids,
    const std::vector<std::span<const std::uint8_t>>& statuses, double rate_hz, SampleIndex offset,
    const TurnConfig& cfg, OverlapMode mode, std::vector<TurnSequence>* turns_out) {
    if (ids.size() != statuses.size()) throw InputError("turn features: ids and statuses differ");
    std::vector<TurnSequence> turns;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        turns.push_back(segment_turns(ids[i], statuses[i], rate_hz, offset, cfg));
    }
    std::vector<double> eq(ids.size(), std::numeric_limits<double>::quiet_NaN());
    std::vector<double> d_speak(ids.size(), 0.0);
    try {
        auto e = equality(statuses);
        eq = e.eq;
        d_speak = e.d_speak;
    } catch (const UndefinedError&) {
        // silent slice: eq stays NaN
    }
    const auto sync = synchronization(statuses, turns, mode);
    std::vector<MemberTurnFeatures> out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto fl = fluency(statuses[i], turns[i]);
        out.push_back({ids[i], d_speak[i], eq[i], fl.d_silence, fl.n_backchannels, sync.d_overlap[i],
                       sync.n_success[i], sync.n_unsuccess[i]});
    }
    if (turns_out) *turns_out = std::move(turns);
    return out;
}

}  // namespace convq
