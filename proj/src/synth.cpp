#include "convq/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "convq/errors.hpp"
#include "convq/parallel.hpp"
#include "convq/random.hpp"
#include "csv.hpp"

namespace convq {

namespace {

SampleIndex to_samples(double seconds, double rate_hz) {
    return static_cast<SampleIndex>(std::llround(seconds * rate_hz));
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
}

SampleIndex uniform_int(std::mt19937_64& rng, SampleIndex lo, SampleIndex hi) {
    return std::uniform_int_distribution<SampleIndex>(lo, hi)(rng);
}

double quantize(double v) { return std::round(v * 1e6) / 1e6; }

std::string padded(int value, int width) {
    std::string s = std::to_string(value);
    return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

}  // namespace

std::vector<double> ar1_process(std::size_t n, double phi, std::mt19937_64& rng) {
    if (!(std::abs(phi) < 1.0)) throw InputError("AR(1) coefficient must lie in (-1, 1)");
    std::normal_distribution<double> normal(0.0, 1.0);
    const double innovation = std::sqrt(1.0 - phi * phi);
    std::vector<double> x(n);
    double prev = normal(rng);
    for (std::size_t t = 0; t < n; ++t) {
        prev = phi * prev + innovation * normal(rng);
        x[t] = prev;
    }
    return x;
}

std::pair<AccelRecording, AccelRecording> gen_coupled_pair(int lag, double coupling, double sigma,
                                                           std::size_t n, std::uint64_t seed,
                                                           double ar_coefficient, double rate_hz) {
    if (lag < 0) throw InputError("coupled pair: lag must be non-negative");
    if (!(coupling >= 0 && coupling <= 1)) throw InputError("coupled pair: coupling must lie in [0, 1]");
    if (n <= 10 * static_cast<std::size_t>(lag) || n < 2) throw InputError("coupled pair: series too short for the lag");
    auto rng = seeded_rng(seed, 0);
    std::normal_distribution<double> normal(0.0, 1.0);
    AccelRecording a{"a", rate_hz, {}, {}};
    AccelRecording b{"b", rate_hz, {}, {}};
    a.t.resize(n);
    std::iota(a.t.begin(), a.t.end(), SampleIndex{0});
    b.t = a.t;
    const auto L = static_cast<std::size_t>(lag);
    for (int axis = 0; axis < 3; ++axis) {
        const auto base = ar1_process(n + L, ar_coefficient, rng);
        auto& av = a.axes[static_cast<std::size_t>(axis)];
        auto& bv = b.axes[static_cast<std::size_t>(axis)];
        av.assign(base.begin() + static_cast<std::ptrdiff_t>(L), base.end());
        bv.resize(n);
        for (std::size_t t = 0; t < n; ++t) bv[t] = coupling * base[t] + (1.0 - coupling) * sigma * normal(rng);
    }
    return {std::move(a), std::move(b)};
}

TurnScenario gen_turn_sequence(const TurnScenarioConfig& cfg, std::uint64_t seed) {
    if (cfg.members < 2) throw InputError("turn sequence: need at least 2 members");
    if (!(cfg.equality_skew >= 0 && cfg.equality_skew < 1)) throw InputError("turn sequence: skew must lie in [0, 1)");
    if (cfg.interruption_rate < 0) throw InputError("turn sequence: negative interruption rate");
    const auto n = static_cast<std::size_t>(cfg.members);
    const SampleIndex total = static_cast<SampleIndex>(cfg.samples);
    const SampleIndex g = gap_samples(cfg.turn_config, cfg.rate_hz);
    const SampleIndex min_len = std::max<SampleIndex>(2, to_samples(cfg.min_turn_s, cfg.rate_hz));
    const SampleIndex max_len = std::max(min_len, to_samples(cfg.max_turn_s, cfg.rate_hz));
    const SampleIndex max_gap = g + 1 + std::max<SampleIndex>(1, g);
    const SampleIndex burst_lo = std::max<SampleIndex>(1, to_samples(0.5, cfg.rate_hz));
    const SampleIndex burst_hi = std::max(burst_lo, to_samples(1.5, cfg.rate_hz));
    const SampleIndex overlap_hi = std::clamp<SampleIndex>(min_len / 2, 1, std::max<SampleIndex>(1, g));

    std::vector<double> weight(n);
    for (std::size_t i = 0; i < n; ++i) weight[i] = std::pow(1.0 - cfg.equality_skew, static_cast<double>(i));
    const double wsum = std::accumulate(weight.begin(), weight.end(), 0.0);
    for (auto& w : weight) w /= wsum;

    const bool exact = cfg.exact_success >= 0 || cfg.exact_unsuccess >= 0;
    int want_success = std::max(0, cfg.exact_success);
    int want_unsuccess = std::max(0, cfg.exact_unsuccess);
    const double mean_cycle = 0.5 * static_cast<double>(min_len + max_len) + 0.5 * static_cast<double>(g + 1 + max_gap);
    const double p_event = std::min(1.0, cfg.interruption_rate * mean_cycle / (60.0 * cfg.rate_hz));

    TurnScenario out;
    out.status.assign(n, std::vector<std::uint8_t>(cfg.samples, 0));
    out.planted_success.assign(n, 0);
    out.planted_unsuccess.assign(n, 0);
    auto rng = seeded_rng(seed, 0);
    std::bernoulli_distribution event_draw(p_event);
    std::bernoulli_distribution success_draw(std::clamp(cfg.success_fraction, 0.0, 1.0));

    constexpr SampleIndex kNever = std::numeric_limits<SampleIndex>::min() / 4;
    std::vector<SampleIndex> last_end(n, kNever);
    std::vector<double> spoken(n, 0.0);
    auto fill = [&](std::size_t who, SampleIndex from, SampleIndex to) {
        for (SampleIndex t = from; t < to; ++t) out.status[who][static_cast<std::size_t>(t)] = 1;
        spoken[who] += static_cast<double>(to - from);
        last_end[who] = std::max(last_end[who], to);
    };
    auto next_speaker = [&](std::size_t current) {
        const double sum = std::accumulate(spoken.begin(), spoken.end(), 0.0);
        std::size_t best = current == 0 ? 1 : 0;
        double best_deficit = -std::numeric_limits<double>::infinity();
        for (std::size_t m = 0; m < n; ++m) {
            if (m == current) continue;
            const double deficit = weight[m] * sum - spoken[m];
            if (deficit > best_deficit) {
                best_deficit = deficit;
                best = m;
            }
        }
        return best;
    };

    enum class Event { none, success, unsuccess };
    std::size_t holder = 0;
    SampleIndex t = uniform_int(rng, 0, g);
    int turn_index = 0;
    while (t < total) {
        const SampleIndex start = t;
        SampleIndex end = std::min(total, start + uniform_int(rng, min_len, max_len));
        Event event = Event::none;
        if (exact) {
            if (want_success > 0 && (turn_index % 2 == 0 || want_unsuccess == 0)) event = Event::success;
            else if (want_unsuccess > 0) event = Event::unsuccess;
        } else if (event_draw(rng)) {
            event = success_draw(rng) ? Event::success : Event::unsuccess;
        }
        ++turn_index;

        if (event == Event::unsuccess) {
            std::vector<std::size_t> others;
            for (std::size_t m = 0; m < n; ++m) {
                if (m != holder) others.push_back(m);
            }
            const std::size_t k = others[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<SampleIndex>(others.size()) - 1))];
            const SampleIndex len = uniform_int(rng, burst_lo, burst_hi);
            SampleIndex earliest = std::max(start + 1, last_end[k] + g + 1);
            for (std::size_t m = 0; m < n; ++m) {
                if (m != holder) earliest = std::max(earliest, last_end[m]);
            }
            if (earliest + len + 1 > end) end = earliest + len + 1;
            if (end <= total) {
                const SampleIndex b = uniform_int(rng, earliest, end - 1 - len);
                fill(k, b, b + len);
                ++out.planted_unsuccess[k];
                --want_unsuccess;
            } else {
                end = std::min(total, start + max_len);
            }
        }

        fill(holder, start, end);
        const std::size_t next = next_speaker(holder);
        bool handed = false;
        if (event == Event::success && end + min_len <= total) {
            const SampleIndex ov = uniform_int(rng, 1, overlap_hi);
            const SampleIndex s = end - ov;
            bool clear = s > start && s >= last_end[next] + g + 1;
            for (std::size_t m = 0; m < n && clear; ++m) {
                if (m != holder && m != next && last_end[m] > s) clear = false;
            }
            if (clear) {
                ++out.planted_success[next];
                --want_success;
                t = s;
                handed = true;
            }
        }
        if (!handed) t = end + uniform_int(rng, g + 1, max_gap);
        holder = next;
    }
    return out;
}

std::string to_string(LabelRule r) {
    switch (r) {
        case LabelRule::coupling_equality: return "coupling_equality";
        case LabelRule::coupling: return "coupling";
        case LabelRule::cardinality: return "cardinality";
    }
    return "coupling_equality";
}

LabelRule label_rule_from_string(const std::string& s) {
    for (auto r : {LabelRule::coupling_equality, LabelRule::coupling, LabelRule::cardinality}) {
        if (to_string(r) == s) return r;
    }
    throw InputError("unknown label rule '" + s + "'");
}

namespace {

struct GroupData {
    GroupTruth truth;
    ConversationGroup group;
    std::vector<std::array<std::vector<double>, 3>> motion;  // per member, over the group span
    std::vector<std::vector<std::uint8_t>> status;
    std::vector<double> member_latent;
};

void validate(const ScenarioConfig& c) {
    if (c.n_groups < 1) throw InputError("scenario: n_groups must be positive");
    if (c.min_members < 2 || c.max_members < c.min_members || c.max_members > 99) {
        throw InputError("scenario: member range must satisfy 2 <= min <= max <= 99");
    }
    if (!(c.min_duration_s > 0) || c.max_duration_s < c.min_duration_s) throw InputError("scenario: bad duration range");
    if (!(c.rate_hz > 0)) throw InputError("scenario: rate must be positive");
    if (c.min_lag < 0 || c.max_lag < c.min_lag) throw InputError("scenario: bad lag range");
    for (double v : {c.low_coupling_min, c.low_coupling_max, c.high_coupling_min, c.high_coupling_max}) {
        if (v < 0 || v > 1) throw InputError("scenario: coupling outside [0, 1]");
    }
    if (c.low_coupling_max < c.low_coupling_min || c.high_coupling_max < c.high_coupling_min) {
        throw InputError("scenario: bad coupling range");
    }
    if (c.high_skew_max >= 1 || c.low_skew_max < 0 || c.high_skew_min > c.high_skew_max) {
        throw InputError("scenario: bad skew range");
    }
    if (c.n_raters < 1) throw InputError("scenario: need at least one rater");
    if (c.rater_noise < 0 || c.rater_bias < 0) throw InputError("scenario: negative rater noise");
    if (c.drift_sigma < 0 || !(std::abs(c.drift_ar) < 1)) throw InputError("scenario: drift needs sigma >= 0 and |ar| < 1");
}

GroupData make_group(const ScenarioConfig& cfg, int index, int id_width) {
    auto rng = seeded_rng(cfg.seed, static_cast<std::uint64_t>(index) + 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    GroupData gd;
    auto& truth = gd.truth;
    truth.group_id = "g" + padded(index + 1, id_width);
    truth.cardinality = static_cast<int>(uniform_int(rng, cfg.min_members, cfg.max_members));
    const SampleIndex dur = std::max<SampleIndex>(
        1, to_samples(uniform(rng, cfg.min_duration_s, cfg.max_duration_s), cfg.rate_hz));
    const SampleIndex offset = to_samples(uniform(rng, 0.0, cfg.max_start_offset_s), cfg.rate_hz);
    truth.duration_s = static_cast<double>(dur) / cfg.rate_hz;

    auto high_c = [&] { return uniform(rng, cfg.high_coupling_min, cfg.high_coupling_max); };
    auto low_c = [&] { return uniform(rng, cfg.low_coupling_min, cfg.low_coupling_max); };
    auto low_s = [&] { return uniform(rng, 0.0, cfg.low_skew_max); };
    auto high_s = [&] { return uniform(rng, cfg.high_skew_min, cfg.high_skew_max); };
    const bool high = std::bernoulli_distribution(cfg.high_fraction)(rng);
    switch (cfg.label_rule) {
        case LabelRule::coupling_equality:
            if (high) {
                truth.coupling = high_c();
                truth.equality_skew = low_s();
            } else {
                switch (uniform_int(rng, 0, 2)) {
                    case 0:
                        truth.coupling = low_c();
                        truth.equality_skew = low_s();
                        break;
                    case 1:
                        truth.coupling = high_c();
                        truth.equality_skew = high_s();
                        break;
                    default:
                        truth.coupling = low_c();
                        truth.equality_skew = high_s();
                }
            }
            truth.latent = (high ? cfg.high_quality : cfg.low_quality) + cfg.group_jitter * normal(rng);
            break;
        case LabelRule::coupling:
            truth.coupling = high ? high_c() : low_c();
            truth.equality_skew = uniform(rng, 0.0, cfg.high_skew_max);
            truth.latent = (high ? cfg.high_quality : cfg.low_quality) + cfg.group_jitter * normal(rng);
            break;
        case LabelRule::cardinality:
            truth.coupling = uniform(rng, cfg.low_coupling_min, cfg.high_coupling_max);
            truth.equality_skew = uniform(rng, 0.0, cfg.high_skew_max);
            truth.latent = cfg.high_quality - cfg.cardinality_slope * (truth.cardinality - cfg.min_members) +
                           cfg.group_jitter * normal(rng);
            break;
    }
    truth.label = cfg.label_rule == LabelRule::cardinality ? (truth.latent > 3.0 ? 1 : 0) : (high ? 1 : 0);
    truth.convergence_rate = uniform(rng, 0.0, cfg.max_convergence_rate);

    const auto members = static_cast<std::size_t>(truth.cardinality);
    const int member_width = cfg.max_members >= 10 ? 2 : 1;
    for (std::size_t m = 0; m < members; ++m) {
        gd.group.member_ids.push_back(truth.group_id + "_p" + padded(static_cast<int>(m) + 1, member_width));
    }
    gd.group.group_id = truth.group_id;
    gd.group.start_t = offset;
    gd.group.end_t = offset + dur;

    // Leader motion and delayed, noisy followers.
    for (std::size_t m = 1; m < members; ++m) truth.lags.push_back(static_cast<int>(uniform_int(rng, cfg.min_lag, cfg.max_lag)));
    const auto n = static_cast<std::size_t>(dur);
    const auto max_lag = static_cast<std::size_t>(cfg.max_lag);
    gd.motion.resize(members);
    for (int axis = 0; axis < 3; ++axis) {
        const auto base = ar1_process(n + max_lag, cfg.ar_coefficient, rng);
        gd.motion[0][static_cast<std::size_t>(axis)].assign(base.begin() + static_cast<std::ptrdiff_t>(max_lag), base.end());
        for (std::size_t m = 1; m < members; ++m) {
            const auto lag = static_cast<std::size_t>(truth.lags[m - 1]);
            auto& v = gd.motion[m][static_cast<std::size_t>(axis)];
            v.resize(n);
            for (std::size_t t = 0; t < n; ++t) {
                const double shrink = 1.0 - truth.convergence_rate * static_cast<double>(t) / static_cast<double>(n);
                v[t] = truth.coupling * base[t + max_lag - lag] +
                       (1.0 - truth.coupling) * cfg.noise_sigma * shrink * normal(rng);
            }
        }
        if (cfg.drift_sigma > 0) {
            for (std::size_t m = 0; m < members; ++m) {
                const auto drift = ar1_process(n, cfg.drift_ar, rng);
                auto& v = gd.motion[m][static_cast<std::size_t>(axis)];
                for (std::size_t t = 0; t < n; ++t) v[t] += cfg.drift_sigma * drift[t];
            }
        }
    }

    TurnScenarioConfig tc;
    tc.members = truth.cardinality;
    tc.equality_skew = truth.equality_skew;
    tc.interruption_rate = cfg.interruption_rate;
    tc.success_fraction = cfg.success_fraction;
    tc.samples = n;
    tc.rate_hz = cfg.rate_hz;
    auto turns = gen_turn_sequence(tc, derive_seed(cfg.seed, 1000000 + static_cast<std::uint64_t>(index)));
    gd.status = std::move(turns.status);
    truth.planted_success = std::accumulate(turns.planted_success.begin(), turns.planted_success.end(), 0);
    truth.planted_unsuccess = std::accumulate(turns.planted_unsuccess.begin(), turns.planted_unsuccess.end(), 0);

    for (std::size_t m = 0; m < members; ++m) gd.member_latent.push_back(truth.latent + cfg.member_jitter * normal(rng));
    return gd;
}

std::vector<int> rate_items(double latent, double bias, const std::vector<QuestionnaireItem>& items,
                            const std::vector<double>& offsets, double noise, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<int> out;
    for (std::size_t k = 0; k < items.size(); ++k) {
        const double v = latent + bias + offsets[k] + noise * normal(rng);
        const int r = static_cast<int>(std::clamp(std::lround(v), 1L, 5L));
        out.push_back(items[k].negative ? 6 - r : r);
    }
    return out;
}

}  // namespace

MiniMingle gen_mini_mingle(const ScenarioConfig& cfg) {
    validate(cfg);
    const int id_width = static_cast<int>(std::to_string(cfg.n_groups).size());
    std::vector<GroupData> groups(static_cast<std::size_t>(cfg.n_groups));
    parallel_for(groups.size(), [&](std::size_t g) { groups[g] = make_group(cfg, static_cast<int>(g), id_width); });

    MiniMingle out;
    SampleIndex horizon = 0;
    for (const auto& g : groups) {
        horizon = std::max(horizon, g.group.end_t);
        out.groups.push_back(g.group);
        out.truth.push_back(g.truth);
    }

    auto master = seeded_rng(cfg.seed, 0);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (const auto& g : groups) {
        for (std::size_t m = 0; m < g.group.member_ids.size(); ++m) {
            AccelRecording rec;
            rec.participant_id = g.group.member_ids[m];
            rec.sample_rate_hz = cfg.rate_hz;
            rec.t.resize(static_cast<std::size_t>(horizon));
            std::iota(rec.t.begin(), rec.t.end(), SampleIndex{0});
            for (std::size_t axis = 0; axis < 3; ++axis) {
                auto signal = ar1_process(static_cast<std::size_t>(horizon), cfg.ar_coefficient, master);
                const auto& inside = g.motion[m][axis];
                std::copy(inside.begin(), inside.end(), signal.begin() + g.group.start_t);
                const double gain = uniform(master, 0.5, 2.0);
                const double offset = uniform(master, -1.0, 1.0);
                for (auto& v : signal) v = quantize(gain * v + offset);
                rec.axes[axis] = std::move(signal);
            }
            out.accel.push_back(std::move(rec));

            SpeakingStatus s;
            s.participant_id = g.group.member_ids[m];
            s.rate_hz = cfg.rate_hz;
            s.status.assign(static_cast<std::size_t>(horizon), 0);
            std::copy(g.status[m].begin(), g.status[m].end(), s.status.begin() + g.group.start_t);
            out.speaking.push_back(std::move(s));
        }
    }

    // Simulated ratings.
    const auto group_items = questionnaire(AnnotationLevel::group);
    const auto indiv_items = questionnaire(AnnotationLevel::individual);
    auto offsets_for = [](std::size_t k) {
        std::vector<double> o(k);
        for (std::size_t i = 0; i < k; ++i) o[i] = 0.8 * (static_cast<double>(i) - 0.5 * static_cast<double>(k - 1)) / static_cast<double>(k);
        return o;
    };
    const auto group_offsets = offsets_for(group_items.size());
    const auto indiv_offsets = offsets_for(indiv_items.size());
    std::vector<double> bias(static_cast<std::size_t>(cfg.n_raters));
    for (auto& b : bias) b = cfg.rater_bias * normal(master);

    out.group_annotations.level = AnnotationLevel::group;
    out.group_annotations.items = group_items;
    out.individual_annotations.level = AnnotationLevel::individual;
    out.individual_annotations.items = indiv_items;
    const auto sliced = slice_conversations(out.groups, cfg.slice_policy);
    std::size_t gi = 0;
    for (std::size_t si = 0; si < sliced.slices.size(); ++si) {
        const auto& slice = sliced.slices[si];
        while (groups[gi].group.group_id != slice.group_id) ++gi;
        const auto& g = groups[gi];
        auto rng = seeded_rng(cfg.seed, 2000000 + si);
        for (int r = 0; r < cfg.n_raters; ++r) {
            const std::string rater = "r" + std::to_string(r + 1);
            const auto rb = bias[static_cast<std::size_t>(r)];
            out.group_annotations.ratings.push_back(
                {rater, slice.slice_id, "", rate_items(g.truth.latent, rb, group_items, group_offsets, cfg.rater_noise, rng)});
            for (std::size_t m = 0; m < g.group.member_ids.size(); ++m) {
                out.individual_annotations.ratings.push_back(
                    {rater, slice.slice_id, g.group.member_ids[m],
                     rate_items(g.member_latent[m], rb, indiv_items, indiv_offsets, cfg.rater_noise, rng)});
            }
        }
    }
    return out;
}

void write_mini_mingle(const MiniMingle& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_accel(dir / "accel.csv", data.accel);
    write_speaking(dir / "speaking.csv", data.speaking);
    write_groups(dir / "groups.csv", data.groups);
    write_annotations(dir / "annotations_group.csv", data.group_annotations);
    write_annotations(dir / "annotations_individual.csv", data.individual_annotations);
    csv::Writer w(dir / "ground_truth.csv");
    w.row({"group_id", "cardinality", "duration_s", "label", "latent", "coupling", "lags", "equality_skew",
           "convergence_rate", "planted_success", "planted_unsuccess"});
    for (const auto& t : data.truth) {
        std::vector<std::string> lags;
        for (int l : t.lags) lags.push_back(std::to_string(l));
        w.row({t.group_id, std::to_string(t.cardinality), csv::format(t.duration_s), std::to_string(t.label),
               csv::format(t.latent), csv::format(t.coupling), csv::join(lags, ';'), csv::format(t.equality_skew),
               csv::format(t.convergence_rate), std::to_string(t.planted_success),
               std::to_string(t.planted_unsuccess)});
    }
    w.commit();
}

}  // namespace convq
