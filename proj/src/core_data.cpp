#include "convq/core_data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <tuple>

#include "convq/errors.hpp"
#include "csv.hpp"

namespace convq {

namespace {

void expect_header(csv::Reader& reader, const std::vector<std::string>& expected) {
    auto header = reader.next();
    if (!header) throw ParseError(reader.path().string(), reader.line(), "empty file");
    if (*header != expected) {
        throw ParseError(reader.path().string(), reader.line(),
                         "expected header '" + csv::join(expected) + "'");
    }
}

double field_double(const csv::Reader& r, const std::string& s, const char* name) {
    auto v = csv::parse_double(s);
    if (!v) {
        throw ParseError(r.path().string(), r.line(),
                         std::string("non-numeric ") + name + " '" + s + "'");
    }
    return *v;
}

std::int64_t field_int(const csv::Reader& r, const std::string& s, const char* name) {
    auto v = csv::parse_int(s);
    if (!v) {
        throw ParseError(r.path().string(), r.line(),
                         std::string("non-integer ") + name + " '" + s + "'");
    }
    return *v;
}

void expect_fields(const csv::Reader& r, const std::vector<std::string>& row, std::size_t n) {
    if (row.size() != n) {
        throw ParseError(r.path().string(), r.line(),
                         "expected " + std::to_string(n) + " fields, got " +
                             std::to_string(row.size()));
    }
}

}  // namespace

std::string to_string(AnnotationLevel level) {
    return level == AnnotationLevel::group ? "group" : "individual";
}

std::vector<QuestionnaireItem> questionnaire(AnnotationLevel level) {
    const std::set<int> negatives = level == AnnotationLevel::group ? std::set<int>{3}
                                                                     : std::set<int>{3, 5, 10};
    std::vector<QuestionnaireItem> items;
    for (int id = 1; id <= 10; ++id) items.push_back({id, negatives.count(id) > 0});
    return items;
}

std::vector<bool> AnnotationSet::negative_flags() const {
    std::vector<bool> flags;
    flags.reserve(items.size());
    for (const auto& item : items) flags.push_back(item.negative);
    return flags;
}

AccelLoadResult load_accel(const std::filesystem::path& path, double sample_rate_hz) {
    if (!(sample_rate_hz > 0)) throw InputError("sample rate must be positive");
    csv::Reader reader(path);
    expect_header(reader, {"participant_id", "t", "ax", "ay", "az"});

    struct Row {
        SampleIndex t;
        double x, y, z;
        std::size_t line;
    };
    std::map<ParticipantId, std::vector<Row>> rows;
    while (auto row = reader.next()) {
        expect_fields(reader, *row, 5);
        if ((*row)[0].empty()) throw ParseError(path.string(), reader.line(), "empty participant_id");
        Row r{field_int(reader, (*row)[1], "t"), field_double(reader, (*row)[2], "ax"),
              field_double(reader, (*row)[3], "ay"), field_double(reader, (*row)[4], "az"),
              reader.line()};
        rows[(*row)[0]].push_back(r);
    }

    AccelLoadResult result;
    for (auto& [id, rs] : rows) {
        std::stable_sort(rs.begin(), rs.end(), [](const Row& a, const Row& b) { return a.t < b.t; });
        AccelRecording rec;
        rec.participant_id = id;
        rec.sample_rate_hz = sample_rate_hz;
        for (std::size_t k = 0; k < rs.size(); ++k) {
            if (k > 0 && rs[k].t == rs[k - 1].t) {
                throw ParseError(path.string(), std::max(rs[k].line, rs[k - 1].line),
                                 "duplicate sample t=" + std::to_string(rs[k].t) +
                                     " for participant " + id);
            }
            if (k > 0 && rs[k].t - rs[k - 1].t > 1) {
                result.gaps.push_back({id, rs[k - 1].t, rs[k].t - rs[k - 1].t - 1});
            }
            rec.t.push_back(rs[k].t);
            rec.axes[0].push_back(rs[k].x);
            rec.axes[1].push_back(rs[k].y);
            rec.axes[2].push_back(rs[k].z);
        }
        result.recordings.push_back(std::move(rec));
    }
    return result;
}

std::vector<SpeakingStatus> load_speaking(const std::filesystem::path& path, double rate_hz) {
    if (!(rate_hz > 0)) throw InputError("rate must be positive");
    csv::Reader reader(path);
    expect_header(reader, {"participant_id", "t", "status"});

    std::map<ParticipantId, std::vector<std::tuple<SampleIndex, std::uint8_t, std::size_t>>> rows;
    while (auto row = reader.next()) {
        expect_fields(reader, *row, 3);
        const auto t = field_int(reader, (*row)[1], "t");
        const auto v = field_int(reader, (*row)[2], "status");
        if (v != 0 && v != 1) {
            throw DomainError(path.string() + ":" + std::to_string(reader.line()) +
                              ": speaking status must be 0 or 1, got " + (*row)[2]);
        }
        rows[(*row)[0]].emplace_back(t, static_cast<std::uint8_t>(v), reader.line());
    }
    if (rows.empty()) throw InputError(path.string() + ": no speaking-status rows");

    std::vector<SpeakingStatus> out;
    for (auto& [id, rs] : rows) {
        std::stable_sort(rs.begin(), rs.end(),
                         [](const auto& a, const auto& b) { return std::get<0>(a) < std::get<0>(b); });
        SpeakingStatus s;
        s.participant_id = id;
        s.rate_hz = rate_hz;
        s.start_t = std::get<0>(rs.front());
        for (std::size_t k = 0; k < rs.size(); ++k) {
            const auto t = std::get<0>(rs[k]);
            if (k > 0 && t != std::get<0>(rs[k - 1]) + 1) {
                const bool dup = t == std::get<0>(rs[k - 1]);
                throw ParseError(path.string(), std::get<2>(rs[k]),
                                 (dup ? "duplicate sample t=" : "gap before t=") +
                                     std::to_string(t) + " for participant " + id);
            }
            s.status.push_back(std::get<1>(rs[k]));
        }
        out.push_back(std::move(s));
    }

    // The most common (start, length) is the reference clock span.
    std::map<std::pair<SampleIndex, std::size_t>, int> spans;
    for (const auto& s : out) ++spans[{s.start_t, s.status.size()}];
    if (spans.size() > 1) {
        const auto ref = std::max_element(spans.begin(), spans.end(), [](const auto& a, const auto& b) {
                             return a.second < b.second;
                         })->first;
        std::vector<std::string> offending;
        for (const auto& s : out) {
            if (std::pair{s.start_t, s.status.size()} != ref) offending.push_back(s.participant_id);
        }
        throw SchemaError(path.string() + ": speaking sequences differ in span for: " +
                          csv::join(offending, ' '));
    }
    return out;
}

std::vector<ConversationGroup> load_groups(const std::filesystem::path& path) {
    csv::Reader reader(path);
    expect_header(reader, {"group_id", "member_ids", "start_t", "end_t"});
    std::vector<ConversationGroup> groups;
    std::set<std::string> seen;
    while (auto row = reader.next()) {
        expect_fields(reader, *row, 4);
        ConversationGroup g;
        g.group_id = (*row)[0];
        if (g.group_id.empty()) throw ParseError(path.string(), reader.line(), "empty group_id");
        if (!seen.insert(g.group_id).second) {
            throw ParseError(path.string(), reader.line(), "duplicate group_id " + g.group_id);
        }
        for (auto& m : csv::split((*row)[1], ';')) {
            if (!m.empty()) g.member_ids.push_back(m);
        }
        std::sort(g.member_ids.begin(), g.member_ids.end());
        g.member_ids.erase(std::unique(g.member_ids.begin(), g.member_ids.end()), g.member_ids.end());
        g.start_t = field_int(reader, (*row)[2], "start_t");
        g.end_t = field_int(reader, (*row)[3], "end_t");
        if (g.member_ids.size() < 2) {
            throw DomainError(path.string() + ":" + std::to_string(reader.line()) +
                              ": group needs at least 2 members");
        }
        if (g.end_t <= g.start_t) {
            throw DomainError(path.string() + ":" + std::to_string(reader.line()) +
                              ": end_t must exceed start_t");
        }
        groups.push_back(std::move(g));
    }
    return groups;
}

AnnotationSet load_annotations(const std::filesystem::path& path, AnnotationLevel level) {
    csv::Reader reader(path);
    auto header = reader.next();
    if (!header) throw ParseError(path.string(), reader.line(), "empty file");
    const auto& h = *header;
    if (h.size() < 3 || h[0] != "rater_id" || h[1] != "slice_id") {
        throw SchemaError(path.string() + ": header must start with rater_id,slice_id");
    }
    const bool has_participant = h[2] == "participant_id";
    if (level == AnnotationLevel::individual && !has_participant) {
        throw SchemaError(path.string() + ": individual-level annotations need participant_id");
    }
    const std::size_t first_item = has_participant ? 3 : 2;

    const auto catalogue = questionnaire(level);
    AnnotationSet set;
    set.level = level;
    std::set<int> used;
    for (std::size_t c = first_item; c < h.size(); ++c) {
        const std::string prefix = "item_";
        std::optional<std::int64_t> id;
        if (h[c].rfind(prefix, 0) == 0) id = csv::parse_int(std::string_view(h[c]).substr(prefix.size()));
        auto it = std::find_if(catalogue.begin(), catalogue.end(),
                               [&](const QuestionnaireItem& q) { return id && q.id == *id; });
        if (it == catalogue.end()) {
            throw SchemaError(path.string() + ": unknown item id '" + h[c] + "' for " +
                              to_string(level) + "-level questionnaire");
        }
        if (!used.insert(it->id).second) throw SchemaError(path.string() + ": duplicate column " + h[c]);
        set.items.push_back(*it);
    }
    if (set.items.empty()) throw SchemaError(path.string() + ": no item columns");

    while (auto row = reader.next()) {
        expect_fields(reader, *row, h.size());
        AnnotationRow r;
        r.rater_id = (*row)[0];
        r.slice_id = (*row)[1];
        if (has_participant) r.participant_id = (*row)[2];
        if (level == AnnotationLevel::group && !r.participant_id.empty()) {
            throw SchemaError(path.string() + ":" + std::to_string(reader.line()) +
                              ": group-level row carries a participant_id");
        }
        if (level == AnnotationLevel::individual && r.participant_id.empty()) {
            throw ParseError(path.string(), reader.line(), "missing participant_id");
        }
        for (std::size_t c = first_item; c < h.size(); ++c) {
            const auto v = field_int(reader, (*row)[c], h[c].c_str());
            if (v < 1 || v > 5) {
                throw DomainError(path.string() + ":" + std::to_string(reader.line()) + ": rating " +
                                  std::to_string(v) + " outside 1..5 in " + h[c]);
            }
            r.values.push_back(static_cast<int>(v));
        }
        set.ratings.push_back(std::move(r));
    }
    return set;
}

void write_accel(const std::filesystem::path& path, const std::vector<AccelRecording>& recs) {
    csv::Writer w(path);
    w.row({"participant_id", "t", "ax", "ay", "az"});
    for (const auto& rec : recs) {
        for (std::size_t k = 0; k < rec.size(); ++k) {
            w.row({rec.participant_id, std::to_string(rec.t[k]), csv::format(rec.axes[0][k]),
                   csv::format(rec.axes[1][k]), csv::format(rec.axes[2][k])});
        }
    }
    w.commit();
}

void write_speaking(const std::filesystem::path& path, const std::vector<SpeakingStatus>& s) {
    csv::Writer w(path);
    w.row({"participant_id", "t", "status"});
    for (const auto& p : s) {
        for (std::size_t k = 0; k < p.status.size(); ++k) {
            w.row({p.participant_id, std::to_string(p.start_t + static_cast<SampleIndex>(k)),
                   p.status[k] ? "1" : "0"});
        }
    }
    w.commit();
}

void write_groups(const std::filesystem::path& path, const std::vector<ConversationGroup>& g) {
    csv::Writer w(path);
    w.row({"group_id", "member_ids", "start_t", "end_t"});
    for (const auto& grp : g) {
        w.row({grp.group_id, csv::join(grp.member_ids, ';'), std::to_string(grp.start_t),
               std::to_string(grp.end_t)});
    }
    w.commit();
}

void write_annotations(const std::filesystem::path& path, const AnnotationSet& set) {
    csv::Writer w(path);
    std::vector<std::string> header{"rater_id", "slice_id"};
    const bool indiv = set.level == AnnotationLevel::individual;
    if (indiv) header.push_back("participant_id");
    for (const auto& item : set.items) header.push_back("item_" + std::to_string(item.id));
    w.row(header);
    for (const auto& r : set.ratings) {
        std::vector<std::string> f{r.rater_id, r.slice_id};
        if (indiv) f.push_back(r.participant_id);
        for (int v : r.values) f.push_back(std::to_string(v));
        w.row(f);
    }
    w.commit();
}

AccelRecording resample_nearest(const AccelRecording& rec, double target_rate_hz) {
    if (!(target_rate_hz > 0)) throw InputError("target rate must be positive");
    if (rec.t.empty() || target_rate_hz == rec.sample_rate_hz) {
        AccelRecording out = rec;
        out.sample_rate_hz = target_rate_hz;
        return out;
    }
    const double ratio = target_rate_hz / rec.sample_rate_hz;
    const auto first = static_cast<SampleIndex>(std::ceil(static_cast<double>(rec.t.front()) * ratio - 1e-9));
    const auto last = static_cast<SampleIndex>(std::floor(static_cast<double>(rec.t.back()) * ratio + 1e-9));
    AccelRecording out;
    out.participant_id = rec.participant_id;
    out.sample_rate_hz = target_rate_hz;
    for (SampleIndex k = first; k <= last; ++k) {
        const double src = static_cast<double>(k) / ratio;
        auto it = std::lower_bound(rec.t.begin(), rec.t.end(), static_cast<SampleIndex>(std::ceil(src)));
        std::size_t idx = static_cast<std::size_t>(it - rec.t.begin());
        if (idx == rec.t.size() ||
            (idx > 0 && std::abs(static_cast<double>(rec.t[idx - 1]) - src) <=
                            std::abs(static_cast<double>(rec.t[idx]) - src))) {
            --idx;
        }
        out.t.push_back(k);
        for (int a = 0; a < 3; ++a) out.axes[a].push_back(rec.axes[a][idx]);
    }
    return out;
}

std::vector<ParticipantId> orphan_members(const std::vector<ConversationGroup>& groups,
                                          const std::vector<ParticipantId>& known_ids) {
    const std::set<ParticipantId> known(known_ids.begin(), known_ids.end());
    std::set<ParticipantId> orphans;
    for (const auto& g : groups) {
        for (const auto& m : g.member_ids) {
            if (!known.count(m)) orphans.insert(m);
        }
    }
    return {orphans.begin(), orphans.end()};
}

std::vector<std::string> orphan_annotations(const AnnotationSet& set,
                                            const std::vector<ConversationSlice>& slices) {
    std::map<std::string, const ConversationSlice*> by_id;
    for (const auto& s : slices) by_id[s.slice_id] = &s;
    std::set<std::string> orphans;
    for (const auto& r : set.ratings) {
        auto it = by_id.find(r.slice_id);
        if (it == by_id.end()) {
            orphans.insert(r.slice_id + "/" + r.participant_id);
            continue;
        }
        if (set.level == AnnotationLevel::individual) {
            const auto& m = it->second->member_ids;
            if (std::find(m.begin(), m.end(), r.participant_id) == m.end()) {
                orphans.insert(r.slice_id + "/" + r.participant_id);
            }
        }
    }
    return {orphans.begin(), orphans.end()};
}

SliceResult slice_conversations(const std::vector<ConversationGroup>& groups,
                                const SlicePolicy& policy) {
    if (!(policy.slice_len_s > 0) || !(policy.min_dur_s > 0) || !(policy.rate_hz > 0)) {
        throw InputError("slice length, minimum duration and rate must be positive");
    }
    constexpr double eps = 1e-9;
    const auto slice_samples =
        std::max<SampleIndex>(1, std::llround(policy.slice_len_s * policy.rate_hz));

    SliceResult out;
    for (const auto& g : groups) {
        if (g.end_t <= g.start_t) throw InputError("group " + g.group_id + " has empty span");
        const SampleIndex len = g.end_t - g.start_t;
        const double dur_s = static_cast<double>(len) / policy.rate_hz;
        auto make = [&](std::string id, SampleIndex s, SampleIndex e) {
            out.slices.push_back({std::move(id), g.group_id, g.member_ids, s, e,
                                  static_cast<double>(e - s) / policy.rate_hz});
        };
        if (dur_s < policy.min_dur_s - eps) {
            out.dropped_group_ids.push_back(g.group_id);
            continue;
        }
        if (dur_s <= 2.0 * policy.slice_len_s + eps) {
            make(g.group_id, g.start_t, g.end_t);
            continue;
        }
        const SampleIndex n_full = len / slice_samples;
        const SampleIndex rem = len - n_full * slice_samples;
        const bool rem_own =
            rem > 0 && static_cast<double>(rem) / policy.rate_hz >= policy.min_dur_s - eps;
        for (SampleIndex k = 0; k < n_full; ++k) {
            const SampleIndex s = g.start_t + k * slice_samples;
            SampleIndex e = s + slice_samples;
            if (k == n_full - 1 && !rem_own) e = g.end_t;
            make(g.group_id + "_s" + std::to_string(k), s, e);
        }
        if (rem_own) make(g.group_id + "_s" + std::to_string(n_full), g.end_t - rem, g.end_t);
    }
    return out;
}

std::vector<ConversationGroup> as_groups(const std::vector<ConversationSlice>& slices) {
    std::vector<ConversationGroup> out;
    out.reserve(slices.size());
    for (const auto& s : slices) out.push_back({s.slice_id, s.member_ids, s.start_t, s.end_t});
    return out;
}

namespace {

std::size_t locate_span(const std::vector<SampleIndex>& t, const std::string& id,
                        SampleIndex start_t, SampleIndex end_t) {
    if (end_t <= start_t) throw InputError("empty extraction range");
    auto it = std::lower_bound(t.begin(), t.end(), start_t);
    const auto idx = static_cast<std::size_t>(it - t.begin());
    const auto n = static_cast<std::size_t>(end_t - start_t);
    if (idx + n > t.size() || t[idx] != start_t || t[idx + n - 1] != end_t - 1) {
        throw InputError("participant " + id + " has missing samples in [" +
                         std::to_string(start_t) + ", " + std::to_string(end_t) + ")");
    }
    return idx;
}

}  // namespace

std::vector<double> extract_axis(const AccelRecording& rec, int axis, SampleIndex start_t,
                                 SampleIndex end_t) {
    if (axis < 0 || axis > 2) throw InputError("axis must be 0, 1 or 2");
    const auto idx = locate_span(rec.t, rec.participant_id, start_t, end_t);
    const auto& src = rec.axes[static_cast<std::size_t>(axis)];
    return {src.begin() + static_cast<std::ptrdiff_t>(idx),
            src.begin() + static_cast<std::ptrdiff_t>(idx + static_cast<std::size_t>(end_t - start_t))};
}

AccelRecording extract_window(const AccelRecording& rec, SampleIndex start_t, SampleIndex end_t) {
    AccelRecording out;
    out.participant_id = rec.participant_id;
    out.sample_rate_hz = rec.sample_rate_hz;
    const auto idx = locate_span(rec.t, rec.participant_id, start_t, end_t);
    const auto n = static_cast<std::size_t>(end_t - start_t);
    out.t.assign(rec.t.begin() + static_cast<std::ptrdiff_t>(idx),
                 rec.t.begin() + static_cast<std::ptrdiff_t>(idx + n));
    for (int a = 0; a < 3; ++a) {
        const auto& src = rec.axes[static_cast<std::size_t>(a)];
        out.axes[static_cast<std::size_t>(a)].assign(src.begin() + static_cast<std::ptrdiff_t>(idx),
                                                     src.begin() + static_cast<std::ptrdiff_t>(idx + n));
    }
    return out;
}

std::vector<std::uint8_t> extract_status(const SpeakingStatus& s, SampleIndex start_t,
                                         SampleIndex end_t) {
    if (end_t <= start_t) throw InputError("empty extraction range");
    const SampleIndex last = s.start_t + static_cast<SampleIndex>(s.status.size());
    if (start_t < s.start_t || end_t > last) {
        throw InputError("speaking status of " + s.participant_id + " does not cover [" +
                         std::to_string(start_t) + ", " + std::to_string(end_t) + ")");
    }
    return {s.status.begin() + (start_t - s.start_t), s.status.begin() + (end_t - s.start_t)};
}

}  // namespace convq
