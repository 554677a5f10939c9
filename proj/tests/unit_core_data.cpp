#include <doctest.h>

#include <map>
#include <sstream>

#include "convq/core_data.hpp"
#include "convq/errors.hpp"
#include "support/fixtures.hpp"

using namespace convq;

TEST_CASE("load_accel reads a single participant") {
    fixture::TempDir dir("accel1");
    const auto p = dir.write("a.csv", "participant_id,t,ax,ay,az\np1,0,1,2,3\np1,1,4,5,6\np1,2,7,8,9\n");
    const auto r = load_accel(p);
    REQUIRE(r.recordings.size() == 1);
    CHECK(r.recordings[0].size() == 3);
    CHECK(r.recordings[0].axes[2][1] == 6.0);
    CHECK(r.gaps.empty());
}

TEST_CASE("load_accel splits interleaved participants by row count") {
    fixture::TempDir dir("accel2");
    std::ostringstream text;
    text << "participant_id,t,ax,ay,az\n";
    std::map<std::string, int> expected;
    for (int t = 0; t < 25; ++t) {
        text << "p2," << t << ",0.5,0.5,0.5\n";
        ++expected["p2"];
        if (t % 2 == 0) {
            text << "p1," << t / 2 << ",1,1,1\n";
            ++expected["p1"];
        }
    }
    const auto r = load_accel(dir.write("a.csv", text.str()));
    REQUIRE(r.recordings.size() == 2);
    for (const auto& rec : r.recordings) {
        CHECK(static_cast<int>(rec.size()) == expected[rec.participant_id]);
    }
}

TEST_CASE("load_accel reports gaps instead of filling them") {
    fixture::TempDir dir("accel3");
    const auto r = load_accel(dir.write("a.csv", "participant_id,t,ax,ay,az\np1,0,1,1,1\np1,1,1,1,1\np1,5,1,1,1\n"));
    REQUIRE(r.gaps.size() == 1);
    CHECK(r.gaps[0].after_t == 1);
    CHECK(r.gaps[0].missing == 3);
    CHECK(r.recordings[0].size() == 3);
}

TEST_CASE("load_accel names the line of a malformed row") {
    fixture::TempDir dir("accel4");
    const auto p = dir.write("a.csv", "participant_id,t,ax,ay,az\np1,0,1,1,1\np1,1,abc,1,1\n");
    try {
        load_accel(p);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }
}

TEST_CASE("load_accel rejects duplicate samples") {
    fixture::TempDir dir("accel5");
    const auto p = dir.write("a.csv", "participant_id,t,ax,ay,az\np1,0,1,1,1\np1,0,2,2,2\n");
    CHECK_THROWS_AS(load_accel(p), ParseError);
}

TEST_CASE("load_speaking echoes the status and validates it") {
    fixture::TempDir dir("speak");
    const auto ok = load_speaking(dir.write("s.csv", "participant_id,t,status\np1,0,0\np1,1,1\np1,2,1\np1,3,0\n"));
    REQUIRE(ok.size() == 1);
    CHECK(ok[0].status == std::vector<std::uint8_t>{0, 1, 1, 0});

    CHECK_THROWS_AS(load_speaking(dir.write("bad.csv", "participant_id,t,status\np1,0,2\n")), DomainError);
    CHECK_THROWS_AS(load_speaking(dir.write("empty.csv", "")), ParseError);
}

TEST_CASE("load_speaking lists participants whose span differs") {
    fixture::TempDir dir("speak2");
    const auto p = dir.write("s.csv",
                             "participant_id,t,status\n"
                             "p1,0,0\np1,1,1\np1,2,0\n"
                             "p2,0,1\np2,1,1\n"
                             "p3,0,1\np3,1,0\np3,2,0\n");
    try {
        load_speaking(p);
        FAIL("expected a schema error");
    } catch (const SchemaError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("p2") != std::string::npos);
        CHECK(msg.find("p3") == std::string::npos);
    }
}

TEST_CASE("load_groups and load_annotations") {
    fixture::TempDir dir("groups");
    const auto g = load_groups(dir.write("g.csv", "group_id,member_ids,start_t,end_t\ng1,p2;p1,0,1200\n"));
    REQUIRE(g.size() == 1);
    CHECK(g[0].member_ids == std::vector<ParticipantId>{"p1", "p2"});

    std::ostringstream text;
    text << "rater_id,slice_id";
    for (const auto& item : questionnaire(AnnotationLevel::group)) text << ",item_" << item.id;
    text << "\n";
    for (int r = 0; r < 3; ++r) text << "r" << r << ",g1,3,3,3,3,3,3,3,3,3,3\n";
    const auto set = load_annotations(dir.write("a.csv", text.str()), AnnotationLevel::group);
    std::size_t ratings = 0;
    for (const auto& row : set.ratings) ratings += row.values.size();
    CHECK(ratings == 30);

    const auto bad = text.str().substr(0, text.str().size() - 2) + "6\n";
    CHECK_THROWS_AS(load_annotations(dir.write("bad.csv", bad), AnnotationLevel::group), DomainError);
    CHECK_THROWS_AS(load_annotations(dir.write("unknown.csv", "rater_id,slice_id,item_99\nr,g1,3\n"), AnnotationLevel::group),
                    SchemaError);
}

TEST_CASE("orphan members and annotations are reported") {
    const std::vector<ConversationGroup> groups{{"g1", {"a", "b", "z"}, 0, 100}};
    CHECK(orphan_members(groups, {"a", "b"}) == std::vector<ParticipantId>{"z"});

    AnnotationSet set;
    set.level = AnnotationLevel::individual;
    set.items = questionnaire(AnnotationLevel::individual);
    set.ratings.push_back({"r1", "g1", "a", std::vector<int>(10, 3)});
    set.ratings.push_back({"r1", "g1", "q", std::vector<int>(10, 3)});
    const std::vector<ConversationSlice> slices{{"g1", "g1", {"a", "b"}, 0, 100, 5.0}};
    CHECK(orphan_annotations(set, slices) == std::vector<std::string>{"g1/q"});
}

TEST_CASE("slice_conversations follows the duration rules") {
    const double rate = 20.0;
    auto group = [&](const std::string& id, double seconds) {
        return ConversationGroup{id, {"a", "b"}, 100, 100 + static_cast<SampleIndex>(seconds * rate)};
    };
    const auto r = slice_conversations({group("short", 25), group("medium", 90), group("long", 150), group("odd", 130)});
    CHECK(r.dropped_group_ids == std::vector<std::string>{"short"});

    std::map<std::string, std::vector<double>> durations;
    for (const auto& s : r.slices) durations[s.group_id].push_back(s.duration_s);
    CHECK(durations["medium"] == std::vector<double>{90.0});
    CHECK(durations["long"] == std::vector<double>{60.0, 60.0, 30.0});
    // A 10 s remainder is below the minimum and joins the last full slice.
    CHECK(durations["odd"] == std::vector<double>{60.0, 70.0});
}

TEST_CASE("resample_nearest maps onto the target clock") {
    AccelRecording rec;
    rec.participant_id = "p";
    rec.sample_rate_hz = 10.0;
    for (int t = 0; t < 10; ++t) {
        rec.t.push_back(t);
        for (auto& axis : rec.axes) axis.push_back(t);
    }
    const auto up = resample_nearest(rec, 20.0);
    CHECK(up.sample_rate_hz == 20.0);
    CHECK(up.size() >= 19);
    CHECK(up.axes[0][4] == doctest::Approx(2.0));
}

TEST_CASE("extract helpers refuse missing samples") {
    AccelRecording rec;
    rec.participant_id = "p";
    rec.t = {0, 1, 3};
    rec.axes = {std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}};
    CHECK(extract_axis(rec, 0, 0, 2) == std::vector<double>{1, 2});
    CHECK_THROWS_AS(extract_axis(rec, 0, 0, 3), InputError);

    SpeakingStatus s{"p", 20.0, 10, {0, 1, 1}};
    CHECK(extract_status(s, 11, 13) == std::vector<std::uint8_t>{1, 1});
    CHECK_THROWS_AS(extract_status(s, 9, 12), InputError);
}
