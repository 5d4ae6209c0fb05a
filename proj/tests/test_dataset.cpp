#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "dtx/dataset.hpp"
#include "dtx/errors.hpp"
#include "dtx/random.hpp"

using namespace dtx;
namespace fs = std::filesystem;

namespace {

Date day(int y, unsigned m, unsigned d) { return Date{std::chrono::year{y} / m / d}; }

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("dtx_dataset_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void put(const fs::path& file, const std::string& text) {
    std::ofstream out(file, std::ios::binary);
    out << text;
}

const std::string kSessionHeader =
    "tutor_id,date,keeping_together,getting_students_to_relate,restating,press_for_accuracy,"
    "press_for_reasoning,revoicing,attendee_ids\n";
const std::string kItsHeader =
    "student_id,date,mastered_skills_avg,opportunities_avg,workspace_time_avg,workspace_score_avg,apls_avg\n";
const std::string kAssessmentHeader = "student_id,round,date,score\n";

SessionLog session(const std::string& tutor, Date date, std::int64_t revoicing,
                   std::vector<std::string> attendees) {
    SessionLog s;
    s.tutor_id = tutor;
    s.date = date;
    s.talk_moves[static_cast<int>(TalkMove::revoicing)] = revoicing;
    s.attendees = std::move(attendees);
    return s;
}

ItsSnapshot snapshot(const std::string& student, Date date, double opportunities) {
    ItsSnapshot s;
    s.student_id = student;
    s.date = date;
    s.opportunities_avg = opportunities;
    s.mastered_skills_avg = 0.5;
    return s;
}

EvaluationPeriod ep(const std::string& student, const std::string& tutor, int round, double outcome) {
    EvaluationPeriod e;
    e.student_id = student;
    e.tutor_id = tutor;
    e.round = round;
    e.outcome = outcome;
    return e;
}

}  // namespace

TEST_CASE("parse_date") {
    CHECK(parse_date("2023-02-28") == day(2023, 2, 28));
    CHECK_FALSE(parse_date("2023-02-29"));
    CHECK_FALSE(parse_date("2023-2-28"));
    CHECK_FALSE(parse_date("yesterday"));
    CHECK(format_date(day(2022, 8, 1)) == "2022-08-01");
}

TEST_CASE("load_inputs parses rows in file order") {
    const auto dir = scratch("load");
    put(dir / "sessions.csv", kSessionHeader + "t1,2022-09-01,1,2,3,4,5,6,s1|s2\n"
                                               "t1,2022-09-02,0,0,0,0,0,2,s1\n"
                                               "t2,2022-09-02,0,0,0,0,0,0,s3\n");
    put(dir / "its.csv", kItsHeader + "s1,2022-09-02,0.5,3,10,80,0.9\n");
    put(dir / "assessments.csv", kAssessmentHeader + "s1,1,2022-10-01,18\n");
    const auto in = load_inputs(dir / "sessions.csv", dir / "its.csv", dir / "assessments.csv");
    REQUIRE(in.sessions.size() == 3);
    CHECK(in.sessions[0].talk_moves[5] == 6);
    CHECK(in.sessions[0].attendees == std::vector<std::string>{"s1", "s2"});
    CHECK(in.sessions[2].tutor_id == "t2");
    CHECK(in.its[0].opportunities_avg == 3.0);
    CHECK(in.assessments[0].score == 18);
}

TEST_CASE("score outside the range is a parse error naming file, line and column") {
    const auto dir = scratch("range");
    put(dir / "sessions.csv", kSessionHeader);
    put(dir / "its.csv", kItsHeader);
    put(dir / "assessments.csv", kAssessmentHeader + "s1,1,2022-10-01,20\ns1,2,2022-11-01,31\n");
    try {
        load_inputs(dir / "sessions.csv", dir / "its.csv", dir / "assessments.csv");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
        CHECK(e.column() == "score");
        CHECK(std::string(e.what()).find("[0, 30]") != std::string::npos);
        CHECK(std::string(e.what()).find("assessments.csv") != std::string::npos);
    }
}

TEST_CASE("missing ITS column lists the expected columns") {
    const auto dir = scratch("schema");
    put(dir / "sessions.csv", kSessionHeader);
    put(dir / "its.csv", "student_id,date,mastered_skills_avg,opportunities_avg,workspace_time_avg,workspace_score_avg\n");
    put(dir / "assessments.csv", kAssessmentHeader);
    try {
        load_inputs(dir / "sessions.csv", dir / "its.csv", dir / "assessments.csv");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        const std::string what = e.what();
        CHECK(e.column() == "apls_avg");
        for (auto col : {"mastered_skills_avg", "opportunities_avg", "workspace_time_avg", "workspace_score_avg", "apls_avg"}) {
            CHECK(what.find(col) != std::string::npos);
        }
    }
}

TEST_CASE("unknown talk-move column is rejected") {
    const auto dir = scratch("unknown");
    put(dir / "sessions.csv",
        "tutor_id,date,keeping_together,getting_students_to_relate,restating,press_for_accuracy,"
        "press_for_reasoning,revoicing,marking,attendee_ids\n");
    put(dir / "its.csv", kItsHeader);
    put(dir / "assessments.csv", kAssessmentHeader);
    CHECK_THROWS_AS(load_inputs(dir / "sessions.csv", dir / "its.csv", dir / "assessments.csv"), ParseError);
}

TEST_CASE("malformed cells and empty attendee lists") {
    const auto dir = scratch("malformed");
    put(dir / "its.csv", kItsHeader);
    put(dir / "assessments.csv", kAssessmentHeader);
    put(dir / "sessions.csv", kSessionHeader + "t1,2022-09-01,1,x,3,4,5,6,s1\n");
    CHECK_THROWS_AS(load_inputs(dir / "sessions.csv", dir / "its.csv", dir / "assessments.csv"), ParseError);
    put(dir / "sessions.csv", kSessionHeader + "t1,2022-09-01,1,2,3,4,5,6,\n");
    CHECK_THROWS_AS(load_inputs(dir / "sessions.csv", dir / "its.csv", dir / "assessments.csv"), ParseError);
    put(dir / "sessions.csv", kSessionHeader + "t1,2022-13-01,1,2,3,4,5,6,s1\n");
    CHECK_THROWS_AS(load_inputs(dir / "sessions.csv", dir / "its.csv", dir / "assessments.csv"), ParseError);
}

TEST_CASE("write_inputs and load_input_dir round-trip") {
    RawInputs in;
    in.sessions = {session("t1", day(2022, 9, 5), 3, {"s1", "s2"})};
    in.its = {snapshot("s1", day(2022, 9, 9), 3.25)};
    in.assessments = {{"s1", 1, day(2022, 10, 1), 17}};
    in.roster = {{"s1", "t1", 0.8}, {"s2", "t1", 0.9}};
    const auto dir = scratch("roundtrip");
    write_inputs(in, dir);
    const auto back = load_input_dir(dir);
    REQUIRE(back.sessions.size() == 1);
    CHECK(back.sessions[0].attendees == in.sessions[0].attendees);
    CHECK(back.sessions[0].talk_moves == in.sessions[0].talk_moves);
    CHECK(back.its[0].opportunities_avg == 3.25);
    CHECK(back.assessments[0].score == 17);
    CHECK(back.roster[1].attendance_ratio == 0.9);
}

TEST_CASE("micro_average_talk_moves") {
    const std::vector<SessionLog> two{session("t", day(2022, 9, 1), 2, {"s"}), session("t", day(2022, 9, 2), 4, {"s"})};
    CHECK(micro_average_talk_moves(two).values[5] == 3.0);
    const std::vector<SessionLog> zero{session("t", day(2022, 9, 1), 0, {"s"})};
    const auto z = micro_average_talk_moves(zero);
    CHECK_FALSE(z.empty);
    for (double v : z.values) CHECK(v == 0.0);
    const auto none = micro_average_talk_moves({});
    CHECK(none.empty);
    for (double v : none.values) CHECK(v == 0.0);
}

TEST_CASE("micro average equals a recount over utterance rows") {
    // Expand each session into one row per coded utterance, then recount.
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<SessionLog> sessions;
        std::vector<std::pair<int, int>> utterances;  // (session, move)
        const int n = 1 + static_cast<int>(rng.index(6));
        for (int s = 0; s < n; ++s) {
            SessionLog log = session("t", day(2022, 9, 1 + s), 0, {"s"});
            for (std::size_t m = 0; m < kTalkMoveCount; ++m) {
                log.talk_moves[m] = static_cast<std::int64_t>(rng.index(5));
                for (int k = 0; k < log.talk_moves[m]; ++k) utterances.emplace_back(s, static_cast<int>(m));
            }
            sessions.push_back(log);
        }
        std::array<double, kTalkMoveCount> recount{};
        for (auto [s, m] : utterances) recount[static_cast<std::size_t>(m)] += 1.0;
        const auto got = micro_average_talk_moves(sessions);
        for (std::size_t m = 0; m < kTalkMoveCount; ++m) CHECK(got.values[m] == doctest::Approx(recount[m] / n));
    }
    const std::vector<SessionLog> three{session("t", day(2022, 9, 1), 1, {"s"}), session("t", day(2022, 9, 2), 2, {"s"}),
                                        session("t", day(2022, 9, 3), 3, {"s"})};
    CHECK(micro_average_talk_moves(three).values[5] == 2.0);
}

TEST_CASE("aggregate_its_features") {
    const std::vector<ItsSnapshot> one{snapshot("s", day(2022, 9, 1), 3.0)};
    CHECK(aggregate_its_features(one).values == one[0].values());
    CHECK(aggregate_its_features(one).source == ItsSource::window);
    const std::vector<ItsSnapshot> two{snapshot("s", day(2022, 9, 1), 3.0), snapshot("s", day(2022, 9, 8), 5.0)};
    CHECK(aggregate_its_features(two).values[1] == 4.0);
    const auto prior = snapshot("s", day(2022, 8, 20), 6.5);
    const auto carried = aggregate_its_features({}, &prior);
    CHECK(carried.source == ItsSource::carried_forward);
    CHECK(carried.values == prior.values());
    const auto imputed = aggregate_its_features({});
    CHECK(imputed.source == ItsSource::imputed);
    for (double v : imputed.values) CHECK(v == 0.0);
}

TEST_CASE("evaluation windows cover (previous assessment, current assessment]") {
    const Date d1 = day(2022, 10, 3);
    const Date d2 = day(2022, 11, 7);
    RawInputs in;
    in.roster = {{"s1", "t1", 0.9}, {"s2", "t1", 0.4}, {"s3", "t1", 0.9}};
    in.sessions = {session("t1", day(2022, 9, 12), 1, {"s1"}), session("t1", d1, 7, {"s1"}),
                   session("t1", d1 + std::chrono::days{5}, 4, {"s1", "s2"}),
                   session("t1", d2 + std::chrono::days{3}, 9, {"s1"})};
    in.its = {snapshot("s1", day(2022, 9, 30), 5.0)};
    in.assessments = {{"s1", 1, d1, 18}, {"s1", 2, d2, 21}, {"s2", 1, d1, 10}};
    AssembleOptions options;
    options.year_start = day(2022, 9, 1);
    const auto cohort = assemble_evaluation_periods(in, options);
    CHECK(cohort.exclusions().low_attendance == 1);
    CHECK(cohort.exclusions().without_assessments == 1);
    REQUIRE(cohort.size() == 2);
    const auto& first = cohort.periods()[0];
    const auto& second = cohort.periods()[1];
    CHECK(first.round == 1);
    CHECK(first.features[feature::revoicing] == 4.0);  // sessions on 09-12 and d1
    CHECK(second.round == 2);
    CHECK(second.features[feature::revoicing] == 4.0);  // only d1+5; d2+3 is after the window
    CHECK(first.features[feature::opportunities] == 5.0);
    CHECK_FALSE(first.its_carried_forward);
    CHECK(second.features[feature::opportunities] == 5.0);
    CHECK(second.its_carried_forward);
    CHECK(cohort.students() == std::set<std::string>{"s1"});
    CHECK(cohort.source_assessments() == 2);
}

TEST_CASE("a student with assessments and no tutor mapping is an error") {
    RawInputs in;
    in.assessments = {{"ghost", 1, day(2022, 10, 1), 12}};
    CHECK_THROWS(assemble_evaluation_periods(in));
}

TEST_CASE("Cohort invariants") {
    CHECK_THROWS(Cohort({ep("s1", "t1", 1, 10)}, {{"s1", "t2"}}, 1));
    CHECK_THROWS(Cohort({ep("s1", "t1", 1, 10)}, {}, 1));
    auto bad = ep("s1", "t1", 1, 10);
    bad.features[0] = std::nan("");
    CHECK_THROWS(Cohort({bad}, {{"s1", "t1"}}, 1));
    const Cohort ok({ep("s1", "t1", 1, 10), ep("s2", "t2", 1, 20)}, {{"s1", "t1"}, {"s2", "t2"}}, 2);
    CHECK(ok.tutors().size() == 2);
    CHECK(ok.outcomes() == std::vector<double>{10, 20});
}

TEST_CASE("features projects columns and records reads") {
    auto a = ep("s1", "t1", 1, 10);
    for (std::size_t k = 0; k < kFeatureCount; ++k) a.features[k] = static_cast<double>(k);
    const Cohort c({a}, {{"s1", "t1"}}, 1);
    FeatureAccessLog log;
    const std::vector<int> ids{feature::revoicing, feature::apls};
    const auto x = c.features(ids, &log);
    CHECK(x.cols() == 2);
    CHECK(x.value(0, feature::apls) == 10.0);
    CHECK(log.read == std::set<int>{feature::revoicing, feature::apls});
}

TEST_CASE("binarize") {
    const Cohort c({ep("a", "t", 1, 20), ep("b", "t", 1, 19), ep("c", "t", 1, 0)}, {{"a", "t"}, {"b", "t"}, {"c", "t"}}, 3);
    const auto b = binarize(c, 20);
    CHECK(b.labels == std::vector<Label>{Label::high, Label::low, Label::low});
    CHECK(b.n_high == 1);
    CHECK(b.n_low == 2);
    CHECK_FALSE(b.degenerate);
    const auto zero = binarize(c, 0);
    CHECK(zero.n_high == 3);
    CHECK(zero.degenerate);
    CHECK_THROWS(binarize(c, std::nan("")));
}

TEST_CASE("binarization is monotone in the threshold") {
    Rng rng(3);
    std::vector<double> outcomes(500);
    for (auto& o : outcomes) o = static_cast<double>(rng.index(31));
    for (double t = 0; t < 31; t += 0.5) {
        const auto lo = binarize_outcomes(outcomes, t);
        const auto hi = binarize_outcomes(outcomes, t + 0.5);
        for (std::size_t i = 0; i < outcomes.size(); ++i) {
            CHECK_FALSE((lo[i] == Label::low && hi[i] == Label::high));
            CHECK((lo[i] == Label::high) == (outcomes[i] >= t));
        }
    }
}

TEST_CASE("score changes use consecutive completed rounds") {
    const Cohort c({ep("a", "t", 1, 18), ep("a", "t", 2, 21), ep("b", "t", 1, 10), ep("b", "t", 3, 14),
                    ep("b", "t", 5, 11), ep("c", "t", 2, 9)},
                   {{"a", "t"}, {"b", "t"}, {"c", "t"}}, 6);
    const auto changes = compute_score_changes(c);
    REQUIRE(changes.size() == 3);
    CHECK(changes.periods()[0].student_id == "a");
    CHECK(changes.periods()[0].outcome == 3.0);
    CHECK(changes.periods()[1].round == 3);
    CHECK(changes.periods()[1].outcome == 4.0);
    CHECK(changes.periods()[2].round == 5);
    CHECK(changes.periods()[2].outcome == -3.0);
    CHECK(changes.students().size() == 2);
    CHECK(changes.source_assessments() == 5);
}

TEST_CASE("cohort_csv has the flat export layout") {
    const Cohort c({ep("s1", "t1", 2, 17.5)}, {{"s1", "t1"}}, 1);
    const auto csv = cohort_csv(c);
    CHECK(csv.rfind("student_id,tutor_id,round,keeping_together,", 0) == 0);
    CHECK(csv.find("apls_avg,outcome\n") != std::string::npos);
    CHECK(csv.find("s1,t1,2,") != std::string::npos);
    CHECK(csv.find(",17.5\n") != std::string::npos);
}

TEST_CASE("format_number round-trips") {
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        const double v = rng.normal(0, 100);
        CHECK(std::stod(format_number(v)) == v);
    }
    CHECK(format_number(20.0) == "20");
}
