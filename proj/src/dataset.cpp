#include "dtx/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "csv.hpp"
#include "dtx/errors.hpp"

namespace dtx {

// ---------------------------------------------------------------------------
// Schema

std::vector<int> feature_ids(FeatureSet set) {
    std::vector<int> ids;
    const int first = set == FeatureSet::its ? static_cast<int>(kTalkMoveCount) : 0;
    const int last = set == FeatureSet::talk_moves ? static_cast<int>(kTalkMoveCount)
                                                   : static_cast<int>(kFeatureCount);
    for (int i = first; i < last; ++i) ids.push_back(i);
    return ids;
}

std::vector<std::string> feature_names() {
    return {kFeatureNames.begin(), kFeatureNames.end()};
}

std::string_view to_string(FeatureSet set) {
    switch (set) {
        case FeatureSet::talk_moves: return "talk";
        case FeatureSet::its: return "its";
        case FeatureSet::combined: return "combined";
    }
    return "combined";
}

std::string_view display_name(FeatureSet set) {
    switch (set) {
        case FeatureSet::talk_moves: return "Tutor Talk Moves";
        case FeatureSet::its: return "ITS Metrics";
        case FeatureSet::combined: return "Combined (Talk Moves + ITS)";
    }
    return "";
}

FeatureSet parse_feature_set(std::string_view text) {
    if (text == "talk") return FeatureSet::talk_moves;
    if (text == "its") return FeatureSet::its;
    if (text == "combined") return FeatureSet::combined;
    throw ConfigError("unknown feature set '" + std::string(text) + "' (expected talk|its|combined)");
}

// ---------------------------------------------------------------------------
// Text helpers

std::optional<Date> parse_date(std::string_view text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
    int y = 0;
    unsigned m = 0;
    unsigned d = 0;
    auto parse = [](std::string_view s, auto& out) {
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
        return ec == std::errc{} && ptr == s.data() + s.size();
    };
    if (!parse(text.substr(0, 4), y) || !parse(text.substr(5, 2), m) || !parse(text.substr(8, 2), d)) {
        return std::nullopt;
    }
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                          std::chrono::day{d}};
    if (!ymd.ok()) return std::nullopt;
    return Date{ymd};
}

std::string format_date(Date date) {
    const std::chrono::year_month_day ymd{date};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

std::string format_number(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    if (ec != std::errc{}) throw std::runtime_error("format_number failed");
    return {buf, ptr};
}

namespace {

using csv::Table;

std::string join(std::span<const std::string_view> items, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += sep;
        out += items[i];
    }
    return out;
}

/// Maps every expected column to its index. Missing columns are a schema error
/// listing the expectation; unexpected columns are rejected with `unknown_what`.
std::vector<std::size_t> bind_columns(const Table& table, std::span<const std::string_view> expected,
                                      std::string_view what, std::string_view unknown_what) {
    for (const auto& h : table.header()) {
        if (std::find(expected.begin(), expected.end(), h) == expected.end()) {
            throw ParseError(table.name(), 1, h, "unknown " + std::string(unknown_what) + " column '" +
                                                     h + "'");
        }
    }
    std::vector<std::size_t> idx;
    for (auto name : expected) {
        auto col = table.column(name);
        if (!col) {
            throw ParseError(table.name(), 1, std::string(name),
                             "missing column; " + std::string(what) + " expects " +
                                 join(expected, ", "));
        }
        idx.push_back(*col);
    }
    return idx;
}

struct Cell {
    const Table& table;
    std::size_t row;
    std::size_t col;

    [[noreturn]] void fail(const std::string& message) const {
        throw ParseError(table.name(), table.line(row), table.header()[col], message);
    }
    std::string_view text() const { return table.field(row, col); }

    std::string id() const {
        auto t = text();
        if (t.empty()) fail("empty id");
        return std::string(t);
    }
    Date date() const {
        auto d = parse_date(text());
        if (!d) fail("invalid date '" + std::string(text()) + "' (expected YYYY-MM-DD)");
        return *d;
    }
    std::int64_t integer() const {
        std::int64_t v = 0;
        auto t = text();
        auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (ec != std::errc{} || ptr != t.data() + t.size()) {
            fail("expected an integer, found '" + std::string(t) + "'");
        }
        return v;
    }
    double real() const {
        double v = 0.0;
        auto t = text();
        auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (ec != std::errc{} || ptr != t.data() + t.size() || !std::isfinite(v)) {
            fail("expected a finite number, found '" + std::string(t) + "'");
        }
        return v;
    }
};

constexpr std::array<std::string_view, 9> kSessionColumns = {
    "tutor_id",           "date",           "keeping_together",
    "getting_students_to_relate", "restating", "press_for_accuracy",
    "press_for_reasoning", "revoicing",     "attendee_ids"};
constexpr std::array<std::string_view, 7> kItsColumns = {
    "student_id",         "date",              "mastered_skills_avg", "opportunities_avg",
    "workspace_time_avg", "workspace_score_avg", "apls_avg"};
constexpr std::array<std::string_view, 4> kAssessmentColumns = {"student_id", "round", "date",
                                                                 "score"};
constexpr std::array<std::string_view, 3> kRosterColumns = {"student_id", "tutor_id",
                                                            "attendance_ratio"};

std::vector<SessionLog> parse_sessions(const Table& table) {
    const auto idx = bind_columns(table, kSessionColumns, "sessions.csv", "talk-move");
    std::vector<SessionLog> out;
    out.reserve(table.rows());
    for (std::size_t r = 0; r < table.rows(); ++r) {
        SessionLog s;
        s.tutor_id = Cell{table, r, idx[0]}.id();
        s.date = Cell{table, r, idx[1]}.date();
        for (std::size_t m = 0; m < kTalkMoveCount; ++m) {
            const Cell cell{table, r, idx[2 + m]};
            const auto count = cell.integer();
            if (count < 0) cell.fail("talk-move count must be non-negative");
            s.talk_moves[m] = count;
        }
        const Cell attendees{table, r, idx[8]};
        for (auto id : csv::split(attendees.text(), '|')) {
            if (!id.empty()) s.attendees.emplace_back(id);
        }
        if (s.attendees.empty()) attendees.fail("session has no attendees");
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<ItsSnapshot> parse_its(const Table& table) {
    const auto idx = bind_columns(table, kItsColumns, "its.csv", "ITS");
    std::vector<ItsSnapshot> out;
    out.reserve(table.rows());
    for (std::size_t r = 0; r < table.rows(); ++r) {
        ItsSnapshot s;
        s.student_id = Cell{table, r, idx[0]}.id();
        s.date = Cell{table, r, idx[1]}.date();
        s.mastered_skills_avg = Cell{table, r, idx[2]}.real();
        const Cell opportunities{table, r, idx[3]};
        s.opportunities_avg = opportunities.real();
        if (s.opportunities_avg < 0) opportunities.fail("opportunities must be non-negative");
        const Cell time{table, r, idx[4]};
        s.workspace_time_avg = time.real();
        if (s.workspace_time_avg < 0) time.fail("workspace time must be non-negative");
        s.workspace_score_avg = Cell{table, r, idx[5]}.real();
        s.apls_avg = Cell{table, r, idx[6]}.real();
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<AssessmentRecord> parse_assessments(const Table& table) {
    const auto idx = bind_columns(table, kAssessmentColumns, "assessments.csv", "assessment");
    std::vector<AssessmentRecord> out;
    out.reserve(table.rows());
    for (std::size_t r = 0; r < table.rows(); ++r) {
        AssessmentRecord a;
        a.student_id = Cell{table, r, idx[0]}.id();
        const Cell round{table, r, idx[1]};
        const auto round_value = round.integer();
        if (round_value < 1 || round_value > kRoundCount) round.fail("round must be within [1, 5]");
        a.round = static_cast<int>(round_value);
        a.date = Cell{table, r, idx[2]}.date();
        const Cell score{table, r, idx[3]};
        const auto score_value = score.integer();
        if (score_value < kMinScore || score_value > kMaxScore) {
            score.fail("score " + std::to_string(score_value) + " outside [0, 30]");
        }
        a.score = static_cast<int>(score_value);
        out.push_back(std::move(a));
    }
    return out;
}

std::vector<RosterEntry> parse_roster(const Table& table) {
    const auto idx = bind_columns(table, kRosterColumns, "roster.csv", "roster");
    std::vector<RosterEntry> out;
    out.reserve(table.rows());
    for (std::size_t r = 0; r < table.rows(); ++r) {
        RosterEntry e;
        e.student_id = Cell{table, r, idx[0]}.id();
        e.tutor_id = Cell{table, r, idx[1]}.id();
        const Cell ratio{table, r, idx[2]};
        e.attendance_ratio = ratio.real();
        if (e.attendance_ratio < 0.0 || e.attendance_ratio > 1.0) {
            ratio.fail("attendance ratio must be within [0, 1]");
        }
        out.push_back(std::move(e));
    }
    return out;
}

void write_text(const std::filesystem::path& file, const std::string& text) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    out << text;
    if (!out) throw std::runtime_error("failed writing " + file.string());
}

}  // namespace

RawInputs load_inputs(const std::filesystem::path& session_file,
                      const std::filesystem::path& its_file,
                      const std::filesystem::path& assessment_file) {
    RawInputs inputs;
    inputs.sessions = parse_sessions(Table::read(session_file));
    inputs.its = parse_its(Table::read(its_file));
    inputs.assessments = parse_assessments(Table::read(assessment_file));
    return inputs;
}

std::vector<RosterEntry> load_roster(const std::filesystem::path& roster_file) {
    return parse_roster(Table::read(roster_file));
}

RawInputs load_input_dir(const std::filesystem::path& dir) {
    RawInputs inputs = load_inputs(dir / kSessionsFile, dir / kItsFile, dir / kAssessmentsFile);
    inputs.roster = load_roster(dir / kRosterFile);
    return inputs;
}

void write_inputs(const RawInputs& inputs, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::string text;
        for (std::size_t i = 0; i < kSessionColumns.size(); ++i) {
            text += (i ? "," : "");
            text += kSessionColumns[i];
        }
        text += '\n';
        for (const auto& s : inputs.sessions) {
            text += s.tutor_id + ',' + format_date(s.date);
            for (auto c : s.talk_moves) text += ',' + std::to_string(c);
            text += ',';
            for (std::size_t i = 0; i < s.attendees.size(); ++i) {
                text += (i ? "|" : "") + s.attendees[i];
            }
            text += '\n';
        }
        write_text(dir / kSessionsFile, text);
    }
    {
        std::string text = "student_id,date,mastered_skills_avg,opportunities_avg,workspace_time_avg,"
                           "workspace_score_avg,apls_avg\n";
        for (const auto& s : inputs.its) {
            text += s.student_id + ',' + format_date(s.date);
            for (double v : s.values()) text += ',' + format_number(v);
            text += '\n';
        }
        write_text(dir / kItsFile, text);
    }
    {
        std::string text = "student_id,round,date,score\n";
        for (const auto& a : inputs.assessments) {
            text += a.student_id + ',' + std::to_string(a.round) + ',' + format_date(a.date) + ',' +
                    std::to_string(a.score) + '\n';
        }
        write_text(dir / kAssessmentsFile, text);
    }
    {
        std::string text = "student_id,tutor_id,attendance_ratio\n";
        for (const auto& e : inputs.roster) {
            text += e.student_id + ',' + e.tutor_id + ',' + format_number(e.attendance_ratio) + '\n';
        }
        write_text(dir / kRosterFile, text);
    }
}

// ---------------------------------------------------------------------------
// Cohort

Cohort::Cohort(std::vector<EvaluationPeriod> periods, std::map<std::string, std::string> tutor_of,
               std::size_t source_assessments, ExclusionReport exclusions)
    : periods_(std::move(periods)),
      source_assessments_(source_assessments),
      exclusions_(exclusions) {
    for (const auto& ep : periods_) {
        auto it = tutor_of.find(ep.student_id);
        if (it == tutor_of.end()) {
            throw std::invalid_argument("student " + ep.student_id + " has no tutor mapping");
        }
        if (it->second != ep.tutor_id) {
            throw std::invalid_argument("student " + ep.student_id + " appears under two tutors");
        }
        for (double f : ep.features) {
            if (!std::isfinite(f)) {
                throw std::invalid_argument("non-finite feature for student " + ep.student_id);
            }
        }
        if (!std::isfinite(ep.outcome)) {
            throw std::invalid_argument("non-finite outcome for student " + ep.student_id);
        }
        students_.insert(ep.student_id);
    }
    for (const auto& s : students_) {
        const auto& tutor = tutor_of.at(s);
        tutor_of_.emplace(s, tutor);
        tutors_.insert(tutor);
    }
}

std::vector<double> Cohort::outcomes() const {
    std::vector<double> out;
    out.reserve(periods_.size());
    for (const auto& ep : periods_) out.push_back(ep.outcome);
    return out;
}

std::vector<double> Cohort::outcomes(std::span<const std::size_t> rows) const {
    std::vector<double> out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back(periods_.at(r).outcome);
    return out;
}

FeatureMatrix Cohort::features(std::span<const std::size_t> rows, std::span<const int> ids,
                               FeatureAccessLog* tracer) const {
    FeatureMatrix x(rows.size(), {ids.begin(), ids.end()});
    for (std::size_t c = 0; c < ids.size(); ++c) {
        const int id = ids[c];
        if (id < 0 || static_cast<std::size_t>(id) >= kFeatureCount) {
            throw std::out_of_range("feature id outside the schema");
        }
        if (tracer) tracer->read.insert(id);
        auto col = x.column(c);
        for (std::size_t i = 0; i < rows.size(); ++i) col[i] = periods_.at(rows[i]).features[id];
    }
    return x;
}

FeatureMatrix Cohort::features(std::span<const int> ids, FeatureAccessLog* tracer) const {
    std::vector<std::size_t> all(periods_.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return features(all, ids, tracer);
}

// ---------------------------------------------------------------------------
// Window aggregation

namespace {

template <class Sessions>
WindowAggregate<kTalkMoveCount> micro_average(const Sessions& sessions) {
    WindowAggregate<kTalkMoveCount> out;
    if (sessions.empty()) {
        out.empty = true;
        return out;
    }
    std::array<std::int64_t, kTalkMoveCount> totals{};
    for (const SessionLog& s : sessions) {
        for (std::size_t m = 0; m < kTalkMoveCount; ++m) totals[m] += s.talk_moves[m];
    }
    const double n = static_cast<double>(sessions.size());
    for (std::size_t m = 0; m < kTalkMoveCount; ++m) {
        out.values[m] = static_cast<double>(totals[m]) / n;
    }
    return out;
}

template <class Snapshots>
ItsAggregate its_mean(const Snapshots& window, const ItsSnapshot* prior) {
    ItsAggregate out;
    if (window.empty()) {
        if (prior) {
            out.values = prior->values();
            out.source = ItsSource::carried_forward;
        } else {
            out.source = ItsSource::imputed;
        }
        return out;
    }
    for (const ItsSnapshot& s : window) {
        const auto v = s.values();
        for (std::size_t k = 0; k < kItsFeatureCount; ++k) out.values[k] += v[k];
    }
    for (auto& v : out.values) v /= static_cast<double>(window.size());
    return out;
}

}  // namespace

WindowAggregate<kTalkMoveCount> micro_average_talk_moves(std::span<const SessionLog> sessions) {
    return micro_average(sessions);
}

ItsAggregate aggregate_its_features(std::span<const ItsSnapshot> window, const ItsSnapshot* prior) {
    return its_mean(window, prior);
}

Cohort assemble_evaluation_periods(const RawInputs& inputs, const AssembleOptions& options) {
    std::map<std::string, const RosterEntry*> roster;
    for (const auto& e : inputs.roster) {
        if (!roster.emplace(e.student_id, &e).second) {
            throw std::invalid_argument("student " + e.student_id + " listed twice in the roster");
        }
    }

    std::map<std::string, std::vector<const AssessmentRecord*>> assessments;
    for (const auto& a : inputs.assessments) assessments[a.student_id].push_back(&a);
    for (auto& [student, list] : assessments) {
        if (!roster.contains(student)) {
            throw std::invalid_argument("student " + student + " has assessments but no tutor mapping");
        }
        std::stable_sort(list.begin(), list.end(),
                         [](auto* a, auto* b) { return a->round < b->round; });
        for (std::size_t i = 1; i < list.size(); ++i) {
            if (list[i]->round == list[i - 1]->round || list[i]->date <= list[i - 1]->date) {
                throw std::invalid_argument("student " + student +
                                            ": assessment rounds must be unique and strictly "
                                            "increasing with dates");
            }
        }
    }

    std::map<std::string, std::vector<const SessionLog*>> sessions_of;
    for (const auto& s : inputs.sessions) {
        for (const auto& id : s.attendees) sessions_of[id].push_back(&s);
    }
    for (auto& [_, list] : sessions_of) {
        std::stable_sort(list.begin(), list.end(), [](auto* a, auto* b) { return a->date < b->date; });
    }
    std::map<std::string, std::vector<const ItsSnapshot*>> its_of;
    for (const auto& s : inputs.its) its_of[s.student_id].push_back(&s);
    for (auto& [_, list] : its_of) {
        std::stable_sort(list.begin(), list.end(), [](auto* a, auto* b) { return a->date < b->date; });
    }

    Date year_start = Date::max();
    if (options.year_start) {
        year_start = *options.year_start;
    } else {
        for (const auto& s : inputs.sessions) year_start = std::min(year_start, s.date);
        for (const auto& s : inputs.its) year_start = std::min(year_start, s.date);
        for (const auto& a : inputs.assessments) year_start = std::min(year_start, a.date);
    }

    ExclusionReport exclusions;
    std::map<std::string, std::string> tutor_of;
    std::vector<EvaluationPeriod> periods;
    periods.reserve(inputs.assessments.size());

    for (const auto& [student, entry] : roster) {
        auto found = assessments.find(student);
        if (found == assessments.end()) {
            ++exclusions.without_assessments;
            continue;
        }
        if (entry->attendance_ratio < options.min_attendance) {
            ++exclusions.low_attendance;
            continue;
        }
        tutor_of.emplace(student, entry->tutor_id);

        static const std::vector<const SessionLog*> kNoSessions;
        static const std::vector<const ItsSnapshot*> kNoSnapshots;
        const auto s_it = sessions_of.find(student);
        const auto& sessions = s_it == sessions_of.end() ? kNoSessions : s_it->second;
        const auto i_it = its_of.find(student);
        const auto& snapshots = i_it == its_of.end() ? kNoSnapshots : i_it->second;

        Date window_open = year_start - std::chrono::days{1};  // exclusive bound
        for (const AssessmentRecord* a : found->second) {
            const Date window_close = a->date;
            std::vector<std::reference_wrapper<const SessionLog>> in_window;
            for (auto* s : sessions) {
                if (s->date > window_open && s->date <= window_close) in_window.emplace_back(*s);
            }
            std::vector<std::reference_wrapper<const ItsSnapshot>> its_window;
            const ItsSnapshot* prior = nullptr;
            for (auto* s : snapshots) {
                if (s->date <= window_open) prior = s;
                else if (s->date <= window_close) its_window.emplace_back(*s);
            }

            EvaluationPeriod ep;
            ep.student_id = student;
            ep.tutor_id = entry->tutor_id;
            ep.round = a->round;
            ep.outcome = a->score;
            const auto talk = micro_average(in_window);
            const auto its = its_mean(its_window, prior);
            std::copy(talk.values.begin(), talk.values.end(), ep.features.begin());
            std::copy(its.values.begin(), its.values.end(), ep.features.begin() + kTalkMoveCount);
            ep.talk_moves_imputed = talk.empty;
            ep.its_carried_forward = its.source == ItsSource::carried_forward;
            ep.its_imputed = its.source == ItsSource::imputed;
            periods.push_back(std::move(ep));
            window_open = window_close;
        }
    }
    if (exclusions.low_attendance || exclusions.without_assessments) {
        spdlog::info("excluded {} students below attendance {} and {} without assessments",
                     exclusions.low_attendance, options.min_attendance,
                     exclusions.without_assessments);
    }
    const std::size_t n = periods.size();
    return Cohort(std::move(periods), std::move(tutor_of), n, exclusions);
}

// ---------------------------------------------------------------------------
// Outcomes

std::vector<Label> binarize_outcomes(std::span<const double> outcomes, double threshold) {
    if (!std::isfinite(threshold)) throw std::invalid_argument("threshold must be finite");
    std::vector<Label> labels(outcomes.size());
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        labels[i] = outcomes[i] >= threshold ? Label::high : Label::low;
    }
    return labels;
}

BinarizedCohort binarize(const Cohort& cohort, double threshold) {
    BinarizedCohort out;
    out.cohort = &cohort;
    out.threshold = threshold;
    out.raw_outcomes = cohort.outcomes();
    out.labels = binarize_outcomes(out.raw_outcomes, threshold);
    out.n_high = static_cast<std::size_t>(std::count(out.labels.begin(), out.labels.end(), Label::high));
    out.n_low = out.labels.size() - out.n_high;
    out.degenerate = out.n_high == 0 || out.n_low == 0;
    return out;
}

Cohort compute_score_changes(const Cohort& cohort) {
    std::map<std::string, std::vector<const EvaluationPeriod*>> by_student;
    for (const auto& ep : cohort.periods()) by_student[ep.student_id].push_back(&ep);

    std::vector<EvaluationPeriod> changes;
    std::map<std::string, std::string> tutor_of;
    std::size_t source_assessments = 0;
    for (auto& [student, eps] : by_student) {
        if (eps.size() < 2) continue;
        std::stable_sort(eps.begin(), eps.end(), [](auto* a, auto* b) { return a->round < b->round; });
        source_assessments += eps.size();
        tutor_of.emplace(student, cohort.tutor_of().at(student));
        for (std::size_t k = 1; k < eps.size(); ++k) {
            EvaluationPeriod ep = *eps[k];
            ep.outcome = eps[k]->outcome - eps[k - 1]->outcome;
            changes.push_back(std::move(ep));
        }
    }
    return Cohort(std::move(changes), std::move(tutor_of), source_assessments, cohort.exclusions());
}

std::string cohort_csv(const Cohort& cohort) {
    std::string text = "student_id,tutor_id,round";
    for (auto name : kFeatureNames) {
        text += ',';
        text += name;
    }
    text += ",outcome\n";
    for (const auto& ep : cohort.periods()) {
        text += ep.student_id + ',' + ep.tutor_id + ',' + std::to_string(ep.round);
        for (double f : ep.features) text += ',' + format_number(f);
        text += ',' + format_number(ep.outcome) + '\n';
    }
    return text;
}

void write_cohort_csv(const Cohort& cohort, const std::filesystem::path& file) {
    write_text(file, cohort_csv(cohort));
}

}  // namespace dtx
