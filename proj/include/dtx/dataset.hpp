#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dtx/feature_matrix.hpp"
#include "dtx/metrics.hpp"
#include "dtx/schema.hpp"

namespace dtx {

using Date = std::chrono::sys_days;

/// Parses YYYY-MM-DD. Returns nullopt for anything else, including impossible dates.
std::optional<Date> parse_date(std::string_view text);
std::string format_date(Date date);

inline constexpr int kMinScore = 0;
inline constexpr int kMaxScore = 30;
inline constexpr int kRoundCount = 5;

/// One tutorial session with the tutor's coded talk-move counts.
struct SessionLog {
    std::string tutor_id;
    Date date;
    std::array<std::int64_t, kTalkMoveCount> talk_moves{};  // indexed by TalkMove
    std::vector<std::string> attendees;
};

/// ITS aggregates for one student as of a date.
struct ItsSnapshot {
    std::string student_id;
    Date date;
    double mastered_skills_avg = 0.0;
    double opportunities_avg = 0.0;
    double workspace_time_avg = 0.0;
    double workspace_score_avg = 0.0;
    double apls_avg = 0.0;

    std::array<double, kItsFeatureCount> values() const {
        return {mastered_skills_avg, opportunities_avg, workspace_time_avg, workspace_score_avg,
                apls_avg};
    }
};

struct AssessmentRecord {
    std::string student_id;
    int round = 1;
    Date date;
    int score = 0;
};

struct RosterEntry {
    std::string student_id;
    std::string tutor_id;
    double attendance_ratio = 1.0;
};

struct RawInputs {
    std::vector<SessionLog> sessions;
    std::vector<ItsSnapshot> its;
    std::vector<AssessmentRecord> assessments;
    std::vector<RosterEntry> roster;
};

inline constexpr std::string_view kSessionsFile = "sessions.csv";
inline constexpr std::string_view kItsFile = "its.csv";
inline constexpr std::string_view kAssessmentsFile = "assessments.csv";
inline constexpr std::string_view kRosterFile = "roster.csv";

/// Reads the session, ITS and assessment CSVs. Rows keep file order. Throws
/// ParseError naming file, line and column for any malformed row or header.
RawInputs load_inputs(const std::filesystem::path& session_file,
                      const std::filesystem::path& its_file,
                      const std::filesystem::path& assessment_file);
std::vector<RosterEntry> load_roster(const std::filesystem::path& roster_file);
/// All four input files from one directory.
RawInputs load_input_dir(const std::filesystem::path& dir);
/// Writes the four input CSVs into `dir` (created if needed).
void write_inputs(const RawInputs& inputs, const std::filesystem::path& dir);

/// One record per completed assessment: 11 window-aggregated features and the outcome.
struct EvaluationPeriod {
    std::string student_id;
    std::string tutor_id;
    int round = 1;
    std::array<double, kFeatureCount> features{};
    double outcome = 0.0;
    bool talk_moves_imputed = false;   // no attended session in the window
    bool its_carried_forward = false;  // no snapshot in the window; latest earlier one used
    bool its_imputed = false;          // no snapshot at or before the window end
};

struct ExclusionReport {
    std::size_t low_attendance = 0;
    std::size_t without_assessments = 0;
};

/// Records which schema feature columns were read while building matrices.
struct FeatureAccessLog {
    std::set<int> read;
};

/// Immutable dataset of evaluation periods with a fixed student -> tutor map.
class Cohort {
public:
    Cohort() = default;
    /// Validates: every EP's student is mapped to the EP's tutor, features are
    /// finite. `source_assessments` is the number of assessment records behind
    /// the EPs (equal to the EP count for score cohorts).
    Cohort(std::vector<EvaluationPeriod> periods, std::map<std::string, std::string> tutor_of,
           std::size_t source_assessments, ExclusionReport exclusions = {});

    const std::vector<EvaluationPeriod>& periods() const { return periods_; }
    std::size_t size() const { return periods_.size(); }
    const std::set<std::string>& students() const { return students_; }
    const std::set<std::string>& tutors() const { return tutors_; }
    const std::map<std::string, std::string>& tutor_of() const { return tutor_of_; }
    std::size_t source_assessments() const { return source_assessments_; }
    const ExclusionReport& exclusions() const { return exclusions_; }
    static std::vector<std::string> feature_names() { return dtx::feature_names(); }

    std::vector<double> outcomes() const;
    std::vector<double> outcomes(std::span<const std::size_t> rows) const;

    /// Design matrix of the given EP rows restricted to `feature_ids`. When a
    /// tracer is passed, every feature column read is recorded in it.
    FeatureMatrix features(std::span<const std::size_t> rows, std::span<const int> feature_ids,
                           FeatureAccessLog* tracer = nullptr) const;
    FeatureMatrix features(std::span<const int> feature_ids,
                           FeatureAccessLog* tracer = nullptr) const;

private:
    std::vector<EvaluationPeriod> periods_;
    std::map<std::string, std::string> tutor_of_;
    std::set<std::string> students_;
    std::set<std::string> tutors_;
    std::size_t source_assessments_ = 0;
    ExclusionReport exclusions_;
};

struct AssembleOptions {
    /// Start of the first evaluation window. Defaults to the earliest session
    /// or snapshot date.
    std::optional<Date> year_start;
    double min_attendance = 0.5;
};

/// Builds one EP per completed assessment. A window covers dates in
/// (previous assessment date, current assessment date]; the first window starts
/// at the year start (inclusive). Students below the attendance cut are
/// excluded and counted.
Cohort assemble_evaluation_periods(const RawInputs& inputs, const AssembleOptions& options = {});

template <std::size_t N>
struct WindowAggregate {
    std::array<double, N> values{};
    bool empty = false;
};

/// Per talk move: total count over the window's sessions / number of sessions.
/// An empty window yields zeros with `empty` set.
WindowAggregate<kTalkMoveCount> micro_average_talk_moves(std::span<const SessionLog> sessions);

enum class ItsSource { window, carried_forward, imputed };

struct ItsAggregate {
    std::array<double, kItsFeatureCount> values{};
    ItsSource source = ItsSource::window;
};

/// Per-feature mean over the window's snapshots. With no snapshot in the
/// window, `prior` (the latest earlier snapshot) is carried forward; with
/// neither, zeros are returned and marked imputed.
ItsAggregate aggregate_its_features(std::span<const ItsSnapshot> window,
                                    const ItsSnapshot* prior = nullptr);

/// Labels outcomes: high iff outcome >= threshold.
std::vector<Label> binarize_outcomes(std::span<const double> outcomes, double threshold);

struct BinarizedCohort {
    const Cohort* cohort = nullptr;
    double threshold = 0.0;
    std::vector<Label> labels;
    std::vector<double> raw_outcomes;
    std::size_t n_high = 0;
    std::size_t n_low = 0;
    /// One class is empty; the threshold cannot train a classifier.
    bool degenerate = false;
};

BinarizedCohort binarize(const Cohort& cohort, double threshold);

/// Change cohort: for each student, EPs from the second completed assessment
/// on, with outcome = this score - previous completed score. Students with a
/// single assessment are dropped.
Cohort compute_score_changes(const Cohort& cohort);

/// Flat EP export: student_id, tutor_id, round, 11 features, outcome.
std::string cohort_csv(const Cohort& cohort);
void write_cohort_csv(const Cohort& cohort, const std::filesystem::path& file);

/// Shortest round-trip decimal text of a double.
std::string format_number(double value);

}  // namespace dtx
