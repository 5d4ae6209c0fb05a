#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace dtx {

inline constexpr std::size_t kTalkMoveCount = 6;
inline constexpr std::size_t kItsFeatureCount = 5;
inline constexpr std::size_t kFeatureCount = kTalkMoveCount + kItsFeatureCount;

/// Tutor talk moves, in the fixed schema order used for feature columns.
enum class TalkMove : int {
    keeping_together = 0,
    getting_students_to_relate = 1,
    restating = 2,
    press_for_accuracy = 3,
    press_for_reasoning = 4,
    revoicing = 5,
};

/// Column names of the 11-feature evaluation-period schema: six talk-move
/// per-session averages followed by five ITS aggregates.
inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "keeping_together",
    "getting_students_to_relate",
    "restating",
    "press_for_accuracy",
    "press_for_reasoning",
    "revoicing",
    "mastered_skills_avg",
    "opportunities_avg",
    "workspace_time_avg",
    "workspace_score_avg",
    "apls_avg",
};

namespace feature {
inline constexpr int keeping_together = 0;
inline constexpr int getting_students_to_relate = 1;
inline constexpr int restating = 2;
inline constexpr int press_for_accuracy = 3;
inline constexpr int press_for_reasoning = 4;
inline constexpr int revoicing = 5;
inline constexpr int mastered_skills = 6;
inline constexpr int opportunities = 7;
inline constexpr int workspace_time = 8;
inline constexpr int workspace_score = 9;
inline constexpr int apls = 10;
}  // namespace feature

enum class FeatureSet { talk_moves, its, combined };

inline constexpr std::array<FeatureSet, 3> kAllFeatureSets = {
    FeatureSet::talk_moves, FeatureSet::its, FeatureSet::combined};

std::vector<int> feature_ids(FeatureSet set);
std::vector<std::string> feature_names();

/// "talk", "its" or "combined".
std::string_view to_string(FeatureSet set);
/// Row label used in comparison tables.
std::string_view display_name(FeatureSet set);
/// Accepts the short names above; throws ConfigError otherwise.
FeatureSet parse_feature_set(std::string_view text);

}  // namespace dtx
