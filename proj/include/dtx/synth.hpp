#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "json.hpp"

#include "dtx/dataset.hpp"
#include "dtx/schema.hpp"
#include "dtx/tree.hpp"

namespace dtx {

/// One talk-move split under the mastery root: outcome mean below/above the threshold.
struct PlantedSplit {
    int feature = 0;
    double threshold = 0.0;
    double low_mean = 0.0;   // feature <= threshold
    double high_mean = 0.0;  // feature > threshold
};

/// Depth-2 ground truth: an ITS mastery root with a different talk move
/// deciding the outcome on each side.
struct PlantedRule {
    int root_feature = feature::opportunities;
    double root_threshold = 4.0;
    /// opportunities <= 4: few attempts needed, i.e. high mastery.
    PlantedSplit left{feature::press_for_reasoning, 2.0, 15.7, 22.7};
    /// opportunities > 4: low mastery.
    PlantedSplit right{feature::revoicing, 2.0, 15.2, 22.8};

    /// Leaf 0..3 in left-to-right order for a schema-indexed feature vector.
    int leaf(std::span<const double> x) const;
    double leaf_mean(int leaf) const;
};

/// The planted rule as a tree whose leaves carry the planted means; class
/// tallies are empty until recounted on data.
DecisionTree planted_tree(const PlantedRule& rule);

/// 1/3 per matching node (root, left child, right child): same feature and a
/// threshold within `tolerance`. Children are compared in <=-routing order.
double structure_recovery_score(const DecisionTree& tree, const PlantedRule& rule,
                                double tolerance = 1.0);

nlohmann::json to_json(const PlantedRule& rule);
PlantedRule planted_rule_from_json(const nlohmann::json& doc);

struct CohortSpec {
    std::size_t n_tutors = 46;
    /// Completed assessments per student -> number of students.
    std::map<int, std::size_t> assessment_counts{{1, 112}, {2, 65}, {3, 127}, {4, 379}, {5, 397}};
    int group_size_min = 2;
    int group_size_max = 6;
    /// Relative frequency of each size from min to max.
    std::vector<double> group_size_weights{0.36, 0.34, 0.14, 0.10, 0.06};
    PlantedRule planted;
    /// Per-assessment Gaussian noise around the planted mean.
    double noise_sd = 4.0;
    /// Per-student random intercept shared by all of a student's assessments.
    double student_effect_sd = 0.0;
    /// Per-leaf score growth per assessment round, centred on round 3.
    std::array<double, 4> growth_per_round{};
    double high_mastery_share = 0.5;
    /// Share of groups whose tutor talk-move rate sits above the planted threshold.
    double reasoning_high_share = 0.8;
    double revoicing_high_share = 0.2;
    /// Clamp to [0, 30] and round. Without rounding the cohort outcomes stay real
    /// (assessment records still carry the rounded score).
    bool integer_scores = true;
    Date year_start = Date{std::chrono::year{2022} / 8 / 1};
    std::uint64_t seed = 0;

    std::size_t n_students() const;
};

/// Preset whose scores grow round over round at a rate set by the planted leaf,
/// on top of a persistent student intercept, so score changes carry the same
/// mastery structure as the scores themselves.
CohortSpec persistent_effect_spec(std::uint64_t seed);

struct SyntheticCohort {
    RawInputs inputs;
    Cohort cohort;
    PlantedRule rule;
    std::vector<int> planted_leaf;  // per EP
};

/// Tutors -> groups -> students, session logs, ITS snapshots and assessments,
/// assembled into evaluation periods whose outcomes follow the planted rule.
/// Deterministic in spec.seed. Throws ConfigError for an infeasible spec.
SyntheticCohort generate_cohort(const CohortSpec& spec);

inline constexpr std::string_view kPlantedRuleFile = "planted_rule.json";

/// Input CSVs, planted_rule.json and the flat EP export.
void write_synthetic(const SyntheticCohort& synthetic, const std::filesystem::path& dir);

}  // namespace dtx
