#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dtx/dataset.hpp"
#include "dtx/forest.hpp"
#include "dtx/random.hpp"
#include "dtx/schema.hpp"
#include "dtx/tree.hpp"

namespace dtx {

inline constexpr std::size_t kFoldCount = 5;

// ---------------------------------------------------------------------------
// Tutor-grouped folds

struct FoldTally {
    std::size_t tutors = 0;
    std::size_t students = 0;
};

/// Sum over folds of (student share - 0.2)^2 + (tutor share - 0.2)^2.
/// A fold without tutors makes the candidate infeasible (+inf).
double partition_sse(std::span<const FoldTally> folds);
/// `fold_of_tutor[i]` is the fold of the i-th tutor of cohort.tutors().
std::vector<FoldTally> tally_folds(const Cohort& cohort, std::span<const int> fold_of_tutor);
double partition_sse(std::span<const int> fold_of_tutor, const Cohort& cohort);

struct Fold {
    std::vector<std::string> tutors;
    std::vector<std::string> students;
    std::vector<std::size_t> periods;  // EP row indices into the cohort
};

struct FoldPlan {
    std::array<Fold, kFoldCount> folds;
    std::vector<int> fold_of_tutor;  // parallel to cohort.tutors()
    double sse = std::numeric_limits<double>::infinity();
    std::size_t candidate_index = 0;
};

FoldPlan make_fold_plan(const Cohort& cohort, std::span<const int> fold_of_tutor);

/// Draws `n_candidates` random tutor-to-fold assignments (a candidate with an
/// empty fold counts as drawn but infeasible) and keeps the lowest SSE, the
/// earliest candidate on ties. Throws DegenerateDataError with fewer than five
/// tutors.
FoldPlan search_fold_plan(const Cohort& cohort, std::size_t n_candidates, Rng& rng);

struct FoldAssignment {
    int test = 0;
    int validation = 0;
    std::array<int, kFoldCount - 2> training{};
};

/// Fold k is the test fold of assignment k; its validation fold is drawn
/// uniformly from the other four and the remaining three train.
std::array<FoldAssignment, kFoldCount> nested_cv_assignments(const FoldPlan& plan, Rng& rng);

// ---------------------------------------------------------------------------
// Extraction

/// Share of rows on which `tree` predicts the forest's majority vote.
/// Throws std::invalid_argument on an empty matrix.
double agreement(const DecisionTree& tree, const Forest& forest, const FeatureMatrix& rows);

struct Extraction {
    std::size_t member_index = 0;
    double agreement = 0.0;
};

/// Member with the highest agreement with the majority vote on `rows`; the
/// lowest index wins ties.
Extraction extract_best_tree(const Forest& forest, const FeatureMatrix& rows);

// ---------------------------------------------------------------------------
// Sweep

enum class AgreementSet { training, validation };
enum class OutcomeKind { score, change };

std::vector<double> default_score_thresholds();   // 15, 16, ..., 24
std::vector<double> default_change_thresholds();  // 2, 2.5, 3, 3.5

struct SweepConfig {
    /// Empty selects the default list for the outcome kind.
    std::vector<double> thresholds;
    std::size_t n_seeds = 200;
    /// Member/tree settings; the seed field is replaced per swept seed.
    ForestParams forest;
    std::uint64_t master_seed = 0;
    std::size_t fold_candidates = 1000;
    FeatureSet features = FeatureSet::combined;
    AgreementSet agreement_set = AgreementSet::training;
    /// Traditional decision-tree baseline: fully grown, every feature at each split.
    TreeParams plain_tree{.max_depth = kUnboundedDepth, .min_leaf = 1, .mtry = kAllFeatures};
    unsigned jobs = 0;
};

void validate(const SweepConfig& config);
std::vector<double> resolve_thresholds(const SweepConfig& config, OutcomeKind kind);
/// Seed of the forest trained for sweep seed index `index`.
std::uint64_t sweep_forest_seed(std::uint64_t master_seed, std::uint64_t index);

struct ExtractedModel {
    DecisionTree tree;
    int fold = 0;
    double threshold = 0.0;
    std::uint64_t seed_index = 0;
    std::uint64_t forest_seed = 0;
    std::size_t member_index = 0;
    double agreement = 0.0;
    double validation_auc = 0.0;
};

struct FoldResult {
    FoldAssignment assignment;
    std::size_t n_training = 0;
    std::size_t n_validation = 0;
    std::size_t n_test = 0;
    std::vector<double> skipped_thresholds;  // degenerate on training or validation rows
    ExtractedModel winner;
    double test_auc = 0.0;
};

struct CohortSummary {
    std::size_t students = 0;
    std::size_t tutors = 0;
    std::size_t periods = 0;
    std::size_t source_assessments = 0;
};

struct PipelineReport {
    OutcomeKind outcome = OutcomeKind::score;
    FeatureSet features = FeatureSet::combined;
    std::vector<double> thresholds;
    std::size_t n_seeds = 0;
    std::uint64_t master_seed = 0;
    CohortSummary cohort;
    std::vector<FoldTally> fold_tallies;
    double fold_sse = 0.0;
    std::vector<FoldResult> folds;
    double mean_test_auc = 0.0;
    /// Winner of the fold with the highest test AUC (lowest fold on ties),
    /// with raw annotations recomputed over the whole cohort.
    ExtractedModel final_model;
    double whole_dataset_auc = 0.0;
};

/// Threshold x seed sweep under nested, tutor-grouped cross-validation. For each
/// fold and each (threshold, seed): binarize, fit a forest on the training folds,
/// extract the member that agrees most with the vote, and score it on the
/// validation fold by AUC of leaf probabilities. The best candidate per fold
/// (ties: lower seed, then lower threshold) is scored on its test fold.
/// Throws DegenerateDataError when every threshold is degenerate for a fold.
PipelineReport run_sweep(const Cohort& cohort, const SweepConfig& config,
                         FeatureAccessLog* tracer = nullptr);

/// compute_score_changes, then run_sweep with change thresholds.
PipelineReport run_change_pipeline(const Cohort& cohort, const SweepConfig& config);

// ---------------------------------------------------------------------------
// Baselines

struct MethodResult {
    std::vector<double> fold_test_auc;
    double mean_test_auc = 0.0;
};

struct BaselineRow {
    FeatureSet features = FeatureSet::combined;
    MethodResult decision_tree;
    MethodResult random_forest_classifier;
    MethodResult random_forest_regressor;
    std::vector<double> regressor_fold_r2;
    MethodResult extracted_tree;
};

struct BaselineTable {
    OutcomeKind outcome = OutcomeKind::score;
    std::vector<BaselineRow> rows;  // talk, its, combined
};

/// Compares a fully grown decision tree, the forest classifier itself, a forest
/// regressor (test R^2 converted to AUC) and the extracted tree, for each of the
/// three feature sets. Every method shares the fold plan and validation rules.
BaselineTable run_baselines(const Cohort& cohort, const SweepConfig& config,
                            OutcomeKind outcome = OutcomeKind::score);
BaselineRow run_baseline_row(const Cohort& cohort, const SweepConfig& config, OutcomeKind outcome,
                             FeatureAccessLog* tracer = nullptr);

std::string_view to_string(OutcomeKind kind);
std::string_view to_string(AgreementSet set);

}  // namespace dtx
