#include "dtx/report.hpp"

#include <fmt/format.h>

namespace dtx {

namespace {

nlohmann::json model_json(const ExtractedModel& m) {
    const auto names = feature_names();
    return {{"fold", m.fold},
            {"threshold", m.threshold},
            {"seed_index", m.seed_index},
            {"forest_seed", m.forest_seed},
            {"member_index", m.member_index},
            {"agreement", m.agreement},
            {"validation_auc", m.validation_auc},
            {"tree", to_json(m.tree, names)}};
}

nlohmann::json method_json(const MethodResult& m) {
    return {{"fold_test_auc", m.fold_test_auc}, {"mean_test_auc", m.mean_test_auc}};
}

}  // namespace

nlohmann::json to_json(const PipelineReport& report) {
    nlohmann::json out;
    out["outcome"] = std::string(to_string(report.outcome));
    out["features"] = std::string(to_string(report.features));
    out["thresholds"] = report.thresholds;
    out["n_seeds"] = report.n_seeds;
    out["master_seed"] = report.master_seed;
    out["cohort"] = {{"students", report.cohort.students},
                     {"tutors", report.cohort.tutors},
                     {"evaluation_periods", report.cohort.periods},
                     {"source_assessments", report.cohort.source_assessments}};
    auto tallies = nlohmann::json::array();
    for (const auto& t : report.fold_tallies) tallies.push_back({{"tutors", t.tutors}, {"students", t.students}});
    out["fold_plan"] = {{"sse", report.fold_sse}, {"folds", tallies}};
    auto folds = nlohmann::json::array();
    for (const auto& f : report.folds) {
        folds.push_back({{"test_fold", f.assignment.test},
                         {"validation_fold", f.assignment.validation},
                         {"training_folds", f.assignment.training},
                         {"n_training", f.n_training},
                         {"n_validation", f.n_validation},
                         {"n_test", f.n_test},
                         {"skipped_thresholds", f.skipped_thresholds},
                         {"winner", model_json(f.winner)},
                         {"test_auc", f.test_auc}});
    }
    out["folds"] = std::move(folds);
    out["mean_test_auc"] = report.mean_test_auc;
    out["final_model"] = model_json(report.final_model);
    out["whole_dataset_auc"] = report.whole_dataset_auc;
    return out;
}

nlohmann::json to_json(const BaselineTable& table) {
    nlohmann::json out;
    out["outcome"] = std::string(to_string(table.outcome));
    auto rows = nlohmann::json::array();
    for (const auto& r : table.rows) {
        rows.push_back({{"features", std::string(to_string(r.features))},
                        {"decision_tree", method_json(r.decision_tree)},
                        {"random_forest_classifier", method_json(r.random_forest_classifier)},
                        {"random_forest_regressor", method_json(r.random_forest_regressor)},
                        {"regressor_fold_r2", r.regressor_fold_r2},
                        {"extracted_decision_tree", method_json(r.extracted_tree)}});
    }
    out["rows"] = std::move(rows);
    return out;
}

nlohmann::json to_json(const SweepConfig& config) {
    const auto& t = config.forest.tree;
    return {{"thresholds", config.thresholds},
            {"n_seeds", config.n_seeds},
            {"master_seed", config.master_seed},
            {"fold_candidates", config.fold_candidates},
            {"features", std::string(to_string(config.features))},
            {"agreement_set", std::string(to_string(config.agreement_set))},
            {"forest",
             {{"n_trees", config.forest.n_trees},
              {"max_depth", t.max_depth},
              {"min_leaf", t.min_leaf},
              {"mtry", t.mtry},
              {"bootstrap", config.forest.bootstrap},
              {"sd", t.sd_kind == SdKind::sample ? "sample" : "population"}}},
            {"plain_tree",
             {{"max_depth", config.plain_tree.max_depth},
              {"min_leaf", config.plain_tree.min_leaf},
              {"mtry", config.plain_tree.mtry}}}};
}

std::string table3_csv(const BaselineTable& table) {
    std::string out =
        "outcome,feature_set,decision_tree,random_forest_classifier,random_forest_regressor,"
        "extracted_decision_tree\n";
    for (const auto& r : table.rows) {
        out += fmt::format("{},{},{:.4f},{:.4f},{:.4f},{:.4f}\n", to_string(table.outcome),
                           display_name(r.features), r.decision_tree.mean_test_auc,
                           r.random_forest_classifier.mean_test_auc,
                           r.random_forest_regressor.mean_test_auc, r.extracted_tree.mean_test_auc);
    }
    return out;
}

std::string table3_csv(const PipelineReport& report) {
    return fmt::format("outcome,feature_set,extracted_decision_tree\n{},{},{:.4f}\n",
                       to_string(report.outcome), display_name(report.features), report.mean_test_auc);
}

}  // namespace dtx
