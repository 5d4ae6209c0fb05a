#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dtx/tree.hpp"

namespace dtx {

struct ForestParams {
    int n_trees = 10;
    TreeParams tree{.max_depth = 2, .min_leaf = 5, .mtry = kSqrtFeatures};
    bool bootstrap = true;
    std::uint64_t seed = 0;
};

void validate(const ForestParams& params);

/// Bagged ensemble. Member order is training order; the index identifies a
/// member for extraction.
class Forest {
public:
    Forest() = default;
    Forest(ForestParams params, std::vector<DecisionTree> members,
           std::vector<std::vector<std::uint32_t>> bootstrap_indices);

    const ForestParams& params() const { return params_; }
    const std::vector<DecisionTree>& members() const { return members_; }
    std::size_t size() const { return members_.size(); }
    /// Row indices drawn for each member, in draw order. Empty when the fit did
    /// not record them.
    const std::vector<std::vector<std::uint32_t>>& bootstrap_indices() const {
        return bootstrap_indices_;
    }

private:
    ForestParams params_;
    std::vector<DecisionTree> members_;
    std::vector<std::vector<std::uint32_t>> bootstrap_indices_;
};

struct ForestFitOptions {
    bool record_bootstrap = true;
    /// Presorted columns of the training matrix, reused across fits when given.
    const PresortedColumns* presorted = nullptr;
};

/// Random forest classifier. Member i draws its bootstrap sample and split
/// features from derive_seed(params.seed, i). Throws DegenerateDataError when
/// the labels hold a single class.
Forest fit_forest(const FeatureMatrix& x, std::span<const Label> labels,
                  std::span<const double> raw_outcomes, const ForestParams& params,
                  const ForestFitOptions& options = {});
/// Random forest regressor on continuous targets (params.tree.task must be regression).
Forest fit_forest(const FeatureMatrix& x, std::span<const double> targets,
                  std::span<const double> raw_outcomes, const ForestParams& params,
                  const ForestFitOptions& options = {});

/// Members voting high for a row.
int high_votes(const Forest& forest, const FeatureMatrix& x, std::size_t row);
/// High iff strictly more than half of the members vote high.
Label majority_vote(const Forest& forest, const FeatureMatrix& x, std::size_t row);
Label majority_vote(const Forest& forest, std::span<const double> x);
std::vector<Label> majority_votes(const Forest& forest, const FeatureMatrix& x);
/// Mean member probability; the ranking score for AUC.
double ensemble_proba(const Forest& forest, const FeatureMatrix& x, std::size_t row);
double ensemble_proba(const Forest& forest, std::span<const double> x);
std::vector<double> ensemble_proba(const Forest& forest, const FeatureMatrix& x);

/// Mean of the member leaf means.
double rfr_predict(const Forest& forest, const FeatureMatrix& x, std::size_t row);
double rfr_predict(const Forest& forest, std::span<const double> x);
std::vector<double> rfr_predict(const Forest& forest, const FeatureMatrix& x);
/// Coefficient of determination on the given rows; may be negative.
double rfr_r2(const Forest& forest, const FeatureMatrix& x, std::span<const double> outcomes);

/// Params, member trees (tree JSON schema) and per-member bootstrap digests.
nlohmann::json forest_to_json(const Forest& forest, std::span<const std::string> feature_names);

}  // namespace dtx
