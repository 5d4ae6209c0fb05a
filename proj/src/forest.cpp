#include "dtx/forest.hpp"

#include <optional>
#include <stdexcept>

#include "dtx/digest.hpp"
#include "dtx/errors.hpp"

namespace dtx {

void validate(const ForestParams& params) {
    if (params.n_trees < 1) throw std::invalid_argument("n_trees must be at least 1");
    validate(params.tree);
}

Forest::Forest(ForestParams params, std::vector<DecisionTree> members,
               std::vector<std::vector<std::uint32_t>> bootstrap_indices)
    : params_(std::move(params)),
      members_(std::move(members)),
      bootstrap_indices_(std::move(bootstrap_indices)) {
    if (members_.empty()) throw std::invalid_argument("a forest needs at least one member");
    if (!bootstrap_indices_.empty() && bootstrap_indices_.size() != members_.size()) {
        throw std::invalid_argument("bootstrap record does not match member count");
    }
}

namespace {

Forest fit_members(const FeatureMatrix& x, std::span<const Label> labels,
                   std::span<const double> targets, std::span<const double> raw,
                   const ForestParams& params, const ForestFitOptions& options) {
    validate(params);
    const std::size_t n = x.rows();
    if (n < 2 * static_cast<std::size_t>(params.tree.min_leaf)) {
        throw std::invalid_argument("fit_forest: need at least 2 * min_leaf rows, got " +
                                    std::to_string(n));
    }
    if (raw.size() != n) throw std::invalid_argument("fit_forest: raw outcomes length mismatch");

    std::optional<PresortedColumns> own;
    const PresortedColumns* presorted = options.presorted;
    if (presorted == nullptr || presorted->rows() != n) {
        own.emplace(x);
        presorted = &*own;
    }

    std::vector<DecisionTree> members;
    members.reserve(static_cast<std::size_t>(params.n_trees));
    std::vector<std::vector<std::uint32_t>> drawn;
    std::vector<std::uint32_t> weights(n);
    for (int m = 0; m < params.n_trees; ++m) {
        Rng rng(derive_seed(params.seed, static_cast<std::uint64_t>(m)));
        if (params.bootstrap) {
            std::fill(weights.begin(), weights.end(), 0u);
            std::vector<std::uint32_t> indices;
            if (options.record_bootstrap) indices.reserve(n);
            for (std::size_t k = 0; k < n; ++k) {
                const auto r = static_cast<std::uint32_t>(rng.index(n));
                ++weights[r];
                if (options.record_bootstrap) indices.push_back(r);
            }
            if (options.record_bootstrap) drawn.push_back(std::move(indices));
        } else {
            std::fill(weights.begin(), weights.end(), 1u);
        }
        members.push_back(grow_tree(x, *presorted, weights, labels, targets, raw, params.tree, rng));
    }
    return Forest(params, std::move(members), std::move(drawn));
}

}  // namespace

Forest fit_forest(const FeatureMatrix& x, std::span<const Label> labels,
                  std::span<const double> raw_outcomes, const ForestParams& params,
                  const ForestFitOptions& options) {
    if (params.tree.task != Task::classification) {
        throw std::invalid_argument("fit_forest: labels given for a regression forest");
    }
    if (labels.size() != x.rows()) throw std::invalid_argument("fit_forest: labels length mismatch");
    std::size_t high = 0;
    for (auto l : labels) high += l == Label::high ? 1 : 0;
    if (high == 0 || high == labels.size()) {
        throw DegenerateDataError("fit_forest: training labels hold a single class (" +
                                  std::to_string(high) + " high, " +
                                  std::to_string(labels.size() - high) + " low)");
    }
    return fit_members(x, labels, {}, raw_outcomes, params, options);
}

Forest fit_forest(const FeatureMatrix& x, std::span<const double> targets,
                  std::span<const double> raw_outcomes, const ForestParams& params,
                  const ForestFitOptions& options) {
    if (params.tree.task != Task::regression) {
        throw std::invalid_argument("fit_forest: continuous targets given for a classifier");
    }
    if (targets.size() != x.rows()) throw std::invalid_argument("fit_forest: targets length mismatch");
    return fit_members(x, {}, targets, raw_outcomes, params, options);
}

int high_votes(const Forest& forest, const FeatureMatrix& x, std::size_t row) {
    int votes = 0;
    for (const auto& m : forest.members()) votes += m.predict_label(x, row) == Label::high ? 1 : 0;
    return votes;
}

Label majority_vote(const Forest& forest, const FeatureMatrix& x, std::size_t row) {
    return 2 * high_votes(forest, x, row) > static_cast<int>(forest.size()) ? Label::high : Label::low;
}

Label majority_vote(const Forest& forest, std::span<const double> x) {
    int votes = 0;
    for (const auto& m : forest.members()) votes += m.predict_label(x) == Label::high ? 1 : 0;
    return 2 * votes > static_cast<int>(forest.size()) ? Label::high : Label::low;
}

std::vector<Label> majority_votes(const Forest& forest, const FeatureMatrix& x) {
    std::vector<Label> out(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) out[r] = majority_vote(forest, x, r);
    return out;
}

double ensemble_proba(const Forest& forest, const FeatureMatrix& x, std::size_t row) {
    double sum = 0.0;
    for (const auto& m : forest.members()) sum += m.predict_proba(x, row);
    return sum / static_cast<double>(forest.size());
}

double ensemble_proba(const Forest& forest, std::span<const double> x) {
    double sum = 0.0;
    for (const auto& m : forest.members()) sum += m.predict_proba(x);
    return sum / static_cast<double>(forest.size());
}

std::vector<double> ensemble_proba(const Forest& forest, const FeatureMatrix& x) {
    std::vector<double> out(x.rows(), 0.0);
    for (const auto& m : forest.members()) {
        const auto p = m.predict_proba(x);
        for (std::size_t r = 0; r < out.size(); ++r) out[r] += p[r];
    }
    for (auto& v : out) v /= static_cast<double>(forest.size());
    return out;
}

double rfr_predict(const Forest& forest, const FeatureMatrix& x, std::size_t row) {
    double sum = 0.0;
    for (const auto& m : forest.members()) sum += m.predict_value(x, row);
    return sum / static_cast<double>(forest.size());
}

double rfr_predict(const Forest& forest, std::span<const double> x) {
    double sum = 0.0;
    for (const auto& m : forest.members()) sum += m.predict_value(x);
    return sum / static_cast<double>(forest.size());
}

std::vector<double> rfr_predict(const Forest& forest, const FeatureMatrix& x) {
    std::vector<double> out(x.rows(), 0.0);
    for (const auto& m : forest.members()) {
        const auto v = m.predict_values(x);
        for (std::size_t r = 0; r < out.size(); ++r) out[r] += v[r];
    }
    for (auto& v : out) v /= static_cast<double>(forest.size());
    return out;
}

double rfr_r2(const Forest& forest, const FeatureMatrix& x, std::span<const double> outcomes) {
    const auto predicted = rfr_predict(forest, x);
    return r_squared(predicted, outcomes);
}

nlohmann::json forest_to_json(const Forest& forest, std::span<const std::string> feature_names) {
    const auto& p = forest.params();
    nlohmann::json out;
    out["params"] = {{"n_trees", p.n_trees},
                     {"max_depth", p.tree.max_depth},
                     {"min_leaf", p.tree.min_leaf},
                     {"mtry", p.tree.mtry},
                     {"bootstrap", p.bootstrap},
                     {"seed", p.seed}};
    auto members = nlohmann::json::array();
    for (std::size_t i = 0; i < forest.size(); ++i) {
        auto entry = to_json(forest.members()[i], feature_names);
        if (i < forest.bootstrap_indices().size()) {
            entry["bootstrap_sha256"] = sha256_hex(forest.bootstrap_indices()[i]);
        }
        members.push_back(std::move(entry));
    }
    out["members"] = std::move(members);
    return out;
}

}  // namespace dtx
