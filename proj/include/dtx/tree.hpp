#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dtx/feature_matrix.hpp"
#include "dtx/metrics.hpp"
#include "dtx/random.hpp"

namespace dtx {

enum class Task { classification, regression };

inline constexpr int kUnboundedDepth = std::numeric_limits<int>::max();
/// mtry sentinels: every feature, or ceil(sqrt(feature count)).
inline constexpr int kAllFeatures = 0;
inline constexpr int kSqrtFeatures = -1;

struct TreeParams {
    int max_depth = 2;
    int min_leaf = 5;
    int mtry = kAllFeatures;
    Task task = Task::classification;
    SdKind sd_kind = SdKind::sample;
};

/// Number of candidate features per split for a matrix with `n_features` columns.
int resolve_mtry(int mtry, std::size_t n_features);
void validate(const TreeParams& params);

/// (n, mean, SD) of the raw outcomes that reached a node.
struct RawAnnotation {
    std::size_t n = 0;
    double mean = 0.0;
    double sd = 0.0;
};

struct TreeNode {
    int feature = -1;  // schema feature id; -1 marks a leaf
    double threshold = 0.0;
    int left = -1;  // x[feature] <= threshold
    int right = -1;
    ClassCounts counts;  // classification tallies (bootstrap-weighted at fit time)
    double value = 0.0;  // regression: mean target
    RawAnnotation raw;

    bool is_leaf() const { return feature < 0; }
};

/// Binary tree stored in pre-order; node 0 is the root.
class DecisionTree {
public:
    DecisionTree() = default;
    DecisionTree(Task task, std::vector<TreeNode> nodes);

    Task task() const { return task_; }
    std::span<const TreeNode> nodes() const { return nodes_; }
    const TreeNode& node(std::size_t i) const { return nodes_[i]; }
    const TreeNode& root() const { return nodes_.front(); }
    bool empty() const { return nodes_.empty(); }

    int depth() const;
    std::size_t leaf_count() const;
    /// Schema feature ids used by internal nodes, in pre-order.
    std::vector<int> split_features() const;

    /// Leaf reached by a full schema-indexed feature vector. Throws on NaN.
    std::size_t leaf_index(std::span<const double> x) const;
    /// Leaf reached by a matrix row; split features must be present in the matrix.
    std::size_t leaf_index(const FeatureMatrix& x, std::size_t row) const;
    /// Leaf of every matrix row.
    std::vector<std::size_t> leaf_indices(const FeatureMatrix& x) const;

    /// High-class fraction of the reached leaf.
    double predict_proba(std::span<const double> x) const;
    double predict_proba(const FeatureMatrix& x, std::size_t row) const;
    /// High iff proba > 0.5; an even leaf goes to low.
    Label predict_label(std::span<const double> x) const;
    Label predict_label(const FeatureMatrix& x, std::size_t row) const;
    double predict_value(std::span<const double> x) const;
    double predict_value(const FeatureMatrix& x, std::size_t row) const;

    std::vector<double> predict_proba(const FeatureMatrix& x) const;
    std::vector<Label> predict_labels(const FeatureMatrix& x) const;
    std::vector<double> predict_values(const FeatureMatrix& x) const;

    /// Replaces every node's raw annotation with (n, mean, SD) of `raw` over the
    /// rows routed through it.
    void annotate_raw(const FeatureMatrix& x, std::span<const double> raw,
                      SdKind kind = SdKind::sample);
    /// Replaces class tallies with those of `labels` routed through the tree.
    void recount(const FeatureMatrix& x, std::span<const Label> labels);

    bool operator==(const DecisionTree& other) const;

private:
    Task task_ = Task::classification;
    std::vector<TreeNode> nodes_;
};

inline double leaf_proba(const TreeNode& leaf) {
    const auto total = leaf.counts.total();
    return total == 0 ? 0.0 : static_cast<double>(leaf.counts.n_high) / static_cast<double>(total);
}

/// Per-column row order sorted by value (stable). Shared by every tree grown
/// on the same matrix.
class PresortedColumns {
public:
    PresortedColumns() = default;
    explicit PresortedColumns(const FeatureMatrix& x);
    std::span<const std::uint32_t> order(std::size_t col) const {
        return {order_.data() + col * rows_, rows_};
    }
    std::size_t rows() const { return rows_; }

private:
    std::size_t rows_ = 0;
    std::vector<std::uint32_t> order_;
};

/// Greedy CART induction. At each node `mtry` distinct features are drawn from
/// `rng`; candidate thresholds are midpoints between consecutive distinct values;
/// the split with the lowest weighted impurity wins, ties going to the lower
/// feature column and then the lower threshold. Growth stops at max_depth, on a
/// pure node, when no split leaves min_leaf rows on each side, or when no split
/// strictly lowers impurity. Throws std::invalid_argument with fewer than
/// 2 * min_leaf rows.
DecisionTree fit_tree(const FeatureMatrix& x, std::span<const Label> labels,
                      std::span<const double> raw_outcomes, const TreeParams& params, Rng& rng);
/// Regression variant (squared-error criterion); params.task must be regression.
DecisionTree fit_tree(const FeatureMatrix& x, std::span<const double> targets,
                      std::span<const double> raw_outcomes, const TreeParams& params, Rng& rng);

/// Lower-level entry used by forests: row multiplicities in `weights` (0 = row
/// absent) over a presorted matrix. Exactly one of labels / targets is non-empty.
DecisionTree grow_tree(const FeatureMatrix& x, const PresortedColumns& presorted,
                       std::span<const std::uint32_t> weights, std::span<const Label> labels,
                       std::span<const double> targets, std::span<const double> raw_outcomes,
                       const TreeParams& params, Rng& rng);

enum class ExportFormat { dot, json };

/// Deterministic Graphviz rendering: splits read "name <= t", every node shows
/// n and mean (SD) of raw outcomes, leaves add the predicted class.
std::string to_dot(const DecisionTree& tree, std::span<const std::string> feature_names);
/// {type, feature, threshold, children | n, mean, sd, class}.
nlohmann::json to_json(const DecisionTree& tree, std::span<const std::string> feature_names);
DecisionTree tree_from_json(const nlohmann::json& doc, std::span<const std::string> feature_names);
std::string export_tree(const DecisionTree& tree, std::span<const std::string> feature_names,
                        ExportFormat format);

}  // namespace dtx
