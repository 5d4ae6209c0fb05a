#include "dtx/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace dtx {

int resolve_mtry(int mtry, std::size_t n_features) {
    const int p = static_cast<int>(n_features);
    if (mtry == kAllFeatures) return p;
    if (mtry == kSqrtFeatures) return std::max(1, static_cast<int>(std::ceil(std::sqrt(p))));
    if (mtry < 1) throw std::invalid_argument("mtry must be positive");
    return std::min(mtry, p);
}

void validate(const TreeParams& params) {
    if (params.max_depth < 1) throw std::invalid_argument("max_depth must be at least 1");
    if (params.min_leaf < 1) throw std::invalid_argument("min_leaf must be at least 1");
    if (params.mtry < kSqrtFeatures) throw std::invalid_argument("invalid mtry");
}

// ---------------------------------------------------------------------------
// DecisionTree

DecisionTree::DecisionTree(Task task, std::vector<TreeNode> nodes)
    : task_(task), nodes_(std::move(nodes)) {
    if (nodes_.empty()) throw std::invalid_argument("a tree needs at least one node");
    const int n = static_cast<int>(nodes_.size());
    for (const auto& node : nodes_) {
        if (node.is_leaf()) continue;
        if (node.left <= 0 || node.left >= n || node.right <= 0 || node.right >= n) {
            throw std::invalid_argument("tree node has an out-of-range child");
        }
    }
}

int DecisionTree::depth() const {
    if (nodes_.empty()) return 0;
    int deepest = 0;
    std::vector<std::pair<int, int>> stack{{0, 0}};
    while (!stack.empty()) {
        auto [i, d] = stack.back();
        stack.pop_back();
        deepest = std::max(deepest, d);
        const auto& node = nodes_[i];
        if (!node.is_leaf()) {
            stack.emplace_back(node.left, d + 1);
            stack.emplace_back(node.right, d + 1);
        }
    }
    return deepest;
}

std::size_t DecisionTree::leaf_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

std::vector<int> DecisionTree::split_features() const {
    std::vector<int> out;
    for (const auto& n : nodes_) {
        if (!n.is_leaf()) out.push_back(n.feature);
    }
    return out;
}

std::size_t DecisionTree::leaf_index(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes_[i].is_leaf()) {
        const auto& node = nodes_[i];
        if (static_cast<std::size_t>(node.feature) >= x.size()) {
            throw std::out_of_range("feature vector too short for tree");
        }
        const double v = x[node.feature];
        if (std::isnan(v)) throw std::invalid_argument("NaN feature value");
        i = static_cast<std::size_t>(v <= node.threshold ? node.left : node.right);
    }
    return i;
}

std::size_t DecisionTree::leaf_index(const FeatureMatrix& x, std::size_t row) const {
    std::size_t i = 0;
    while (!nodes_[i].is_leaf()) {
        const auto& node = nodes_[i];
        const int col = x.column_of(node.feature);
        if (col < 0) throw std::out_of_range("split feature missing from matrix");
        const double v = x.at(row, static_cast<std::size_t>(col));
        if (std::isnan(v)) throw std::invalid_argument("NaN feature value");
        i = static_cast<std::size_t>(v <= node.threshold ? node.left : node.right);
    }
    return i;
}

double DecisionTree::predict_proba(std::span<const double> x) const {
    return leaf_proba(nodes_[leaf_index(x)]);
}
double DecisionTree::predict_proba(const FeatureMatrix& x, std::size_t row) const {
    return leaf_proba(nodes_[leaf_index(x, row)]);
}
Label DecisionTree::predict_label(std::span<const double> x) const {
    return predict_proba(x) > 0.5 ? Label::high : Label::low;
}
Label DecisionTree::predict_label(const FeatureMatrix& x, std::size_t row) const {
    return predict_proba(x, row) > 0.5 ? Label::high : Label::low;
}
double DecisionTree::predict_value(std::span<const double> x) const {
    return nodes_[leaf_index(x)].value;
}
double DecisionTree::predict_value(const FeatureMatrix& x, std::size_t row) const {
    return nodes_[leaf_index(x, row)].value;
}

std::vector<std::size_t> DecisionTree::leaf_indices(const FeatureMatrix& x) const {
    // Resolve each split's column once instead of once per row.
    std::vector<const double*> column(nodes_.size(), nullptr);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].is_leaf()) continue;
        const int col = x.column_of(nodes_[i].feature);
        if (col < 0) throw std::out_of_range("split feature missing from matrix");
        column[i] = x.column(static_cast<std::size_t>(col)).data();
    }
    std::vector<std::size_t> out(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        std::size_t i = 0;
        while (column[i] != nullptr) {
            const double v = column[i][r];
            if (std::isnan(v)) throw std::invalid_argument("NaN feature value");
            i = static_cast<std::size_t>(v <= nodes_[i].threshold ? nodes_[i].left : nodes_[i].right);
        }
        out[r] = i;
    }
    return out;
}

std::vector<double> DecisionTree::predict_proba(const FeatureMatrix& x) const {
    const auto leaves = leaf_indices(x);
    std::vector<double> out(leaves.size());
    for (std::size_t r = 0; r < leaves.size(); ++r) out[r] = leaf_proba(nodes_[leaves[r]]);
    return out;
}
std::vector<Label> DecisionTree::predict_labels(const FeatureMatrix& x) const {
    const auto leaves = leaf_indices(x);
    std::vector<Label> out(leaves.size());
    for (std::size_t r = 0; r < leaves.size(); ++r) {
        out[r] = leaf_proba(nodes_[leaves[r]]) > 0.5 ? Label::high : Label::low;
    }
    return out;
}
std::vector<double> DecisionTree::predict_values(const FeatureMatrix& x) const {
    const auto leaves = leaf_indices(x);
    std::vector<double> out(leaves.size());
    for (std::size_t r = 0; r < leaves.size(); ++r) out[r] = nodes_[leaves[r]].value;
    return out;
}

namespace {

/// Node indices on the path from the root to the leaf reached by `row`.
template <class Visit>
void walk(std::span<const TreeNode> nodes, const FeatureMatrix& x, std::size_t row, Visit visit) {
    std::size_t i = 0;
    for (;;) {
        visit(i);
        const auto& node = nodes[i];
        if (node.is_leaf()) return;
        const int col = x.column_of(node.feature);
        if (col < 0) throw std::out_of_range("split feature missing from matrix");
        i = static_cast<std::size_t>(x.at(row, static_cast<std::size_t>(col)) <= node.threshold
                                         ? node.left
                                         : node.right);
    }
}

}  // namespace

void DecisionTree::annotate_raw(const FeatureMatrix& x, std::span<const double> raw, SdKind kind) {
    if (raw.size() != x.rows()) throw std::invalid_argument("annotate_raw: length mismatch");
    std::vector<std::vector<double>> routed(nodes_.size());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        walk(nodes_, x, r, [&](std::size_t i) { routed[i].push_back(raw[r]); });
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (routed[i].empty()) {
            nodes_[i].raw = {};
            continue;
        }
        const auto summary = mean_sd(routed[i], kind);
        nodes_[i].raw = {routed[i].size(), summary.mean, summary.sd};
    }
}

void DecisionTree::recount(const FeatureMatrix& x, std::span<const Label> labels) {
    if (labels.size() != x.rows()) throw std::invalid_argument("recount: length mismatch");
    for (auto& node : nodes_) node.counts = {};
    for (std::size_t r = 0; r < x.rows(); ++r) {
        walk(nodes_, x, r, [&](std::size_t i) {
            (labels[r] == Label::high ? nodes_[i].counts.n_high : nodes_[i].counts.n_low) += 1;
        });
    }
}

bool DecisionTree::operator==(const DecisionTree& other) const {
    if (task_ != other.task_ || nodes_.size() != other.nodes_.size()) return false;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const auto& a = nodes_[i];
        const auto& b = other.nodes_[i];
        if (a.feature != b.feature || a.threshold != b.threshold || a.left != b.left ||
            a.right != b.right || a.counts != b.counts || a.value != b.value || a.raw.n != b.raw.n ||
            a.raw.mean != b.raw.mean || a.raw.sd != b.raw.sd) {
            return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// Induction

PresortedColumns::PresortedColumns(const FeatureMatrix& x) : rows_(x.rows()) {
    order_.resize(x.rows() * x.cols());
    for (std::size_t c = 0; c < x.cols(); ++c) {
        auto first = order_.begin() + static_cast<std::ptrdiff_t>(c * rows_);
        auto last = first + static_cast<std::ptrdiff_t>(rows_);
        std::iota(first, last, 0u);
        const auto col = x.column(c);
        std::stable_sort(first, last, [&](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
    }
}

namespace {

using Int128 = __int128;

struct SplitChoice {
    int column = -1;
    double threshold = 0.0;
    // Classification score as the fraction num / den (larger is better).
    Int128 num = 0;
    Int128 den = 1;
    // Regression score, or the floating-point classification score used for screening.
    double score = 0.0;
};

// Labels are summed as 0/1 integers.
static_assert(static_cast<int>(Label::low) == 0 && static_cast<int>(Label::high) == 1);

struct Item {
    double value;
    double target;  // regression only
    std::uint32_t weight;
    std::uint32_t high;  // 1 for a high label
};

class Grower {
public:
    Grower(const FeatureMatrix& x, const PresortedColumns& presorted,
           std::span<const std::uint32_t> weights, std::span<const Label> labels,
           std::span<const double> targets, std::span<const double> raw, const TreeParams& params,
           Rng& rng)
        : x_(x),
          presorted_(presorted),
          weights_(weights),
          labels_(labels),
          targets_(targets),
          raw_(raw),
          params_(params),
          rng_(rng),
          classification_(params.task == Task::classification),
          mtry_(resolve_mtry(params.mtry, x.cols())),
          mark_(x.rows(), -1),
          pool_(x.cols()) {}

    DecisionTree grow() {
        std::vector<std::uint32_t> rows(x_.rows());
        std::size_t k = 0;
        for (std::uint32_t r = 0; r < x_.rows(); ++r) {
            rows[k] = r;
            k += weights_[r] > 0 ? 1 : 0;
        }
        rows.resize(k);
        grow_node(rows, 0);
        return DecisionTree(params_.task, std::move(nodes_));
    }

private:
    struct NodeStats {
        std::int64_t weight = 0;
        ClassCounts counts;
        double sum = 0.0;
        double sum_sq = 0.0;
        double min_target = 0.0;
        double max_target = 0.0;
    };

    NodeStats stats(std::span<const std::uint32_t> rows) const {
        NodeStats s;
        bool first = true;
        for (auto r : rows) {
            const std::int64_t w = weights_[r];
            s.weight += w;
            if (classification_) {
                const std::int64_t high = static_cast<std::int64_t>(labels_[r]);
                s.counts.n_high += w * high;
                s.counts.n_low += w * (1 - high);
            } else {
                const double t = targets_[r];
                s.sum += static_cast<double>(w) * t;
                s.sum_sq += static_cast<double>(w) * t * t;
                s.min_target = first ? t : std::min(s.min_target, t);
                s.max_target = first ? t : std::max(s.max_target, t);
                first = false;
            }
        }
        return s;
    }

    RawAnnotation annotate(std::span<const std::uint32_t> rows, std::int64_t weight) const {
        RawAnnotation a;
        a.n = static_cast<std::size_t>(weight);
        if (weight == 0) return a;
        double sum = 0.0;
        for (auto r : rows) sum += static_cast<double>(weights_[r]) * raw_[r];
        a.mean = sum / static_cast<double>(weight);
        if (weight > 1) {
            double squares = 0.0;
            for (auto r : rows) {
                const double d = raw_[r] - a.mean;
                squares += static_cast<double>(weights_[r]) * d * d;
            }
            const double denom = params_.sd_kind == SdKind::sample ? static_cast<double>(weight - 1)
                                                                   : static_cast<double>(weight);
            a.sd = std::sqrt(squares / denom);
        }
        return a;
    }

    int grow_node(std::vector<std::uint32_t>& rows, int depth) {
        const int index = static_cast<int>(nodes_.size());
        nodes_.emplace_back();
        const NodeStats s = stats(rows);
        {
            TreeNode& node = nodes_.back();
            node.counts = s.counts;
            node.value = classification_ || s.weight == 0 ? 0.0 : s.sum / static_cast<double>(s.weight);
            node.raw = annotate(rows, s.weight);
        }

        const bool pure = classification_ ? s.counts.pure() : s.min_target == s.max_target;
        if (depth >= params_.max_depth || pure || s.weight < 2 * params_.min_leaf) return index;

        const auto choice = best_split(rows, index, s);
        if (choice.column < 0) return index;

        std::vector<std::uint32_t> left_rows;
        std::vector<std::uint32_t> right_rows;
        const auto col = x_.column(static_cast<std::size_t>(choice.column));
        for (auto r : rows) (col[r] <= choice.threshold ? left_rows : right_rows).push_back(r);
        rows.clear();
        rows.shrink_to_fit();

        nodes_[index].feature = x_.feature_id(static_cast<std::size_t>(choice.column));
        nodes_[index].threshold = choice.threshold;
        const int left = grow_node(left_rows, depth + 1);
        const int right = grow_node(right_rows, depth + 1);
        nodes_[index].left = left;
        nodes_[index].right = right;
        return index;
    }

    void candidate_columns(std::vector<std::size_t>& out) {
        const std::size_t p = x_.cols();
        std::iota(pool_.begin(), pool_.end(), std::size_t{0});
        if (static_cast<std::size_t>(mtry_) >= p) {
            out.assign(pool_.begin(), pool_.end());
            return;
        }
        for (std::size_t i = 0; i < static_cast<std::size_t>(mtry_); ++i) {
            const std::size_t j = i + rng_.index(p - i);
            std::swap(pool_[i], pool_[j]);
        }
        out.assign(pool_.begin(), pool_.begin() + mtry_);
        std::sort(out.begin(), out.end());
    }

    /// Rows of the node in ascending order of column `c`.
    void ordered_items(std::span<const std::uint32_t> rows, int node, std::size_t c) {
        const auto col = x_.column(c);
        if (rows.size() * 8 < x_.rows()) {
            items_.resize(rows.size());
            std::size_t k = 0;
            for (auto r : rows) items_[k++] = item(col[r], r);
            std::sort(items_.begin(), items_.end(),
                      [](const Item& a, const Item& b) { return a.value < b.value; });
            return;
        }
        // Branch-free compaction of the node's rows out of the full presorted order.
        items_.resize(x_.rows());
        std::size_t k = 0;
        for (auto r : presorted_.order(c)) {
            items_[k] = item(col[r], r);
            k += mark_[r] == node ? 1 : 0;
        }
        items_.resize(k);
    }

    Item item(double value, std::uint32_t r) const {
        if (classification_) return {value, 0.0, weights_[r], static_cast<std::uint32_t>(labels_[r])};
        return {value, targets_[r], weights_[r], 0};
    }

    static double midpoint(double lo, double hi) {
        const double mid = lo + (hi - lo) / 2.0;
        return mid < hi ? mid : lo;
    }

    SplitChoice best_split(std::span<const std::uint32_t> rows, int node, const NodeStats& s) {
        if (rows.size() * 8 >= x_.rows()) {
            for (auto r : rows) mark_[r] = node;
        }
        candidate_columns(columns_);
        const std::int64_t min_leaf = params_.min_leaf;
        const std::int64_t total_w = s.weight;

        SplitChoice best;
        bool have = false;
        for (auto c : columns_) {
            ordered_items(rows, node, c);
            std::int64_t left_w = 0;
            std::int64_t left_high = 0;
            double left_sum = 0.0;
            const std::size_t count = items_.size();
            for (std::size_t i = 0; i + 1 < count; ++i) {
                const Item& it = items_[i];
                left_w += it.weight;
                if (classification_) {
                    left_high += static_cast<std::int64_t>(it.weight * it.high);
                } else {
                    left_sum += static_cast<double>(it.weight) * it.target;
                }
                if (items_[i + 1].value == it.value) continue;
                const std::int64_t right_w = total_w - left_w;
                if (left_w < min_leaf) continue;
                if (right_w < min_leaf) break;

                if (classification_) {
                    const std::int64_t lh = left_high;
                    const std::int64_t ll = left_w - left_high;
                    const std::int64_t rh = s.counts.n_high - left_high;
                    const std::int64_t rl = s.counts.n_low - ll;
                    // Screen in floating point; settle near-ties exactly.
                    const double approx = static_cast<double>(lh * lh + ll * ll) / static_cast<double>(left_w) +
                                          static_cast<double>(rh * rh + rl * rl) / static_cast<double>(right_w);
                    if (have && approx < best.score * (1.0 - 1e-9)) continue;
                    const Int128 num = static_cast<Int128>(lh * lh + ll * ll) * right_w +
                                       static_cast<Int128>(rh * rh + rl * rl) * left_w;
                    const Int128 den = static_cast<Int128>(left_w) * right_w;
                    if (!have || num * best.den > best.num * den) {
                        best = {static_cast<int>(c), midpoint(it.value, items_[i + 1].value), num, den,
                                approx};
                        have = true;
                    }
                } else {
                    const double right_sum = s.sum - left_sum;
                    const double score = left_sum * left_sum / static_cast<double>(left_w) +
                                         right_sum * right_sum / static_cast<double>(right_w);
                    if (!have || score > best.score) {
                        best = {static_cast<int>(c), midpoint(it.value, items_[i + 1].value), 0, 1,
                                score};
                        have = true;
                    }
                }
            }
        }
        if (!have) return {};

        // Only accept splits that strictly lower impurity.
        if (classification_) {
            const Int128 h = s.counts.n_high;
            const Int128 l = s.counts.n_low;
            if (!(best.num * total_w > (h * h + l * l) * best.den)) return {};
        } else {
            const double parent = s.sum * s.sum / static_cast<double>(total_w);
            const double gain = best.score - parent;
            if (!(gain > 1e-12 * std::max(1.0, s.sum_sq))) return {};
        }
        return best;
    }

    const FeatureMatrix& x_;
    const PresortedColumns& presorted_;
    std::span<const std::uint32_t> weights_;
    std::span<const Label> labels_;
    std::span<const double> targets_;
    std::span<const double> raw_;
    const TreeParams& params_;
    Rng& rng_;
    bool classification_;
    int mtry_;
    std::vector<int> mark_;
    std::vector<std::size_t> pool_;
    std::vector<std::size_t> columns_;
    std::vector<Item> items_;
    std::vector<TreeNode> nodes_;
};

void check_inputs(const FeatureMatrix& x, std::size_t n_targets, std::span<const double> raw,
                  const TreeParams& params) {
    validate(params);
    if (x.cols() == 0) throw std::invalid_argument("fit_tree: no features");
    if (n_targets != x.rows() || raw.size() != x.rows()) {
        throw std::invalid_argument("fit_tree: targets and raw outcomes must match the row count");
    }
    for (std::size_t c = 0; c < x.cols(); ++c) {
        for (double v : x.column(c)) {
            if (std::isnan(v)) throw std::invalid_argument("fit_tree: NaN feature value");
        }
    }
}

}  // namespace

DecisionTree grow_tree(const FeatureMatrix& x, const PresortedColumns& presorted,
                       std::span<const std::uint32_t> weights, std::span<const Label> labels,
                       std::span<const double> targets, std::span<const double> raw_outcomes,
                       const TreeParams& params, Rng& rng) {
    const bool classification = params.task == Task::classification;
    if (classification ? labels.size() != x.rows() : targets.size() != x.rows()) {
        throw std::invalid_argument("grow_tree: targets do not match the task or row count");
    }
    if (weights.size() != x.rows() || raw_outcomes.size() != x.rows() || presorted.rows() != x.rows()) {
        throw std::invalid_argument("grow_tree: length mismatch");
    }
    Grower grower(x, presorted, weights, labels, targets, raw_outcomes, params, rng);
    return grower.grow();
}

DecisionTree fit_tree(const FeatureMatrix& x, std::span<const Label> labels,
                      std::span<const double> raw_outcomes, const TreeParams& params, Rng& rng) {
    if (params.task != Task::classification) {
        throw std::invalid_argument("fit_tree: labels given for a regression tree");
    }
    check_inputs(x, labels.size(), raw_outcomes, params);
    if (x.rows() < 2 * static_cast<std::size_t>(params.min_leaf)) {
        throw std::invalid_argument("fit_tree: need at least 2 * min_leaf rows, got " +
                                    std::to_string(x.rows()));
    }
    const PresortedColumns presorted(x);
    const std::vector<std::uint32_t> weights(x.rows(), 1u);
    return grow_tree(x, presorted, weights, labels, {}, raw_outcomes, params, rng);
}

DecisionTree fit_tree(const FeatureMatrix& x, std::span<const double> targets,
                      std::span<const double> raw_outcomes, const TreeParams& params, Rng& rng) {
    if (params.task != Task::regression) {
        throw std::invalid_argument("fit_tree: continuous targets given for a classification tree");
    }
    check_inputs(x, targets.size(), raw_outcomes, params);
    if (x.rows() < 2 * static_cast<std::size_t>(params.min_leaf)) {
        throw std::invalid_argument("fit_tree: need at least 2 * min_leaf rows, got " +
                                    std::to_string(x.rows()));
    }
    for (double t : targets) {
        if (!std::isfinite(t)) throw std::invalid_argument("fit_tree: non-finite target");
    }
    const PresortedColumns presorted(x);
    const std::vector<std::uint32_t> weights(x.rows(), 1u);
    return grow_tree(x, presorted, weights, {}, targets, raw_outcomes, params, rng);
}

}  // namespace dtx
