#include "doctest.h"

#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "dtx/metrics.hpp"
#include "dtx/schema.hpp"
#include "dtx/synth.hpp"
#include "dtx/tree.hpp"
#include "oracles.hpp"

using namespace dtx;

namespace {

constexpr Label H = Label::high;
constexpr Label L = Label::low;

struct Data {
    FeatureMatrix x;
    std::vector<Label> y;
    std::vector<double> raw;
};

Data draw_data(Rng& rng, std::size_t n, std::size_t p, std::uint64_t levels) {
    std::vector<int> ids(p);
    std::iota(ids.begin(), ids.end(), 0);
    Data d{FeatureMatrix(n, ids), std::vector<Label>(n), std::vector<double>(n)};
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < p; ++c) d.x.at(r, c) = static_cast<double>(rng.index(levels));
        d.raw[r] = static_cast<double>(rng.index(31));
        d.y[r] = d.raw[r] >= 18 ? H : L;
    }
    return d;
}

Data one_dimensional() {
    Data d{FeatureMatrix(5, {0}), {L, L, L, H, H}, {10, 11, 12, 22, 23}};
    for (std::size_t r = 0; r < 5; ++r) d.x.at(r, 0) = static_cast<double>(r + 1);
    return d;
}

std::vector<std::string> names() { return feature_names(); }

int depth_of(const DecisionTree& t, int node) {
    const auto& n = t.node(static_cast<std::size_t>(node));
    return n.is_leaf() ? 0 : 1 + std::max(depth_of(t, n.left), depth_of(t, n.right));
}

}  // namespace

TEST_CASE("resolve_mtry and parameter validation") {
    CHECK(resolve_mtry(kAllFeatures, 11) == 11);
    CHECK(resolve_mtry(kSqrtFeatures, 11) == 4);
    CHECK(resolve_mtry(kSqrtFeatures, 5) == 3);
    CHECK(resolve_mtry(3, 11) == 3);
    CHECK(resolve_mtry(20, 11) == 11);
    CHECK_THROWS(validate(TreeParams{.max_depth = 0}));
    CHECK_THROWS(validate(TreeParams{.min_leaf = 0}));
    CHECK_NOTHROW(validate(TreeParams{}));
}

TEST_CASE("perfect split at 3.5 on one feature") {
    auto d = one_dimensional();
    Rng rng(0);
    const auto t = fit_tree(d.x, d.y, d.raw, TreeParams{.max_depth = 2, .min_leaf = 1}, rng);
    REQUIRE(t.nodes().size() == 3);
    CHECK(t.root().feature == 0);
    CHECK(t.root().threshold == 3.5);
    CHECK(t.node(1).counts == ClassCounts{0, 3});
    CHECK(t.node(2).counts == ClassCounts{2, 0});
    CHECK(t.node(1).raw.n == 3);
    CHECK(t.node(1).raw.mean == 11.0);
}

TEST_CASE("identical labels give a single leaf") {
    Data d{FeatureMatrix(6, {0, 1}), std::vector<Label>(6, H), std::vector<double>(6, 25.0)};
    for (std::size_t r = 0; r < 6; ++r) d.x.at(r, 0) = static_cast<double>(r);
    Rng rng(0);
    const auto t = fit_tree(d.x, d.y, d.raw, TreeParams{.min_leaf = 1}, rng);
    CHECK(t.nodes().size() == 1);
    CHECK(t.depth() == 0);
    CHECK(t.predict_label(d.x, 0) == H);
}

TEST_CASE("too few rows and NaN features are rejected") {
    auto d = one_dimensional();
    Rng rng(0);
    CHECK_THROWS(fit_tree(d.x, d.y, d.raw, TreeParams{.min_leaf = 3}, rng));
    d.x.at(2, 0) = std::nan("");
    CHECK_THROWS(fit_tree(d.x, d.y, d.raw, TreeParams{.min_leaf = 1}, rng));
}

TEST_CASE("small datasets match the per-node exhaustive split oracle") {
    Rng rng(44);
    for (int draw = 0; draw < 300; ++draw) {
        auto d = draw_data(rng, 2 + rng.index(7), 1 + rng.index(3), draw % 2 ? 3 : 100);
        Rng fit_rng(1);
        const auto t = fit_tree(d.x, d.y, d.raw, TreeParams{.max_depth = 2, .min_leaf = 1}, fit_rng);
        double impurity = 0.0;
        for (const auto& n : t.nodes()) {
            if (n.is_leaf()) impurity += oracle::scaled_gini(static_cast<double>(n.counts.n_high), static_cast<double>(n.counts.n_low));
        }
        std::vector<std::size_t> rows(d.x.rows());
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        const oracle::Rows view{&d.x, &d.y};
        CHECK(impurity == doctest::Approx(oracle::exhaustive_split_impurity(view, rows, 0, 2)).epsilon(1e-12));
        CHECK(impurity >= oracle::global_optimum_impurity(view, rows, 0, 2) - 1e-9);
    }
}

TEST_CASE("structural invariants on random data") {
    Rng rng(8);
    for (int draw = 0; draw < 100; ++draw) {
        auto d = draw_data(rng, 20 + rng.index(200), 1 + rng.index(11), draw % 3 ? 10 : 1000);
        const TreeParams params{.max_depth = 1 + static_cast<int>(rng.index(4)),
                                .min_leaf = 1 + static_cast<int>(rng.index(5)),
                                .mtry = static_cast<int>(rng.index(4)) - 1};
        if (d.x.rows() < 2 * static_cast<std::size_t>(params.min_leaf)) continue;
        Rng fit_rng(static_cast<std::uint64_t>(draw));
        const auto t = fit_tree(d.x, d.y, d.raw, params, fit_rng);
        CHECK(t.depth() <= params.max_depth);
        CHECK(t.depth() == depth_of(t, 0));
        std::size_t leaf_rows = 0;
        for (const auto& n : t.nodes()) {
            if (n.is_leaf()) {
                leaf_rows += n.raw.n;
                CHECK(n.counts.total() >= params.min_leaf);
                CHECK(static_cast<std::size_t>(n.counts.total()) == n.raw.n);
            } else {
                const auto& l = t.node(static_cast<std::size_t>(n.left));
                const auto& r = t.node(static_cast<std::size_t>(n.right));
                CHECK(l.counts.n_high + r.counts.n_high == n.counts.n_high);
                CHECK(l.counts.n_low + r.counts.n_low == n.counts.n_low);
                CHECK(weighted_split_gini(l.counts, r.counts) < gini(n.counts));
            }
        }
        CHECK(leaf_rows == d.x.rows());
        const auto proba = t.predict_proba(d.x);
        const auto labels = t.predict_labels(d.x);
        const auto leaves = t.leaf_indices(d.x);
        for (std::size_t r = 0; r < d.x.rows(); ++r) {
            CHECK(proba[r] >= 0.0);
            CHECK(proba[r] <= 1.0);
            CHECK(labels[r] == (proba[r] > 0.5 ? H : L));
            CHECK(leaves[r] == t.leaf_index(d.x, r));
            CHECK(proba[r] == t.predict_proba(d.x, r));
            // Routing: every internal node on the path sends x left iff x <= threshold.
            std::size_t i = 0;
            while (!t.node(i).is_leaf()) {
                const auto& n = t.node(i);
                i = static_cast<std::size_t>(d.x.value(r, n.feature) <= n.threshold ? n.left : n.right);
            }
            CHECK(i == leaves[r]);
        }
        Rng again(static_cast<std::uint64_t>(draw));
        CHECK(fit_tree(d.x, d.y, d.raw, params, again) == t);
    }
}

TEST_CASE("fully grown tree fits distinct rows perfectly") {
    Rng rng(12);
    for (int draw = 0; draw < 30; ++draw) {
        const std::size_t n = 50 + rng.index(100);
        Data d{FeatureMatrix(n, {0, 1, 2}), std::vector<Label>(n), std::vector<double>(n, 0.0)};
        std::set<std::array<double, 3>> seen;
        for (std::size_t r = 0; r < n; ++r) {
            std::array<double, 3> v;
            do {
                for (auto& e : v) e = rng.uniform();
            } while (!seen.insert(v).second);
            for (std::size_t c = 0; c < 3; ++c) d.x.at(r, c) = v[c];
            d.y[r] = rng.bernoulli(0.5) ? H : L;
        }
        Rng fit_rng(0);
        const auto t = fit_tree(d.x, d.y, d.raw, TreeParams{.max_depth = kUnboundedDepth, .min_leaf = 1}, fit_rng);
        CHECK(t.predict_labels(d.x) == d.y);
    }
}

TEST_CASE("weights behave like repeated rows") {
    Rng rng(21);
    for (int draw = 0; draw < 50; ++draw) {
        auto d = draw_data(rng, 30, 4, 6);
        std::vector<std::uint32_t> w(30);
        std::vector<std::size_t> expanded;
        for (std::size_t r = 0; r < 30; ++r) {
            w[r] = static_cast<std::uint32_t>(rng.index(3));
            for (std::uint32_t k = 0; k < w[r]; ++k) expanded.push_back(r);
        }
        std::vector<Label> ey;
        std::vector<double> eraw;
        for (auto r : expanded) {
            ey.push_back(d.y[r]);
            eraw.push_back(d.raw[r]);
        }
        const auto ex = d.x.select_rows(expanded);
        if (ex.rows() < 4) continue;
        const TreeParams params{.max_depth = 2, .min_leaf = 2};
        Rng a(5), b(5);
        const auto weighted = grow_tree(d.x, PresortedColumns(d.x), w, d.y, {}, d.raw, params, a);
        const auto plain = fit_tree(ex, ey, eraw, params, b);
        REQUIRE(weighted.nodes().size() == plain.nodes().size());
        for (std::size_t i = 0; i < plain.nodes().size(); ++i) {
            CHECK(weighted.node(i).feature == plain.node(i).feature);
            CHECK(weighted.node(i).threshold == plain.node(i).threshold);
            CHECK(weighted.node(i).counts == plain.node(i).counts);
        }
    }
}

TEST_CASE("leaf tie goes to low") {
    const DecisionTree t(Task::classification, {TreeNode{.counts = {2, 2}}});
    const std::vector<double> x(kFeatureCount, 0.0);
    CHECK(t.predict_proba(x) == 0.5);
    CHECK(t.predict_label(x) == L);
    const DecisionTree pure(Task::classification, {TreeNode{.counts = {4, 0}}});
    CHECK(pure.predict_proba(x) == 1.0);
    CHECK(pure.predict_label(x) == H);
}

TEST_CASE("NaN input is rejected at prediction") {
    const auto t = planted_tree(PlantedRule{});
    std::vector<double> x(kFeatureCount, 1.0);
    x[feature::opportunities] = std::nan("");
    CHECK_THROWS(t.predict_proba(x));
}

TEST_CASE("planted tree routes low mastery with high revoicing to the last leaf") {
    const PlantedRule rule;
    const auto t = planted_tree(rule);
    std::vector<double> x(kFeatureCount, 0.0);
    x[feature::opportunities] = 6.0;
    x[feature::revoicing] = 3.5;
    const auto leaf = t.leaf_index(x);
    CHECK(leaf == 6);
    CHECK(rule.leaf(x) == 3);
    CHECK(t.node(leaf).raw.mean == doctest::Approx(22.8));
    x[feature::revoicing] = 0.5;
    CHECK(t.node(t.leaf_index(x)).raw.mean == doctest::Approx(15.2));
}

TEST_CASE("regression tree minimises squared error") {
    Data d{FeatureMatrix(8, {0}), {}, {}};
    std::vector<double> target{1, 1, 1, 1, 9, 9, 9, 9};
    for (std::size_t r = 0; r < 8; ++r) d.x.at(r, 0) = static_cast<double>(r);
    Rng rng(0);
    const auto t = fit_tree(d.x, target, target, TreeParams{.max_depth = 3, .min_leaf = 1, .task = Task::regression}, rng);
    CHECK(t.task() == Task::regression);
    REQUIRE(t.nodes().size() == 3);
    CHECK(t.root().threshold == 3.5);
    CHECK(t.predict_values(d.x) == target);
    const std::vector<double> constant(8, 4.0);
    Rng rng2(0);
    const auto flat = fit_tree(d.x, constant, constant, TreeParams{.min_leaf = 1, .task = Task::regression}, rng2);
    CHECK(flat.nodes().size() == 1);
    CHECK(flat.predict_value(d.x, 3) == 4.0);
}

TEST_CASE("annotate_raw and recount follow the routed rows") {
    Rng rng(30);
    auto d = draw_data(rng, 120, 5, 20);
    Rng fit_rng(2);
    auto t = fit_tree(d.x, d.y, d.raw, TreeParams{.max_depth = 2, .min_leaf = 5}, fit_rng);
    auto other = draw_data(rng, 80, 5, 20);
    t.annotate_raw(other.x, other.raw, SdKind::population);
    t.recount(other.x, other.y);
    const auto leaves = t.leaf_indices(other.x);
    std::size_t total = 0;
    for (std::size_t i = 0; i < t.nodes().size(); ++i) {
        if (!t.node(i).is_leaf()) continue;
        std::vector<double> routed;
        ClassCounts counts;
        for (std::size_t r = 0; r < leaves.size(); ++r) {
            if (leaves[r] != i) continue;
            routed.push_back(other.raw[r]);
            (other.y[r] == H ? counts.n_high : counts.n_low) += 1;
        }
        total += t.node(i).raw.n;
        CHECK(t.node(i).raw.n == routed.size());
        CHECK(t.node(i).counts == counts);
        if (!routed.empty()) {
            const auto ms = mean_sd(routed, SdKind::population);
            CHECK(t.node(i).raw.mean == doctest::Approx(ms.mean));
            CHECK(t.node(i).raw.sd == doctest::Approx(ms.sd));
        }
    }
    CHECK(total == 80);
    CHECK(t.root().raw.n == 80);
}

TEST_CASE("DOT export") {
    const DecisionTree leaf(Task::classification, {TreeNode{.counts = {3, 1}, .raw = {4, 21.0, 2.5}}});
    const auto dot = to_dot(leaf, names());
    CHECK(dot.rfind("digraph tree {", 0) == 0);
    CHECK(dot.find("n0 [label=") != std::string::npos);
    CHECK(dot.find("n1") == std::string::npos);
    CHECK(dot.find("->") == std::string::npos);
    CHECK(dot.find("class = high") != std::string::npos);

    const auto planted = planted_tree(PlantedRule{});
    const auto text = to_dot(planted, names());
    for (int i = 0; i < 7; ++i) CHECK(text.find("n" + std::to_string(i) + " [label=") != std::string::npos);
    CHECK(text.find("n7") == std::string::npos);
    CHECK(text.find("opportunities_avg <= 4") != std::string::npos);
    CHECK(text.find("n0 -> n1 [label=\"yes\"]") != std::string::npos);
    CHECK(text.find("n0 -> n4 [label=\"no\"]") != std::string::npos);
    CHECK(text.find("n4 -> n6 [label=\"no\"]") != std::string::npos);
    CHECK(text == to_dot(planted, names()));
    CHECK(export_tree(planted, names(), ExportFormat::dot) == text);
}

TEST_CASE("JSON export round-trips") {
    Rng rng(3);
    auto d = draw_data(rng, 200, 11, 50);
    Rng fit_rng(9);
    const auto t = fit_tree(d.x, d.y, d.raw, TreeParams{.max_depth = 3, .min_leaf = 3}, fit_rng);
    const auto doc = to_json(t, names());
    CHECK(doc.at("root").at("type") == "split");
    CHECK(doc.at("root").at("children").size() == 2);
    CHECK(tree_from_json(doc, names()) == t);
    const auto reparsed = nlohmann::json::parse(export_tree(t, names(), ExportFormat::json));
    CHECK(tree_from_json(reparsed, names()) == t);
    auto wrong = doc;
    wrong["task"] = "clustering";
    CHECK_THROWS(tree_from_json(wrong, names()));
}
