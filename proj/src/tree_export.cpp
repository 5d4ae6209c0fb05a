#include <fmt/format.h>

#include <stdexcept>
#include <string>

#include "dtx/tree.hpp"

namespace dtx {

namespace {

const std::string& name_of(std::span<const std::string> names, int feature) {
    if (feature < 0 || static_cast<std::size_t>(feature) >= names.size()) {
        throw std::out_of_range("no name for feature id " + std::to_string(feature));
    }
    return names[static_cast<std::size_t>(feature)];
}

int id_of(std::span<const std::string> names, const std::string& name) {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return static_cast<int>(i);
    }
    throw std::invalid_argument("unknown feature in tree document: " + name);
}

const char* task_name(Task task) {
    return task == Task::classification ? "classification" : "regression";
}

std::string node_label(const DecisionTree& tree, const TreeNode& node,
                       std::span<const std::string> names) {
    std::string label;
    if (!node.is_leaf()) {
        label += fmt::format("{} <= {:.4g}\\n", name_of(names, node.feature), node.threshold);
    }
    label += fmt::format("n = {}\\nmean = {:.2f} (SD {:.2f})", node.raw.n, node.raw.mean, node.raw.sd);
    if (node.is_leaf()) {
        if (tree.task() == Task::classification) {
            const bool high = leaf_proba(node) > 0.5;
            label += fmt::format("\\nclass = {} ({} high / {} low)", high ? "high" : "low",
                                 node.counts.n_high, node.counts.n_low);
        } else {
            label += fmt::format("\\nvalue = {:.3f}", node.value);
        }
    }
    return label;
}

nlohmann::json node_json(const DecisionTree& tree, std::size_t i, std::span<const std::string> names) {
    const auto& node = tree.node(i);
    nlohmann::json out;
    out["type"] = node.is_leaf() ? "leaf" : "split";
    if (!node.is_leaf()) {
        out["feature"] = name_of(names, node.feature);
        out["threshold"] = node.threshold;
    }
    out["n"] = node.raw.n;
    out["mean"] = node.raw.mean;
    out["sd"] = node.raw.sd;
    out["n_high"] = node.counts.n_high;
    out["n_low"] = node.counts.n_low;
    out["value"] = node.value;
    if (node.is_leaf()) {
        if (tree.task() == Task::classification) out["class"] = leaf_proba(node) > 0.5 ? "high" : "low";
    } else {
        out["children"] = nlohmann::json::array(
            {node_json(tree, static_cast<std::size_t>(node.left), names),
             node_json(tree, static_cast<std::size_t>(node.right), names)});
    }
    return out;
}

int node_from_json(const nlohmann::json& doc, std::span<const std::string> names,
                   std::vector<TreeNode>& nodes) {
    const int index = static_cast<int>(nodes.size());
    nodes.emplace_back();
    TreeNode node;
    node.raw.n = doc.at("n").get<std::size_t>();
    node.raw.mean = doc.at("mean").get<double>();
    node.raw.sd = doc.at("sd").get<double>();
    node.counts.n_high = doc.value("n_high", std::int64_t{0});
    node.counts.n_low = doc.value("n_low", std::int64_t{0});
    node.value = doc.value("value", 0.0);
    const auto type = doc.at("type").get<std::string>();
    if (type == "split") {
        node.feature = id_of(names, doc.at("feature").get<std::string>());
        node.threshold = doc.at("threshold").get<double>();
        const auto& children = doc.at("children");
        if (!children.is_array() || children.size() != 2) {
            throw std::invalid_argument("split node needs exactly two children");
        }
        node.left = node_from_json(children[0], names, nodes);
        node.right = node_from_json(children[1], names, nodes);
    } else if (type != "leaf") {
        throw std::invalid_argument("unknown node type: " + type);
    }
    nodes[static_cast<std::size_t>(index)] = node;
    return index;
}

}  // namespace

std::string to_dot(const DecisionTree& tree, std::span<const std::string> feature_names) {
    std::string out = "digraph tree {\n  node [shape=box, fontname=\"Helvetica\"];\n";
    const auto nodes = tree.nodes();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        out += fmt::format("  n{} [label=\"{}\"];\n", i, node_label(tree, nodes[i], feature_names));
    }
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].is_leaf()) continue;
        out += fmt::format("  n{} -> n{} [label=\"yes\"];\n", i, nodes[i].left);
        out += fmt::format("  n{} -> n{} [label=\"no\"];\n", i, nodes[i].right);
    }
    out += "}\n";
    return out;
}

nlohmann::json to_json(const DecisionTree& tree, std::span<const std::string> feature_names) {
    return {{"task", task_name(tree.task())}, {"root", node_json(tree, 0, feature_names)}};
}

DecisionTree tree_from_json(const nlohmann::json& doc, std::span<const std::string> feature_names) {
    const auto task_text = doc.at("task").get<std::string>();
    Task task;
    if (task_text == "classification") {
        task = Task::classification;
    } else if (task_text == "regression") {
        task = Task::regression;
    } else {
        throw std::invalid_argument("unknown tree task: " + task_text);
    }
    std::vector<TreeNode> nodes;
    node_from_json(doc.at("root"), feature_names, nodes);
    return DecisionTree(task, std::move(nodes));
}

std::string export_tree(const DecisionTree& tree, std::span<const std::string> feature_names,
                        ExportFormat format) {
    if (format == ExportFormat::dot) return to_dot(tree, feature_names);
    return to_json(tree, feature_names).dump(2) + "\n";
}

}  // namespace dtx
