#ifndef FIRE_TREE_HPP
#define FIRE_TREE_HPP

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fire/error.hpp"

namespace fire {

/// Left branch is `x[f] <= threshold`, right branch is `x[f] > threshold`.
enum class Direction { le, gt };

struct Antecedent {
  std::size_t feature = 0;
  Direction direction = Direction::le;
  double threshold = 0.0;

  bool holds(std::span<const double> x) const {
    return direction == Direction::le ? x[feature] <= threshold : x[feature] > threshold;
  }

  friend bool operator==(const Antecedent&, const Antecedent&) = default;
};

/// Decision rule read off one leaf: conjunction of antecedents times the leaf value.
struct Rule {
  std::vector<Antecedent> antecedents;  // root to leaf
  double value = 0.0;
  std::size_t tree_index = 0;
  std::size_t leaf_index = 0;

  bool covers(std::span<const double> x) const {
    return std::all_of(antecedents.begin(), antecedents.end(),
                       [&](const Antecedent& a) { return a.holds(x); });
  }

  double operator()(std::span<const double> x) const { return covers(x) ? value : 0.0; }
};

struct TreeNode {
  bool is_leaf = true;
  // split fields
  std::size_t feature = 0;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  // leaf fields
  double value = 0.0;
  std::size_t count = 0;  // training rows routed here; 0 = unknown for imported trees

  int parent = -1;  // filled in by DecisionTree

  static TreeNode leaf(double value, std::size_t count) {
    TreeNode n;
    n.value = value;
    n.count = count;
    return n;
  }

  static TreeNode split(std::size_t feature, double threshold, int left, int right) {
    TreeNode n;
    n.is_leaf = false;
    n.feature = feature;
    n.threshold = threshold;
    n.left = left;
    n.right = right;
    return n;
  }

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// Immutable binary regression tree.
///
/// Nodes are stored in depth-first, left-first preorder with the root at
/// index 0. Leaves are numbered in the same traversal order; that numbering
/// is the canonical leaf order used by every mapping column and by the
/// fusion penalty. Adjacent leaves in this order share every antecedent
/// above their lowest common ancestor.
class DecisionTree {
 public:
  DecisionTree() : DecisionTree(std::vector<TreeNode>{TreeNode::leaf(0.0, 0)}, 0) {}

  /// Builds from an arbitrary node array rooted at `root`. Validates that
  /// children exist, every node is reached exactly once, and re-indexes the
  /// nodes into canonical preorder.
  DecisionTree(const std::vector<TreeNode>& nodes, int root) {
    if (nodes.empty()) throw invalid_input("tree has no nodes");
    if (root < 0 || static_cast<std::size_t>(root) >= nodes.size())
      throw invalid_input("tree root " + std::to_string(root) + " out of range");

    std::vector<int> new_index(nodes.size(), -1);
    // explicit stack: (old index, new parent, is_right_child)
    struct Frame {
      int old;
      int parent;
      bool right;
    };
    std::vector<Frame> stack{{root, -1, false}};
    while (!stack.empty()) {
      Frame f = stack.back();
      stack.pop_back();
      if (new_index[f.old] != -1)
        throw invalid_input("node " + std::to_string(f.old) + " is reachable more than once");
      const int idx = static_cast<int>(nodes_.size());
      new_index[f.old] = idx;
      TreeNode n = nodes[f.old];
      n.parent = f.parent;
      if (f.parent >= 0) (f.right ? nodes_[f.parent].right : nodes_[f.parent].left) = idx;
      nodes_.push_back(n);
      if (!n.is_leaf) {
        for (int child : {n.left, n.right})
          if (child < 0 || static_cast<std::size_t>(child) >= nodes.size())
            throw invalid_input("split node " + std::to_string(f.old) +
                                " references missing child " + std::to_string(child));
        if (n.left == n.right)
          throw invalid_input("split node " + std::to_string(f.old) + " has identical children");
        stack.push_back({n.right, idx, true});
        stack.push_back({n.left, idx, false});
      }
    }
    if (nodes_.size() != nodes.size())
      throw invalid_input("tree has " + std::to_string(nodes.size() - nodes_.size()) +
                          " unreachable nodes");
    index_leaves();
  }

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& node(std::size_t i) const { return nodes_[i]; }

  /// Node indices of the leaves in canonical order.
  std::span<const int> ordered_leaves() const { return leaves_; }
  std::size_t n_leaves() const { return leaves_.size(); }
  std::size_t n_internal() const { return nodes_.size() - leaves_.size(); }
  std::size_t depth() const { return depth_; }

  const TreeNode& leaf(std::size_t leaf_index) const { return nodes_[leaves_.at(leaf_index)]; }

  /// Leaf position (in canonical order) of the leaf reached by `x`.
  /// Ties `x[f] == threshold` go left.
  std::size_t route(std::span<const double> x) const {
    int i = 0;
    while (!nodes_[i].is_leaf) {
      const auto& n = nodes_[i];
      i = x[n.feature] <= n.threshold ? n.left : n.right;
    }
    return static_cast<std::size_t>(leaf_position_[i]);
  }

  double predict(std::span<const double> x) const { return leaf(route(x)).value; }

  /// Internal node indices from the root down to the parent of the leaf.
  std::vector<int> ancestors(std::size_t leaf_index) const {
    std::vector<int> path;
    for (int p = nodes_[leaves_.at(leaf_index)].parent; p >= 0; p = nodes_[p].parent)
      path.push_back(p);
    std::reverse(path.begin(), path.end());
    return path;
  }

  Rule rule_of_leaf(std::size_t leaf_index, std::size_t tree_index = 0) const {
    if (leaf_index >= leaves_.size())
      throw invalid_input("leaf index " + std::to_string(leaf_index) + " out of range (tree has " +
                          std::to_string(leaves_.size()) + " leaves)");
    Rule rule;
    rule.tree_index = tree_index;
    rule.leaf_index = leaf_index;
    rule.value = leaf(leaf_index).value;
    int child = leaves_[leaf_index];
    std::vector<Antecedent> rev;
    for (int p = nodes_[child].parent; p >= 0; child = p, p = nodes_[p].parent) {
      const auto& n = nodes_[p];
      rev.push_back({n.feature, n.left == child ? Direction::le : Direction::gt, n.threshold});
    }
    rule.antecedents.assign(rev.rbegin(), rev.rend());
    return rule;
  }

  std::size_t max_feature_index() const {
    std::size_t m = 0;
    for (const auto& n : nodes_)
      if (!n.is_leaf) m = std::max(m, n.feature);
    return m;
  }

  friend bool operator==(const DecisionTree& a, const DecisionTree& b) {
    return a.nodes_ == b.nodes_;
  }

 private:
  void index_leaves() {
    leaf_position_.assign(nodes_.size(), -1);
    std::vector<std::size_t> node_depth(nodes_.size(), 0);
    depth_ = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {  // preorder: parents first
      if (nodes_[i].parent >= 0) node_depth[i] = node_depth[nodes_[i].parent] + 1;
      if (nodes_[i].is_leaf) {
        leaf_position_[i] = static_cast<int>(leaves_.size());
        leaves_.push_back(static_cast<int>(i));
        depth_ = std::max(depth_, node_depth[i]);
      }
    }
  }

  std::vector<TreeNode> nodes_;
  std::vector<int> leaves_;
  std::vector<int> leaf_position_;
  std::size_t depth_ = 0;
};

/// Bagged collection of trees over `n_features` inputs.
struct TreeEnsemble {
  std::size_t n_features = 0;
  std::vector<DecisionTree> trees;

  std::size_t total_leaves() const {
    std::size_t r = 0;
    for (const auto& t : trees) r += t.n_leaves();
    return r;
  }

  /// Bagging prediction: plain average over trees.
  double predict(std::span<const double> x) const {
    if (trees.empty()) return 0.0;
    double s = 0.0;
    for (const auto& t : trees) s += t.predict(x);
    return s / static_cast<double>(trees.size());
  }

  void validate() const {
    if (n_features == 0) throw invalid_input("ensemble has n_features = 0");
    for (std::size_t t = 0; t < trees.size(); ++t)
      if (trees[t].n_internal() > 0 && trees[t].max_feature_index() >= n_features)
        throw invalid_input("tree " + std::to_string(t) + " references feature " +
                            std::to_string(trees[t].max_feature_index()) + " but n_features = " +
                            std::to_string(n_features));
  }

  friend bool operator==(const TreeEnsemble&, const TreeEnsemble&) = default;
};

}  // namespace fire

#endif  // FIRE_TREE_HPP
