#include <gtest/gtest.h>

#include <random>

#include "fire/ensemble_io.hpp"
#include "fire/training.hpp"
#include "fire/tree.hpp"
#include "oracles.hpp"

using namespace fire;

namespace {

TreeEnsemble hand_ensemble() { return load_ensemble(FIRE_TEST_DATA "/hand_ensemble.json"); }

std::vector<double> leaf_values(const DecisionTree& t) {
  std::vector<double> v;
  for (std::size_t j = 0; j < t.n_leaves(); ++j) v.push_back(t.leaf(j).value);
  return v;
}

}  // namespace

TEST(Tree, LeafOrderIsDepthFirstLeftFirst) {
  const auto e = hand_ensemble();
  ASSERT_EQ(e.trees.size(), 3u);
  EXPECT_EQ(leaf_values(e.trees[0]), (std::vector<double>{-2, -1, 0.5, 1.5, 2, 3, 4}));
  EXPECT_EQ(leaf_values(e.trees[1]), (std::vector<double>{-1.25, 1.75}));
  EXPECT_EQ(e.trees[2].n_leaves(), 1u);
  EXPECT_EQ(e.trees[0].depth(), 3u);
  EXPECT_EQ(e.trees[0].n_internal(), 6u);
  EXPECT_EQ(e.total_leaves(), 10u);
}

TEST(Tree, RouteTiesGoLeft) {
  const auto e = hand_ensemble();
  const auto& t = e.trees[0];
  const std::vector<double> on_root_threshold{0.5, 0.25, -1.0};
  // x0 == 0.5 -> left, x1 == 0.25 -> left, x0 = 0.5 > 0 -> right: leaf 1
  EXPECT_EQ(t.route(on_root_threshold), 1u);
  const std::vector<double> x{0.5, 0.3, -1.0};
  EXPECT_EQ(t.route(x), 2u);
  const std::vector<double> y{0.6, 0.75, 1.0};
  EXPECT_EQ(t.route(y), 4u);
  const std::vector<double> z{0.6, 0.75, 1.0000001};
  EXPECT_EQ(t.route(z), 6u);
}

TEST(Tree, RuleOfLeafAntecedents) {
  const auto e = hand_ensemble();
  const auto& t = e.trees[0];
  const auto r6 = t.rule_of_leaf(6, 0);
  ASSERT_EQ(r6.antecedents.size(), 2u);
  EXPECT_EQ(r6.antecedents[0], (Antecedent{0, Direction::gt, 0.5}));
  EXPECT_EQ(r6.antecedents[1], (Antecedent{2, Direction::gt, 1.0}));
  EXPECT_DOUBLE_EQ(r6.value, 4.0);
  EXPECT_EQ(r6.leaf_index, 6u);

  const auto r2 = t.rule_of_leaf(2, 0);
  ASSERT_EQ(r2.antecedents.size(), 3u);
  EXPECT_EQ(r2.antecedents[0], (Antecedent{0, Direction::le, 0.5}));
  EXPECT_EQ(r2.antecedents[1], (Antecedent{1, Direction::gt, 0.25}));
  EXPECT_EQ(r2.antecedents[2], (Antecedent{2, Direction::le, -1.0}));

  EXPECT_THROW(t.rule_of_leaf(7), Error);
}

TEST(Tree, SingleLeafRuleIsEmpty) {
  DecisionTree t;
  const auto r = t.rule_of_leaf(0);
  EXPECT_TRUE(r.antecedents.empty());
  const std::vector<double> x{3.0};
  EXPECT_TRUE(r.covers(x));
}

TEST(Tree, CompleteTreeRuleLengthEqualsDepth) {
  for (std::size_t d = 0; d <= 5; ++d) {
    const auto t = oracle::complete_tree(d, [](std::size_t k) { return double(k); });
    ASSERT_EQ(t.n_leaves(), std::size_t{1} << d);
    for (std::size_t j = 0; j < t.n_leaves(); ++j)
      EXPECT_EQ(t.rule_of_leaf(j).antecedents.size(), d);
  }
}

TEST(Tree, RoutedLeafRuleCoversRowAndNoOtherDoes) {
  const auto data = oracle::uniform_features(300, 4, 11);
  auto d = data;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  for (std::size_t i = 0; i < d.n_rows; ++i) d.target[i] = d.at(i, 0) * 3 + d.at(i, 2) + z(rng);
  BaggingParams p;
  p.n_trees = 10;
  p.tree.max_depth = 4;
  p.tree.feature_subsample = 0.5;
  p.seed = 5;
  const auto e = train_bagged_ensemble(d, p);
  for (std::size_t t = 0; t < e.trees.size(); ++t) {
    const auto& tree = e.trees[t];
    std::vector<Rule> rules;
    for (std::size_t j = 0; j < tree.n_leaves(); ++j) rules.push_back(tree.rule_of_leaf(j, t));
    for (std::size_t i = 0; i < d.n_rows; ++i) {
      const auto x = d.row(i);
      const auto leaf = tree.route(x);
      std::size_t covering = 0;
      double sum = 0.0;
      for (std::size_t j = 0; j < rules.size(); ++j) {
        if (rules[j].covers(x)) {
          ++covering;
          EXPECT_EQ(j, leaf);
        }
        sum += rules[j](x);
      }
      EXPECT_EQ(covering, 1u);
      EXPECT_DOUBLE_EQ(sum, tree.predict(x));
    }
  }
}

TEST(Tree, AdjacentLeavesShareAntecedentsAboveCommonAncestor) {
  const auto data = oracle::uniform_features(400, 3, 2);
  auto d = data;
  for (std::size_t i = 0; i < d.n_rows; ++i)
    d.target[i] = std::sin(6 * d.at(i, 0)) + d.at(i, 1) * d.at(i, 2);
  const auto tree = train_tree(d, 5, 1, 9);
  ASSERT_GT(tree.n_leaves(), 8u);
  for (std::size_t j = 0; j + 1 < tree.n_leaves(); ++j) {
    const auto a = tree.ancestors(j), b = tree.ancestors(j + 1);
    std::size_t common = 0;
    while (common < a.size() && common < b.size() && a[common] == b[common]) ++common;
    const auto ra = tree.rule_of_leaf(j), rb = tree.rule_of_leaf(j + 1);
    // antecedents strictly above the lowest common ancestor coincide
    for (std::size_t k = 0; k + 1 < common; ++k) EXPECT_EQ(ra.antecedents[k], rb.antecedents[k]);
    // at the common ancestor the two leaves take opposite branches
    ASSERT_GE(common, 1u);
    EXPECT_EQ(ra.antecedents[common - 1].direction, Direction::le);
    EXPECT_EQ(rb.antecedents[common - 1].direction, Direction::gt);
    const bool siblings = tree.node(tree.ordered_leaves()[j]).parent ==
                          tree.node(tree.ordered_leaves()[j + 1]).parent;
    if (siblings) {
      ASSERT_EQ(ra.antecedents.size(), rb.antecedents.size());
      for (std::size_t k = 0; k + 1 < ra.antecedents.size(); ++k)
        EXPECT_EQ(ra.antecedents[k], rb.antecedents[k]);
    }
  }
}

TEST(Tree, AntecedentCountBoundedByDepth) {
  const auto e = hand_ensemble();
  for (const auto& t : e.trees)
    for (std::size_t j = 0; j < t.n_leaves(); ++j)
      EXPECT_LE(t.rule_of_leaf(j).antecedents.size(), t.depth());
}

TEST(Tree, ConstructionRejectsMalformedNodes) {
  using N = TreeNode;
  EXPECT_THROW(DecisionTree({N::split(0, 0.0, 1, 5), N::leaf(1, 0)}, 0), Error);
  EXPECT_THROW(DecisionTree({N::split(0, 0.0, 1, 1), N::leaf(1, 0)}, 0), Error);
  // node 1 reached twice (through 0 and through 2)
  EXPECT_THROW(DecisionTree({N::split(0, 0.0, 1, 2), N::leaf(1, 0), N::split(0, 1.0, 1, 3),
                             N::leaf(2, 0)},
                            0),
               Error);
  // unreachable node
  EXPECT_THROW(DecisionTree({N::leaf(1, 0), N::leaf(2, 0)}, 0), Error);
  // cycle back to the root
  EXPECT_THROW(DecisionTree({N::split(0, 0.0, 1, 0), N::leaf(1, 0)}, 0), Error);
  EXPECT_THROW(DecisionTree({}, 0), Error);
}

TEST(Tree, ReindexingPreservesPredictions) {
  using N = TreeNode;
  // root stored last, right subtree stored first
  std::vector<N> nodes{N::leaf(3, 0), N::leaf(1, 0), N::leaf(2, 0), N::split(1, 0.0, 1, 2),
                       N::split(0, 0.5, 3, 0)};
  const DecisionTree t(nodes, 4);
  EXPECT_EQ(leaf_values(t), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(t.node(0).feature, 0u);
  const std::vector<double> x{0.2, 1.0};
  EXPECT_DOUBLE_EQ(t.predict(x), 2.0);
  const std::vector<double> x2{0.7, -1.0};
  EXPECT_DOUBLE_EQ(t.predict(x2), 3.0);
}

TEST(Tree, EnsembleValidateChecksFeatureRange) {
  TreeEnsemble e;
  e.n_features = 1;
  e.trees.emplace_back(std::vector<TreeNode>{TreeNode::split(3, 0.0, 1, 2), TreeNode::leaf(0, 0),
                                             TreeNode::leaf(1, 0)},
                       0);
  EXPECT_THROW(e.validate(), Error);
  e.n_features = 4;
  EXPECT_NO_THROW(e.validate());
}
