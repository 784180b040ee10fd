#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numeric>

#include "fire/dataset.hpp"
#include "fire/synthetic.hpp"
#include "fire/training.hpp"
#include "oracles.hpp"

using namespace fire;

namespace {

double sse_of(const std::vector<double>& y) {
  const double m = std::accumulate(y.begin(), y.end(), 0.0) / double(y.size());
  double s = 0;
  for (double v : y) s += (v - m) * (v - m);
  return s;
}

}  // namespace

TEST(Training, DepthZeroIsSingleLeafAtMean) {
  const auto d = friedman1(50, 5, 1.0, 1);
  const auto t = train_tree(d, 0, 1);
  EXPECT_EQ(t.n_leaves(), 1u);
  EXPECT_NEAR(t.leaf(0).value, d.target_mean(), 1e-12);
  EXPECT_EQ(t.leaf(0).count, 50u);
}

TEST(Training, StumpMatchesExhaustiveSplitSearch) {
  const auto d = friedman1(40, 5, 0.5, 7);
  const auto t = train_tree(d, 1, 1);
  ASSERT_EQ(t.n_leaves(), 2u);
  // brute force over every feature and every midpoint
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t f = 0; f < d.n_features; ++f)
    for (std::size_t a = 0; a < d.n_rows; ++a) {
      std::vector<double> l, r;
      for (std::size_t i = 0; i < d.n_rows; ++i)
        (d.at(i, f) <= d.at(a, f) ? l : r).push_back(d.target[i]);
      if (l.empty() || r.empty()) continue;
      best = std::min(best, sse_of(l) + sse_of(r));
    }
  std::vector<double> l, r;
  const auto& root = t.node(0);
  for (std::size_t i = 0; i < d.n_rows; ++i)
    (d.at(i, root.feature) <= root.threshold ? l : r).push_back(d.target[i]);
  EXPECT_NEAR(sse_of(l) + sse_of(r), best, 1e-9 * best);
  EXPECT_EQ(t.leaf(0).count, l.size());
  EXPECT_NEAR(t.leaf(1).value, std::accumulate(r.begin(), r.end(), 0.0) / double(r.size()), 1e-12);
}

TEST(Training, MinLeafAndDepthRespected) {
  const auto d = friedman1(200, 6, 1.0, 3);
  const auto t = train_tree(d, 4, 7);
  EXPECT_LE(t.depth(), 4u);
  std::vector<std::size_t> count(t.n_leaves(), 0);
  for (std::size_t i = 0; i < d.n_rows; ++i) ++count[t.route(d.row(i))];
  for (std::size_t j = 0; j < t.n_leaves(); ++j) {
    EXPECT_GE(count[j], 7u);
    EXPECT_EQ(count[j], t.leaf(j).count);
  }
}

TEST(Training, LeafValuesAreMeansOfRoutedRows) {
  const auto d = friedman1(150, 5, 1.0, 4);
  const auto t = train_tree(d, 3, 1);
  std::vector<double> sum(t.n_leaves(), 0.0);
  std::vector<double> cnt(t.n_leaves(), 0.0);
  for (std::size_t i = 0; i < d.n_rows; ++i) {
    sum[t.route(d.row(i))] += d.target[i];
    cnt[t.route(d.row(i))] += 1;
  }
  for (std::size_t j = 0; j < t.n_leaves(); ++j)
    EXPECT_NEAR(t.leaf(j).value, sum[j] / cnt[j], 1e-10);
}

TEST(Training, ConstantTargetGivesSingleLeaf) {
  auto d = friedman1(30, 5, 0.0, 2);
  std::fill(d.target.begin(), d.target.end(), 2.5);
  const auto t = train_tree(d, 3, 1);
  EXPECT_EQ(t.n_leaves(), 1u);
}

TEST(Training, SingleTreeNoBootstrapEqualsTrainTree) {
  const auto d = friedman1(120, 5, 1.0, 8);
  BaggingParams p;
  p.n_trees = 1;
  p.bootstrap = false;
  p.tree = {3, 2, 1.0};
  p.seed = 17;
  const auto e = train_bagged_ensemble(d, p);
  ASSERT_EQ(e.trees.size(), 1u);
  EXPECT_EQ(e.trees[0], train_tree(d, 3, 2, 17));
}

TEST(Training, BaggingIsDeterministicAcrossThreadCounts) {
  const auto d = friedman1(200, 6, 1.0, 5);
  BaggingParams p;
  p.n_trees = 12;
  p.tree = {3, 1, 1.0 / 3.0};
  p.seed = 99;
  p.n_threads = 1;
  const auto a = train_bagged_ensemble(d, p);
  p.n_threads = 4;
  const auto b = train_bagged_ensemble(d, p);
  EXPECT_EQ(a, b);
  p.seed = 100;
  const auto c = train_bagged_ensemble(d, p);
  EXPECT_FALSE(a == c);
}

TEST(Training, DefaultForestOnThreeFeatures) {
  const auto base = oracle::uniform_features(300, 3, 21);
  auto d = base;
  for (std::size_t i = 0; i < d.n_rows; ++i) d.target[i] = d.at(i, 0) + 2 * d.at(i, 1) * d.at(i, 2);
  BaggingParams p;  // 500 trees, depth 3
  p.tree.feature_subsample = 1.0 / 3.0;
  const auto e = train_bagged_ensemble(d, p);
  EXPECT_EQ(e.trees.size(), 500u);
  EXPECT_LE(e.total_leaves(), 4000u);
  for (const auto& t : e.trees) EXPECT_LE(t.depth(), 3u);
}

TEST(Training, RejectsBadParameters) {
  const auto d = friedman1(20, 5, 1.0, 1);
  BaggingParams p;
  p.n_trees = 0;
  EXPECT_THROW(train_bagged_ensemble(d, p), Error);
  p.n_trees = 2;
  p.tree.feature_subsample = 0.0;
  EXPECT_THROW(train_bagged_ensemble(d, p), Error);
  EXPECT_THROW(train_tree(d, 3, 0), Error);
}

TEST(Dataset, CsvRoundTripAndErrors) {
  const auto d = read_csv(FIRE_TEST_DATA "/small.csv", "y");
  EXPECT_EQ(d.n_rows, 12u);
  EXPECT_EQ(d.n_features, 3u);
  EXPECT_EQ(d.feature_names, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_DOUBLE_EQ(d.at(3, 2), -2.0);
  EXPECT_DOUBLE_EQ(d.target[11], 3.9);
  EXPECT_THROW(read_csv(FIRE_TEST_DATA "/small.csv", "missing"), Error);
  try {
    read_csv(FIRE_TEST_DATA "/small.csv", "missing");
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("missing"), std::string::npos);
    EXPECT_EQ(e.kind(), ErrorKind::invalid_input);
  }

  const std::string path = ::testing::TempDir() + "/fire_roundtrip.csv";
  auto f = friedman1(25, 5, 1.0, 12);
  write_csv(path, f, "target");
  const auto g = read_csv(path, "target");
  EXPECT_EQ(g.features, f.features);
  EXPECT_EQ(g.target, f.target);
}

TEST(Dataset, NonNumericCellNamesColumn) {
  const std::string path = ::testing::TempDir() + "/fire_bad.csv";
  {
    std::ofstream out(path);
    out << "p,q,y\n1,2,3\n4,abc,6\n";
  }
  try {
    read_csv(path, "y");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("'q'"), std::string::npos) << e.what();
  }
}

TEST(Dataset, SplitIsSeededAndDisjoint) {
  const auto d = friedman1(101, 5, 1.0, 3);
  const auto [tr, va] = split_train_valid(d, 0.2, 42);
  EXPECT_EQ(va.n_rows, 20u);
  EXPECT_EQ(tr.n_rows, 81u);
  const auto [tr2, va2] = split_train_valid(d, 0.2, 42);
  EXPECT_EQ(va.features, va2.features);
  EXPECT_EQ(tr.target, tr2.target);
  std::vector<double> all = tr.target;
  all.insert(all.end(), va.target.begin(), va.target.end());
  std::vector<double> orig = d.target;
  std::sort(all.begin(), all.end());
  std::sort(orig.begin(), orig.end());
  EXPECT_EQ(all, orig);
}
