#include <gtest/gtest.h>

#include <cmath>

#include "fire/mapping.hpp"
#include "fire/solver.hpp"
#include "fire/synthetic.hpp"
#include "fire/training.hpp"
#include "oracles.hpp"

using namespace fire;

namespace {

struct Problem {
  Dataset data;
  TreeEnsemble ensemble;
  MappingMatrix m;
  std::vector<double> y;  // centered
  oracle::DenseMatrix dense;
  std::vector<std::size_t> offsets;
};

Problem make_problem(std::uint64_t seed, std::size_t n, std::size_t trees, std::size_t depth = 3) {
  Problem p;
  p.data = friedman1(n, 5, 1.0, seed);
  BaggingParams bp;
  bp.n_trees = trees;
  bp.tree = {depth, 1, 0.6};
  bp.seed = seed;
  p.ensemble = train_bagged_ensemble(p.data, bp);
  p.m = MappingMatrix(p.ensemble, p.data);
  const double mean = p.data.target_mean();
  for (double v : p.data.target) p.y.push_back(v - mean);
  p.dense = oracle::dense_mapping(p.ensemble, p.data);
  p.offsets.assign(p.m.offsets().begin(), p.m.offsets().end());
  return p;
}

PenaltyConfig mcp(double ls, double lf = 0.0, double gamma = 1.1) {
  return {PenaltyKind::mcp, ls, gamma, lf};
}
PenaltyConfig l1(double ls, double lf = 0.0) { return {PenaltyKind::l1, ls, 1.1, lf}; }

void expect_monotone(const SolveResult& r) {
  for (std::size_t k = 1; k < r.trace.size(); ++k)
    EXPECT_LE(r.trace[k].objective, r.trace[k - 1].objective) << "trace point " << k;
}

}  // namespace

TEST(Solver, ObjectiveMatchesDenseOracle) {
  const auto p = make_problem(1, 60, 6);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  std::vector<double> w(p.m.total_columns());
  for (auto& x : w) x = z(rng) * 0.1;
  const auto cfg = mcp(0.7, 0.2, 3.0);
  EXPECT_NEAR(objective(p.m, p.y, w, cfg),
              oracle::full_objective(p.dense, p.y, w, 0.7, 3.0, 0.2, p.offsets), 1e-9);
}

TEST(Solver, LassoMatchesReferenceOnTinyInstance) {
  // N = 20 rows; 3 depth-2 trees give at most 12 columns
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto p = make_problem(seed, 20, 3, 2);
    ASSERT_LE(p.m.total_columns(), 12u);
    const double lam = 0.1 * lambda_max(p.m, p.y);
    SolverConfig sc;
    sc.tolerance = 1e-12;
    sc.max_block_updates = 100000;
    const auto r = gbcd_solve(p.m, p.y, l1(lam), sc);
    const auto ref = oracle::reference_lasso(p.dense, p.y, lam, 1e-14);
    EXPECT_NEAR(r.final_objective, ref.objective, 1e-6 * ref.objective) << "seed " << seed;
    EXPECT_TRUE(r.converged);
    expect_monotone(r);
  }
}

TEST(Solver, LambdaMaxGivesZeroSolution) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const auto p = make_problem(seed, 80, 10);
    const double lmax = lambda_max(p.m, p.y);
    // independent check of ||M^T y||_inf
    double ref = 0;
    for (std::size_t j = 0; j < p.dense.cols; ++j) {
      double s = 0;
      for (std::size_t i = 0; i < p.dense.rows; ++i) s += p.dense.at(i, j) * p.y[i];
      ref = std::max(ref, std::abs(s));
    }
    EXPECT_NEAR(lmax, ref, 1e-10 * ref);
    for (auto cfg : {mcp(lmax), l1(lmax), mcp(lmax, 0.5 * lmax), l1(lmax * 1.5, lmax)}) {
      const auto r = gbcd_solve(p.m, p.y, cfg, {});
      for (double w : r.weights) EXPECT_EQ(w, 0.0);
    }
    const auto below = gbcd_solve(p.m, p.y, l1(0.9 * lmax), {});
    EXPECT_GT(std::count_if(below.weights.begin(), below.weights.end(),
                            [](double w) { return w != 0.0; }),
              0);
  }
}

TEST(Solver, ConvexSelectionsAgree) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto p = make_problem(seed, 100, 8);
    const double lam = 0.05 * lambda_max(p.m, p.y);
    for (auto cfg : {l1(lam), l1(lam, 0.5 * lam)}) {
      SolverConfig sc;
      sc.tolerance = 1e-10;
      sc.max_block_updates = 200000;
      std::vector<double> objs;
      for (auto sel : {Selection::greedy, Selection::cyclic, Selection::random}) {
        sc.selection = sel;
        sc.rng_seed = 7;
        const auto r = gbcd_solve(p.m, p.y, cfg, sc);
        EXPECT_TRUE(r.converged);
        expect_monotone(r);
        objs.push_back(r.final_objective);
      }
      EXPECT_NEAR(objs[0], objs[1], 1e-5 * objs[1]);
      EXPECT_NEAR(objs[2], objs[1], 1e-5 * objs[1]);
    }
  }
}

TEST(Solver, DeterministicWeights) {
  const auto p = make_problem(4, 120, 12);
  const double lam = 0.05 * lambda_max(p.m, p.y);
  for (auto sel : {Selection::greedy, Selection::cyclic}) {
    SolverConfig sc;
    sc.selection = sel;
    const auto a = gbcd_solve(p.m, p.y, mcp(lam, 0.5 * lam), sc);
    const auto b = gbcd_solve(p.m, p.y, mcp(lam, 0.5 * lam), sc);
    EXPECT_EQ(a.weights, b.weights);
    EXPECT_EQ(a.n_block_updates, b.n_block_updates);
  }
}

TEST(Solver, ConvergedSolutionsPassIndependentSweep) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto p = make_problem(seed, 150, 15);
    const double lmax = lambda_max(p.m, p.y);
    for (auto cfg : {mcp(0.02 * lmax), mcp(0.02 * lmax, 0.02 * lmax), l1(0.02 * lmax, 0.01 * lmax)}) {
      SolverConfig sc;
      sc.max_block_updates = 1000000;
      const auto r = gbcd_solve(p.m, p.y, cfg, sc);
      expect_monotone(r);
      ASSERT_TRUE(r.converged);
      EXPECT_LE(max_block_improvement(p.m, p.y, r.weights, cfg, sc), sc.tolerance);
      EXPECT_NEAR(r.final_objective,
                  oracle::full_objective(p.dense, p.y, r.weights, cfg.lambda_s,
                                         cfg.kind == PenaltyKind::mcp ? cfg.gamma : 0,
                                         cfg.lambda_f, p.offsets),
                  1e-9 * (1 + r.final_objective));
    }
  }
}

TEST(Solver, WarmStartAtSolutionStopsQuickly) {
  const auto p = make_problem(2, 100, 10);
  const double lam = 0.05 * lambda_max(p.m, p.y);
  SolverConfig sc;
  sc.max_block_updates = 1000000;
  const auto cold = gbcd_solve(p.m, p.y, mcp(lam), sc);
  ASSERT_TRUE(cold.converged);
  const auto warm = gbcd_solve(p.m, p.y, mcp(lam), sc, std::span<const double>(cold.weights));
  EXPECT_LE(warm.n_block_updates, 5 * p.m.n_blocks());
  EXPECT_LT(5 * warm.n_block_updates, cold.n_block_updates);
  EXPECT_LE(warm.final_objective, cold.final_objective + 1e-12);
}

TEST(Solver, ZeroPenaltyApproachesLeastSquares) {
  // unpenalized single tree: the fit converges to the leaf means; a relative
  // objective tolerance of 1e-14 leaves a distance of order 1e-6
  auto p = make_problem(3, 60, 1);
  SolverConfig sc;
  sc.tolerance = 1e-14;
  sc.max_block_updates = 100000;
  const auto r = gbcd_solve(p.m, p.y, l1(0.0), sc);
  const auto fit = p.m.predict(r.weights);
  const auto& tree = p.ensemble.trees[0];
  for (std::size_t i = 0; i < p.y.size(); ++i) {
    double s = 0, c = 0;
    for (std::size_t k = 0; k < p.y.size(); ++k)
      if (tree.route(p.data.row(k)) == tree.route(p.data.row(i))) {
        s += p.y[k];
        ++c;
      }
    EXPECT_NEAR(fit[i], s / c, 1e-5);
  }
}

TEST(Solver, RejectsBadInput) {
  const auto p = make_problem(1, 30, 2);
  std::vector<double> y = p.y;
  y.pop_back();
  EXPECT_THROW(gbcd_solve(p.m, y, mcp(1.0), {}), Error);
  y = p.y;
  y[3] = std::nan("");
  try {
    gbcd_solve(p.m, y, mcp(1.0), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::numeric);
  }
  std::vector<double> warm(p.m.total_columns() + 1, 0.0);
  EXPECT_THROW(gbcd_solve(p.m, p.y, mcp(1.0), {}, std::span<const double>(warm)), Error);
  SolverConfig bad;
  bad.inner_iterations = 0;
  EXPECT_THROW(gbcd_solve(p.m, p.y, mcp(1.0), bad), Error);
  EXPECT_THROW(gbcd_solve(p.m, p.y, mcp(1.0, 0.0, 1.0), {}), Error);
}

TEST(Solver, InertBlocksAreSkipped) {
  auto p = make_problem(5, 50, 3);
  // append a constant zero-valued tree
  p.ensemble.trees.emplace_back(std::vector<TreeNode>{TreeNode::leaf(0.0, 0)}, 0);
  const MappingMatrix m(p.ensemble, p.data);
  const auto r = gbcd_solve(m, p.y, mcp(0.1), {});
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.weights.back(), 0.0);
}

TEST(Solver, GreedyTraceIsMonotoneUnderFusion) {
  const auto p = make_problem(6, 300, 40);
  SolverConfig sc;
  sc.max_block_updates = 1000000;
  const auto r = gbcd_solve(p.m, p.y, mcp(1.0, 0.5), sc);
  expect_monotone(r);
  EXPECT_EQ(r.trace.front().block_updates, 0u);
  EXPECT_NEAR(r.final_objective, r.trace.back().objective, 1e-9 * (1 + r.final_objective));
  EXPECT_GE(r.verification_sweeps, 1u);
}
