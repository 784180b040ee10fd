#ifndef FIRE_TRAINING_HPP
#define FIRE_TRAINING_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <numeric>
#include <random>
#include <span>
#include <thread>
#include <vector>

#include "fire/dataset.hpp"
#include "fire/tree.hpp"

namespace fire {

struct TreeParams {
  std::size_t max_depth = 3;
  std::size_t min_leaf = 1;
  double feature_subsample = 1.0;  // fraction of features drawn per split
};

struct BaggingParams {
  std::size_t n_trees = 500;
  TreeParams tree;
  bool bootstrap = true;
  std::uint64_t seed = 0;
  unsigned n_threads = 0;  // 0 = hardware concurrency
};

/// Independent generator for (seed, stream) pairs.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

namespace detail {

class CartBuilder {
 public:
  CartBuilder(const Dataset& data, const TreeParams& params, std::mt19937_64& rng)
      : data_(data), params_(params), rng_(rng) {
    const auto p = data.n_features;
    n_candidates_ = static_cast<std::size_t>(
        std::ceil(params.feature_subsample * static_cast<double>(p) - 1e-12));
    n_candidates_ = std::clamp<std::size_t>(n_candidates_, 1, p);
  }

  DecisionTree build(std::vector<std::size_t> rows) {
    nodes_.clear();
    grow(rows, 0);
    return DecisionTree(nodes_, 0);
  }

 private:
  struct Split {
    std::size_t feature = 0;
    double threshold = 0.0;
    double gain = 0.0;
    bool found = false;
  };

  int grow(std::vector<std::size_t>& rows, std::size_t depth) {
    const double n = static_cast<double>(rows.size());
    double mean = 0.0;
    for (auto i : rows) mean += data_.target[i];
    mean /= n;
    double sse = 0.0;
    for (auto i : rows) sse += (data_.target[i] - mean) * (data_.target[i] - mean);

    const int idx = static_cast<int>(nodes_.size());
    nodes_.push_back(TreeNode::leaf(mean, rows.size()));

    if (depth >= params_.max_depth || rows.size() < 2 * params_.min_leaf || !(sse > 0.0))
      return idx;
    Split best = find_split(rows, mean, sse);
    if (!best.found) return idx;

    std::vector<std::size_t> left, right;
    for (auto i : rows)
      (data_.at(i, best.feature) <= best.threshold ? left : right).push_back(i);
    rows.clear();
    rows.shrink_to_fit();

    nodes_[idx] = TreeNode::split(best.feature, best.threshold, -1, -1);
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    nodes_[idx].left = l;
    nodes_[idx].right = r;
    return idx;
  }

  std::vector<std::size_t> candidate_features() {
    std::vector<std::size_t> f(data_.n_features);
    std::iota(f.begin(), f.end(), std::size_t{0});
    if (n_candidates_ < f.size()) {
      for (std::size_t k = 0; k < n_candidates_; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, f.size() - 1);
        std::swap(f[k], f[pick(rng_)]);
      }
      f.resize(n_candidates_);
      std::sort(f.begin(), f.end());
    }
    return f;
  }

  Split find_split(const std::vector<std::size_t>& rows, double mean, double sse) {
    Split best;
    const std::size_t n = rows.size();
    const std::size_t min_leaf = params_.min_leaf;
    std::vector<std::pair<double, double>> xy(n);
    for (std::size_t f : candidate_features()) {
      for (std::size_t k = 0; k < n; ++k)
        xy[k] = {data_.at(rows[k], f), data_.target[rows[k]] - mean};
      std::sort(xy.begin(), xy.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      double total = 0.0;
      for (const auto& p : xy) total += p.second;
      double left_sum = 0.0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        left_sum += xy[k].second;
        const std::size_t nl = k + 1, nr = n - nl;
        if (xy[k].first == xy[k + 1].first) continue;
        if (nl < min_leaf || nr < min_leaf) continue;
        const double right_sum = total - left_sum;
        const double gain = left_sum * left_sum / static_cast<double>(nl) +
                            right_sum * right_sum / static_cast<double>(nr) -
                            total * total / static_cast<double>(n);
        if (gain > best.gain) {
          double t = 0.5 * (xy[k].first + xy[k + 1].first);
          if (!(t < xy[k + 1].first)) t = xy[k].first;
          best = {f, t, gain, true};
        }
      }
    }
    if (best.found && !(best.gain > 1e-12 * sse)) best.found = false;
    return best;
  }

  const Dataset& data_;
  TreeParams params_;
  std::mt19937_64& rng_;
  std::size_t n_candidates_ = 1;
  std::vector<TreeNode> nodes_;
};

}  // namespace detail

/// Greedy CART regression tree on the given rows (duplicates allowed, as in
/// a bootstrap resample).
inline DecisionTree train_tree(const Dataset& data, std::vector<std::size_t> rows,
                               const TreeParams& params, std::mt19937_64& rng) {
  if (rows.empty() || data.n_rows == 0) throw invalid_input("cannot train a tree on an empty dataset");
  if (params.min_leaf < 1) throw invalid_input("min_leaf must be >= 1");
  detail::CartBuilder builder(data, params, rng);
  return builder.build(std::move(rows));
}

/// Variance-reduction CART over all rows and all features.
inline DecisionTree train_tree(const Dataset& data, std::size_t max_depth, std::size_t min_leaf,
                               std::uint64_t rng_seed = 0) {
  if (data.n_rows == 0) throw invalid_input("cannot train a tree on an empty dataset");
  std::vector<std::size_t> rows(data.n_rows);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  auto rng = substream(rng_seed, 0);
  return train_tree(data, std::move(rows), TreeParams{max_depth, min_leaf, 1.0}, rng);
}

/// Bagged forest. Tree t draws its bootstrap sample and feature subsets from
/// substream(seed, t), so results do not depend on the thread count.
inline TreeEnsemble train_bagged_ensemble(const Dataset& data, const BaggingParams& params) {
  if (params.n_trees < 1) throw invalid_input("n_trees must be >= 1");
  if (data.n_rows == 0) throw invalid_input("cannot train on an empty dataset");
  if (!(params.tree.feature_subsample > 0.0 && params.tree.feature_subsample <= 1.0))
    throw invalid_input("feature_subsample must lie in (0, 1]");

  TreeEnsemble ensemble;
  ensemble.n_features = data.n_features;
  ensemble.trees.resize(params.n_trees);

  auto fit = [&](std::size_t t) {
    auto rng = substream(params.seed, t);
    std::vector<std::size_t> rows(data.n_rows);
    if (params.bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, data.n_rows - 1);
      for (auto& r : rows) r = pick(rng);
      std::sort(rows.begin(), rows.end());
    } else {
      std::iota(rows.begin(), rows.end(), std::size_t{0});
    }
    ensemble.trees[t] = train_tree(data, std::move(rows), params.tree, rng);
  };

  unsigned n_threads = params.n_threads ? params.n_threads : std::thread::hardware_concurrency();
  n_threads = std::clamp<unsigned>(n_threads, 1, static_cast<unsigned>(params.n_trees));
  if (n_threads == 1) {
    for (std::size_t t = 0; t < params.n_trees; ++t) fit(t);
    return ensemble;
  }
  std::vector<std::exception_ptr> errors(n_threads);
  {
    std::vector<std::jthread> workers;
    for (unsigned w = 0; w < n_threads; ++w)
      workers.emplace_back([&, w] {
        try {
          for (std::size_t t = w; t < params.n_trees; t += n_threads) fit(t);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return ensemble;
}

}  // namespace fire

#endif  // FIRE_TRAINING_HPP
