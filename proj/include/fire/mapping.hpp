#ifndef FIRE_MAPPING_HPP
#define FIRE_MAPPING_HPP

#include <algorithm>
#include <cmath>
#include <ostream>
#include <span>
#include <vector>

#include "fire/dataset.hpp"
#include "fire/tree.hpp"

namespace fire {

/// Column-major sparse storage of one tree's mapping matrix M_t.
///
/// Column j holds the leaf value v_j on every row routed to leaf j. Each row
/// has exactly one nonzero, so the leaf supports partition the rows and
/// M_t^T M_t is diagonal with entries v_j^2 n_j.
class MappingBlock {
 public:
  MappingBlock() = default;

  MappingBlock(const DecisionTree& tree, const Dataset& data, std::size_t tree_index = 0)
      : tree_index_(tree_index), n_rows_(data.n_rows) {
    const std::size_t r = tree.n_leaves();
    values_.resize(r);
    for (std::size_t j = 0; j < r; ++j) values_[j] = tree.leaf(j).value;
    row_leaf_.resize(n_rows_);
    std::vector<std::size_t> counts(r, 0);
    for (std::size_t i = 0; i < n_rows_; ++i) {
      row_leaf_[i] = static_cast<int>(tree.route(data.row(i)));
      ++counts[row_leaf_[i]];
    }
    col_start_.assign(r + 1, 0);
    for (std::size_t j = 0; j < r; ++j) col_start_[j + 1] = col_start_[j] + counts[j];
    row_index_.resize(n_rows_);
    std::vector<std::size_t> fill(col_start_.begin(), col_start_.end() - 1);
    for (std::size_t i = 0; i < n_rows_; ++i) row_index_[fill[row_leaf_[i]]++] = i;
    compute_lipschitz();
  }

  std::size_t tree_index() const { return tree_index_; }
  std::size_t n_rows() const { return n_rows_; }
  std::size_t n_leaves() const { return values_.size(); }
  double value(std::size_t j) const { return values_[j]; }
  std::size_t leaf_count(std::size_t j) const { return col_start_[j + 1] - col_start_[j]; }
  std::size_t leaf_of_row(std::size_t i) const { return static_cast<std::size_t>(row_leaf_[i]); }

  /// Sorted row indices routed to leaf j.
  std::span<const std::size_t> rows_of(std::size_t j) const {
    return {row_index_.data() + col_start_[j], leaf_count(j)};
  }

  /// Largest eigenvalue of M_t^T M_t, i.e. max_j v_j^2 n_j.
  double lipschitz() const { return lipschitz_; }

  /// All columns zero: the block cannot change the fit and is skipped.
  bool inert() const { return !(lipschitz_ > 0.0); }

  /// out_j = -v_j * sum_{i in leaf j} r_i, the block of grad f = -M^T r.
  void gradient(std::span<const double> residual, std::span<double> out) const {
    for (std::size_t j = 0; j < values_.size(); ++j) {
      double s = 0.0;
      for (std::size_t i : rows_of(j)) s += residual[i];
      out[j] = -values_[j] * s;
    }
  }

  std::vector<double> gradient(std::span<const double> residual) const {
    std::vector<double> g(values_.size());
    gradient(residual, g);
    return g;
  }

  /// r <- r + M_t (old_w - new_w); only changed columns are touched.
  void apply_delta(std::span<double> residual, std::span<const double> old_w,
                   std::span<const double> new_w) const {
    for (std::size_t j = 0; j < values_.size(); ++j) {
      const double delta = values_[j] * (old_w[j] - new_w[j]);
      if (delta == 0.0) continue;
      for (std::size_t i : rows_of(j)) residual[i] += delta;
    }
  }

  /// out += M_t w_t
  void accumulate(std::span<const double> w_t, std::span<double> out) const {
    for (std::size_t i = 0; i < n_rows_; ++i) out[i] += values_[row_leaf_[i]] * w_t[row_leaf_[i]];
  }

 private:
  void compute_lipschitz() {
    lipschitz_ = 0.0;
    for (std::size_t j = 0; j < values_.size(); ++j)
      lipschitz_ = std::max(lipschitz_, values_[j] * values_[j] * static_cast<double>(leaf_count(j)));
  }

  std::size_t tree_index_ = 0;
  std::size_t n_rows_ = 0;
  std::vector<double> values_;
  std::vector<std::size_t> col_start_;
  std::vector<std::size_t> row_index_;
  std::vector<int> row_leaf_;
  double lipschitz_ = 0.0;
};

inline MappingBlock build_block(const DecisionTree& tree, const Dataset& data,
                                std::size_t tree_index = 0) {
  return MappingBlock(tree, data, tree_index);
}

inline double lipschitz(const MappingBlock& block) { return block.lipschitz(); }

/// M = [M_1, ..., M_T]. Column offsets follow tree order; offsets_[T] = R.
class MappingMatrix {
 public:
  MappingMatrix() = default;

  MappingMatrix(const TreeEnsemble& ensemble, const Dataset& data) : n_rows_(data.n_rows) {
    if (data.n_features != ensemble.n_features)
      throw invalid_input("feature-count mismatch: ensemble expects " +
                          std::to_string(ensemble.n_features) + " features, data has " +
                          std::to_string(data.n_features));
    for (std::size_t t = 0; t < ensemble.trees.size(); ++t) {
      blocks_.emplace_back(ensemble.trees[t], data, t);
      offsets_.push_back(offsets_.back() + blocks_.back().n_leaves());
    }
  }

  std::size_t n_rows() const { return n_rows_; }
  std::size_t n_blocks() const { return blocks_.size(); }
  std::size_t total_columns() const { return offsets_.empty() ? 0 : offsets_.back(); }
  const MappingBlock& block(std::size_t t) const { return blocks_[t]; }
  std::size_t offset(std::size_t t) const { return offsets_[t]; }
  std::span<const std::size_t> offsets() const { return offsets_; }

  template <class T>
  std::span<T> block_view(std::span<T> w, std::size_t t) const {
    return w.subspan(offsets_[t], blocks_[t].n_leaves());
  }

  /// M w
  std::vector<double> predict(std::span<const double> w) const {
    if (w.size() != total_columns())
      throw invalid_input("weight vector has " + std::to_string(w.size()) + " entries, expected " +
                          std::to_string(total_columns()));
    std::vector<double> out(n_rows_, 0.0);
    for (std::size_t t = 0; t < blocks_.size(); ++t)
      blocks_[t].accumulate(w.subspan(offsets_[t], blocks_[t].n_leaves()), out);
    return out;
  }

  /// M^T v
  std::vector<double> transpose_times(std::span<const double> v) const {
    std::vector<double> out(total_columns());
    for (std::size_t t = 0; t < blocks_.size(); ++t) {
      auto g = std::span<double>(out).subspan(offsets_[t], blocks_[t].n_leaves());
      blocks_[t].gradient(v, g);
      for (auto& x : g) x = -x;
    }
    return out;
  }

  /// r = y - M w
  std::vector<double> residual(std::span<const double> y, std::span<const double> w) const {
    if (y.size() != n_rows_)
      throw invalid_input("target has " + std::to_string(y.size()) + " entries, expected " +
                          std::to_string(n_rows_));
    auto r = predict(w);
    for (std::size_t i = 0; i < n_rows_; ++i) r[i] = y[i] - r[i];
    return r;
  }

  /// Debug dump: one "row col value" triplet per nonzero.
  void dump_triplets(std::ostream& os) const {
    const auto old_precision = os.precision(17);
    for (std::size_t t = 0; t < blocks_.size(); ++t)
      for (std::size_t j = 0; j < blocks_[t].n_leaves(); ++j)
        for (std::size_t i : blocks_[t].rows_of(j))
          os << i << ' ' << offsets_[t] + j << ' ' << blocks_[t].value(j) << '\n';
    os.precision(old_precision);
  }

 private:
  std::size_t n_rows_ = 0;
  std::vector<MappingBlock> blocks_;
  std::vector<std::size_t> offsets_{0};
};

inline std::vector<double> block_gradient(const MappingBlock& block,
                                          std::span<const double> residual) {
  return block.gradient(residual);
}

inline void apply_block_delta(std::span<double> residual, const MappingBlock& block,
                              std::span<const double> old_w, std::span<const double> new_w) {
  block.apply_delta(residual, old_w, new_w);
}

inline std::vector<double> predict(const MappingMatrix& m, std::span<const double> w) {
  return m.predict(w);
}

}  // namespace fire

#endif  // FIRE_MAPPING_HPP
