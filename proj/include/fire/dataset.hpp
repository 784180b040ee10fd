#ifndef FIRE_DATASET_HPP
#define FIRE_DATASET_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fire/error.hpp"

namespace fire {

/// Dense regression dataset. Features are stored row-major.
struct Dataset {
  std::size_t n_rows = 0;
  std::size_t n_features = 0;
  std::vector<double> features;
  std::vector<double> target;
  std::vector<std::string> feature_names;

  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * n_features, n_features};
  }

  double at(std::size_t i, std::size_t j) const {
    return features[i * n_features + j];
  }

  /// Throws invalid_input unless shapes agree and all values are finite.
  void validate() const {
    if (n_rows == 0 || n_features == 0)
      throw invalid_input("dataset must have at least one row and one feature");
    if (features.size() != n_rows * n_features)
      throw invalid_input("feature matrix size does not match n_rows * n_features");
    if (target.size() != n_rows)
      throw invalid_input("target length " + std::to_string(target.size()) +
                          " does not match row count " + std::to_string(n_rows));
    if (!feature_names.empty() && feature_names.size() != n_features)
      throw invalid_input("feature_names length does not match n_features");
    for (std::size_t k = 0; k < features.size(); ++k)
      if (!std::isfinite(features[k]))
        throw invalid_input("non-finite feature value at row " +
                            std::to_string(k / n_features) + ", column " +
                            std::to_string(k % n_features));
    for (std::size_t i = 0; i < n_rows; ++i)
      if (!std::isfinite(target[i]))
        throw invalid_input("non-finite target value at row " + std::to_string(i));
  }

  double target_mean() const {
    if (target.empty()) return 0.0;
    return std::accumulate(target.begin(), target.end(), 0.0) /
           static_cast<double>(target.size());
  }
};

inline Dataset make_dataset(const std::vector<std::vector<double>>& rows,
                            std::vector<double> target,
                            std::vector<std::string> names = {}) {
  Dataset d;
  d.n_rows = rows.size();
  d.n_features = rows.empty() ? 0 : rows.front().size();
  d.features.reserve(d.n_rows * d.n_features);
  for (const auto& r : rows) {
    if (r.size() != d.n_features) throw invalid_input("ragged feature rows");
    d.features.insert(d.features.end(), r.begin(), r.end());
  }
  d.target = std::move(target);
  d.feature_names = std::move(names);
  d.validate();
  return d;
}

inline Dataset subset(const Dataset& data, std::span<const std::size_t> rows) {
  Dataset d;
  d.n_rows = rows.size();
  d.n_features = data.n_features;
  d.feature_names = data.feature_names;
  d.features.reserve(d.n_rows * d.n_features);
  d.target.reserve(d.n_rows);
  for (std::size_t i : rows) {
    auto r = data.row(i);
    d.features.insert(d.features.end(), r.begin(), r.end());
    d.target.push_back(data.target[i]);
  }
  return d;
}

/// Seeded shuffle split. The validation part receives round(frac * N) rows,
/// keeping at least one row on each side when N >= 2.
inline std::pair<Dataset, Dataset> split_train_valid(const Dataset& data,
                                                     double valid_frac,
                                                     std::uint64_t seed) {
  if (!(valid_frac > 0.0 && valid_frac < 1.0))
    throw invalid_input("validation fraction must lie in (0, 1)");
  std::vector<std::size_t> idx(data.n_rows);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  auto n_valid = static_cast<std::size_t>(
      std::llround(valid_frac * static_cast<double>(data.n_rows)));
  n_valid = std::clamp<std::size_t>(n_valid, 1, data.n_rows > 1 ? data.n_rows - 1 : 1);
  std::span<const std::size_t> all(idx);
  auto valid = all.first(n_valid);
  auto train = all.subspan(n_valid);
  std::vector<std::size_t> tr(train.begin(), train.end());
  std::vector<std::size_t> va(valid.begin(), valid.end());
  std::sort(tr.begin(), tr.end());
  std::sort(va.begin(), va.end());
  return {subset(data, tr), subset(data, va)};
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' ||
                        s.back() == '"'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    cells.push_back(trim(line.substr(start, pos == std::string_view::npos
                                                ? std::string_view::npos
                                                : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

inline bool parse_double(std::string_view cell, double& out) {
  if (cell.empty()) return false;
  if (cell.front() == '+') cell.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), out);
  return ec == std::errc() && ptr == cell.data() + cell.size() && std::isfinite(out);
}

}  // namespace detail

/// Reads a CSV with a header row. Every column other than `target_column`
/// becomes a feature, in file order.
inline Dataset read_csv(const std::string& path, const std::string& target_column) {
  std::ifstream in(path);
  if (!in) throw invalid_input("cannot open data file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw invalid_input("data file '" + path + "' is empty");
  auto header = detail::split_commas(line);
  std::vector<std::string> names(header.begin(), header.end());
  auto it = std::find(names.begin(), names.end(), target_column);
  if (it == names.end())
    throw invalid_input("target column '" + target_column + "' not found in '" + path + "'");
  const auto target_pos = static_cast<std::size_t>(it - names.begin());

  Dataset d;
  for (std::size_t c = 0; c < names.size(); ++c)
    if (c != target_pos) d.feature_names.push_back(names[c]);
  d.n_features = d.feature_names.size();

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_commas(line);
    if (cells.size() != names.size())
      throw invalid_input("line " + std::to_string(line_no) + " has " +
                          std::to_string(cells.size()) + " cells, expected " +
                          std::to_string(names.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v = 0.0;
      if (!detail::parse_double(cells[c], v))
        throw invalid_input("non-numeric value '" + std::string(cells[c]) +
                            "' in column '" + names[c] + "' at line " +
                            std::to_string(line_no));
      if (c == target_pos)
        d.target.push_back(v);
      else
        d.features.push_back(v);
    }
    ++d.n_rows;
  }
  d.validate();
  return d;
}

inline void write_csv(const std::string& path, const Dataset& data,
                      const std::string& target_name = "y") {
  std::ofstream out(path);
  if (!out) throw invalid_input("cannot write '" + path + "'");
  out.precision(17);
  for (std::size_t j = 0; j < data.n_features; ++j)
    out << (data.feature_names.empty() ? "x" + std::to_string(j) : data.feature_names[j])
        << ',';
  out << target_name << '\n';
  for (std::size_t i = 0; i < data.n_rows; ++i) {
    for (double v : data.row(i)) out << v << ',';
    out << data.target[i] << '\n';
  }
}

}  // namespace fire

#endif  // FIRE_DATASET_HPP
