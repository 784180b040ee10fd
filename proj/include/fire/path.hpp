#ifndef FIRE_PATH_HPP
#define FIRE_PATH_HPP

#include <cmath>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "fire/mapping.hpp"
#include "fire/solver.hpp"

namespace fire {

struct PathConfig {
  std::size_t n_grid = 100;
  double lambda_min_ratio = 1e-3;
  double lambda_f_ratio = 0.5;  // lambda_f = ratio * lambda_s at every grid point
  double gamma = 1.1;
  PenaltyKind kind = PenaltyKind::mcp;
  bool warm_start = true;

  void validate() const {
    if (n_grid < 2) throw invalid_input("path grid needs at least 2 points");
    if (!(lambda_min_ratio > 0.0 && lambda_min_ratio < 1.0))
      throw invalid_input("lambda_min_ratio must lie in (0, 1)");
    if (!(lambda_f_ratio >= 0.0 && std::isfinite(lambda_f_ratio)))
      throw invalid_input("lambda_f_ratio must be finite and >= 0");
  }

  PenaltyConfig penalty_at(double lambda_s) const {
    return {kind, lambda_s, gamma, lambda_f_ratio * lambda_s};
  }
};

struct PathPoint {
  double lambda_s = 0.0;
  double lambda_f = 0.0;
  std::vector<double> weights;
  std::size_t n_nonzero = 0;
  double train_objective = 0.0;
  std::optional<double> validation_mse;
  std::size_t block_updates = 0;
  bool converged = false;
};

struct PathResult {
  std::vector<PathPoint> points;
  double intercept = 0.0;
  PenaltyKind kind = PenaltyKind::mcp;
  double gamma = 1.1;

  PenaltyConfig penalty_at(std::size_t k) const {
    return {kind, points.at(k).lambda_s, gamma, points.at(k).lambda_f};
  }

  std::size_t total_block_updates() const {
    std::size_t s = 0;
    for (const auto& p : points) s += p.block_updates;
    return s;
  }
};

/// Held-out rows for model selection: mapping matrix built on the
/// validation features and the raw (uncentered) validation targets.
struct ValidationSet {
  const MappingMatrix* mapping = nullptr;
  std::span<const double> target;
};

inline std::size_t count_nonzero(std::span<const double> w, double zero_tolerance = 1e-10) {
  std::size_t k = 0;
  for (double v : w)
    if (std::abs(v) > zero_tolerance) ++k;
  return k;
}

inline double mean_squared_error(std::span<const double> prediction, std::span<const double> y,
                                 double intercept) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - intercept - prediction[i];
    s += e * e;
  }
  return y.empty() ? 0.0 : s / static_cast<double>(y.size());
}

/// Geometric grid from lambda_max down to min_ratio * lambda_max.
inline std::vector<double> lambda_grid(double lambda_max_value, const PathConfig& cfg) {
  std::vector<double> grid(cfg.n_grid);
  for (std::size_t k = 0; k < cfg.n_grid; ++k)
    grid[k] = lambda_max_value *
              std::pow(cfg.lambda_min_ratio,
                       static_cast<double>(k) / static_cast<double>(cfg.n_grid - 1));
  grid.back() = lambda_max_value * cfg.lambda_min_ratio;
  return grid;
}

/// Regularization path over a decreasing lambda_s grid, each solve warm
/// started from the previous solution. `y` is the centered training target;
/// `intercept` is added back when scoring the validation set.
inline PathResult path_solve(const MappingMatrix& m, std::span<const double> y,
                             const PathConfig& cfg, const SolverConfig& scfg,
                             std::optional<ValidationSet> validation = std::nullopt,
                             double intercept = 0.0) {
  cfg.validate();
  const double lmax = lambda_max(m, y);
  if (!(lmax > 0.0))
    throw invalid_input("lambda_max is zero: the centered target is orthogonal to every rule");
  PathResult result;
  result.intercept = intercept;
  result.kind = cfg.kind;
  result.gamma = cfg.gamma;
  std::vector<double> previous;
  const auto grid = lambda_grid(lmax, cfg);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto pen = cfg.penalty_at(grid[k]);
    SolveResult sol;
    try {
      if (cfg.warm_start && !previous.empty())
        sol = gbcd_solve(m, y, pen, scfg, std::span<const double>(previous));
      else
        sol = gbcd_solve(m, y, pen, scfg);
    } catch (const Error& e) {
      throw Error(e.kind(), "path point " + std::to_string(k) + " (lambda_s = " +
                                std::to_string(grid[k]) + "): " + e.what());
    }
    PathPoint p;
    p.lambda_s = pen.lambda_s;
    p.lambda_f = pen.lambda_f;
    p.n_nonzero = count_nonzero(sol.weights);
    p.train_objective = sol.final_objective;
    p.block_updates = sol.n_block_updates;
    p.converged = sol.converged;
    if (validation && validation->mapping)
      p.validation_mse =
          mean_squared_error(validation->mapping->predict(sol.weights), validation->target, intercept);
    p.weights = std::move(sol.weights);
    previous = p.weights;
    result.points.push_back(std::move(p));
  }
  return result;
}

/// Among points with at most `max_rules` nonzero weights, the one with the
/// lowest validation MSE; ties go to the sparser model.
inline std::size_t select_model(const PathResult& path, std::size_t max_rules) {
  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < path.points.size(); ++k) {
    const auto& p = path.points[k];
    if (!p.validation_mse)
      throw invalid_input("path point " + std::to_string(k) + " has no validation loss");
    if (p.n_nonzero > max_rules) continue;
    if (!best) {
      best = k;
      continue;
    }
    const auto& b = path.points[*best];
    if (*p.validation_mse < *b.validation_mse ||
        (*p.validation_mse == *b.validation_mse && p.n_nonzero < b.n_nonzero))
      best = k;
  }
  if (!best)
    throw infeasible("no path point has at most " + std::to_string(max_rules) + " rules");
  return *best;
}

// Path document: array of
//   {"lambda_s", "lambda_f", "n_nonzero", "train_objective", "validation_mse"?,
//    "intercept", "penalty", "gamma", "block_updates", "converged",
//    "weights": {"<column>": weight, ...}}

inline nlohmann::json path_to_json(const PathResult& path) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : path.points) {
    nlohmann::json weights = nlohmann::json::object();
    for (std::size_t j = 0; j < p.weights.size(); ++j)
      if (p.weights[j] != 0.0) weights[std::to_string(j)] = p.weights[j];
    nlohmann::json jp = {{"lambda_s", p.lambda_s},
                         {"lambda_f", p.lambda_f},
                         {"n_nonzero", p.n_nonzero},
                         {"train_objective", p.train_objective},
                         {"intercept", path.intercept},
                         {"penalty", path.kind == PenaltyKind::mcp ? "mcp" : "l1"},
                         {"gamma", path.gamma},
                         {"block_updates", p.block_updates},
                         {"converged", p.converged},
                         {"weights", std::move(weights)}};
    if (p.validation_mse) jp["validation_mse"] = *p.validation_mse;
    arr.push_back(std::move(jp));
  }
  return arr;
}

inline PathResult path_from_json(const nlohmann::json& doc, std::size_t n_columns) {
  if (!doc.is_array()) throw invalid_input("path document must be a JSON array");
  PathResult path;
  try {
    for (std::size_t k = 0; k < doc.size(); ++k) {
      const auto& jp = doc[k];
      PathPoint p;
      p.lambda_s = jp.at("lambda_s").get<double>();
      p.lambda_f = jp.at("lambda_f").get<double>();
      p.n_nonzero = jp.at("n_nonzero").get<std::size_t>();
      p.train_objective = jp.at("train_objective").get<double>();
      if (jp.contains("validation_mse")) p.validation_mse = jp["validation_mse"].get<double>();
      if (jp.contains("block_updates")) p.block_updates = jp["block_updates"].get<std::size_t>();
      if (jp.contains("converged")) p.converged = jp["converged"].get<bool>();
      if (jp.contains("intercept")) path.intercept = jp["intercept"].get<double>();
      if (jp.contains("gamma")) path.gamma = jp["gamma"].get<double>();
      if (jp.contains("penalty")) {
        const auto kind = jp["penalty"].get<std::string>();
        if (kind != "mcp" && kind != "l1")
          throw invalid_input("path point " + std::to_string(k) + ": unknown penalty '" + kind + "'");
        path.kind = kind == "mcp" ? PenaltyKind::mcp : PenaltyKind::l1;
      }
      p.weights.assign(n_columns, 0.0);
      for (const auto& [key, value] : jp.at("weights").items()) {
        const auto col = std::stoull(key);
        if (col >= n_columns)
          throw invalid_input("path point " + std::to_string(k) + ": column " + key +
                              " out of range (ensemble has " + std::to_string(n_columns) +
                              " rules)");
        p.weights[col] = value.get<double>();
      }
      path.points.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw invalid_input(std::string("malformed path document: ") + e.what());
  } catch (const std::logic_error& e) {
    if (dynamic_cast<const Error*>(&e)) throw;
    throw invalid_input(std::string("malformed path document: ") + e.what());
  }
  return path;
}

inline void save_path(const PathResult& path, const std::string& file) {
  std::ofstream out(file);
  if (!out) throw invalid_input("cannot write '" + file + "'");
  out << path_to_json(path).dump(1) << '\n';
}

inline PathResult load_path(const std::string& file, std::size_t n_columns) {
  std::ifstream in(file);
  if (!in) throw invalid_input("cannot open path file '" + file + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw invalid_input("path file '" + file + "' is not valid JSON: " + e.what());
  }
  return path_from_json(doc, n_columns);
}

}  // namespace fire

#endif  // FIRE_PATH_HPP
