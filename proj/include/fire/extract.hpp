#ifndef FIRE_EXTRACT_HPP
#define FIRE_EXTRACT_HPP

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fire/dataset.hpp"
#include "fire/penalties.hpp"
#include "fire/tree.hpp"

namespace fire {

struct WeightedRule {
  Rule rule;
  double weight = 0.0;

  double operator()(std::span<const double> x) const { return weight * rule(x); }
};

/// Sparse rule ensemble: intercept + sum_k weight_k * rule_k(x).
struct ExtractedRuleSet {
  std::vector<WeightedRule> rules;
  double intercept = 0.0;
  std::optional<PenaltyConfig> config;

  double predict(std::span<const double> x) const {
    double s = intercept;
    for (const auto& r : rules) s += r(x);
    return s;
  }

  std::vector<double> predict(const Dataset& data) const {
    std::vector<double> out(data.n_rows);
    for (std::size_t i = 0; i < data.n_rows; ++i) out[i] = predict(data.row(i));
    return out;
  }
};

inline void check_alignment(const TreeEnsemble& ensemble, std::span<const double> w) {
  if (w.size() != ensemble.total_leaves())
    throw invalid_input("weight vector has " + std::to_string(w.size()) +
                        " entries but the ensemble has " + std::to_string(ensemble.total_leaves()) +
                        " leaves");
}

inline ExtractedRuleSet extract_rules(const TreeEnsemble& ensemble, std::span<const double> w,
                                      double intercept, double zero_tolerance = 1e-10) {
  check_alignment(ensemble, w);
  ExtractedRuleSet out;
  out.intercept = intercept;
  std::size_t col = 0;
  for (std::size_t t = 0; t < ensemble.trees.size(); ++t) {
    const auto& tree = ensemble.trees[t];
    for (std::size_t j = 0; j < tree.n_leaves(); ++j, ++col)
      if (std::abs(w[col]) > zero_tolerance)
        out.rules.push_back({tree.rule_of_leaf(j, t), w[col]});
  }
  return out;
}

/// Selected leaves of one tree together with the internal nodes they keep alive.
struct PrunedTree {
  const DecisionTree* tree = nullptr;
  std::vector<std::size_t> leaves;   // canonical positions, ascending
  std::vector<int> internal_nodes;   // node indices, ascending

  std::size_t n_total_nodes() const { return leaves.size() + internal_nodes.size(); }
};

/// An internal node survives iff some selected leaf lies below it.
inline PrunedTree prune_tree(const DecisionTree& tree, std::span<const std::size_t> selected) {
  PrunedTree p;
  p.tree = &tree;
  std::vector<char> keep(tree.nodes().size(), 0);
  std::vector<char> leaf_on(tree.n_leaves(), 0);
  for (std::size_t j : selected) {
    if (j >= tree.n_leaves())
      throw invalid_input("selected leaf " + std::to_string(j) + " out of range");
    leaf_on[j] = 1;
    for (int a = tree.node(tree.ordered_leaves()[j]).parent; a >= 0 && !keep[a];
         a = tree.node(a).parent)
      keep[a] = 1;
  }
  for (std::size_t j = 0; j < leaf_on.size(); ++j)
    if (leaf_on[j]) p.leaves.push_back(j);
  for (std::size_t i = 0; i < keep.size(); ++i)
    if (keep[i]) p.internal_nodes.push_back(static_cast<int>(i));
  return p;
}

/// Number of maximal runs of consecutive selected positions.
inline std::size_t contiguous_runs(std::span<const std::size_t> sorted_leaves) {
  std::size_t runs = 0;
  for (std::size_t k = 0; k < sorted_leaves.size(); ++k)
    if (k == 0 || sorted_leaves[k] != sorted_leaves[k - 1] + 1) ++runs;
  return runs;
}

struct ModelStats {
  std::size_t n_rules = 0;
  std::size_t n_trees_used = 0;
  std::size_t n_internal_nodes = 0;
  std::size_t n_total_nodes = 0;
  std::size_t n_antecedents = 0;
  std::vector<std::size_t> contiguous_runs;  // one entry per tree, 0 for unused trees
  std::optional<double> test_mse;
  std::optional<double> r_squared;
};

inline std::vector<PrunedTree> prune_ensemble(const TreeEnsemble& ensemble,
                                              std::span<const double> w,
                                              double zero_tolerance = 1e-10) {
  check_alignment(ensemble, w);
  std::vector<PrunedTree> out;
  std::size_t col = 0;
  for (const auto& tree : ensemble.trees) {
    std::vector<std::size_t> sel;
    for (std::size_t j = 0; j < tree.n_leaves(); ++j, ++col)
      if (std::abs(w[col]) > zero_tolerance) sel.push_back(j);
    out.push_back(prune_tree(tree, sel));
  }
  return out;
}

/// Interpretability counters of the pruned ensemble, plus test error of
/// intercept + Mw when `test` is given.
inline ModelStats compute_stats(const TreeEnsemble& ensemble, std::span<const double> w,
                                double intercept, const Dataset* test = nullptr,
                                double zero_tolerance = 1e-10) {
  ModelStats s;
  for (const auto& p : prune_ensemble(ensemble, w, zero_tolerance)) {
    s.n_rules += p.leaves.size();
    if (!p.leaves.empty()) ++s.n_trees_used;
    s.n_internal_nodes += p.internal_nodes.size();
    s.contiguous_runs.push_back(contiguous_runs(p.leaves));
  }
  s.n_total_nodes = s.n_rules + s.n_internal_nodes;
  // each retained internal node is one antecedent shared by all rules below it
  s.n_antecedents = s.n_internal_nodes;
  if (test && test->n_rows > 0) {
    if (test->n_features != ensemble.n_features)
      throw invalid_input("feature-count mismatch: ensemble expects " +
                          std::to_string(ensemble.n_features) + " features, test data has " +
                          std::to_string(test->n_features));
    const auto rs = extract_rules(ensemble, w, intercept, zero_tolerance);
    const double ybar = test->target_mean();
    double sse = 0.0, sst = 0.0;
    for (std::size_t i = 0; i < test->n_rows; ++i) {
      const double e = test->target[i] - rs.predict(test->row(i));
      sse += e * e;
      sst += (test->target[i] - ybar) * (test->target[i] - ybar);
    }
    s.test_mse = sse / static_cast<double>(test->n_rows);
    s.r_squared = sst > 0.0 ? 1.0 - sse / sst : 0.0;
  }
  return s;
}

inline nlohmann::json stats_to_json(const ModelStats& s) {
  nlohmann::json j = {{"n_rules", s.n_rules},
                      {"n_trees_used", s.n_trees_used},
                      {"n_internal_nodes", s.n_internal_nodes},
                      {"n_total_nodes", s.n_total_nodes},
                      {"n_antecedents", s.n_antecedents},
                      {"contiguous_runs", s.contiguous_runs}};
  j["test_mse"] = s.test_mse ? nlohmann::json(*s.test_mse) : nlohmann::json(nullptr);
  j["r_squared"] = s.r_squared ? nlohmann::json(*s.r_squared) : nlohmann::json(nullptr);
  return j;
}

// Rule set document:
//   {"intercept": b,
//    "rules": [{"tree", "leaf", "weight", "value",
//               "antecedents": [{"feature", "op": "<=" | ">", "threshold"}]}]}
// "value" is the leaf value, so the document predicts without the ensemble.

inline nlohmann::json rule_set_to_json(const ExtractedRuleSet& rs) {
  nlohmann::json rules = nlohmann::json::array();
  for (const auto& wr : rs.rules) {
    nlohmann::json ants = nlohmann::json::array();
    for (const auto& a : wr.rule.antecedents)
      ants.push_back({{"feature", a.feature},
                      {"op", a.direction == Direction::le ? "<=" : ">"},
                      {"threshold", a.threshold}});
    rules.push_back({{"tree", wr.rule.tree_index},
                     {"leaf", wr.rule.leaf_index},
                     {"weight", wr.weight},
                     {"value", wr.rule.value},
                     {"antecedents", std::move(ants)}});
  }
  nlohmann::json doc = {{"intercept", rs.intercept}, {"rules", std::move(rules)}};
  if (rs.config) {
    doc["penalty"] = {{"kind", rs.config->kind == PenaltyKind::mcp ? "mcp" : "l1"},
                      {"lambda_s", rs.config->lambda_s},
                      {"lambda_f", rs.config->lambda_f},
                      {"gamma", rs.config->gamma}};
  }
  return doc;
}

inline ExtractedRuleSet rule_set_from_json(const nlohmann::json& doc) {
  ExtractedRuleSet rs;
  try {
    rs.intercept = doc.at("intercept").get<double>();
    for (const auto& jr : doc.at("rules")) {
      WeightedRule wr;
      wr.rule.tree_index = jr.at("tree").get<std::size_t>();
      wr.rule.leaf_index = jr.at("leaf").get<std::size_t>();
      wr.weight = jr.at("weight").get<double>();
      wr.rule.value = jr.value("value", 1.0);
      for (const auto& ja : jr.at("antecedents")) {
        Antecedent a;
        a.feature = ja.at("feature").get<std::size_t>();
        const auto op = ja.at("op").get<std::string>();
        if (op == "<=")
          a.direction = Direction::le;
        else if (op == ">")
          a.direction = Direction::gt;
        else
          throw invalid_input("unknown antecedent operator '" + op + "'");
        a.threshold = ja.at("threshold").get<double>();
        wr.rule.antecedents.push_back(a);
      }
      rs.rules.push_back(std::move(wr));
    }
    if (doc.contains("penalty")) {
      const auto& jp = doc["penalty"];
      PenaltyConfig c;
      c.kind = jp.at("kind").get<std::string>() == "l1" ? PenaltyKind::l1 : PenaltyKind::mcp;
      c.lambda_s = jp.at("lambda_s").get<double>();
      c.lambda_f = jp.at("lambda_f").get<double>();
      c.gamma = jp.at("gamma").get<double>();
      rs.config = c;
    }
  } catch (const nlohmann::json::exception& e) {
    throw invalid_input(std::string("malformed rule set document: ") + e.what());
  }
  return rs;
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

/// One rule per line, largest |weight| first, intercept last:
///   IF x[2] <= 0.5 AND x[0] > 1.25 THEN 0.731 * 2.5
/// where the THEN clause reads weight * leaf value.
inline std::string rule_set_to_text(const ExtractedRuleSet& rs) {
  std::vector<const WeightedRule*> order;
  for (const auto& r : rs.rules) order.push_back(&r);
  std::stable_sort(order.begin(), order.end(), [](const WeightedRule* a, const WeightedRule* b) {
    return std::abs(a->weight) > std::abs(b->weight);
  });
  std::ostringstream os;
  for (const auto* r : order) {
    os << "IF ";
    if (r->rule.antecedents.empty()) os << "TRUE";
    for (std::size_t k = 0; k < r->rule.antecedents.size(); ++k) {
      const auto& a = r->rule.antecedents[k];
      if (k) os << " AND ";
      os << "x[" << a.feature << "] " << (a.direction == Direction::le ? "<=" : ">") << ' '
         << format_double(a.threshold);
    }
    os << " THEN " << format_double(r->weight) << " * " << format_double(r->rule.value) << '\n';
  }
  os << "INTERCEPT " << format_double(rs.intercept) << '\n';
  return os.str();
}

inline void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  if (!out) throw invalid_input("cannot write '" + path + "'");
  out << body;
  if (!out) throw invalid_input("write to '" + path + "' failed");
}

inline void save_rule_set(const ExtractedRuleSet& rs, const std::string& path) {
  write_text_file(path, rule_set_to_json(rs).dump(1) + "\n");
}

inline ExtractedRuleSet load_rule_set(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw invalid_input("cannot open rule set file '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw invalid_input("rule set file '" + path + "' is not valid JSON: " + e.what());
  }
  return rule_set_from_json(doc);
}

}  // namespace fire

#endif  // FIRE_EXTRACT_HPP
