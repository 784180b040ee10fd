#ifndef FIRE_ENSEMBLE_IO_HPP
#define FIRE_ENSEMBLE_IO_HPP

#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "fire/tree.hpp"

namespace fire {

// Ensemble document:
//   {"n_features": P,
//    "trees": [{"root": id,
//               "nodes": [{"id", "feature", "threshold", "left", "right"} |
//                         {"id", "value", "count"}]}]}
// Node ids are arbitrary integers unique within a tree. Leaf order is not
// stored; it is recomputed by depth-first traversal on load.

inline nlohmann::json ensemble_to_json(const TreeEnsemble& e) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& tree : e.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (std::size_t i = 0; i < tree.nodes().size(); ++i) {
      const auto& n = tree.node(i);
      if (n.is_leaf)
        nodes.push_back({{"id", i}, {"value", n.value}, {"count", n.count}});
      else
        nodes.push_back({{"id", i},
                         {"feature", n.feature},
                         {"threshold", n.threshold},
                         {"left", n.left},
                         {"right", n.right}});
    }
    trees.push_back({{"root", 0}, {"nodes", std::move(nodes)}});
  }
  return {{"n_features", e.n_features}, {"trees", std::move(trees)}};
}

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key,
                                     const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw invalid_input(where + ": missing field '" + key + "'");
  return *it;
}

inline long long require_int(const nlohmann::json& obj, const char* key,
                             const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_number_integer())
    throw invalid_input(where + ": field '" + key + "' must be an integer");
  return v.get<long long>();
}

inline double require_number(const nlohmann::json& obj, const char* key,
                             const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_number()) throw invalid_input(where + ": field '" + key + "' must be a number");
  return v.get<double>();
}

}  // namespace detail

inline TreeEnsemble ensemble_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw invalid_input("ensemble document must be a JSON object");
  TreeEnsemble e;
  const auto p = detail::require_int(doc, "n_features", "ensemble");
  if (p < 1) throw invalid_input("ensemble: n_features must be >= 1");
  e.n_features = static_cast<std::size_t>(p);
  const auto& trees = detail::require(doc, "trees", "ensemble");
  if (!trees.is_array()) throw invalid_input("ensemble: 'trees' must be an array");

  for (std::size_t t = 0; t < trees.size(); ++t) {
    const std::string where_tree = "tree " + std::to_string(t);
    const auto& jt = trees[t];
    if (!jt.is_object()) throw invalid_input(where_tree + ": must be an object");
    const auto root_id = detail::require_int(jt, "root", where_tree);
    const auto& jnodes = detail::require(jt, "nodes", where_tree);
    if (!jnodes.is_array() || jnodes.empty())
      throw invalid_input(where_tree + ": 'nodes' must be a non-empty array");

    std::unordered_map<long long, int> pos;
    for (std::size_t k = 0; k < jnodes.size(); ++k) {
      const auto id = detail::require_int(jnodes[k], "id", where_tree + ", node #" + std::to_string(k));
      if (!pos.emplace(id, static_cast<int>(k)).second)
        throw invalid_input(where_tree + ": duplicate node id " + std::to_string(id));
    }
    auto resolve = [&](long long id, const std::string& where) {
      auto it = pos.find(id);
      if (it == pos.end())
        throw invalid_input(where + " references missing node id " + std::to_string(id));
      return it->second;
    };

    std::vector<TreeNode> nodes;
    nodes.reserve(jnodes.size());
    for (const auto& jn : jnodes) {
      const auto id = jn.at("id").get<long long>();
      const std::string where = where_tree + ", node " + std::to_string(id);
      if (jn.contains("feature")) {
        const auto f = detail::require_int(jn, "feature", where);
        if (f < 0 || static_cast<std::size_t>(f) >= e.n_features)
          throw invalid_input(where + ": feature " + std::to_string(f) + " out of range");
        const double thr = detail::require_number(jn, "threshold", where);
        const int l = resolve(detail::require_int(jn, "left", where), where);
        const int r = resolve(detail::require_int(jn, "right", where), where);
        nodes.push_back(TreeNode::split(static_cast<std::size_t>(f), thr, l, r));
      } else if (jn.contains("value")) {
        const double v = detail::require_number(jn, "value", where);
        long long c = 0;
        if (jn.contains("count")) c = detail::require_int(jn, "count", where);
        if (c < 0) throw invalid_input(where + ": negative count");
        nodes.push_back(TreeNode::leaf(v, static_cast<std::size_t>(c)));
      } else {
        throw invalid_input(where + ": node is neither a split nor a leaf");
      }
    }
    try {
      e.trees.emplace_back(nodes, resolve(root_id, where_tree + " root"));
    } catch (const Error& err) {
      throw invalid_input(where_tree + ": " + err.what());
    }
  }
  e.validate();
  return e;
}

inline void save_ensemble(const TreeEnsemble& e, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw invalid_input("cannot write '" + path + "'");
  out << ensemble_to_json(e).dump() << '\n';
}

inline TreeEnsemble load_ensemble(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw invalid_input("cannot open ensemble file '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& ex) {
    throw invalid_input("ensemble file '" + path + "' is not valid JSON: " + ex.what());
  }
  return ensemble_from_json(doc);
}

}  // namespace fire

#endif  // FIRE_ENSEMBLE_IO_HPP
