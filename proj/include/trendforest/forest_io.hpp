#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trendforest/forest.hpp"

namespace trendforest {

inline constexpr const char* kForestFormat = "trendforest.forest";
inline constexpr int kForestFormatVersion = 1;

inline nlohmann::json config_to_json(const ForestConfig& c) {
  nlohmann::json j;
  j["n_trees"] = c.n_trees;
  j["max_depth"] = c.max_depth ? nlohmann::json(*c.max_depth) : nlohmann::json(nullptr);
  j["min_samples_leaf"] = c.min_samples_leaf;
  j["min_samples_split"] = c.min_samples_split;
  j["mtry"] = c.mtry ? nlohmann::json(*c.mtry) : nlohmann::json(nullptr);
  j["bootstrap"] = c.bootstrap;
  j["seed"] = c.seed;
  return j;
}

inline ForestConfig config_from_json(const nlohmann::json& j) {
  ForestConfig c;
  c.n_trees = j.at("n_trees").get<std::size_t>();
  if (!j.at("max_depth").is_null()) c.max_depth = j.at("max_depth").get<std::size_t>();
  c.min_samples_leaf = j.at("min_samples_leaf").get<std::size_t>();
  c.min_samples_split = j.at("min_samples_split").get<std::size_t>();
  if (!j.at("mtry").is_null()) c.mtry = j.at("mtry").get<std::size_t>();
  c.bootstrap = j.at("bootstrap").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

/// Versioned JSON document. Nodes are listed in preorder, so child links are
/// implicit: an internal node's left child follows it directly and its right
/// child follows the left subtree.
inline nlohmann::json forest_to_json(const Forest& forest) {
  nlohmann::json doc;
  doc["format"] = kForestFormat;
  doc["version"] = kForestFormatVersion;
  doc["feature_names"] = forest.feature_names();
  doc["config"] = config_to_json(forest.config());
  auto& trees = doc["trees"] = nlohmann::json::array();
  for (std::size_t t = 0; t < forest.trees().size(); ++t) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& node : forest.trees()[t].nodes()) {
      nlohmann::json jn;
      jn["count"] = node.count;
      jn["value"] = node.value;
      if (const auto& s = node.split) {
        jn["feature"] = s->feature_index;
        jn["threshold"] = s->threshold;
        jn["left_mean"] = s->left_target_mean;
        jn["right_mean"] = s->right_target_mean;
        jn["left_count"] = s->left_count;
        jn["right_count"] = s->right_count;
        jn["impurity_decrease"] = s->impurity_decrease;
      }
      nodes.push_back(std::move(jn));
    }
    nlohmann::json jt;
    jt["nodes"] = std::move(nodes);
    if (!forest.oob_indices().empty()) jt["oob"] = forest.oob_indices()[t];
    trees.push_back(std::move(jt));
  }
  return doc;
}

namespace detail {

inline std::size_t read_preorder(const nlohmann::json& nodes, std::size_t& cursor,
                                 std::vector<TreeNode>& out, std::size_t n_features) {
  if (cursor >= nodes.size()) throw std::runtime_error("forest json: truncated preorder node list");
  const auto& jn = nodes[cursor++];
  const std::size_t id = out.size();
  out.emplace_back();
  out[id].count = jn.at("count").get<std::size_t>();
  out[id].value = jn.at("value").get<double>();
  if (jn.contains("feature")) {
    SplitRecord s;
    s.feature_index = jn.at("feature").get<std::size_t>();
    if (s.feature_index >= n_features) throw std::runtime_error("forest json: feature out of range");
    s.threshold = jn.at("threshold").get<double>();
    s.left_target_mean = jn.at("left_mean").get<double>();
    s.right_target_mean = jn.at("right_mean").get<double>();
    s.left_count = jn.at("left_count").get<std::size_t>();
    s.right_count = jn.at("right_count").get<std::size_t>();
    s.impurity_decrease = jn.at("impurity_decrease").get<double>();
    out[id].split = s;
    const auto left = read_preorder(nodes, cursor, out, n_features);
    const auto right = read_preorder(nodes, cursor, out, n_features);
    out[id].left = static_cast<std::int32_t>(left);
    out[id].right = static_cast<std::int32_t>(right);
  }
  return id;
}

}  // namespace detail

inline Forest forest_from_json(const nlohmann::json& doc) {
  if (doc.value("format", std::string{}) != kForestFormat) {
    throw std::runtime_error("forest json: not a forest document");
  }
  if (doc.at("version").get<int>() != kForestFormatVersion) {
    throw std::runtime_error("forest json: unsupported version");
  }
  auto names = doc.at("feature_names").get<std::vector<std::string>>();
  std::vector<Tree> trees;
  std::vector<std::vector<std::size_t>> oob;
  for (const auto& jt : doc.at("trees")) {
    const auto& nodes = jt.at("nodes");
    std::vector<TreeNode> out;
    out.reserve(nodes.size());
    std::size_t cursor = 0;
    detail::read_preorder(nodes, cursor, out, names.size());
    if (cursor != nodes.size()) throw std::runtime_error("forest json: trailing nodes in tree");
    trees.emplace_back(std::move(out));
    if (jt.contains("oob")) oob.push_back(jt["oob"].get<std::vector<std::size_t>>());
  }
  if (trees.empty()) throw std::runtime_error("forest json: no trees");
  if (!oob.empty() && oob.size() != trees.size()) throw std::runtime_error("forest json: partial oob lists");
  return Forest(std::move(trees), config_from_json(doc.at("config")), std::move(names), std::move(oob));
}

inline void save_forest(const Forest& forest, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << forest_to_json(forest).dump() << '\n';
}

inline Forest load_forest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return forest_from_json(nlohmann::json::parse(in));
}

}  // namespace trendforest
