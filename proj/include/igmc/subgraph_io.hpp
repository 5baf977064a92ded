#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "igmc/subgraph.hpp"

namespace igmc {

// Stable interchange schema:
//   { "hop": h,
//     "nodes": [{"label": l, "kind": "user"|"item", "global_id": g, "hop": d}, ...],
//     "edges": [[src, dst, type], ...],
//     "target": [0, 1],
//     "rating": number | null }
inline nlohmann::json subgraph_to_json(const EnclosingSubgraph& s) {
  nlohmann::json j;
  j["hop"] = s.hop;
  j["nodes"] = nlohmann::json::array();
  for (int i = 0; i < s.num_nodes(); ++i)
    j["nodes"].push_back({{"label", s.labels[i]},
                          {"kind", s.node_is_user[i] ? "user" : "item"},
                          {"global_id", s.node_global[i]},
                          {"hop", s.node_hop[i]}});
  j["edges"] = nlohmann::json::array();
  for (const auto& e : s.edges) j["edges"].push_back({e.src, e.dst, e.type});
  j["target"] = {s.target_user_local(), s.target_item_local()};
  if (s.observed())
    j["rating"] = s.true_rating;
  else
    j["rating"] = nullptr;
  return j;
}

inline EnclosingSubgraph subgraph_from_json(const nlohmann::json& j) {
  EnclosingSubgraph s;
  try {
    s.hop = j.at("hop").get<int>();
    if (s.hop < 1) throw DataError("subgraph json: hop must be >= 1");
    for (const auto& n : j.at("nodes")) {
      const std::string kind = n.at("kind").get<std::string>();
      if (kind != "user" && kind != "item")
        throw DataError("subgraph json: bad node kind '" + kind + "'");
      s.labels.push_back(n.at("label").get<int>());
      s.node_is_user.push_back(kind == "user");
      s.node_global.push_back(n.at("global_id").get<int>());
      s.node_hop.push_back(n.at("hop").get<int>());
    }
    const auto& tgt = j.at("target");
    if (tgt.size() != 2 || tgt[0].get<int>() != 0 || tgt[1].get<int>() != 1)
      throw DataError("subgraph json: target must be [0,1]");
    for (const auto& e : j.at("edges")) {
      if (e.size() != 3) throw DataError("subgraph json: edge must be [src,dst,type]");
      EnclosingSubgraph::Edge edge{e[0].get<int>(), e[1].get<int>(), e[2].get<int>()};
      if (edge.src < 0 || edge.src >= s.num_nodes() || !s.node_is_user[edge.src])
        throw DataError("subgraph json: edge source is not a user node");
      if (edge.dst < 0 || edge.dst >= s.num_nodes() || s.node_is_user[edge.dst])
        throw DataError("subgraph json: edge target is not an item node");
      if (edge.type < 0) throw DataError("subgraph json: negative edge type");
      s.edges.push_back(edge);
    }
    if (j.at("rating").is_null()) {
      s.true_rating = std::numeric_limits<Real>::quiet_NaN();
      s.true_type = -1;
    } else {
      s.true_rating = j.at("rating").get<Real>();
      s.true_type = 0;  // type index is scale-dependent; importers re-resolve
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("subgraph json: ") + e.what());
  }
  if (s.num_nodes() < 2 || !s.node_is_user[0] || s.node_is_user[1] || s.node_hop[0] != 0 ||
      s.node_hop[1] != 0)
    throw DataError("subgraph json: first two nodes must be the hop-0 user and item");
  for (int i = 0; i < s.num_nodes(); ++i)
    if (s.labels[i] != 2 * s.node_hop[i] + (s.node_is_user[i] ? 0 : 1))
      throw DataError("subgraph json: label/hop mismatch at node " + std::to_string(i));
  return s;
}

// GraphViz rendering: users as boxes, items as ellipses, the target pair
// doubled and bold, edges colored by rating type. `pred` adds the model's
// estimate to the caption next to the observed value.
inline std::string subgraph_to_dot(const EnclosingSubgraph& s, const RatingScale* scale = nullptr,
                                   std::optional<Real> pred = std::nullopt) {
  static const char* kPalette[] = {"#d62728", "#ff7f0e", "#bcbd22", "#2ca02c", "#1f77b4",
                                   "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#17becf"};
  constexpr int kPaletteSize = 10;
  std::ostringstream out;
  out << "graph enclosing_subgraph {\n";
  out << "  node [fontsize=10];\n";
  for (int i = 0; i < s.num_nodes(); ++i) {
    const char* shape = s.node_is_user[i] ? "box" : "ellipse";
    out << "  n" << i << " [label=\"" << (s.node_is_user[i] ? "u" : "i") << s.node_global[i]
        << "\\nL" << s.labels[i] << "\", shape=" << shape;
    if (i < 2) out << ", style=bold, peripheries=2";
    out << "];\n";
  }
  for (const auto& e : s.edges) {
    out << "  n" << e.src << " -- n" << e.dst << " [color=\""
        << kPalette[e.type % kPaletteSize] << "\"";
    if (scale && e.type < scale->num_types()) out << ", label=\"" << scale->value_of(e.type) << "\"";
    out << "];\n";
  }
  out << "  n0 -- n1 [style=dashed, penwidth=2];\n";
  std::ostringstream caption;
  caption << "true=";
  if (s.observed())
    caption << s.true_rating;
  else
    caption << "?";
  if (pred) caption << "  pred=" << *pred;
  out << "  label=\"" << caption.str() << "\";\n";
  out << "}\n";
  return out.str();
}

}  // namespace igmc
