#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "igmc/common.hpp"
#include "igmc/graph.hpp"
#include "igmc/tensor.hpp"

namespace igmc {

struct ExtractConfig {
  int hop = 1;
  int max_nodes_per_hop = 200;  // <= 0 disables the cap
};

// The h-hop enclosing subgraph of a (user, item) pair. Local node 0 is the
// target user, local node 1 the target item; remaining nodes are grouped by
// hop, users before items, ascending global id within each group. The target
// edge itself is never among the edges; its value (when observed) is kept as
// the regression label.
struct EnclosingSubgraph {
  struct Edge {
    int src;   // local index of a user node
    int dst;   // local index of an item node
    int type;  // rating type
  };

  int hop = 1;
  std::vector<int> node_hop;      // BFS distance from the target pair
  std::vector<bool> node_is_user;
  std::vector<int> node_global;   // id on the node's own side
  std::vector<int> labels;        // 2*hop for users, 2*hop+1 for items
  std::vector<Edge> edges;
  Real true_rating = std::numeric_limits<Real>::quiet_NaN();
  int true_type = -1;  // -1 when the pair is unobserved

  int num_nodes() const { return static_cast<int>(node_global.size()); }
  int target_user_local() const { return 0; }
  int target_item_local() const { return 1; }
  bool observed() const { return true_type >= 0; }
  int num_label_classes() const { return 2 * hop + 2; }
};

// Labels encode (hop, side): users at hop i get 2i, items 2i + 1. The target
// pair sits at hop 0, giving it the fixed labels 0 and 1.
inline void label_nodes(EnclosingSubgraph& s) {
  s.labels.resize(s.node_global.size());
  for (size_t i = 0; i < s.labels.size(); ++i)
    s.labels[i] = 2 * s.node_hop[i] + (s.node_is_user[i] ? 0 : 1);
}

// Reusable visitation marks so per-pair extraction does not reallocate
// graph-sized buffers. One instance per thread of use.
class ExtractScratch {
public:
  void ensure(int num_users, int num_items) {
    if (static_cast<int>(user_mark_.size()) < num_users) {
      user_mark_.resize(num_users, 0);
      user_local_.resize(num_users, 0);
    }
    if (static_cast<int>(item_mark_.size()) < num_items) {
      item_mark_.resize(num_items, 0);
      item_local_.resize(num_items, 0);
    }
  }

  std::vector<uint64_t> user_mark_, item_mark_;
  std::vector<int> user_local_, item_local_;
  uint64_t stamp_ = 0;
};

// Breadth-first ring growth around the pair: at step d the user fringe is
// every unvisited user adjacent to the previous item fringe, and vice versa;
// both fringes therefore hold exactly the nodes at distance d from {u, v}.
// Oversized fringes are subsampled (seeded) before joining the node set, and
// dropped nodes stay eligible for rediscovery at later hops. The edge (u, v)
// joins neither traversal output nor the induced edge list: both endpoints
// are visited at distance 0, so no path through it can shorten any distance.
inline EnclosingSubgraph extract(const BipartiteGraph& g, int user, int item,
                                 const ExtractConfig& cfg, uint64_t seed,
                                 ExtractScratch* scratch = nullptr) {
  if (cfg.hop < 1) throw ArgumentError("extract: hop must be >= 1");
  if (user < 0 || user >= g.num_users())
    throw ArgumentError("extract: user id " + std::to_string(user) + " out of range");
  if (item < 0 || item >= g.num_items())
    throw ArgumentError("extract: item id " + std::to_string(item) + " out of range");

  ExtractScratch local;
  ExtractScratch& ws = scratch ? *scratch : local;
  ws.ensure(g.num_users(), g.num_items());
  const uint64_t stamp = ++ws.stamp_;

  Rng rng(seed);
  std::vector<std::vector<int>> level_users(cfg.hop + 1), level_items(cfg.hop + 1);
  level_users[0] = {user};
  level_items[0] = {item};
  ws.user_mark_[user] = stamp;
  ws.item_mark_[item] = stamp;

  auto cap_fringe = [&](std::vector<int>& fringe, std::vector<uint64_t>& mark) {
    if (cfg.max_nodes_per_hop <= 0 ||
        fringe.size() <= static_cast<size_t>(cfg.max_nodes_per_hop))
      return;
    std::sort(fringe.begin(), fringe.end());  // canonical order before sampling
    rng.shuffle(fringe);
    for (size_t k = cfg.max_nodes_per_hop; k < fringe.size(); ++k) mark[fringe[k]] = stamp - 1;
    fringe.resize(cfg.max_nodes_per_hop);
  };

  for (int d = 1; d <= cfg.hop; ++d) {
    auto& new_users = level_users[d];
    auto& new_items = level_items[d];
    for (int v : level_items[d - 1])
      for (const auto& h : g.item_adj(v))
        if (ws.user_mark_[h.nbr] != stamp) {
          ws.user_mark_[h.nbr] = stamp;
          new_users.push_back(h.nbr);
        }
    for (int u : level_users[d - 1])
      for (const auto& h : g.user_adj(u))
        if (ws.item_mark_[h.nbr] != stamp) {
          ws.item_mark_[h.nbr] = stamp;
          new_items.push_back(h.nbr);
        }
    cap_fringe(new_users, ws.user_mark_);
    cap_fringe(new_items, ws.item_mark_);
    std::sort(new_users.begin(), new_users.end());
    std::sort(new_items.begin(), new_items.end());
    if (new_users.empty() && new_items.empty()) break;
  }

  EnclosingSubgraph s;
  s.hop = cfg.hop;
  auto push_node = [&](int global, bool is_user, int dist) {
    const int local = s.num_nodes();
    s.node_global.push_back(global);
    s.node_is_user.push_back(is_user);
    s.node_hop.push_back(dist);
    (is_user ? ws.user_local_ : ws.item_local_)[global] = local;
  };
  push_node(user, true, 0);
  push_node(item, false, 0);
  for (int d = 1; d <= cfg.hop; ++d) {
    for (int u : level_users[d]) push_node(u, true, d);
    for (int v : level_items[d]) push_node(v, false, d);
  }
  label_nodes(s);

  for (int local = 0; local < s.num_nodes(); ++local) {
    if (!s.node_is_user[local]) continue;
    const int u = s.node_global[local];
    for (const auto& h : g.user_adj(u)) {
      if (ws.item_mark_[h.nbr] != stamp) continue;
      if (u == user && h.nbr == item) continue;  // target edge stays out
      s.edges.push_back({local, ws.item_local_[h.nbr], h.type});
    }
  }

  for (const auto& h : g.user_adj(user))
    if (h.nbr == item) {
      s.true_type = h.type;
      s.true_rating = g.scale().value_of(h.type);
      break;
    }
  return s;
}

// Independently drops each undirected edge with probability p; both message
// directions of an edge disappear together since edges are stored once.
inline EnclosingSubgraph dropout_edges(const EnclosingSubgraph& s, Real p, uint64_t seed) {
  if (p < Real(0) || p >= Real(1))
    throw ArgumentError("dropout_edges: p must be in [0,1), got " + std::to_string(p));
  EnclosingSubgraph out = s;
  if (p == Real(0)) return out;
  Rng rng(seed);
  out.edges.clear();
  for (const auto& e : s.edges)
    if (rng.next_unit() >= p) out.edges.push_back(e);
  return out;
}

// Model-ready form: one-hot label features (optionally extended with content
// columns) plus the surviving typed edge list.
struct FeaturizedSubgraph {
  Tensor x0;  // num_nodes x feature_dim
  std::vector<EnclosingSubgraph::Edge> edges;
  Real true_rating = std::numeric_limits<Real>::quiet_NaN();
  int true_type = -1;
  int target_user = 0;
  int target_item = 1;

  int num_nodes() const { return x0.rows(); }
};

// Content tables are global matrices indexed by side id; user rows get the
// user block, item rows the item block, the other side's block stays zero.
inline FeaturizedSubgraph featurize(const EnclosingSubgraph& s,
                                    const Tensor* user_content = nullptr,
                                    const Tensor* item_content = nullptr) {
  const int classes = s.num_label_classes();
  const int cu = user_content ? user_content->cols() : 0;
  const int ci = item_content ? item_content->cols() : 0;
  FeaturizedSubgraph f;
  f.x0 = Tensor::zeros(s.num_nodes(), classes + cu + ci);
  for (int i = 0; i < s.num_nodes(); ++i) {
    if (s.labels[i] < 0 || s.labels[i] >= classes)
      throw ArgumentError("featurize: label " + std::to_string(s.labels[i]) +
                          " outside one-hot range");
    f.x0.at(i, s.labels[i]) = Real(1);
    if (s.node_is_user[i] && cu > 0) {
      if (s.node_global[i] >= user_content->rows())
        throw DataError("featurize: no content row for user " + std::to_string(s.node_global[i]));
      for (int c = 0; c < cu; ++c) f.x0.at(i, classes + c) = user_content->at(s.node_global[i], c);
    }
    if (!s.node_is_user[i] && ci > 0) {
      if (s.node_global[i] >= item_content->rows())
        throw DataError("featurize: no content row for item " + std::to_string(s.node_global[i]));
      for (int c = 0; c < ci; ++c)
        f.x0.at(i, classes + cu + c) = item_content->at(s.node_global[i], c);
    }
  }
  f.edges = s.edges;
  f.true_rating = s.true_rating;
  f.true_type = s.true_type;
  return f;
}

}  // namespace igmc
