#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>
#include <tuple>

#include "igmc/subgraph.hpp"
#include "igmc/subgraph_io.hpp"

#include "oracles.hpp"

using namespace igmc;

namespace {

// Brute-force membership: nodes within h of either endpoint with the target
// edge removed, plus the endpoints themselves.
void check_against_oracle(const BipartiteGraph& g, const EnclosingSubgraph& s, int u, int v,
                          int hop) {
  auto [du, dv] = oracle::pair_distances(g, u, v);
  std::set<int> want_users, want_items;
  want_users.insert(u);
  want_items.insert(v);
  for (int w = 0; w < g.num_users(); ++w)
    if (du[w] >= 0 && du[w] <= hop) want_users.insert(w);
  for (int x = 0; x < g.num_items(); ++x)
    if (dv[x] >= 0 && dv[x] <= hop) want_items.insert(x);

  std::set<int> got_users, got_items;
  for (int i = 0; i < s.num_nodes(); ++i) {
    if (s.node_is_user[i]) {
      CHECK(s.node_hop[i] == du[s.node_global[i]]);
      got_users.insert(s.node_global[i]);
    } else {
      CHECK(s.node_hop[i] == dv[s.node_global[i]]);
      got_items.insert(s.node_global[i]);
    }
  }
  CHECK(got_users == want_users);
  CHECK(got_items == want_items);

  // edges: exactly the induced ones minus the target pair
  std::set<std::tuple<int, int, int>> got;
  for (const auto& e : s.edges) {
    CHECK(s.node_is_user[e.src]);
    CHECK_FALSE(s.node_is_user[e.dst]);
    got.insert({s.node_global[e.src], s.node_global[e.dst], e.type});
  }
  CHECK(got.size() == s.edges.size());  // no duplicates
  std::set<std::tuple<int, int, int>> want;
  for (const auto& e : g.edges()) {
    if (e.user == u && e.item == v) continue;
    if (want_users.count(e.user) && want_items.count(e.item))
      want.insert({e.user, e.item, e.type});
  }
  CHECK(got == want);
}

}  // namespace

TEST_CASE("extraction equals the BFS oracle on random graphs") {
  Rng rng(1234);
  int checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const int U = 3 + static_cast<int>(rng.next_below(20));
    const int I = 3 + static_cast<int>(rng.next_below(20));
    BipartiteGraph g = oracle::random_graph(rng, U, I, 3, 0.15);
    if (g.num_edges() == 0) continue;
    for (int hop : {1, 2}) {
      for (int k = 0; k < 4; ++k) {
        const int u = static_cast<int>(rng.next_below(U));
        const int v = static_cast<int>(rng.next_below(I));
        EnclosingSubgraph s = extract(g, u, v, {hop, 0}, rng.next_u64());
        check_against_oracle(g, s, u, v, hop);
        ++checked;
      }
    }
  }
  CHECK(checked >= 200);
}

TEST_CASE("subgraph node ordering is targets, then hop-grouped") {
  Rng rng(5);
  BipartiteGraph g = oracle::random_graph(rng, 15, 15, 3, 0.3);
  const auto& e = g.edges()[0];
  EnclosingSubgraph s = extract(g, e.user, e.item, {2, 0}, 1);

  REQUIRE(s.num_nodes() >= 2);
  CHECK(s.node_is_user[0]);
  CHECK(s.node_global[0] == e.user);
  CHECK(s.node_hop[0] == 0);
  CHECK_FALSE(s.node_is_user[1]);
  CHECK(s.node_global[1] == e.item);
  CHECK(s.node_hop[1] == 0);

  for (int i = 2; i + 1 < s.num_nodes(); ++i) {
    const auto key = [&](int k) {
      return std::tuple(s.node_hop[k], !s.node_is_user[k], s.node_global[k]);
    };
    CHECK(key(i) < key(i + 1));
  }
}

TEST_CASE("labels encode hop and side") {
  Rng rng(17);
  BipartiteGraph g = oracle::random_graph(rng, 12, 12, 2, 0.25);
  const auto& e = g.edges()[g.num_edges() / 3];
  EnclosingSubgraph s = extract(g, e.user, e.item, {2, 0}, 1);
  CHECK(s.labels[0] == 0);
  CHECK(s.labels[1] == 1);
  for (int i = 0; i < s.num_nodes(); ++i) {
    CHECK(s.labels[i] == 2 * s.node_hop[i] + (s.node_is_user[i] ? 0 : 1));
    CHECK(s.labels[i] < s.num_label_classes());
  }
  // relabeling is idempotent
  auto before = s.labels;
  label_nodes(s);
  CHECK(s.labels == before);
}

TEST_CASE("extraction records the observed rating and removes its edge") {
  Rng rng(8);
  BipartiteGraph g = oracle::random_graph(rng, 10, 10, 4, 0.3);
  const auto& e = g.edges()[1];
  EnclosingSubgraph s = extract(g, e.user, e.item, {1, 0}, 1);
  CHECK(s.observed());
  CHECK(s.true_type == e.type);
  CHECK(s.true_rating == g.scale().value_of(e.type));
  for (const auto& se : s.edges)
    CHECK_FALSE((s.node_global[se.src] == e.user && s.node_global[se.dst] == e.item));

  // unobserved pair
  int u = -1, v = -1;
  for (int a = 0; a < g.num_users() && u < 0; ++a)
    for (int b = 0; b < g.num_items(); ++b)
      if (!g.has_edge(a, b)) {
        u = a;
        v = b;
        break;
      }
  REQUIRE(u >= 0);
  EnclosingSubgraph s2 = extract(g, u, v, {1, 0}, 1);
  CHECK_FALSE(s2.observed());
  CHECK(std::isnan(s2.true_rating));
}

TEST_CASE("extraction is deterministic per seed") {
  Rng rng(77);
  BipartiteGraph g = oracle::random_graph(rng, 40, 40, 3, 0.3);
  const auto& e = g.edges()[5];
  EnclosingSubgraph a = extract(g, e.user, e.item, {1, 5}, 42);
  EnclosingSubgraph b = extract(g, e.user, e.item, {1, 5}, 42);
  CHECK(a.node_global == b.node_global);
  CHECK(a.node_hop == b.node_hop);
  CHECK(a.labels == b.labels);
  REQUIRE(a.edges.size() == b.edges.size());
  for (size_t i = 0; i < a.edges.size(); ++i) {
    CHECK(a.edges[i].src == b.edges[i].src);
    CHECK(a.edges[i].dst == b.edges[i].dst);
    CHECK(a.edges[i].type == b.edges[i].type);
  }
}

TEST_CASE("fringe cap bounds each hop and subsamples the full set") {
  Rng rng(31);
  BipartiteGraph g = oracle::random_graph(rng, 60, 60, 3, 0.4);
  const auto& e = g.edges()[0];
  const int cap = 7;
  EnclosingSubgraph s = extract(g, e.user, e.item, {1, cap}, 9);
  int hop_users = 0, hop_items = 0;
  for (int i = 0; i < s.num_nodes(); ++i) {
    if (s.node_hop[i] == 0) continue;
    (s.node_is_user[i] ? hop_users : hop_items)++;
  }
  CHECK(hop_users <= cap);
  CHECK(hop_items <= cap);

  // capped node set is a subset of the uncapped one
  EnclosingSubgraph full = extract(g, e.user, e.item, {1, 0}, 9);
  std::set<std::pair<bool, int>> full_nodes;
  for (int i = 0; i < full.num_nodes(); ++i)
    full_nodes.insert({static_cast<bool>(full.node_is_user[i]), full.node_global[i]});
  for (int i = 0; i < s.num_nodes(); ++i)
    CHECK(full_nodes.count({static_cast<bool>(s.node_is_user[i]), s.node_global[i]}) == 1);

  // different seeds pick different samples on a dense graph
  EnclosingSubgraph t = extract(g, e.user, e.item, {1, cap}, 10);
  CHECK(s.node_global != t.node_global);
}

TEST_CASE("extraction argument validation") {
  Rng rng(2);
  BipartiteGraph g = oracle::random_graph(rng, 5, 5, 2, 0.5);
  CHECK_THROWS_AS(extract(g, 0, 0, {0, 0}, 1), ArgumentError);
  CHECK_THROWS_AS(extract(g, -1, 0, {1, 0}, 1), ArgumentError);
  CHECK_THROWS_AS(extract(g, 0, 99, {1, 0}, 1), ArgumentError);
}

TEST_CASE("edge dropout removes a seeded subset") {
  Rng rng(41);
  BipartiteGraph g = oracle::random_graph(rng, 40, 40, 3, 0.5);
  const auto& e = g.edges()[0];
  EnclosingSubgraph s = extract(g, e.user, e.item, {1, 0}, 1);
  REQUIRE(s.edges.size() > 100);

  EnclosingSubgraph same = dropout_edges(s, 0.0, 3);
  CHECK(same.edges.size() == s.edges.size());

  EnclosingSubgraph d1 = dropout_edges(s, 0.3, 3);
  EnclosingSubgraph d2 = dropout_edges(s, 0.3, 3);
  REQUIRE(d1.edges.size() == d2.edges.size());
  for (size_t i = 0; i < d1.edges.size(); ++i) CHECK(d1.edges[i].src == d2.edges[i].src);
  CHECK(d1.num_nodes() == s.num_nodes());  // nodes untouched
  CHECK(d1.edges.size() < s.edges.size());
  const double frac = 1.0 - double(d1.edges.size()) / s.edges.size();
  CHECK(frac > 0.15);
  CHECK(frac < 0.45);

  std::set<std::tuple<int, int, int>> orig;
  for (const auto& ed : s.edges) orig.insert({ed.src, ed.dst, ed.type});
  for (const auto& ed : d1.edges) CHECK(orig.count({ed.src, ed.dst, ed.type}) == 1);

  CHECK_THROWS_AS(dropout_edges(s, 1.0, 1), ArgumentError);
  CHECK_THROWS_AS(dropout_edges(s, -0.5, 1), ArgumentError);
}

TEST_CASE("featurize builds one-hot rows plus optional content") {
  Rng rng(6);
  BipartiteGraph g = oracle::random_graph(rng, 10, 10, 3, 0.3);
  const auto& e = g.edges()[0];
  EnclosingSubgraph s = extract(g, e.user, e.item, {1, 0}, 1);

  FeaturizedSubgraph f = featurize(s);
  CHECK(f.x0.rows() == s.num_nodes());
  CHECK(f.x0.cols() == 4);  // 2h + 2
  for (int i = 0; i < s.num_nodes(); ++i) {
    for (int c = 0; c < 4; ++c)
      CHECK(f.x0.at(i, c) == (c == s.labels[i] ? 1.0 : 0.0));
  }
  CHECK(f.edges.size() == s.edges.size());
  CHECK(f.true_rating == s.true_rating);

  Tensor uc = Tensor::zeros(10, 2);
  Tensor ic = Tensor::zeros(10, 3);
  for (int i = 0; i < 10; ++i) {
    uc.at(i, 0) = 10 + i;
    uc.at(i, 1) = -i;
    for (int c = 0; c < 3; ++c) ic.at(i, c) = 100 * i + c;
  }
  FeaturizedSubgraph fc = featurize(s, &uc, &ic);
  CHECK(fc.x0.cols() == 4 + 2 + 3);
  for (int i = 0; i < s.num_nodes(); ++i) {
    if (s.node_is_user[i]) {
      CHECK(fc.x0.at(i, 4) == 10.0 + s.node_global[i]);
      CHECK(fc.x0.at(i, 6) == 0.0);  // item block zero for users
    } else {
      CHECK(fc.x0.at(i, 4) == 0.0);
      CHECK(fc.x0.at(i, 6) == 100.0 * s.node_global[i]);
    }
  }

  Tensor tiny = Tensor::zeros(1, 2);  // too few rows for the ids present
  CHECK_THROWS_AS(featurize(s, &tiny, nullptr), DataError);
}

TEST_CASE("subgraph json round-trip") {
  Rng rng(13);
  BipartiteGraph g = oracle::random_graph(rng, 12, 12, 4, 0.3);
  const auto& e = g.edges()[2];
  EnclosingSubgraph s = extract(g, e.user, e.item, {2, 0}, 1);

  nlohmann::json j = subgraph_to_json(s);
  EnclosingSubgraph back = subgraph_from_json(j);
  CHECK(back.hop == s.hop);
  CHECK(back.node_global == s.node_global);
  CHECK(back.node_hop == s.node_hop);
  CHECK(back.labels == s.labels);
  CHECK(back.node_is_user == s.node_is_user);
  REQUIRE(back.edges.size() == s.edges.size());
  for (size_t i = 0; i < s.edges.size(); ++i) {
    CHECK(back.edges[i].src == s.edges[i].src);
    CHECK(back.edges[i].dst == s.edges[i].dst);
    CHECK(back.edges[i].type == s.edges[i].type);
  }
  CHECK(back.true_rating == s.true_rating);

  // unobserved rating becomes null and comes back NaN
  EnclosingSubgraph s2 = s;
  s2.true_type = -1;
  s2.true_rating = std::numeric_limits<Real>::quiet_NaN();
  EnclosingSubgraph b2 = subgraph_from_json(subgraph_to_json(s2));
  CHECK_FALSE(b2.observed());
}

TEST_CASE("subgraph json validation rejects malformed input") {
  Rng rng(13);
  BipartiteGraph g = oracle::random_graph(rng, 8, 8, 2, 0.4);
  const auto& e = g.edges()[0];
  nlohmann::json good = subgraph_to_json(extract(g, e.user, e.item, {1, 0}, 1));

  auto broken = good;
  broken["target"] = {1, 0};
  CHECK_THROWS_AS(subgraph_from_json(broken), DataError);

  broken = good;
  broken["nodes"][0]["kind"] = "gadget";
  CHECK_THROWS_AS(subgraph_from_json(broken), DataError);

  broken = good;
  broken["nodes"][2]["label"] = 0;  // breaks label = 2*hop + side
  CHECK_THROWS_AS(subgraph_from_json(broken), DataError);

  broken = good;
  broken["edges"][0] = {0, 0, 0};  // item endpoint pointing at a user node
  CHECK_THROWS_AS(subgraph_from_json(broken), DataError);

  broken = good;
  broken.erase("hop");
  CHECK_THROWS_AS(subgraph_from_json(broken), DataError);
}

TEST_CASE("dot export mentions nodes, colors and the caption") {
  Rng rng(19);
  BipartiteGraph g = oracle::random_graph(rng, 8, 8, 3, 0.4);
  const auto& e = g.edges()[0];
  EnclosingSubgraph s = extract(g, e.user, e.item, {1, 0}, 1);
  const RatingScale& sc = g.scale();
  const std::string dot = subgraph_to_dot(s, &sc, 3.25);
  CHECK(dot.find("graph enclosing_subgraph") != std::string::npos);
  CHECK(dot.find("n0") != std::string::npos);
  CHECK(dot.find("peripheries=2") != std::string::npos);
  CHECK(dot.find("color=") != std::string::npos);
  CHECK(dot.find("pred=3.25") != std::string::npos);
  CHECK(dot.find("true=" + std::to_string(s.true_rating).substr(0, 1)) != std::string::npos);
}
