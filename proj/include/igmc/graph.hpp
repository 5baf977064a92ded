#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "igmc/common.hpp"

namespace igmc {

// The ordered set of distinct rating values; the type index of a value is its
// rank. Values come from training data only.
class RatingScale {
public:
  RatingScale() = default;

  // values must be strictly ascending.
  explicit RatingScale(std::vector<Real> values) : values_(std::move(values)) {
    for (size_t k = 1; k < values_.size(); ++k)
      if (!(values_[k - 1] < values_[k]))
        throw ArgumentError("rating scale must be strictly ascending");
  }

  static RatingScale from_observed(std::vector<Real> observed) {
    std::sort(observed.begin(), observed.end());
    observed.erase(std::unique(observed.begin(), observed.end()), observed.end());
    return RatingScale(std::move(observed));
  }

  int num_types() const { return static_cast<int>(values_.size()); }
  const std::vector<Real>& values() const { return values_; }
  Real value_of(int type) const { return values_.at(type); }
  Real min_value() const { return values_.front(); }
  Real max_value() const { return values_.back(); }

  std::optional<int> index_of(Real value) const {
    auto it = std::lower_bound(values_.begin(), values_.end(), value);
    if (it == values_.end() || *it != value) return std::nullopt;
    return static_cast<int>(it - values_.begin());
  }

  // Closest type for a value that may sit between observed ratings; ties go
  // to the lower type. Scale must be non-empty.
  int nearest_type(Real value) const {
    if (values_.empty()) throw ArgumentError("nearest_type on an empty scale");
    auto it = std::lower_bound(values_.begin(), values_.end(), value);
    if (it == values_.begin()) return 0;
    if (it == values_.end()) return num_types() - 1;
    const int hi = static_cast<int>(it - values_.begin());
    return (*it - value < value - values_[hi - 1]) ? hi : hi - 1;
  }

  bool operator==(const RatingScale& o) const { return values_ == o.values_; }

private:
  std::vector<Real> values_;
};

struct RatingTriple {
  int user = 0;
  int item = 0;
  Real value = 0;
  int type = 0;  // index into the owning scale
};

// Dense 0-based internal ids for an arbitrary external id space.
class IdMap {
public:
  int intern(int64_t external) {
    auto [it, inserted] = to_internal_.try_emplace(external, static_cast<int>(to_external_.size()));
    if (inserted) to_external_.push_back(external);
    return it->second;
  }

  std::optional<int> lookup(int64_t external) const {
    auto it = to_internal_.find(external);
    if (it == to_internal_.end()) return std::nullopt;
    return it->second;
  }

  int64_t external_of(int internal) const { return to_external_.at(internal); }
  int size() const { return static_cast<int>(to_external_.size()); }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write id map: " + path);
    for (size_t i = 0; i < to_external_.size(); ++i)
      out << to_external_[i] << '\t' << i << '\n';
  }

  static IdMap load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read id map: " + path);
    IdMap m;
    int64_t ext;
    int internal;
    while (in >> ext >> internal) {
      if (internal != m.size()) throw DataError("id map not densely ordered: " + path);
      m.intern(ext);
    }
    return m;
  }

private:
  std::unordered_map<int64_t, int> to_internal_;
  std::vector<int64_t> to_external_;
};

// Immutable bipartite rating graph. Edges are kept three ways: a canonical
// sorted edge list, a combined CSR per side carrying (neighbor, type) pairs,
// and per-type CSR neighbor lists. All neighbor lists are sorted ascending.
class BipartiteGraph {
public:
  struct Half {
    int nbr;   // neighbor id on the other side
    int type;  // rating type index
  };

  BipartiteGraph() = default;

  static BipartiteGraph build(std::vector<RatingTriple> triples, int num_users, int num_items,
                              RatingScale scale) {
    BipartiteGraph g;
    g.num_users_ = num_users;
    g.num_items_ = num_items;
    g.scale_ = std::move(scale);
    const int R = g.scale_.num_types();
    for (const auto& t : triples) {
      if (t.user < 0 || t.user >= num_users)
        throw ArgumentError("build_graph: user id " + std::to_string(t.user) + " out of range");
      if (t.item < 0 || t.item >= num_items)
        throw ArgumentError("build_graph: item id " + std::to_string(t.item) + " out of range");
      if (t.type < 0 || t.type >= R)
        throw ArgumentError("build_graph: rating type " + std::to_string(t.type) + " out of range");
    }
    std::sort(triples.begin(), triples.end(), [](const RatingTriple& a, const RatingTriple& b) {
      return a.user != b.user ? a.user < b.user : a.item < b.item;
    });
    for (size_t i = 1; i < triples.size(); ++i)
      if (triples[i].user == triples[i - 1].user && triples[i].item == triples[i - 1].item)
        throw DataError("duplicate edge (" + std::to_string(triples[i].user) + "," +
                        std::to_string(triples[i].item) + ")");
    g.edges_ = std::move(triples);
    g.build_indexes();
    return g;
  }

  int num_users() const { return num_users_; }
  int num_items() const { return num_items_; }
  size_t num_edges() const { return edges_.size(); }
  const RatingScale& scale() const { return scale_; }
  const std::vector<RatingTriple>& edges() const { return edges_; }

  // Combined adjacency (all types), sorted by neighbor id.
  std::span<const Half> user_adj(int u) const {
    return {user_halves_.data() + user_off_[u],
            static_cast<size_t>(user_off_[u + 1] - user_off_[u])};
  }
  std::span<const Half> item_adj(int v) const {
    return {item_halves_.data() + item_off_[v],
            static_cast<size_t>(item_off_[v + 1] - item_off_[v])};
  }

  // Per-type neighbor lists: items rated r by user u / users rating item v with r.
  std::span<const int> user_neighbors(int u, int r) const {
    const auto& off = type_user_off_[r];
    return {type_user_nbrs_[r].data() + off[u], static_cast<size_t>(off[u + 1] - off[u])};
  }
  std::span<const int> item_neighbors(int v, int r) const {
    const auto& off = type_item_off_[r];
    return {type_item_nbrs_[r].data() + off[v], static_cast<size_t>(off[v + 1] - off[v])};
  }

  int user_degree(int u) const { return user_off_[u + 1] - user_off_[u]; }
  int item_degree(int v) const { return item_off_[v + 1] - item_off_[v]; }

  bool has_edge(int u, int v) const {
    auto adj = user_adj(u);
    auto it = std::lower_bound(adj.begin(), adj.end(), v,
                               [](const Half& h, int x) { return h.nbr < x; });
    return it != adj.end() && it->nbr == v;
  }

  size_t edges_of_type(int r) const { return type_user_nbrs_[r].size(); }

  bool operator==(const BipartiteGraph& o) const {
    if (num_users_ != o.num_users_ || num_items_ != o.num_items_ || !(scale_ == o.scale_) ||
        edges_.size() != o.edges_.size())
      return false;
    for (size_t i = 0; i < edges_.size(); ++i) {
      const auto &a = edges_[i], &b = o.edges_[i];
      if (a.user != b.user || a.item != b.item || a.type != b.type || a.value != b.value)
        return false;
    }
    return true;
  }

private:
  void build_indexes() {
    const int R = scale_.num_types();
    user_off_.assign(num_users_ + 1, 0);
    item_off_.assign(num_items_ + 1, 0);
    for (const auto& e : edges_) {
      ++user_off_[e.user + 1];
      ++item_off_[e.item + 1];
    }
    for (int u = 0; u < num_users_; ++u) user_off_[u + 1] += user_off_[u];
    for (int v = 0; v < num_items_; ++v) item_off_[v + 1] += item_off_[v];
    user_halves_.resize(edges_.size());
    item_halves_.resize(edges_.size());
    {
      std::vector<int> uc(user_off_.begin(), user_off_.end() - 1);
      std::vector<int> ic(item_off_.begin(), item_off_.end() - 1);
      // edges_ sorted by (user, item) makes user_halves_ sorted per user;
      // item_halves_ ends up sorted per item because users are visited ascending.
      for (const auto& e : edges_) {
        user_halves_[uc[e.user]++] = {e.item, e.type};
        item_halves_[ic[e.item]++] = {e.user, e.type};
      }
    }
    type_user_off_.assign(R, {});
    type_item_off_.assign(R, {});
    type_user_nbrs_.assign(R, {});
    type_item_nbrs_.assign(R, {});
    for (int r = 0; r < R; ++r) {
      type_user_off_[r].assign(num_users_ + 1, 0);
      type_item_off_[r].assign(num_items_ + 1, 0);
    }
    for (const auto& e : edges_) {
      ++type_user_off_[e.type][e.user + 1];
      ++type_item_off_[e.type][e.item + 1];
    }
    for (int r = 0; r < R; ++r) {
      auto& uo = type_user_off_[r];
      auto& io = type_item_off_[r];
      for (int u = 0; u < num_users_; ++u) uo[u + 1] += uo[u];
      for (int v = 0; v < num_items_; ++v) io[v + 1] += io[v];
      type_user_nbrs_[r].resize(uo[num_users_]);
      type_item_nbrs_[r].resize(io[num_items_]);
    }
    {
      std::vector<std::vector<int>> uc(R), ic(R);
      for (int r = 0; r < R; ++r) {
        uc[r].assign(type_user_off_[r].begin(), type_user_off_[r].end() - 1);
        ic[r].assign(type_item_off_[r].begin(), type_item_off_[r].end() - 1);
      }
      for (const auto& e : edges_) {
        type_user_nbrs_[e.type][uc[e.type][e.user]++] = e.item;
        type_item_nbrs_[e.type][ic[e.type][e.item]++] = e.user;
      }
    }
  }

  int num_users_ = 0;
  int num_items_ = 0;
  RatingScale scale_;
  std::vector<RatingTriple> edges_;  // sorted by (user, item)
  std::vector<int> user_off_, item_off_;
  std::vector<Half> user_halves_, item_halves_;
  std::vector<std::vector<int>> type_user_off_, type_item_off_;
  std::vector<std::vector<int>> type_user_nbrs_, type_item_nbrs_;
};

// Read-only view of a graph with one (user, item) pair logically absent.
// The underlying graph is never modified; views are cheap to copy.
class GraphView {
public:
  explicit GraphView(const BipartiteGraph& g) : g_(&g) {}
  GraphView(const BipartiteGraph& g, int user, int item)
      : g_(&g), excl_user_(user), excl_item_(item) {}

  const BipartiteGraph& graph() const { return *g_; }
  bool excludes(int u, int v) const { return u == excl_user_ && v == excl_item_; }

  std::vector<int> user_neighbors(int u, int r) const {
    auto s = g_->user_neighbors(u, r);
    std::vector<int> out(s.begin(), s.end());
    if (u == excl_user_) std::erase(out, excl_item_);
    return out;
  }

  std::vector<int> item_neighbors(int v, int r) const {
    auto s = g_->item_neighbors(v, r);
    std::vector<int> out(s.begin(), s.end());
    if (v == excl_item_) std::erase(out, excl_user_);
    return out;
  }

  bool has_edge(int u, int v) const {
    if (excludes(u, v)) return false;
    return g_->has_edge(u, v);
  }

private:
  const BipartiteGraph* g_;
  int excl_user_ = -1;
  int excl_item_ = -1;
};

inline GraphView remove_edge(const BipartiteGraph& g, int user, int item) {
  return GraphView(g, user, item);
}

// Deterministic exact-count edge subsampling: seeded shuffle, then the first
// ceil(keep_fraction * |E|) edges.
inline BipartiteGraph sparsify(const BipartiteGraph& g, Real keep_fraction, uint64_t seed) {
  if (!(keep_fraction > Real(0)) || keep_fraction > Real(1))
    throw ArgumentError("sparsify: keep_fraction must be in (0,1], got " +
                        std::to_string(keep_fraction));
  if (g.num_edges() == 0) throw ArgumentError("sparsify: empty graph");
  std::vector<RatingTriple> kept = g.edges();
  Rng rng(seed);
  rng.shuffle(kept);
  const size_t n = static_cast<size_t>(
      std::min<long double>(static_cast<long double>(kept.size()),
                            std::ceil(static_cast<long double>(keep_fraction) * kept.size())));
  kept.resize(n);
  return BipartiteGraph::build(std::move(kept), g.num_users(), g.num_items(), g.scale());
}

enum class RatingFormat { Tsv3, Tsv4 };

struct LoadedRatings {
  std::vector<RatingTriple> triples;  // internal ids, file order
  RatingScale scale;                  // distinct values observed in this file
};

// Peeks at the first data line to pick a column count.
inline RatingFormat detect_rating_format(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tok;
    int n = 0;
    while (ss >> tok) ++n;
    if (n == 0) continue;
    if (n == 3) return RatingFormat::Tsv3;
    if (n == 4) return RatingFormat::Tsv4;
    throw DataError(path + ": expected 3 or 4 columns, found " + std::to_string(n));
  }
  throw DataError("empty dataset: " + path);
}

// Loads whitespace/tab separated ratings, compacting external ids through the
// given maps (which may already hold ids from other files of the same split).
inline LoadedRatings load_ratings(const std::string& path, RatingFormat format, IdMap& users,
                                  IdMap& items) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  const int want_cols = format == RatingFormat::Tsv3 ? 3 : 4;

  LoadedRatings out;
  std::vector<Real> values;
  std::unordered_set<int64_t> seen_pairs;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::vector<std::string> tok;
    std::string t;
    while (ss >> t) tok.push_back(t);
    if (tok.empty()) continue;
    if (static_cast<int>(tok.size()) != want_cols)
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(want_cols) + " columns, found " +
                      std::to_string(tok.size()));
    int64_t eu, ev;
    Real r;
    try {
      size_t pos = 0;
      eu = std::stoll(tok[0], &pos);
      if (pos != tok[0].size()) throw std::invalid_argument(tok[0]);
      ev = std::stoll(tok[1], &pos);
      if (pos != tok[1].size()) throw std::invalid_argument(tok[1]);
      r = std::stod(tok[2], &pos);
      if (pos != tok[2].size()) throw std::invalid_argument(tok[2]);
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed record '" + line + "'");
    }
    if (eu <= 0 || ev <= 0)
      throw DataError(path + ":" + std::to_string(line_no) + ": ids must be positive integers");
    const int u = users.intern(eu);
    const int v = items.intern(ev);
    const int64_t key = static_cast<int64_t>(u) * (int64_t(1) << 32) + v;
    if (!seen_pairs.insert(key).second)
      throw DataError(path + ":" + std::to_string(line_no) + ": duplicate (user,item) pair (" +
                      std::to_string(eu) + "," + std::to_string(ev) + ")");
    out.triples.push_back({u, v, r, -1});
    values.push_back(r);
  }
  if (out.triples.empty()) throw DataError("empty dataset: " + path);
  out.scale = RatingScale::from_observed(std::move(values));
  for (auto& t : out.triples) t.type = *out.scale.index_of(t.value);
  return out;
}

// Re-resolves type indices against a (training) scale; values outside the
// scale are collected and reported together.
inline void assign_types(std::vector<RatingTriple>& triples, const RatingScale& scale) {
  std::vector<Real> offenders;
  for (auto& t : triples) {
    auto idx = scale.index_of(t.value);
    if (!idx) {
      if (std::find(offenders.begin(), offenders.end(), t.value) == offenders.end())
        offenders.push_back(t.value);
      continue;
    }
    t.type = *idx;
  }
  if (!offenders.empty()) {
    std::ostringstream msg;
    msg << "rating values outside the training scale:";
    for (Real v : offenders) msg << ' ' << v;
    throw DataError(msg.str());
  }
}

// Canonical TSV export, internal ids, sorted by (user, item).
inline void write_edge_list(const BipartiteGraph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& e : g.edges()) out << e.user << '\t' << e.item << '\t' << e.value << '\n';
}

}  // namespace igmc
