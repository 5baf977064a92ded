#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "igmc/common.hpp"
#include "igmc/subgraph.hpp"
#include "igmc/tensor.hpp"

namespace igmc {

enum class Pooling { TargetConcat, Sum };

struct ModelConfig {
  int num_rating_types = 5;
  int hop = 1;
  std::vector<int> layer_dims = {32, 32, 32, 32};
  int num_bases = 4;
  int mlp_hidden = 128;
  Real mlp_dropout = 0.5;
  Pooling pooling = Pooling::TargetConcat;
  int content_dim = 0;  // extra feature columns appended after the one-hots
  bool concat_pre_activation = false;

  int input_dim() const { return 2 * hop + 2 + content_dim; }
  int concat_dim() const { return std::accumulate(layer_dims.begin(), layer_dims.end(), 0); }
  int pooled_dim() const {
    return pooling == Pooling::TargetConcat ? 2 * concat_dim() : concat_dim();
  }

  void validate() const {
    if (num_rating_types < 1) throw ArgumentError("model: need at least one rating type");
    if (hop < 1) throw ArgumentError("model: hop must be >= 1");
    if (layer_dims.empty()) throw ArgumentError("model: need at least one layer");
    for (int d : layer_dims)
      if (d < 1) throw ArgumentError("model: layer dims must be positive");
    if (num_bases < 1) throw ArgumentError("model: num_bases must be >= 1");
    if (mlp_hidden < 1) throw ArgumentError("model: mlp_hidden must be >= 1");
    if (mlp_dropout < Real(0) || mlp_dropout >= Real(1))
      throw ArgumentError("model: mlp_dropout must be in [0,1)");
    if (content_dim < 0) throw ArgumentError("model: content_dim must be >= 0");
  }

  bool operator==(const ModelConfig& o) const {
    return num_rating_types == o.num_rating_types && hop == o.hop && layer_dims == o.layer_dims &&
           num_bases == o.num_bases && mlp_hidden == o.mlp_hidden &&
           mlp_dropout == o.mlp_dropout && pooling == o.pooling && content_dim == o.content_dim &&
           concat_pre_activation == o.concat_pre_activation;
  }
};

// Per-layer relational weights. Relation matrices are never stored directly:
// W_r = sum_b coeff[r][b] * basis[b], with each basis matrix flattened to one
// row of `basis`, so the stack of all W_r is just coeff x basis.
struct LayerParams {
  Tensor w_self;  // d_in x d_out
  Tensor basis;   // num_bases x (d_in * d_out)
  Tensor coeff;   // num_rating_types x num_bases
};

struct ModelParams {
  ModelConfig config;
  std::vector<LayerParams> layers;
  Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;

  std::vector<std::pair<std::string, Tensor>> named_tensors() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (size_t l = 0; l < layers.size(); ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      out.emplace_back(p + "w_self", layers[l].w_self);
      out.emplace_back(p + "basis", layers[l].basis);
      out.emplace_back(p + "coeff", layers[l].coeff);
    }
    out.emplace_back("mlp.w1", mlp_w1);
    out.emplace_back("mlp.b1", mlp_b1);
    out.emplace_back("mlp.w2", mlp_w2);
    out.emplace_back("mlp.b2", mlp_b2);
    return out;
  }
};

// Glorot-uniform init, bound sqrt(6 / (rows + cols)) of the stored matrix;
// biases start at zero. Draws happen in named_tensors() order from one stream,
// so a seed pins every weight.
inline ModelParams init_params(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  ModelParams p;
  p.config = cfg;
  auto glorot = [](int rows, int cols) { return Tensor::zeros(rows, cols, true); };
  int din = cfg.input_dim();
  for (int dout : cfg.layer_dims) {
    LayerParams lp;
    lp.w_self = glorot(din, dout);
    lp.basis = glorot(cfg.num_bases, din * dout);
    lp.coeff = glorot(cfg.num_rating_types, cfg.num_bases);
    p.layers.push_back(lp);
    din = dout;
  }
  p.mlp_w1 = glorot(cfg.pooled_dim(), cfg.mlp_hidden);
  p.mlp_b1 = Tensor::zeros(1, cfg.mlp_hidden, true);
  p.mlp_w2 = glorot(cfg.mlp_hidden, 1);
  p.mlp_b2 = Tensor::zeros(1, 1, true);

  Rng rng(seed);
  for (auto& [name, t] : p.named_tensors()) {
    if (name == "mlp.b1" || name == "mlp.b2") continue;
    const Real a = std::sqrt(Real(6) / (t.rows() + t.cols()));
    for (Real& v : t.values()) v = rng.next_uniform(-a, a);
  }
  return p;
}

// A disjoint union of featurized subgraphs, with message lists grouped by
// (direction, rating type). Within a group, edges are sorted by receiver and
// receivers are compacted to segments, so one gather + one weighted
// scatter-add computes every receiver's neighbor mean at once.
struct SubgraphBatch {
  struct Seg {
    std::vector<int> src_rows;       // sender batch row per edge
    std::vector<int> seg_of_edge;    // compacted receiver segment per edge
    std::vector<Real> edge_weight;   // 1 / receiver's typed degree
    std::vector<int> receiver_rows;  // batch row per segment
  };

  Tensor x0;
  std::vector<int> graph_of_node;
  std::vector<int> target_user_rows, target_item_rows;  // one per graph
  std::vector<Seg> segs;                                // [dir * R + r]; dir 0: item->user
  std::vector<Real> true_ratings;                       // NaN where unobserved
  int num_graphs = 0;
  int num_nodes = 0;
};

inline SubgraphBatch make_batch(std::span<const FeaturizedSubgraph> graphs,
                                const ModelConfig& cfg) {
  if (graphs.empty()) throw ArgumentError("make_batch: empty batch");
  const int R = cfg.num_rating_types;
  SubgraphBatch b;
  b.num_graphs = static_cast<int>(graphs.size());
  b.segs.resize(2 * R);

  int total = 0;
  for (const auto& g : graphs) {
    if (g.x0.cols() != cfg.input_dim())
      throw ArgumentError("make_batch: feature width " + std::to_string(g.x0.cols()) +
                          " does not match model input dim " + std::to_string(cfg.input_dim()));
    total += g.num_nodes();
  }
  b.num_nodes = total;
  b.x0 = Tensor::zeros(total, cfg.input_dim());

  // (receiver, sender) pairs per direction/type, later sorted for segmenting
  std::vector<std::vector<std::pair<int, int>>> pairs(2 * R);
  int offset = 0;
  for (int gi = 0; gi < b.num_graphs; ++gi) {
    const auto& g = graphs[gi];
    for (int i = 0; i < g.num_nodes(); ++i) {
      b.graph_of_node.push_back(gi);
      for (int c = 0; c < g.x0.cols(); ++c) b.x0.at(offset + i, c) = g.x0.at(i, c);
    }
    b.target_user_rows.push_back(offset + g.target_user);
    b.target_item_rows.push_back(offset + g.target_item);
    b.true_ratings.push_back(g.true_rating);
    for (const auto& e : g.edges) {
      if (e.type < 0 || e.type >= R)
        throw ArgumentError("make_batch: edge type " + std::to_string(e.type) +
                            " outside model's rating types");
      pairs[e.type].emplace_back(offset + e.src, offset + e.dst);      // user receives
      pairs[R + e.type].emplace_back(offset + e.dst, offset + e.src);  // item receives
    }
    offset += g.num_nodes();
  }

  for (int k = 0; k < 2 * R; ++k) {
    auto& pr = pairs[k];
    std::sort(pr.begin(), pr.end());
    auto& seg = b.segs[k];
    for (size_t e = 0; e < pr.size(); ++e) {
      if (e == 0 || pr[e].first != pr[e - 1].first) seg.receiver_rows.push_back(pr[e].first);
      seg.src_rows.push_back(pr[e].second);
      seg.seg_of_edge.push_back(static_cast<int>(seg.receiver_rows.size()) - 1);
    }
    // typed degree of each receiver = its segment's edge count
    std::vector<int> deg(seg.receiver_rows.size(), 0);
    for (int s : seg.seg_of_edge) ++deg[s];
    seg.edge_weight.reserve(seg.src_rows.size());
    for (int s : seg.seg_of_edge) seg.edge_weight.push_back(Real(1) / deg[s]);
  }
  return b;
}

struct ForwardResult {
  Tensor pred;                 // num_graphs x 1
  std::vector<Tensor> w_all;   // per layer: R x (d_in * d_out), for regularizers
};

// One R-GCN layer: out = x W_self + sum over (direction, type) of the
// scattered neighbor means times W_r. Aggregating before the W_r product is
// the linearity rewrite of the per-edge form and keeps the per-layer cost at
// O(|E| d + active d^2) instead of O(|E| d^2). The per-segment results are
// stacked and placed with a single scatter so only one node-sized tensor is
// built per layer.
inline Tensor rgcn_layer(Tape& tape, const Tensor& x, const LayerParams& lp, const Tensor& w_all,
                         const SubgraphBatch& batch, int num_rating_types, int num_nodes) {
  const int din = x.cols();
  const int dout = lp.w_self.cols();
  std::vector<Tensor> contribs;
  std::vector<int> placement;
  for (int k = 0; k < 2 * num_rating_types; ++k) {
    const auto& seg = batch.segs[k];
    if (seg.src_rows.empty()) continue;
    const int r = k % num_rating_types;
    Tensor agg = tape.gather_scatter_add(x, seg.src_rows, seg.seg_of_edge,
                                         static_cast<int>(seg.receiver_rows.size()),
                                         seg.edge_weight);
    Tensor w_r = tape.reshape(tape.row_gather(w_all, {r}), din, dout);
    contribs.push_back(tape.matmul(agg, w_r));
    placement.insert(placement.end(), seg.receiver_rows.begin(), seg.receiver_rows.end());
  }
  Tensor out = tape.matmul(x, lp.w_self);
  if (contribs.empty()) return out;
  Tensor stacked = contribs.size() == 1 ? contribs[0] : tape.concat(contribs, 0);
  return tape.add(out, tape.row_scatter_add(stacked, std::move(placement), num_nodes));
}

inline ForwardResult forward(Tape& tape, const ModelParams& params, const SubgraphBatch& batch,
                             bool training, uint64_t dropout_seed) {
  const ModelConfig& cfg = params.config;
  if (batch.x0.cols() != cfg.input_dim())
    throw ArgumentError("forward: batch feature width does not match model");

  ForwardResult res;
  Tensor x = batch.x0;
  std::vector<Tensor> states;
  for (size_t l = 0; l < params.layers.size(); ++l) {
    const auto& lp = params.layers[l];
    Tensor w_all = tape.matmul(lp.coeff, lp.basis);
    res.w_all.push_back(w_all);
    Tensor pre = rgcn_layer(tape, x, lp, w_all, batch, cfg.num_rating_types, batch.num_nodes);
    Tensor post = tape.tanh(pre);
    states.push_back(cfg.concat_pre_activation ? pre : post);
    x = post;
  }
  Tensor h = states.size() == 1 ? states[0] : tape.concat(states, 1);

  Tensor pooled;
  if (cfg.pooling == Pooling::TargetConcat) {
    Tensor hu = tape.row_gather(h, batch.target_user_rows);
    Tensor hv = tape.row_gather(h, batch.target_item_rows);
    pooled = tape.concat({hu, hv}, 1);
  } else {
    pooled = tape.row_scatter_add(h, batch.graph_of_node, batch.num_graphs);
  }

  Tensor z = tape.relu(tape.add_rowvec(tape.matmul(pooled, params.mlp_w1), params.mlp_b1));
  z = tape.dropout(z, cfg.mlp_dropout, dropout_seed, training);
  res.pred = tape.add_rowvec(tape.matmul(z, params.mlp_w2), params.mlp_b2);
  return res;
}

}  // namespace igmc
