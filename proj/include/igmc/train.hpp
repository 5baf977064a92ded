#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "igmc/checkpoint.hpp"
#include "igmc/common.hpp"
#include "igmc/graph.hpp"
#include "igmc/model.hpp"
#include "igmc/optim.hpp"
#include "igmc/subgraph.hpp"
#include "igmc/tensor.hpp"

namespace igmc {

struct TrainConfig {
  int epochs = 80;
  int batch_size = 50;
  Real lr = 1e-3;
  Real lr_decay_factor = 0.1;
  int lr_decay_every = 50;  // epochs between decays
  Real arr_lambda = 1e-3;   // adjacent rating regularizer weight
  Real edge_dropout = 0.2;
  int max_nodes_per_hop = 200;
  uint64_t seed = 1;
  std::vector<int> checkpoint_epochs;  // snapshot points; empty = final epoch only

  void validate() const {
    if (epochs < 1) throw ArgumentError("train: epochs must be >= 1");
    if (batch_size < 1) throw ArgumentError("train: batch_size must be >= 1");
    if (!(lr > Real(0))) throw ArgumentError("train: lr must be positive");
    if (!(lr_decay_factor > Real(0)) || lr_decay_factor > Real(1))
      throw ArgumentError("train: lr_decay_factor must be in (0,1]");
    if (lr_decay_every < 1) throw ArgumentError("train: lr_decay_every must be >= 1");
    if (arr_lambda < Real(0)) throw ArgumentError("train: arr_lambda must be >= 0");
    if (edge_dropout < Real(0) || edge_dropout >= Real(1))
      throw ArgumentError("train: edge_dropout must be in [0,1)");
    for (int e : checkpoint_epochs)
      if (e < 1 || e > epochs)
        throw ArgumentError("train: checkpoint epoch " + std::to_string(e) +
                            " outside 1.." + std::to_string(epochs));
  }

  bool operator==(const TrainConfig&) const = default;
};

// Mean squared error over the batch.
inline Tensor mse_loss(Tape& tape, const Tensor& pred, const Tensor& target) {
  if (pred.rows() != target.rows() || pred.cols() != 1 || target.cols() != 1)
    throw ArgumentError("mse_loss: expected matching column vectors");
  Tensor diff = tape.sub(pred, target);
  return tape.scale(tape.frobenius_sq(diff), Real(1) / pred.rows());
}

// Adjacent rating regularizer: for every layer, the summed squared Frobenius
// distance between the weight matrices of neighboring rating types. Rows of
// each R x (d_in*d_out) stack are the flattened W_r in rating order, so the
// row differences are exactly W_{r+1} - W_r.
inline Tensor arr_loss(Tape& tape, const std::vector<Tensor>& w_all_per_layer) {
  Tensor total = Tensor::scalar(0);
  bool any = false;
  for (const Tensor& w_all : w_all_per_layer) {
    const int R = w_all.rows();
    if (R < 2) continue;
    std::vector<int> hi(R - 1), lo(R - 1);
    for (int i = 0; i < R - 1; ++i) {
      lo[i] = i;
      hi[i] = i + 1;
    }
    Tensor diff = tape.sub(tape.row_gather(w_all, hi), tape.row_gather(w_all, lo));
    Tensor term = tape.frobenius_sq(diff);
    total = any ? tape.add(total, term) : term;
    any = true;
  }
  return total;
}

struct TrainReport {
  struct EpochStats {
    int epoch = 0;
    Real lr = 0;
    Real loss = 0;  // mse + lambda * arr, averaged over examples
    Real mse = 0;
    Real arr = 0;
    double seconds = 0;
  };
  std::vector<EpochStats> epochs;
  std::vector<std::string> checkpoint_paths;
};

struct TrainResult {
  ModelParams params;  // final weights
  AdamState opt;
  TrainReport report;
  std::vector<std::pair<int, ModelParams>> snapshots;  // (epoch, deep copy)
};

inline ModelParams clone_params(const ModelParams& src) {
  ModelParams dst;
  dst.config = src.config;
  auto copy = [](const Tensor& t) {
    return Tensor::from_rows(t.rows(), t.cols(), t.values(), true);
  };
  for (const auto& lp : src.layers)
    dst.layers.push_back({copy(lp.w_self), copy(lp.basis), copy(lp.coeff)});
  dst.mlp_w1 = copy(src.mlp_w1);
  dst.mlp_b1 = copy(src.mlp_b1);
  dst.mlp_w2 = copy(src.mlp_w2);
  dst.mlp_b2 = copy(src.mlp_b2);
  return dst;
}

// Full training loop. Every epoch re-shuffles the observed edges, re-extracts
// each pair's subgraph (re-sampling capped fringes) and re-rolls edge dropout,
// all from seeds mixed out of (seed, epoch, pair), so a run is reproducible
// end to end. Snapshots are taken at the configured epochs for ensembling;
// with a non-empty `checkpoint_prefix` they are also written to disk.
inline TrainResult train(const BipartiteGraph& graph, const ModelConfig& mcfg,
                         const TrainConfig& tcfg, const std::string& checkpoint_prefix = "",
                         const Tensor* user_content = nullptr,
                         const Tensor* item_content = nullptr, std::ostream* log = nullptr) {
  mcfg.validate();
  tcfg.validate();
  if (graph.num_edges() == 0) throw ArgumentError("train: graph has no edges");
  if (graph.scale().num_types() != mcfg.num_rating_types)
    throw ArgumentError("train: model expects " + std::to_string(mcfg.num_rating_types) +
                        " rating types, graph has " + std::to_string(graph.scale().num_types()));
  const int content_cols =
      (user_content ? user_content->cols() : 0) + (item_content ? item_content->cols() : 0);
  if (content_cols != mcfg.content_dim)
    throw ArgumentError("train: content tables provide " + std::to_string(content_cols) +
                        " columns, model expects " + std::to_string(mcfg.content_dim));

  const ExtractConfig ecfg{mcfg.hop, tcfg.max_nodes_per_hop};
  std::vector<int> ckpt_epochs = tcfg.checkpoint_epochs;
  if (ckpt_epochs.empty()) ckpt_epochs.push_back(tcfg.epochs);

  TrainResult res;
  res.params = init_params(mcfg, mix_seed(tcfg.seed, 0x1217));
  auto named = res.params.named_tensors();
  ExtractScratch scratch;

  std::vector<size_t> order(graph.num_edges());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto& edges = graph.edges();

  for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const uint64_t es = mix_seed(tcfg.seed, 0xE90C, static_cast<uint64_t>(epoch));
    const Real lr =
        tcfg.lr * std::pow(tcfg.lr_decay_factor, (epoch - 1) / tcfg.lr_decay_every);
    Rng(mix_seed(es, 0x5F)).shuffle(order);

    Real sum_mse = 0, sum_arr = 0;
    size_t done = 0;
    for (size_t start = 0; start < order.size(); start += tcfg.batch_size) {
      const size_t stop = std::min(order.size(), start + tcfg.batch_size);
      std::vector<FeaturizedSubgraph> feats;
      feats.reserve(stop - start);
      for (size_t i = start; i < stop; ++i) {
        const auto& e = edges[order[i]];
        const uint64_t ps = mix_seed(es, static_cast<uint64_t>(e.user),
                                     static_cast<uint64_t>(e.item));
        EnclosingSubgraph sub = extract(graph, e.user, e.item, ecfg, ps, &scratch);
        if (tcfg.edge_dropout > Real(0))
          sub = dropout_edges(sub, tcfg.edge_dropout, mix_seed(ps, 0xED));
        feats.push_back(featurize(sub, user_content, item_content));
      }
      SubgraphBatch batch = make_batch(feats, mcfg);
      std::vector<Real> targets = batch.true_ratings;
      for (Real t : targets)
        if (std::isnan(t)) throw DataError("train: unlabeled pair in training batch");

      Tape tape;
      ForwardResult fr = forward(tape, res.params, batch, true,
                                 mix_seed(es, 0xD0D0, start / tcfg.batch_size));
      Tensor target = Tensor::from_rows(batch.num_graphs, 1, targets);
      Tensor mse = mse_loss(tape, fr.pred, target);
      Tensor loss = mse;
      Tensor arr;
      if (tcfg.arr_lambda > Real(0)) {
        arr = arr_loss(tape, fr.w_all);
        loss = tape.add(loss, tape.scale(arr, tcfg.arr_lambda));
      }
      const Real mse_v = mse.item();
      const Real arr_v = arr.defined() ? arr.item() : Real(0);
      if (!std::isfinite(loss.item())) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", batch " << start / tcfg.batch_size
            << " (mse=" << mse_v << ", arr=" << arr_v << ", lr=" << lr << "; pairs";
        for (size_t i = start; i < std::min(stop, start + 5); ++i)
          msg << ' ' << edges[order[i]].user << ':' << edges[order[i]].item;
        msg << ")";
        throw NumericalError(msg.str());
      }
      tape.backward(loss);
      adam_step(named, res.opt, lr);

      sum_mse += mse_v * batch.num_graphs;
      sum_arr += arr_v * batch.num_graphs;
      done += batch.num_graphs;
    }

    TrainReport::EpochStats st;
    st.epoch = epoch;
    st.lr = lr;
    st.mse = sum_mse / done;
    st.arr = sum_arr / done;
    st.loss = st.mse + tcfg.arr_lambda * st.arr;
    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.report.epochs.push_back(st);
    if (log)
      *log << "[epoch " << epoch << "/" << tcfg.epochs << "] loss=" << std::setprecision(6)
           << st.loss << " mse=" << st.mse << " arr=" << st.arr << " lr=" << lr << " ("
           << std::setprecision(3) << st.seconds << "s)" << std::endl;

    if (std::find(ckpt_epochs.begin(), ckpt_epochs.end(), epoch) != ckpt_epochs.end()) {
      res.snapshots.emplace_back(epoch, clone_params(res.params));
      if (!checkpoint_prefix.empty()) {
        const std::string path = checkpoint_prefix + "_epoch" + std::to_string(epoch) + ".ckpt";
        save_checkpoint(path, res.params, ecfg, graph.scale(), epoch, &res.opt);
        res.report.checkpoint_paths.push_back(path);
      }
    }
  }
  return res;
}

struct PredictOptions {
  int batch_size = 50;
  bool clip = true;  // clamp predictions to the rating scale's range
  uint64_t seed = 0x91D1C75ULL;
  const Tensor* user_content = nullptr;
  const Tensor* item_content = nullptr;
};

// Ensemble prediction: the mean of every model's output for each pair.
// Extraction is seeded only by (seed, user, item), so repeated calls with the
// same inputs reproduce identical values.
inline std::vector<Real> predict(const std::vector<ModelParams>& models, const RatingScale& scale,
                                 const ExtractConfig& extract_cfg, const BipartiteGraph& graph,
                                 std::span<const std::pair<int, int>> pairs,
                                 const PredictOptions& opts = {}) {
  if (models.empty()) throw ArgumentError("predict: no models given");
  for (const auto& m : models)
    if (!(m.config == models.front().config))
      throw ArgumentError("predict: ensemble members disagree on model config");
  if (models.front().config.num_rating_types != scale.num_types())
    throw ArgumentError("predict: rating scale size does not match model");
  const int content_cols = (opts.user_content ? opts.user_content->cols() : 0) +
                           (opts.item_content ? opts.item_content->cols() : 0);
  if (content_cols != models.front().config.content_dim)
    throw ArgumentError("predict: content tables do not match model's content_dim");

  std::vector<Real> out;
  out.reserve(pairs.size());
  ExtractScratch scratch;
  for (size_t start = 0; start < pairs.size(); start += opts.batch_size) {
    const size_t stop = std::min(pairs.size(), start + opts.batch_size);
    std::vector<FeaturizedSubgraph> feats;
    feats.reserve(stop - start);
    for (size_t i = start; i < stop; ++i) {
      const auto& [u, v] = pairs[i];
      const uint64_t ps =
          mix_seed(opts.seed, static_cast<uint64_t>(u), static_cast<uint64_t>(v));
      feats.push_back(featurize(extract(graph, u, v, extract_cfg, ps, &scratch),
                                opts.user_content, opts.item_content));
    }
    SubgraphBatch batch = make_batch(feats, models.front().config);
    // running mean, not sum-then-divide: an ensemble of identical members must
    // reproduce the single model bit for bit, and here the increment for a
    // repeated member is exactly zero ((p+p+p)/3 would round twice instead)
    std::vector<Real> mean(batch.num_graphs, 0);
    for (size_t mi = 0; mi < models.size(); ++mi) {
      Tape tape(false);
      ForwardResult fr = forward(tape, models[mi], batch, false, 0);
      for (int g = 0; g < batch.num_graphs; ++g)
        mean[g] += (fr.pred.at(g, 0) - mean[g]) / Real(mi + 1);
    }
    for (int g = 0; g < batch.num_graphs; ++g) {
      Real p = mean[g];
      if (!std::isfinite(p))
        throw NumericalError("predict: non-finite prediction for pair " +
                             std::to_string(pairs[start + g].first) + ":" +
                             std::to_string(pairs[start + g].second));
      if (opts.clip) p = std::clamp(p, scale.min_value(), scale.max_value());
      out.push_back(p);
    }
  }
  return out;
}

// --- config text round-trip (key=value lines, '#' comments) ---

namespace cfg_detail {

inline std::string real_str(Real v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

inline int to_int(const std::string& key, const std::string& s) {
  try {
    size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ArgumentError("config: bad integer for " + key + ": '" + s + "'");
  }
}

inline Real to_real(const std::string& key, const std::string& s) {
  try {
    size_t pos = 0;
    const Real v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ArgumentError("config: bad number for " + key + ": '" + s + "'");
  }
}

inline std::vector<int> to_int_list(const std::string& key, const std::string& s) {
  std::vector<int> out;
  if (s.empty()) return out;
  std::istringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(to_int(key, tok));
  return out;
}

inline std::string int_list_str(const std::vector<int>& v) {
  std::ostringstream ss;
  for (size_t i = 0; i < v.size(); ++i) ss << (i ? "," : "") << v[i];
  return ss.str();
}

}  // namespace cfg_detail

inline std::string serialize_config(const ModelConfig& m, const TrainConfig& t) {
  using cfg_detail::int_list_str;
  using cfg_detail::real_str;
  std::ostringstream out;
  out << "hop=" << m.hop << '\n';
  out << "num_rating_types=" << m.num_rating_types << '\n';
  out << "content_dim=" << m.content_dim << '\n';
  out << "layer_dims=" << int_list_str(m.layer_dims) << '\n';
  out << "num_bases=" << m.num_bases << '\n';
  out << "mlp_hidden=" << m.mlp_hidden << '\n';
  out << "mlp_dropout=" << real_str(m.mlp_dropout) << '\n';
  out << "pooling=" << (m.pooling == Pooling::TargetConcat ? "target_concat" : "sum") << '\n';
  out << "concat_pre_activation=" << (m.concat_pre_activation ? 1 : 0) << '\n';
  out << "epochs=" << t.epochs << '\n';
  out << "batch_size=" << t.batch_size << '\n';
  out << "lr=" << real_str(t.lr) << '\n';
  out << "lr_decay_factor=" << real_str(t.lr_decay_factor) << '\n';
  out << "lr_decay_every=" << t.lr_decay_every << '\n';
  out << "arr_lambda=" << real_str(t.arr_lambda) << '\n';
  out << "edge_dropout=" << real_str(t.edge_dropout) << '\n';
  out << "max_nodes_per_hop=" << t.max_nodes_per_hop << '\n';
  out << "seed=" << t.seed << '\n';
  out << "checkpoint_epochs=" << int_list_str(t.checkpoint_epochs) << '\n';
  return out.str();
}

inline void apply_config_kv(ModelConfig& m, TrainConfig& t, const std::string& key,
                            const std::string& value) {
  using namespace cfg_detail;
  if (key == "hop")
    m.hop = to_int(key, value);
  else if (key == "num_rating_types")
    m.num_rating_types = to_int(key, value);
  else if (key == "content_dim")
    m.content_dim = to_int(key, value);
  else if (key == "layer_dims")
    m.layer_dims = to_int_list(key, value);
  else if (key == "num_bases")
    m.num_bases = to_int(key, value);
  else if (key == "mlp_hidden")
    m.mlp_hidden = to_int(key, value);
  else if (key == "mlp_dropout")
    m.mlp_dropout = to_real(key, value);
  else if (key == "pooling") {
    if (value == "target_concat")
      m.pooling = Pooling::TargetConcat;
    else if (value == "sum")
      m.pooling = Pooling::Sum;
    else
      throw ArgumentError("config: pooling must be target_concat or sum, got '" + value + "'");
  } else if (key == "concat_pre_activation")
    m.concat_pre_activation = to_int(key, value) != 0;
  else if (key == "epochs")
    t.epochs = to_int(key, value);
  else if (key == "batch_size")
    t.batch_size = to_int(key, value);
  else if (key == "lr")
    t.lr = to_real(key, value);
  else if (key == "lr_decay_factor")
    t.lr_decay_factor = to_real(key, value);
  else if (key == "lr_decay_every")
    t.lr_decay_every = to_int(key, value);
  else if (key == "arr_lambda")
    t.arr_lambda = to_real(key, value);
  else if (key == "edge_dropout")
    t.edge_dropout = to_real(key, value);
  else if (key == "max_nodes_per_hop")
    t.max_nodes_per_hop = to_int(key, value);
  else if (key == "seed") {
    try {
      size_t pos = 0;
      if (!value.empty() && value[0] == '-') throw std::invalid_argument(value);
      t.seed = std::stoull(value, &pos);
      if (pos != value.size()) throw std::invalid_argument(value);
    } catch (const std::exception&) {
      throw ArgumentError("config: bad integer for seed: '" + value + "'");
    }
  }
  else if (key == "checkpoint_epochs")
    t.checkpoint_epochs = to_int_list(key, value);
  else
    throw ArgumentError("config: unknown key '" + key + "'");
}

// Applies only the keys present in `text` on top of whatever m/t already hold.
inline void apply_config_text(ModelConfig& m, TrainConfig& t, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ArgumentError("config line " + std::to_string(line_no) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      if (a == std::string::npos) return std::string();
      const auto b = s.find_last_not_of(" \t");
      return s.substr(a, b - a + 1);
    };
    apply_config_kv(m, t, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

inline std::pair<ModelConfig, TrainConfig> parse_config(const std::string& text) {
  ModelConfig m;
  TrainConfig t;
  apply_config_text(m, t, text);
  return {m, t};
}

}  // namespace igmc
