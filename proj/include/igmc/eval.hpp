#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "igmc/graph.hpp"
#include "igmc/model.hpp"
#include "igmc/subgraph_io.hpp"
#include "igmc/train.hpp"

namespace igmc {

struct EvalResult {
  Real rmse_clipped = 0;
  Real rmse_unclipped = 0;
  size_t count = 0;
  struct TypeStats {
    Real value = 0;  // the rating value of this type
    size_t count = 0;
    Real rmse = 0;   // clipped predictions
  };
  std::vector<TypeStats> per_type;
};

// RMSE of the ensemble on held-out triples. Test ratings must already exist
// in the training scale; offenders are reported together in one error.
inline EvalResult evaluate(const std::vector<ModelParams>& models, const RatingScale& scale,
                           const ExtractConfig& extract_cfg, const BipartiteGraph& train_graph,
                           std::vector<RatingTriple> test, const PredictOptions& opts = {}) {
  if (test.empty()) throw ArgumentError("evaluate: empty test set");
  assign_types(test, scale);

  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(test.size());
  for (const auto& t : test) pairs.emplace_back(t.user, t.item);

  PredictOptions raw = opts;
  raw.clip = false;
  const std::vector<Real> preds = predict(models, scale, extract_cfg, train_graph, pairs, raw);

  EvalResult res;
  res.count = test.size();
  std::vector<Real> sq_by_type(scale.num_types(), 0);
  std::vector<size_t> n_by_type(scale.num_types(), 0);
  Real sq_clip = 0, sq_raw = 0;
  for (size_t i = 0; i < test.size(); ++i) {
    const Real clipped = std::clamp(preds[i], scale.min_value(), scale.max_value());
    const Real dc = clipped - test[i].value;
    const Real dr = preds[i] - test[i].value;
    sq_clip += dc * dc;
    sq_raw += dr * dr;
    sq_by_type[test[i].type] += dc * dc;
    ++n_by_type[test[i].type];
  }
  res.rmse_clipped = std::sqrt(sq_clip / test.size());
  res.rmse_unclipped = std::sqrt(sq_raw / test.size());
  for (int r = 0; r < scale.num_types(); ++r)
    res.per_type.push_back({scale.value_of(r), n_by_type[r],
                            n_by_type[r] ? std::sqrt(sq_by_type[r] / n_by_type[r]) : Real(0)});
  return res;
}

inline std::vector<ModelParams> snapshot_models(const TrainResult& tr) {
  std::vector<ModelParams> models;
  for (const auto& [epoch, p] : tr.snapshots) models.push_back(p);
  return models;
}

struct SparsityPoint {
  Real keep_fraction = 1;
  size_t train_edges = 0;
  EvalResult result;
};

// Trains a fresh model per keep-fraction on a subsampled training graph and
// evaluates each on the untouched test set. One shared sparsify seed means
// smaller fractions keep nested subsets of the larger ones.
inline std::vector<SparsityPoint> sparsity_sweep(const BipartiteGraph& train_graph,
                                                 const std::vector<RatingTriple>& test,
                                                 const ModelConfig& mcfg, const TrainConfig& tcfg,
                                                 std::span<const Real> fractions,
                                                 uint64_t sparsify_seed,
                                                 std::ostream* log = nullptr) {
  if (fractions.empty()) throw ArgumentError("sparsity_sweep: no fractions given");
  std::vector<SparsityPoint> out;
  for (Real f : fractions) {
    const BipartiteGraph g = f == Real(1) ? train_graph : sparsify(train_graph, f, sparsify_seed);
    if (log)
      *log << "sparsity " << f << ": training on " << g.num_edges() << " of "
           << train_graph.num_edges() << " edges" << std::endl;
    TrainResult tr = train(g, mcfg, tcfg, "", nullptr, nullptr, log);
    SparsityPoint p;
    p.keep_fraction = f;
    p.train_edges = g.num_edges();
    p.result = evaluate(snapshot_models(tr), g.scale(), ExtractConfig{mcfg.hop, tcfg.max_nodes_per_hop},
                        g, test);
    if (log)
      *log << "sparsity " << f << ": rmse " << p.result.rmse_clipped << std::endl;
    out.push_back(std::move(p));
  }
  return out;
}

// How a foreign rating scale plugs into a trained model: each target type is
// assigned a source type by equal-width position over the value range, and
// predictions leave the source range through a max-to-max scale factor.
struct TransferSpec {
  RatingScale source_scale;
  RatingScale target_scale;
  std::vector<int> type_map;   // target type index -> source type index
  Real value_factor = 1;       // multiply source-space predictions by this

  std::string describe() const {
    std::ostringstream ss;
    ss << "type map:";
    for (size_t i = 0; i < type_map.size(); ++i)
      ss << ' ' << target_scale.value_of(static_cast<int>(i)) << "->"
         << source_scale.value_of(type_map[i]);
    ss << "; prediction factor " << value_factor;
    return ss.str();
  }
};

inline TransferSpec make_equal_width_bins(const RatingScale& source, const RatingScale& target) {
  TransferSpec spec;
  spec.source_scale = source;
  spec.target_scale = target;
  const int R = source.num_types();
  const Real lo = target.min_value(), hi = target.max_value();
  for (int i = 0; i < target.num_types(); ++i) {
    int bin;
    if (hi == lo)
      bin = R - 1;
    else
      bin = static_cast<int>(std::floor((target.value_of(i) - lo) / (hi - lo) * R));
    spec.type_map.push_back(std::clamp(bin, 0, R - 1));
  }
  // map is monotone by construction; equal values cannot cross bins
  spec.value_factor = target.max_value() / source.max_value();
  return spec;
}

// Zero-shot evaluation on a different domain: the target graph's edges are
// re-typed through the bin map so the model sees familiar relations, then
// predictions are rescaled into the target's value space.
inline EvalResult transfer_predict(const std::vector<ModelParams>& models,
                                   const RatingScale& model_scale,
                                   const ExtractConfig& extract_cfg,
                                   const BipartiteGraph& target_train,
                                   std::vector<RatingTriple> target_test,
                                   const PredictOptions& opts = {},
                                   std::ostream* log = nullptr) {
  if (target_test.empty()) throw ArgumentError("transfer_predict: empty test set");
  const TransferSpec spec = make_equal_width_bins(model_scale, target_train.scale());
  if (log) *log << "transfer: " << spec.describe() << std::endl;

  std::vector<RatingTriple> retyped = target_train.edges();
  for (auto& e : retyped) {
    e.type = spec.type_map[e.type];
    e.value = model_scale.value_of(e.type);
  }
  const BipartiteGraph source_view = BipartiteGraph::build(
      std::move(retyped), target_train.num_users(), target_train.num_items(), model_scale);

  // test ratings can fall between the values observed in the target's training
  // split (a 1..100 scale rarely shows every value); the type is only the
  // per-type report's bucket, so the nearest observed value serves
  for (auto& t : target_test) t.type = target_train.scale().nearest_type(t.value);
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(target_test.size());
  for (const auto& t : target_test) pairs.emplace_back(t.user, t.item);

  PredictOptions raw = opts;
  raw.clip = false;
  std::vector<Real> preds = predict(models, model_scale, extract_cfg, source_view, pairs, raw);

  const Real lo = target_train.scale().min_value(), hi = target_train.scale().max_value();
  EvalResult res;
  res.count = target_test.size();
  std::vector<Real> sq_by_type(target_train.scale().num_types(), 0);
  std::vector<size_t> n_by_type(target_train.scale().num_types(), 0);
  Real sq_clip = 0, sq_raw = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    const Real scaled = preds[i] * spec.value_factor;
    const Real clipped = std::clamp(scaled, lo, hi);
    const Real dc = clipped - target_test[i].value;
    const Real dr = scaled - target_test[i].value;
    sq_clip += dc * dc;
    sq_raw += dr * dr;
    sq_by_type[target_test[i].type] += dc * dc;
    ++n_by_type[target_test[i].type];
  }
  res.rmse_clipped = std::sqrt(sq_clip / preds.size());
  res.rmse_unclipped = std::sqrt(sq_raw / preds.size());
  for (int r = 0; r < target_train.scale().num_types(); ++r)
    res.per_type.push_back({target_train.scale().value_of(r), n_by_type[r],
                            n_by_type[r] ? std::sqrt(sq_by_type[r] / n_by_type[r]) : Real(0)});
  return res;
}

// Named model variants for controlled comparisons. "original" trains the
// given config untouched; the others flip exactly one switch.
inline EvalResult ablation_run(const std::string& variant, const BipartiteGraph& train_graph,
                               const std::vector<RatingTriple>& test, ModelConfig mcfg,
                               TrainConfig tcfg, const Tensor* user_content = nullptr,
                               const Tensor* item_content = nullptr,
                               std::ostream* log = nullptr) {
  if (variant == "original") {
    // as configured
  } else if (variant == "sum_pooling") {
    mcfg.pooling = Pooling::Sum;
  } else if (variant == "no_arr") {
    tcfg.arr_lambda = 0;
  } else if (variant == "with_content") {
    if (!user_content && !item_content)
      throw ArgumentError("ablation: with_content needs at least one content table");
    mcfg.content_dim = (user_content ? user_content->cols() : 0) +
                       (item_content ? item_content->cols() : 0);
  } else {
    throw ArgumentError("ablation: unknown variant '" + variant + "'");
  }
  const Tensor* uc = variant == "with_content" ? user_content : nullptr;
  const Tensor* ic = variant == "with_content" ? item_content : nullptr;
  if (variant != "with_content") mcfg.content_dim = 0;
  if (log) *log << "ablation '" << variant << "' starting" << std::endl;
  TrainResult tr = train(train_graph, mcfg, tcfg, "", uc, ic, log);
  PredictOptions opts;
  opts.user_content = uc;
  opts.item_content = ic;
  return evaluate(snapshot_models(tr), train_graph.scale(),
                  ExtractConfig{mcfg.hop, tcfg.max_nodes_per_hop}, train_graph, test, opts);
}

struct ExportedSubgraph {
  int user = 0, item = 0;
  Real pred = 0;
  std::string json_path, dot_path;
};

// Writes the k highest- and k lowest-predicted pairs' subgraphs as JSON plus
// GraphViz DOT, for eyeballing what the model keys on.
inline std::vector<ExportedSubgraph> export_subgraphs(
    const std::vector<ModelParams>& models, const RatingScale& scale,
    const ExtractConfig& extract_cfg, const BipartiteGraph& graph,
    std::span<const std::pair<int, int>> pairs, int k, const std::string& out_dir,
    const PredictOptions& opts = {}) {
  if (k < 1) throw ArgumentError("export_subgraphs: k must be >= 1");
  if (pairs.empty()) throw ArgumentError("export_subgraphs: no pairs given");
  const std::vector<Real> preds = predict(models, scale, extract_cfg, graph, pairs, opts);

  std::vector<size_t> idx(pairs.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    return preds[a] != preds[b] ? preds[a] > preds[b] : a < b;
  });
  std::vector<size_t> chosen;
  const size_t take = std::min(static_cast<size_t>(k), idx.size());
  for (size_t i = 0; i < take; ++i) chosen.push_back(idx[i]);                    // top
  for (size_t i = idx.size() - std::min(take, idx.size() - take); i < idx.size(); ++i)
    chosen.push_back(idx[i]);                                                    // bottom

  std::filesystem::create_directories(out_dir);
  std::vector<ExportedSubgraph> out;
  ExtractScratch scratch;
  int rank = 0;
  for (size_t i : chosen) {
    const auto& [u, v] = pairs[i];
    const uint64_t ps = mix_seed(opts.seed, static_cast<uint64_t>(u), static_cast<uint64_t>(v));
    EnclosingSubgraph sub = extract(graph, u, v, extract_cfg, ps, &scratch);
    std::ostringstream stem;
    stem << out_dir << "/rank" << std::setfill('0') << std::setw(3) << rank++ << "_u" << u
         << "_i" << v;
    ExportedSubgraph e;
    e.user = u;
    e.item = v;
    e.pred = preds[i];
    e.json_path = stem.str() + ".json";
    e.dot_path = stem.str() + ".dot";
    {
      std::ofstream jf(e.json_path);
      if (!jf) throw DataError("cannot write " + e.json_path);
      jf << subgraph_to_json(sub).dump(2) << '\n';
    }
    {
      std::ofstream df(e.dot_path);
      if (!df) throw DataError("cannot write " + e.dot_path);
      df << subgraph_to_dot(sub, &scale, preds[i]);
    }
    out.push_back(std::move(e));
  }
  return out;
}

// Content tables: one line per entity, external id then feature columns.
// Ids absent from the map are skipped; mapped ids missing from the file keep
// zero rows.
inline Tensor load_content(const std::string& path, const IdMap& ids) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open content file: " + path);
  std::string line;
  size_t line_no = 0;
  int cols = -1;
  std::vector<std::pair<int, std::vector<Real>>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tok;
    std::vector<std::string> parts;
    while (ss >> tok) parts.push_back(tok);
    if (parts.empty()) continue;
    if (cols == -1)
      cols = static_cast<int>(parts.size()) - 1;
    else if (static_cast<int>(parts.size()) - 1 != cols)
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(cols + 1) + " columns");
    if (cols < 1) throw DataError(path + ": need at least one feature column");
    int64_t ext;
    std::vector<Real> feat;
    try {
      size_t pos = 0;
      ext = std::stoll(parts[0], &pos);
      if (pos != parts[0].size()) throw std::invalid_argument(parts[0]);
      for (int c = 1; c <= cols; ++c) {
        const Real v = std::stod(parts[c], &pos);
        if (pos != parts[c].size()) throw std::invalid_argument(parts[c]);
        feat.push_back(v);
      }
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed record");
    }
    auto internal = ids.lookup(ext);
    if (internal) rows.emplace_back(*internal, std::move(feat));
  }
  if (cols <= 0) throw DataError("empty content file: " + path);
  Tensor t = Tensor::zeros(ids.size(), cols);
  for (const auto& [r, feat] : rows)
    for (int c = 0; c < cols; ++c) t.at(r, c) = feat[c];
  return t;
}

}  // namespace igmc
