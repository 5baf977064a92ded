// Command-line front end: ingest/train/predict/evaluate plus the experiment
// drivers (sparsity sweeps, cross-domain transfer, ablations, subgraph dumps).
// Exit codes: 0 success, 1 usage, 2 data problems, 3 numerical failures.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "igmc/igmc.hpp"

namespace {

using namespace igmc;
using nlohmann::json;

uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(uint64_t v) {
  std::ostringstream ss;
  ss << std::hex << std::setfill('0') << std::setw(16) << v;
  return ss.str();
}

struct DatasetPreset {
  std::string train_rel, test_rel;
  RatingFormat format;
  int epochs;
  std::vector<int> checkpoint_epochs;
};

const std::map<std::string, DatasetPreset>& presets() {
  static const std::map<std::string, DatasetPreset> p = {
      {"ml-100k", {"ml-100k/u1.base", "ml-100k/u1.test", RatingFormat::Tsv4, 80, {50, 60, 70, 80}}},
      {"flixster", {"flixster/train.tsv", "flixster/test.tsv", RatingFormat::Tsv3, 40, {10, 20, 30, 40}}},
      {"douban", {"douban/train.tsv", "douban/test.tsv", RatingFormat::Tsv3, 40, {10, 20, 30, 40}}},
      {"yahoo_music",
       {"yahoo_music/train.tsv", "yahoo_music/test.tsv", RatingFormat::Tsv3, 40, {10, 20, 30, 40}}},
  };
  return p;
}

// Options shared by every subcommand that touches rating files.
struct DataOpts {
  std::string dataset;
  std::string data_root = "data";
  std::string train_path, test_path;
  std::string format = "auto";

  void attach(CLI::App* cmd, bool need_test) {
    cmd->add_option("--dataset", dataset,
                    "named dataset under --data-root (ml-100k, flixster, douban, yahoo_music)");
    cmd->add_option("--data-root", data_root, "directory holding named datasets");
    cmd->add_option("--train", train_path, "training ratings file (overrides --dataset)");
    auto* t = cmd->add_option("--test", test_path, "test ratings file");
    cmd->add_option("--format", format, "ratings format: auto, tsv3, tsv4")
        ->check(CLI::IsMember({"auto", "tsv3", "tsv4"}));
    if (need_test) t->description("test ratings file (required unless --dataset)");
  }
};

struct DataBundle {
  BipartiteGraph graph;
  std::vector<RatingTriple> test;
  IdMap users, items;
  std::string label;
  const DatasetPreset* preset = nullptr;
};

RatingFormat resolve_format(const std::string& format, const std::string& path) {
  if (format == "tsv3") return RatingFormat::Tsv3;
  if (format == "tsv4") return RatingFormat::Tsv4;
  return detect_rating_format(path);
}

// Loads train (and optionally test) ratings into one id space and builds the
// training graph. Nodes seen only in the test file still get ids, so their
// pairs extract to (sparse) subgraphs instead of failing.
DataBundle load_data(const DataOpts& opts, bool need_train, bool need_test) {
  DataBundle b;
  std::string train_path = opts.train_path;
  std::string test_path = opts.test_path;
  std::string format = opts.format;
  if (!opts.dataset.empty() && train_path.empty()) {
    auto it = presets().find(opts.dataset);
    if (it == presets().end()) throw ArgumentError("unknown dataset '" + opts.dataset + "'");
    b.preset = &it->second;
    train_path = opts.data_root + "/" + it->second.train_rel;
    if (test_path.empty()) test_path = opts.data_root + "/" + it->second.test_rel;
    if (format == "auto")
      format = it->second.format == RatingFormat::Tsv3 ? "tsv3" : "tsv4";
    b.label = opts.dataset;
  } else {
    if (train_path.empty() && need_train)
      throw ArgumentError("need either --dataset or --train");
    b.label = train_path;
  }
  if (need_test && test_path.empty()) throw ArgumentError("this command needs --test");

  LoadedRatings train = load_ratings(train_path, resolve_format(format, train_path), b.users, b.items);
  if (!test_path.empty()) {
    LoadedRatings test = load_ratings(test_path, resolve_format(format, test_path), b.users, b.items);
    b.test = std::move(test.triples);
  }
  b.graph = BipartiteGraph::build(std::move(train.triples), b.users.size(), b.items.size(),
                                  train.scale);
  return b;
}

// Options that assemble the model + training configuration. Precedence:
// built-in defaults, then dataset preset, then --config file, then flags.
struct TrainOpts {
  std::string config_path;
  std::optional<int> epochs, batch_size, lr_decay_every, max_nodes_per_hop, hop, num_bases;
  std::optional<Real> lr, arr_lambda, edge_dropout, mlp_dropout;
  std::optional<std::string> checkpoint_epochs, pooling;
  uint64_t seed = 1;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key=value config file");
    cmd->add_option("--epochs", epochs, "training epochs");
    cmd->add_option("--batch-size", batch_size, "subgraphs per step");
    cmd->add_option("--lr", lr, "initial learning rate");
    cmd->add_option("--lr-decay-every", lr_decay_every, "epochs between lr decays");
    cmd->add_option("--arr-lambda", arr_lambda, "adjacent rating regularizer weight");
    cmd->add_option("--edge-dropout", edge_dropout, "edge dropout probability");
    cmd->add_option("--mlp-dropout", mlp_dropout, "dropout before the output layer");
    cmd->add_option("--hop", hop, "enclosing subgraph radius");
    cmd->add_option("--num-bases", num_bases, "basis matrices per layer");
    cmd->add_option("--max-nodes-per-hop", max_nodes_per_hop, "fringe cap per hop (0 = none)");
    cmd->add_option("--checkpoint-epochs", checkpoint_epochs,
                    "comma-separated snapshot epochs for the ensemble");
    cmd->add_option("--pooling", pooling, "target_concat or sum")
        ->check(CLI::IsMember({"target_concat", "sum"}));
    cmd->add_option("--seed", seed, "training seed");
  }

  // Precedence per key: defaults, then dataset preset, then the config file,
  // then explicit flags. The file only overrides keys it actually contains.
  std::pair<ModelConfig, TrainConfig> resolve(const DataBundle& data) const {
    ModelConfig m;
    TrainConfig t;
    if (data.preset) {
      t.epochs = data.preset->epochs;
      t.checkpoint_epochs = data.preset->checkpoint_epochs;
    }
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw DataError("cannot open config file: " + config_path);
      std::ostringstream text;
      text << in.rdbuf();
      apply_config_text(m, t, text.str());
    }
    if (epochs) t.epochs = *epochs;
    if (batch_size) t.batch_size = *batch_size;
    if (lr) t.lr = *lr;
    if (lr_decay_every) t.lr_decay_every = *lr_decay_every;
    if (arr_lambda) t.arr_lambda = *arr_lambda;
    if (edge_dropout) t.edge_dropout = *edge_dropout;
    if (mlp_dropout) m.mlp_dropout = *mlp_dropout;
    if (hop) m.hop = *hop;
    if (num_bases) m.num_bases = *num_bases;
    if (max_nodes_per_hop) t.max_nodes_per_hop = *max_nodes_per_hop;
    if (checkpoint_epochs)
      t.checkpoint_epochs = cfg_detail::to_int_list("checkpoint_epochs", *checkpoint_epochs);
    if (pooling) m.pooling = *pooling == "sum" ? Pooling::Sum : Pooling::TargetConcat;
    t.seed = seed;
    m.num_rating_types = data.graph.scale().num_types();
    if (t.checkpoint_epochs.empty()) t.checkpoint_epochs = {t.epochs};
    for (int& e : t.checkpoint_epochs) e = std::min(e, t.epochs);
    std::sort(t.checkpoint_epochs.begin(), t.checkpoint_epochs.end());
    t.checkpoint_epochs.erase(
        std::unique(t.checkpoint_epochs.begin(), t.checkpoint_epochs.end()),
        t.checkpoint_epochs.end());
    return {m, t};
  }
};

std::vector<Checkpoint> load_checkpoints(const std::vector<std::string>& paths) {
  if (paths.empty()) throw ArgumentError("need at least one --checkpoint");
  std::vector<Checkpoint> out;
  for (const auto& p : paths) out.push_back(load_checkpoint(p));
  for (const auto& c : out) {
    if (!(c.params.config == out.front().params.config))
      throw DataError("ensemble checkpoints disagree on model config");
    if (!(c.scale == out.front().scale))
      throw DataError("ensemble checkpoints disagree on rating scale");
    if (c.extract.max_nodes_per_hop != out.front().extract.max_nodes_per_hop)
      throw DataError("ensemble checkpoints disagree on extraction settings");
  }
  return out;
}

std::vector<ModelParams> models_of(const std::vector<Checkpoint>& cs) {
  std::vector<ModelParams> m;
  for (const auto& c : cs) m.push_back(c.params);
  return m;
}

void write_json(const std::string& path, const json& j) {
  if (path.empty()) return;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << '\n';
}

json eval_json(const EvalResult& r) {
  json per = json::array();
  for (const auto& t : r.per_type)
    per.push_back({{"value", t.value}, {"count", t.count}, {"rmse", t.rmse}});
  return {{"rmse_clipped", r.rmse_clipped},
          {"rmse_unclipped", r.rmse_unclipped},
          {"count", r.count},
          {"per_type", per}};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<std::pair<int, int>> pairs_of_test(const std::vector<RatingTriple>& test) {
  std::vector<std::pair<int, int>> out;
  out.reserve(test.size());
  for (const auto& t : test) out.emplace_back(t.user, t.item);
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"Inductive matrix completion on enclosing subgraphs"};
  app.require_subcommand(1);
  std::ostream* log = &std::cerr;
  bool quiet = false;
  app.add_flag("--quiet", quiet, "suppress progress output");

  // --- ingest ---
  auto* ingest = app.add_subcommand("ingest", "load, validate and report a dataset");
  DataOpts ingest_data;
  ingest_data.attach(ingest, false);
  std::string ingest_out;
  ingest->add_option("--out", ingest_out, "directory for canonical edge lists and id maps");

  // --- train ---
  auto* train_cmd = app.add_subcommand("train", "train a model, saving checkpoint snapshots");
  DataOpts train_data;
  train_data.attach(train_cmd, false);
  TrainOpts train_opts;
  train_opts.attach(train_cmd);
  std::string train_out = "model";
  std::string user_content_path, item_content_path;
  train_cmd->add_option("--out", train_out, "checkpoint path prefix");
  train_cmd->add_option("--user-content", user_content_path, "user feature TSV");
  train_cmd->add_option("--item-content", item_content_path, "item feature TSV");

  // --- predict ---
  auto* predict_cmd = app.add_subcommand("predict", "predict ratings for (user,item) pairs");
  DataOpts predict_data;
  predict_data.attach(predict_cmd, false);
  std::vector<std::string> predict_ckpts;
  std::string pairs_path, predict_out;
  bool no_clip = false;
  predict_cmd->add_option("--checkpoint", predict_ckpts, "checkpoint file(s); several = ensemble")
      ->required();
  predict_cmd->add_option("--pairs", pairs_path, "TSV of external user/item ids (default: --test pairs)");
  predict_cmd->add_option("--out", predict_out, "output TSV (user, item, prediction)");
  predict_cmd->add_flag("--no-clip", no_clip, "do not clamp predictions to the rating range");

  // --- evaluate ---
  auto* eval_cmd = app.add_subcommand("evaluate", "RMSE of a checkpoint ensemble on a test set");
  DataOpts eval_data;
  eval_data.attach(eval_cmd, true);
  std::vector<std::string> eval_ckpts;
  std::string eval_out;
  eval_cmd->add_option("--checkpoint", eval_ckpts, "checkpoint file(s); several = ensemble")
      ->required();
  eval_cmd->add_option("--out", eval_out, "write results JSON here");

  // --- sweep-sparsity ---
  auto* sweep_cmd = app.add_subcommand("sweep-sparsity",
                                       "retrain at several training densities and compare RMSE");
  DataOpts sweep_data;
  sweep_data.attach(sweep_cmd, true);
  TrainOpts sweep_opts;
  sweep_opts.attach(sweep_cmd);
  std::string sweep_fractions = "1.0,0.2,0.05";
  std::string sweep_out;
  uint64_t sweep_sparsify_seed = 7;
  sweep_cmd->add_option("--fractions", sweep_fractions, "comma-separated keep fractions");
  sweep_cmd->add_option("--sparsify-seed", sweep_sparsify_seed, "seed for edge subsampling");
  sweep_cmd->add_option("--out", sweep_out, "write results JSON here");

  // --- transfer ---
  auto* transfer_cmd = app.add_subcommand(
      "transfer", "apply a trained model zero-shot to another domain's graph");
  DataOpts transfer_data;
  transfer_data.attach(transfer_cmd, true);
  std::vector<std::string> transfer_ckpts;
  std::string transfer_out;
  transfer_cmd->add_option("--checkpoint", transfer_ckpts, "source-domain checkpoint(s)")
      ->required();
  transfer_cmd->add_option("--out", transfer_out, "write results JSON here");

  // --- ablate ---
  auto* ablate_cmd = app.add_subcommand("ablate", "train and score model variants side by side");
  DataOpts ablate_data;
  ablate_data.attach(ablate_cmd, true);
  TrainOpts ablate_opts;
  ablate_opts.attach(ablate_cmd);
  std::string ablate_variants = "original,sum_pooling,no_arr";
  std::string ablate_seeds = "1,2,3";
  std::string ablate_out;
  std::string ablate_user_content, ablate_item_content;
  ablate_cmd->add_option("--variants", ablate_variants, "comma-separated variant names");
  ablate_cmd->add_option("--seeds", ablate_seeds, "comma-separated seeds (runs per variant)");
  ablate_cmd->add_option("--user-content", ablate_user_content, "user feature TSV (with_content)");
  ablate_cmd->add_option("--item-content", ablate_item_content, "item feature TSV (with_content)");
  ablate_cmd->add_option("--out", ablate_out, "write results JSON here");

  // --- export-subgraphs ---
  auto* export_cmd = app.add_subcommand(
      "export-subgraphs", "dump extreme-prediction subgraphs as JSON and GraphViz DOT");
  DataOpts export_data;
  export_data.attach(export_cmd, true);
  std::vector<std::string> export_ckpts;
  int export_k = 5;
  std::string export_out = "subgraphs";
  export_cmd->add_option("--checkpoint", export_ckpts, "checkpoint file(s)")->required();
  export_cmd->add_option("--k", export_k, "how many top and bottom pairs to dump");
  export_cmd->add_option("--out", export_out, "output directory");

  // lets global flags like --quiet appear after the subcommand name
  for (auto* sc : app.get_subcommands([](const CLI::App*) { return true; })) sc->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (quiet) log = nullptr;
  const auto t0 = std::chrono::steady_clock::now();

  try {
    if (*ingest) {
      DataBundle d = load_data(ingest_data, true, false);
      json j = {{"dataset", d.label},
                {"num_users", d.users.size()},
                {"num_items", d.items.size()},
                {"train_ratings", d.graph.num_edges()},
                {"test_ratings", d.test.size()},
                {"rating_values", d.graph.scale().values()}};
      if (!ingest_out.empty()) {
        std::filesystem::create_directories(ingest_out);
        write_edge_list(d.graph, ingest_out + "/edges.tsv");
        d.users.save(ingest_out + "/users.tsv");
        d.items.save(ingest_out + "/items.tsv");
        write_json(ingest_out + "/stats.json", j);
      }
      std::cout << j.dump(2) << std::endl;
      return 0;
    }

    if (*train_cmd) {
      DataBundle d = load_data(train_data, true, false);
      auto [mcfg, tcfg] = train_opts.resolve(d);
      Tensor uc, ic;
      const Tensor* ucp = nullptr;
      const Tensor* icp = nullptr;
      if (!user_content_path.empty()) {
        uc = load_content(user_content_path, d.users);
        ucp = &uc;
      }
      if (!item_content_path.empty()) {
        ic = load_content(item_content_path, d.items);
        icp = &ic;
      }
      mcfg.content_dim = (ucp ? uc.cols() : 0) + (icp ? ic.cols() : 0);
      const auto out_parent = std::filesystem::path(train_out).parent_path();
      if (!out_parent.empty()) std::filesystem::create_directories(out_parent);
      if (log)
        *log << "training on " << d.label << ": " << d.graph.num_edges() << " ratings, "
             << d.users.size() << " users, " << d.items.size() << " items" << std::endl;
      TrainResult tr = train(d.graph, mcfg, tcfg, train_out, ucp, icp, log);

      {
        std::ofstream rep(train_out + "_report.jsonl");
        for (const auto& e : tr.report.epochs)
          rep << json({{"epoch", e.epoch},
                       {"lr", e.lr},
                       {"loss", e.loss},
                       {"mse", e.mse},
                       {"arr", e.arr},
                       {"seconds", e.seconds}})
                     .dump()
              << '\n';
      }
      json j = {{"dataset", d.label},
                {"config_hash", hex64(fnv1a64(serialize_config(mcfg, tcfg)))},
                {"seed", tcfg.seed},
                {"checkpoints", tr.report.checkpoint_paths},
                {"final_train_loss", tr.report.epochs.back().loss},
                {"runtime_s", seconds_since(t0)}};
      if (!d.test.empty()) {
        PredictOptions popts;
        popts.user_content = ucp;
        popts.item_content = icp;
        EvalResult er = evaluate(snapshot_models(tr), d.graph.scale(),
                                 ExtractConfig{mcfg.hop, tcfg.max_nodes_per_hop}, d.graph, d.test,
                                 popts);
        j["eval"] = eval_json(er);
        if (log) *log << "test rmse " << er.rmse_clipped << std::endl;
      }
      write_json(train_out + "_results.json", j);
      std::cout << j.dump(2) << std::endl;
      return 0;
    }

    if (*predict_cmd) {
      auto cks = load_checkpoints(predict_ckpts);
      DataBundle d = load_data(predict_data, true, false);
      std::vector<std::pair<int, int>> pairs;
      std::vector<std::pair<int64_t, int64_t>> ext_pairs;
      if (!pairs_path.empty()) {
        std::ifstream in(pairs_path);
        if (!in) throw DataError("cannot open pairs file: " + pairs_path);
        std::string line;
        size_t line_no = 0;
        while (std::getline(in, line)) {
          ++line_no;
          std::istringstream ss(line);
          int64_t eu, ev;
          if (!(ss >> eu >> ev)) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            throw DataError(pairs_path + ":" + std::to_string(line_no) + ": malformed pair");
          }
          auto u = d.users.lookup(eu);
          auto v = d.items.lookup(ev);
          if (!u || !v)
            throw DataError(pairs_path + ":" + std::to_string(line_no) + ": unknown id pair (" +
                            std::to_string(eu) + "," + std::to_string(ev) + ")");
          pairs.emplace_back(*u, *v);
          ext_pairs.emplace_back(eu, ev);
        }
      } else if (!d.test.empty()) {
        pairs = pairs_of_test(d.test);
        for (const auto& t : d.test)
          ext_pairs.emplace_back(d.users.external_of(t.user), d.items.external_of(t.item));
      } else {
        throw ArgumentError("predict needs --pairs or a test file");
      }
      PredictOptions popts;
      popts.clip = !no_clip;
      const auto& c0 = cks.front();
      std::vector<Real> preds =
          predict(models_of(cks), c0.scale, c0.extract, d.graph, pairs, popts);
      std::ostream* out = &std::cout;
      std::ofstream file;
      if (!predict_out.empty()) {
        file.open(predict_out);
        if (!file) throw DataError("cannot write " + predict_out);
        out = &file;
      }
      for (size_t i = 0; i < preds.size(); ++i)
        *out << ext_pairs[i].first << '\t' << ext_pairs[i].second << '\t'
             << std::setprecision(6) << preds[i] << '\n';
      return 0;
    }

    if (*eval_cmd) {
      auto cks = load_checkpoints(eval_ckpts);
      DataBundle d = load_data(eval_data, true, true);
      const auto& c0 = cks.front();
      EvalResult er = evaluate(models_of(cks), c0.scale, c0.extract, d.graph, d.test);
      json j = {{"dataset", d.label},
                {"checkpoints", eval_ckpts},
                {"runtime_s", seconds_since(t0)}};
      j["eval"] = eval_json(er);
      write_json(eval_out, j);
      std::cout << j.dump(2) << std::endl;
      return 0;
    }

    if (*sweep_cmd) {
      DataBundle d = load_data(sweep_data, true, true);
      auto [mcfg, tcfg] = sweep_opts.resolve(d);
      std::vector<Real> fractions;
      {
        std::istringstream ss(sweep_fractions);
        std::string tok;
        while (std::getline(ss, tok, ','))
          fractions.push_back(cfg_detail::to_real("fractions", tok));
      }
      auto points = sparsity_sweep(d.graph, d.test, mcfg, tcfg, fractions, sweep_sparsify_seed, log);
      json arr = json::array();
      for (const auto& p : points) {
        json pj = {{"keep_fraction", p.keep_fraction}, {"train_edges", p.train_edges}};
        pj["eval"] = eval_json(p.result);
        arr.push_back(pj);
        std::cout << "keep=" << p.keep_fraction << "  edges=" << p.train_edges
                  << "  rmse=" << p.result.rmse_clipped << std::endl;
      }
      json j = {{"dataset", d.label},
                {"config_hash", hex64(fnv1a64(serialize_config(mcfg, tcfg)))},
                {"seed", tcfg.seed},
                {"points", arr},
                {"runtime_s", seconds_since(t0)}};
      write_json(sweep_out, j);
      return 0;
    }

    if (*transfer_cmd) {
      auto cks = load_checkpoints(transfer_ckpts);
      DataBundle d = load_data(transfer_data, true, true);
      const auto& c0 = cks.front();
      EvalResult er =
          transfer_predict(models_of(cks), c0.scale, c0.extract, d.graph, d.test, {}, log);
      json j = {{"dataset", d.label},
                {"checkpoints", transfer_ckpts},
                {"transfer", make_equal_width_bins(c0.scale, d.graph.scale()).describe()},
                {"runtime_s", seconds_since(t0)}};
      j["eval"] = eval_json(er);
      write_json(transfer_out, j);
      std::cout << j.dump(2) << std::endl;
      return 0;
    }

    if (*ablate_cmd) {
      DataBundle d = load_data(ablate_data, true, true);
      auto [mcfg, tcfg] = ablate_opts.resolve(d);
      Tensor uc, ic;
      const Tensor* ucp = nullptr;
      const Tensor* icp = nullptr;
      if (!ablate_user_content.empty()) {
        uc = load_content(ablate_user_content, d.users);
        ucp = &uc;
      }
      if (!ablate_item_content.empty()) {
        ic = load_content(ablate_item_content, d.items);
        icp = &ic;
      }
      std::vector<std::string> variants;
      {
        std::istringstream ss(ablate_variants);
        std::string tok;
        while (std::getline(ss, tok, ',')) variants.push_back(tok);
      }
      const std::vector<int> seeds = cfg_detail::to_int_list("seeds", ablate_seeds);
      if (seeds.empty()) throw ArgumentError("ablate: need at least one seed");

      json arr = json::array();
      for (const auto& variant : variants) {
        std::vector<Real> rmses;
        for (int s : seeds) {
          TrainConfig tv = tcfg;
          tv.seed = static_cast<uint64_t>(s);
          EvalResult er = ablation_run(variant, d.graph, d.test, mcfg, tv, ucp, icp, log);
          rmses.push_back(er.rmse_clipped);
          if (log)
            *log << "ablation " << variant << " seed " << s << ": rmse " << er.rmse_clipped
                 << std::endl;
        }
        Real mean = 0;
        for (Real r : rmses) mean += r;
        mean /= rmses.size();
        Real var = 0;
        for (Real r : rmses) var += (r - mean) * (r - mean);
        const Real sd = rmses.size() > 1 ? std::sqrt(var / (rmses.size() - 1)) : Real(0);
        arr.push_back({{"variant", variant}, {"rmse_mean", mean}, {"rmse_sd", sd}, {"rmse", rmses}});
        std::cout << variant << ": rmse " << mean << " +- " << sd << std::endl;
      }
      json j = {{"dataset", d.label},
                {"config_hash", hex64(fnv1a64(serialize_config(mcfg, tcfg)))},
                {"seeds", seeds},
                {"variants", arr},
                {"runtime_s", seconds_since(t0)}};
      write_json(ablate_out, j);
      return 0;
    }

    if (*export_cmd) {
      auto cks = load_checkpoints(export_ckpts);
      DataBundle d = load_data(export_data, true, true);
      const auto& c0 = cks.front();
      auto exported = export_subgraphs(models_of(cks), c0.scale, c0.extract, d.graph,
                                       pairs_of_test(d.test), export_k, export_out);
      for (const auto& e : exported)
        std::cout << "u" << d.users.external_of(e.user) << " i" << d.items.external_of(e.item)
                  << " pred=" << e.pred << " -> " << e.json_path << std::endl;
      return 0;
    }
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << std::endl;
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << std::endl;
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  igmc::tune_allocator();
  return run(argc, argv);
}
