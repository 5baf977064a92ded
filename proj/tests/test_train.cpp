#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "igmc/train.hpp"

#include "oracles.hpp"

using namespace igmc;

namespace {

// 12x12 graph where the rating depends only on the user: the bottom half rates
// everything 1, the top half 2. Easy to overfit from subgraph structure alone.
BipartiteGraph blocky_graph(uint64_t seed = 5) {
  Rng rng(seed);
  std::vector<RatingTriple> triples;
  for (int u = 0; u < 12; ++u)
    for (int v = 0; v < 12; ++v) {
      if (rng.next_unit() > 0.7) continue;
      const int type = u < 6 ? 0 : 1;
      triples.push_back({u, v, Real(type + 1), type});
    }
  return BipartiteGraph::build(std::move(triples), 12, 12, RatingScale({1, 2}));
}

ModelConfig tiny_model(int num_types = 2) {
  ModelConfig cfg;
  cfg.num_rating_types = num_types;
  cfg.hop = 1;
  cfg.layer_dims = {8, 8};
  cfg.num_bases = 2;
  cfg.mlp_hidden = 16;
  cfg.mlp_dropout = 0;
  return cfg;
}

TrainConfig tiny_train(int epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 20;
  t.lr = 0.01;
  t.lr_decay_every = 1000;
  t.arr_lambda = 0;
  t.edge_dropout = 0;
  t.max_nodes_per_hop = 0;
  t.seed = 11;
  return t;
}

}  // namespace

TEST_CASE("mse loss matches the hand-computed value and its gradient") {
  Tensor pred = Tensor::from_rows(3, 1, {1, 2, 3}, true);
  Tensor target = Tensor::from_rows(3, 1, {2, 4, 3});
  Tape tape;
  Tensor loss = mse_loss(tape, pred, target);
  CHECK(loss.item() == Catch::Approx((1.0 + 4.0 + 0.0) / 3).margin(1e-14));
  tape.backward(loss);
  // d/dpred_i (1/n) sum (pred-target)^2 = 2(pred_i-target_i)/n
  CHECK(pred.grad_at(0, 0) == Catch::Approx(-2.0 / 3).margin(1e-14));
  CHECK(pred.grad_at(1, 0) == Catch::Approx(-4.0 / 3).margin(1e-14));
  CHECK(pred.grad_at(2, 0) == Catch::Approx(0.0).margin(1e-14));

  Tape t2;
  CHECK_THROWS_AS(mse_loss(t2, Tensor::zeros(3, 2), target), ArgumentError);
  CHECK_THROWS_AS(mse_loss(t2, Tensor::zeros(4, 1), target), ArgumentError);
}

TEST_CASE("arr loss sums squared row differences across layers") {
  Tensor w1 = Tensor::from_rows(3, 2, {1, 0, 2, 2, 0, 1}, true);
  // rows: (1,0) -> (2,2) -> (0,1); diffs (1,2) and (-2,-1); 5 + 5 = 10
  Tape tape;
  CHECK(arr_loss(tape, {w1}).item() == Catch::Approx(10.0).margin(1e-12));

  Tensor w2 = Tensor::from_rows(2, 1, {1, 4}, true);  // diff 3 -> 9
  Tape t2;
  CHECK(arr_loss(t2, {w1, w2}).item() == Catch::Approx(19.0).margin(1e-12));

  Tensor single = Tensor::from_rows(1, 4, {1, 2, 3, 4}, true);
  Tape t3;
  CHECK(arr_loss(t3, {single}).item() == 0.0);  // one rating type: nothing adjacent

  std::vector<std::pair<std::string, Tensor>> params = {{"w1", w1}, {"w2", w2}};
  oracle::check_gradients(params, [&](Tape& t) { return arr_loss(t, {w1, w2}); });
}

TEST_CASE("training overfits an easy synthetic dataset") {
  BipartiteGraph g = blocky_graph();
  ModelConfig mcfg = tiny_model();
  TrainConfig tcfg = tiny_train(40);

  TrainResult res = train(g, mcfg, tcfg);
  REQUIRE(res.report.epochs.size() == 40);
  const Real first = res.report.epochs.front().mse;
  const Real last = res.report.epochs.back().mse;
  INFO("first epoch mse " << first << ", last " << last);
  CHECK(last < first / 5);
  CHECK(last < 0.1);
  for (const auto& st : res.report.epochs) {
    CHECK(std::isfinite(st.loss));
    CHECK(st.seconds >= 0);
  }
  // default snapshot: final epoch only
  REQUIRE(res.snapshots.size() == 1);
  CHECK(res.snapshots[0].first == 40);
}

TEST_CASE("learning rate decays stepwise on the configured schedule") {
  BipartiteGraph g = blocky_graph();
  TrainConfig tcfg = tiny_train(5);
  tcfg.lr = 1e-3;
  tcfg.lr_decay_factor = 0.5;
  tcfg.lr_decay_every = 2;
  TrainResult res = train(g, tiny_model(), tcfg);
  const std::vector<Real> want = {1e-3, 1e-3, 5e-4, 5e-4, 2.5e-4};
  REQUIRE(res.report.epochs.size() == want.size());
  for (size_t i = 0; i < want.size(); ++i)
    CHECK(res.report.epochs[i].lr == Catch::Approx(want[i]).margin(1e-18));
}

TEST_CASE("training is reproducible from its seed") {
  BipartiteGraph g = blocky_graph();
  ModelConfig mcfg = tiny_model();
  TrainConfig tcfg = tiny_train(3);
  tcfg.edge_dropout = 0.2;  // exercise the stochastic path too
  mcfg.mlp_dropout = 0.3;

  TrainResult a = train(g, mcfg, tcfg);
  TrainResult b = train(g, mcfg, tcfg);
  auto na = a.params.named_tensors(), nb = b.params.named_tensors();
  REQUIRE(na.size() == nb.size());
  for (size_t i = 0; i < na.size(); ++i) {
    CHECK(na[i].first == nb[i].first);
    CHECK(na[i].second.values() == nb[i].second.values());  // bitwise
  }

  tcfg.seed = 12;
  TrainResult c = train(g, mcfg, tcfg);
  bool any_diff = false;
  auto nc = c.params.named_tensors();
  for (size_t i = 0; i < na.size(); ++i)
    if (na[i].second.values() != nc[i].second.values()) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("snapshots land on the requested epochs and round-trip through disk") {
  BipartiteGraph g = blocky_graph();
  ModelConfig mcfg = tiny_model();
  TrainConfig tcfg = tiny_train(4);
  tcfg.checkpoint_epochs = {2, 4};
  const auto prefix = (std::filesystem::temp_directory_path() / "igmc_train_test").string();

  TrainResult res = train(g, mcfg, tcfg, prefix);
  REQUIRE(res.snapshots.size() == 2);
  CHECK(res.snapshots[0].first == 2);
  CHECK(res.snapshots[1].first == 4);
  REQUIRE(res.report.checkpoint_paths.size() == 2);

  for (size_t i = 0; i < res.snapshots.size(); ++i) {
    Checkpoint c = load_checkpoint(res.report.checkpoint_paths[i]);
    CHECK(c.epoch == res.snapshots[i].first);
    CHECK(c.params.config == mcfg);
    CHECK(c.scale == g.scale());
    auto disk = c.params.named_tensors();
    auto mem = res.snapshots[i].second.named_tensors();
    REQUIRE(disk.size() == mem.size());
    for (size_t j = 0; j < disk.size(); ++j)
      CHECK(disk[j].second.values() == mem[j].second.values());
  }
  // the two snapshots are genuinely different states
  CHECK(res.snapshots[0].second.mlp_w1.values() != res.snapshots[1].second.mlp_w1.values());
  // final params continue past the last snapshot only if epochs > last checkpoint;
  // here they coincide
  CHECK(res.params.mlp_w1.values() == res.snapshots[1].second.mlp_w1.values());
}

TEST_CASE("ensemble prediction is the mean of its members") {
  BipartiteGraph g = blocky_graph();
  ModelConfig mcfg = tiny_model();
  TrainConfig tcfg = tiny_train(2);
  tcfg.checkpoint_epochs = {1, 2};
  TrainResult res = train(g, mcfg, tcfg);
  std::vector<ModelParams> both = {clone_params(res.snapshots[0].second),
                                   clone_params(res.snapshots[1].second)};

  std::vector<std::pair<int, int>> pairs = {{0, 0}, {3, 7}, {11, 2}, {6, 6}};
  PredictOptions raw;
  raw.clip = false;
  const ExtractConfig ecfg{1, 0};

  auto p1 = predict({both[0]}, g.scale(), ecfg, g, pairs, raw);
  auto p2 = predict({both[1]}, g.scale(), ecfg, g, pairs, raw);
  auto ens = predict(both, g.scale(), ecfg, g, pairs, raw);
  REQUIRE(ens.size() == pairs.size());
  // the mean is computed incrementally, so mirror that op order exactly
  for (size_t i = 0; i < pairs.size(); ++i)
    CHECK(ens[i] == p1[i] + (p2[i] - p1[i]) / 2);

  // repeatable
  CHECK(predict(both, g.scale(), ecfg, g, pairs, raw) == ens);

  // an ensemble of copies of one model is that model, bit for bit, at any
  // width; sum-then-divide would fail this at k=3 ((p+p+p)/3 rounds twice)
  std::vector<ModelParams> twins = {clone_params(both[0]), clone_params(both[0])};
  CHECK(predict(twins, g.scale(), ecfg, g, pairs, raw) == p1);
  twins.push_back(clone_params(both[0]));
  CHECK(predict(twins, g.scale(), ecfg, g, pairs, raw) == p1);

  // clipping clamps into the scale range
  PredictOptions clipped = raw;
  clipped.clip = true;
  auto pc = predict(both, g.scale(), ecfg, g, pairs, clipped);
  for (size_t i = 0; i < pairs.size(); ++i) {
    CHECK(pc[i] >= g.scale().min_value());
    CHECK(pc[i] <= g.scale().max_value());
    CHECK(pc[i] == std::clamp(ens[i], g.scale().min_value(), g.scale().max_value()));
  }
}

TEST_CASE("predict rejects inconsistent inputs") {
  BipartiteGraph g = blocky_graph();
  ModelParams m1 = init_params(tiny_model(), 1);
  ModelConfig other = tiny_model();
  other.mlp_hidden = 8;
  ModelParams m2 = init_params(other, 1);
  std::vector<std::pair<int, int>> pairs = {{0, 0}};

  CHECK_THROWS_AS(predict({}, g.scale(), {1, 0}, g, pairs), ArgumentError);
  CHECK_THROWS_AS(predict({m1, m2}, g.scale(), {1, 0}, g, pairs), ArgumentError);
  RatingScale wrong({1, 2, 3});
  CHECK_THROWS_AS(predict({m1}, wrong, {1, 0}, g, pairs), ArgumentError);
  PredictOptions with_content;
  Tensor feats = Tensor::zeros(12, 3);
  with_content.user_content = &feats;
  CHECK_THROWS_AS(predict({m1}, g.scale(), {1, 0}, g, pairs, with_content), ArgumentError);
}

TEST_CASE("a diverging run fails fast with a located error") {
  BipartiteGraph g = blocky_graph();
  TrainConfig tcfg = tiny_train(2);
  tcfg.lr = 1e200;  // guarantees overflow after the first optimizer step
  bool threw = false;
  try {
    train(g, tiny_model(), tcfg);
  } catch (const NumericalError& e) {
    threw = true;
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("train validates model/data agreement") {
  BipartiteGraph g = blocky_graph();  // 2 rating types
  CHECK_THROWS_AS(train(g, tiny_model(5), tiny_train(1)), ArgumentError);

  ModelConfig with_content = tiny_model();
  with_content.content_dim = 3;
  CHECK_THROWS_AS(train(g, with_content, tiny_train(1)), ArgumentError);

  Tensor wrong_width = Tensor::zeros(12, 2);
  CHECK_THROWS_AS(train(g, with_content, tiny_train(1), "", &wrong_width, nullptr),
                  ArgumentError);

  TrainConfig bad = tiny_train(1);
  bad.checkpoint_epochs = {5};
  CHECK_THROWS_AS(train(g, tiny_model(), bad), ArgumentError);
}

TEST_CASE("config text serializes and parses back unchanged") {
  ModelConfig m = tiny_model();
  m.pooling = Pooling::Sum;
  m.concat_pre_activation = true;
  m.content_dim = 0;
  TrainConfig t = tiny_train(7);
  t.checkpoint_epochs = {3, 7};
  t.seed = 18446744073709551615ULL;
  t.lr = 0.00123456789012345;

  auto [m2, t2] = parse_config(serialize_config(m, t));
  CHECK(m2 == m);
  CHECK(t2 == t);
}

TEST_CASE("config text handles comments, spacing, and partial overrides") {
  ModelConfig m;
  TrainConfig t;
  apply_config_text(m, t,
                    "# full line comment\n"
                    "lr = 0.005  # trailing comment\n"
                    "\n"
                    "epochs=3\n"
                    "pooling=sum\n"
                    "checkpoint_epochs=1,3\n");
  CHECK(t.lr == Catch::Approx(0.005));
  CHECK(t.epochs == 3);
  CHECK(m.pooling == Pooling::Sum);
  CHECK(t.checkpoint_epochs == std::vector<int>{1, 3});
  // untouched keys keep their defaults
  CHECK(t.batch_size == TrainConfig{}.batch_size);
  CHECK(m.layer_dims == ModelConfig{}.layer_dims);

  ModelConfig m2;
  TrainConfig t2;
  CHECK_THROWS_AS(apply_config_text(m2, t2, "bogus=1\n"), ArgumentError);
  CHECK_THROWS_AS(apply_config_text(m2, t2, "epochs=abc\n"), ArgumentError);
  CHECK_THROWS_AS(apply_config_text(m2, t2, "pooling=max\n"), ArgumentError);
  CHECK_THROWS_AS(apply_config_text(m2, t2, "lr 0.1\n"), ArgumentError);
  CHECK_THROWS_AS(apply_config_text(m2, t2, "seed=-4\n"), ArgumentError);
}
