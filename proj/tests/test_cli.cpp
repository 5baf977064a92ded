#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

#include "igmc/common.hpp"

// End-to-end checks of the installed binary: exit codes and artifacts only.

namespace {

namespace fs = std::filesystem;

int run(const std::string& args) {
  const std::string cmd = std::string(IGMC_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  REQUIRE(WIFEXITED(rc));
  return WEXITSTATUS(rc);
}

struct Fixture {
  fs::path dir;
  std::string train_tsv, test_tsv, pairs_tsv;

  Fixture() {
    dir = fs::temp_directory_path() / "igmc_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    train_tsv = (dir / "train.tsv").string();
    test_tsv = (dir / "test.tsv").string();
    pairs_tsv = (dir / "pairs.tsv").string();

    // 10x10 block pattern, 1-based external ids, every 7th rating held out
    igmc::Rng rng(99);
    std::ofstream tr(train_tsv), te(test_tsv), pf(pairs_tsv);
    int n = 0;
    for (int u = 1; u <= 10; ++u)
      for (int v = 1; v <= 10; ++v) {
        if (rng.next_unit() > 0.8) continue;
        const int rating = (u <= 5) == (v <= 5) ? 3 : ((u + v) % 2 ? 1 : 2);
        ((++n % 7 == 0) ? te : tr) << u << '\t' << v << '\t' << rating << '\n';
      }
    pf << "1\t1\n3\t8\n10\t2\n";
  }
};

const Fixture& fixture() {
  static Fixture f;
  return f;
}

std::string q(const std::string& s) { return "'" + s + "'"; }

}  // namespace

TEST_CASE("cli argument errors exit with status 1") {
  CHECK(run("") == 1);                  // a subcommand is required
  CHECK(run("frobnicate") == 1);        // unknown subcommand
  CHECK(run("train --bogus-flag") == 1);
  CHECK(run("evaluate --train x.tsv --test y.tsv") == 1);  // missing --checkpoint
  CHECK(run("--help") == 0);
  CHECK(run("train --help") == 0);
}

TEST_CASE("cli data errors exit with status 2") {
  const auto& f = fixture();
  CHECK(run("ingest --train /nonexistent/ratings.tsv") == 2);
  const auto garbled = (f.dir / "garbled.tsv").string();
  std::ofstream(garbled) << "1\t2\n";  // two columns is neither supported format
  CHECK(run("ingest --train " + q(garbled)) == 2);
}

TEST_CASE("ingest reports stats and writes canonical artifacts") {
  const auto& f = fixture();
  const auto out = (f.dir / "ingested").string();
  CHECK(run("ingest --train " + q(f.train_tsv) + " --test " + q(f.test_tsv) + " --out " +
            q(out)) == 0);
  REQUIRE(fs::exists(out + "/stats.json"));
  REQUIRE(fs::exists(out + "/edges.tsv"));
  REQUIRE(fs::exists(out + "/users.tsv"));
  REQUIRE(fs::exists(out + "/items.tsv"));

  std::ifstream sf(out + "/stats.json");
  nlohmann::json stats = nlohmann::json::parse(sf);
  CHECK(stats.at("num_users").get<int>() == 10);
  CHECK(stats.at("num_items").get<int>() == 10);
  CHECK(stats.at("rating_values").size() == 3);
  CHECK(stats.at("train_ratings").get<int>() > 50);
  CHECK(stats.at("test_ratings").get<int>() > 5);
}

TEST_CASE("train, evaluate, and predict round-trip through checkpoints") {
  const auto& f = fixture();
  const auto prefix = (f.dir / "run/model").string();
  const std::string common = " --train " + q(f.train_tsv) + " --test " + q(f.test_tsv) +
                             " --epochs 2 --batch-size 16 --checkpoint-epochs 1,2" +
                             " --max-nodes-per-hop 0 --edge-dropout 0 --seed 5 --quiet";
  CHECK(run("train" + common + " --out " + q(prefix)) == 0);

  const std::string ck1 = prefix + "_epoch1.ckpt", ck2 = prefix + "_epoch2.ckpt";
  REQUIRE(fs::exists(ck1));
  REQUIRE(fs::exists(ck2));
  REQUIRE(fs::exists(prefix + "_report.jsonl"));
  REQUIRE(fs::exists(prefix + "_results.json"));

  {
    std::ifstream rf(prefix + "_results.json");
    nlohmann::json results = nlohmann::json::parse(rf);
    CHECK(results.at("checkpoints").size() == 2);
    CHECK(results.contains("config_hash"));
    CHECK(results.at("eval").at("rmse_clipped").get<double>() > 0);
    std::ifstream lf(prefix + "_report.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(lf, line)) {
      nlohmann::json epoch = nlohmann::json::parse(line);
      CHECK(epoch.at("epoch").get<int>() == ++lines);
      CHECK(epoch.at("loss").get<double>() > 0);
    }
    CHECK(lines == 2);
  }

  const auto eval_json = (f.dir / "eval.json").string();
  CHECK(run("evaluate --train " + q(f.train_tsv) + " --test " + q(f.test_tsv) +
            " --checkpoint " + q(ck1) + " --checkpoint " + q(ck2) + " --out " + q(eval_json) +
            " --quiet") == 0);
  {
    std::ifstream ef(eval_json);
    nlohmann::json ev = nlohmann::json::parse(ef);
    const double rmse = ev.at("eval").at("rmse_clipped").get<double>();
    CHECK(rmse > 0);
    CHECK(rmse < 3);  // the whole scale is only 1..3 wide
    CHECK(ev.at("eval").at("count").get<int>() > 5);
  }

  const auto preds_tsv = (f.dir / "preds.tsv").string();
  CHECK(run("predict --train " + q(f.train_tsv) + " --checkpoint " + q(ck2) + " --pairs " +
            q(f.pairs_tsv) + " --out " + q(preds_tsv) + " --quiet") == 0);
  {
    std::ifstream pf(preds_tsv);
    std::string line;
    int lines = 0;
    while (std::getline(pf, line)) {
      ++lines;
      std::istringstream ss(line);
      long long u, v;
      double p;
      REQUIRE((ss >> u >> v >> p));
      CHECK(u >= 1);
      CHECK(v >= 1);
      CHECK(p >= 1.0);  // clipped into the rating range
      CHECK(p <= 3.0);
    }
    CHECK(lines == 3);
  }

  // a checkpoint from this model cannot evaluate a dataset with another scale
  const auto other = (f.dir / "other.tsv").string();
  std::ofstream(other) << "1\t1\t9\n2\t2\t8\n1\t2\t9\n2\t1\t8\n";
  CHECK(run("evaluate --train " + q(other) + " --test " + q(other) + " --checkpoint " + q(ck2) +
            " --quiet") != 0);

  // pairs with ids the training data never saw are a data error
  const auto bad_pairs = (f.dir / "bad_pairs.tsv").string();
  std::ofstream(bad_pairs) << "1\t1\n77\t1\n";
  CHECK(run("predict --train " + q(f.train_tsv) + " --checkpoint " + q(ck2) + " --pairs " +
            q(bad_pairs) + " --quiet") == 2);
}
