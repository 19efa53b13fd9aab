#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "doctest.h"

#include "hinas/checkpoint.hpp"
#include "hinas/optim.hpp"
#include "hinas/search.hpp"
#include "test_support.hpp"

using namespace hinas;
using namespace hinas::testing;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("hinas_search_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Supernet tiny_net(uint64_t seed) {
  SupernetConfig cfg;
  cfg.L = 1;
  cfg.N = 1;
  cfg.W = 1;
  Supernet net(cfg);
  Rng rng(seed);
  net.init(rng);
  return net;
}

SearchConfig tiny_search_config() {
  SearchConfig cfg;
  cfg.batch_size = 4;
  cfg.crop = 8;
  cfg.val_fraction = 0.34;  // 3 samples -> 1/1/1
  cfg.loss.lambda = 0.0;    // plain MSE keeps the step cheap
  cfg.verbose = false;
  cfg.seed = 7;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// one (epoch -> lr) sample per validation row of search_log.csv
std::vector<std::pair<int, double>> val_lrs(const fs::path& csv) {
  std::ifstream f(csv);
  std::string line;
  std::getline(f, line);
  REQUIRE(line == "epoch,split,psnr,ssim,loss,lr,wallclock");
  std::vector<std::pair<int, double>> out;
  while (std::getline(f, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() >= 6 && cells[1] == "val")
      out.push_back({std::stoi(cells[0]), std::stod(cells[5])});
  }
  return out;
}

}  // namespace

TEST_CASE("dataset splits are disjoint, exhaustive and deterministic") {
  SUBCASE("reference sizes") {
    const SplitIndices s = split_dataset(300, 0.02, 11);
    CHECK(s.val.size() == 6);
    CHECK(s.train_w.size() == 147);
    CHECK(s.train_a.size() == 147);
    const SplitIndices t = split_dataset(3, 0.02, 11);
    CHECK(t.val.size() == 1);
    CHECK(t.train_w.size() == 1);
    CHECK(t.train_a.size() == 1);
  }

  SUBCASE("partition invariants") {
    for (int n : {3, 10, 47, 301}) {
      const SplitIndices s = split_dataset(n, 0.1, uint64_t(n));
      std::vector<int> all = s.val;
      all.insert(all.end(), s.train_w.begin(), s.train_w.end());
      all.insert(all.end(), s.train_a.begin(), s.train_a.end());
      std::sort(all.begin(), all.end());
      std::vector<int> want(static_cast<std::size_t>(n));
      std::iota(want.begin(), want.end(), 0);
      CHECK(all == want);
      CHECK(s.train_w.size() >= s.train_a.size());
      CHECK(s.train_w.size() - s.train_a.size() <= 1);
      CHECK(std::is_sorted(s.val.begin(), s.val.end()));
    }
  }

  SUBCASE("seed behaviour") {
    const SplitIndices a = split_dataset(300, 0.02, 5);
    const SplitIndices b = split_dataset(300, 0.02, 5);
    const SplitIndices c = split_dataset(300, 0.02, 6);
    CHECK(a.val == b.val);
    CHECK(a.train_w == b.train_w);
    CHECK(a.train_a == b.train_a);
    CHECK((a.val != c.val || a.train_w != c.train_w));
  }

  SUBCASE("oversized validation fraction keeps one sample per training half") {
    const SplitIndices s = split_dataset(10, 0.95, 1);
    CHECK(s.val.size() == 8);
    CHECK(s.train_w.size() == 1);
    CHECK(s.train_a.size() == 1);
  }

  SUBCASE("rejections") {
    CHECK_THROWS_AS(split_dataset(2, 0.1, 0), ConfigError);
    CHECK_THROWS_AS(split_dataset(10, 0.0, 0), ConfigError);
    CHECK_THROWS_AS(split_dataset(10, 1.0, 0), ConfigError);
  }
}

TEST_CASE("search stops after `patience` non-improving evaluations") {
  const fs::path dir = fresh_dir("earlystop");
  Dataset ds = synth_dataset(3, 8, 8, 1, 25.0, 3);
  Supernet net = tiny_net(1);
  SearchConfig cfg = tiny_search_config();
  cfg.max_epochs = 50;
  cfg.warmup_epochs = 0;
  cfg.patience = 2;

  // scripted scores: improve twice, then flatline below the best
  EvalFn eval = [](Supernet&, int epoch) {
    const double p = epoch <= 2 ? 10.0 + epoch : 5.0;
    return std::make_pair(p, 0.5);
  };
  const SearchResult res = run_search(net, ds, cfg, dir.string(), eval);

  CHECK(res.stopped_early);
  CHECK(res.best_epoch == 2);
  CHECK(res.best_psnr == 12.0);
  REQUIRE(res.history.size() == 4);  // epochs 1..4: two improvements, two strikes
  CHECK(res.history.back().epoch == 4);

  Checkpoint best = Checkpoint::load(res.checkpoint_path);
  CHECK(best.kind == "supernet");
  CHECK(best.step == 2);

  // the network is left at the best recorded state
  ParamList params;
  net.collect_params(params);
  for (const ParamRef& p : params) {
    CAPTURE(p.name);
    CHECK(max_abs_diff(best.get_tensor(p.name), *p.value) == 0.0);
  }
  CHECK(best.get_vector("alpha") == net.alpha().raw());

  // the derived genotype is persisted verbatim
  CHECK(slurp(dir / "genotype.json") == serialize_genotype(res.genotype));
  fs::remove_all(dir);
}

TEST_CASE("equal-psnr evaluations fall back to the ssim tie-break") {
  const fs::path dir = fresh_dir("tiebreak");
  Dataset ds = synth_dataset(3, 8, 8, 1, 25.0, 3);
  Supernet net = tiny_net(2);
  SearchConfig cfg = tiny_search_config();
  cfg.max_epochs = 50;
  cfg.warmup_epochs = 0;
  cfg.patience = 2;

  // constant psnr; ssim improves twice then repeats the best value, which
  // must not count as an improvement
  EvalFn eval = [](Supernet&, int epoch) {
    const double s = epoch == 1 ? 0.5 : 0.6;
    return std::make_pair(20.0, s);
  };
  const SearchResult res = run_search(net, ds, cfg, dir.string(), eval);
  CHECK(res.stopped_early);
  CHECK(res.best_epoch == 2);
  CHECK(res.best_psnr == 20.0);
  CHECK(res.best_ssim == 0.6);
  CHECK(res.history.size() == 4);
  fs::remove_all(dir);
}

TEST_CASE("warmup epochs leave the architecture logits untouched") {
  const fs::path dir = fresh_dir("warmup");
  Dataset ds = synth_dataset(3, 8, 8, 1, 25.0, 3);
  Supernet net = tiny_net(3);
  SearchConfig cfg = tiny_search_config();
  cfg.max_epochs = 4;
  cfg.warmup_epochs = 2;
  cfg.patience = 10;

  const std::vector<double> alpha0 = net.alpha().raw();
  const std::vector<double> beta0 = net.beta().raw();
  std::vector<std::vector<double>> alpha_after;
  EvalFn eval = [&](Supernet& n, int epoch) {
    alpha_after.push_back(n.alpha().raw());
    return std::make_pair(double(epoch), 0.5);  // always improving, no early stop
  };
  const SearchResult res = run_search(net, ds, cfg, dir.string(), eval);

  REQUIRE(alpha_after.size() == 4);
  CHECK(alpha_after[0] == alpha0);  // frozen through warmup
  CHECK(alpha_after[1] == alpha0);
  CHECK(alpha_after[2] != alpha0);  // first joint epoch moves them
  CHECK(alpha_after[3] != alpha_after[2]);
  CHECK(!res.stopped_early);
  if (!beta0.empty()) CHECK(net.beta().raw() != beta0);
  fs::remove_all(dir);
}

TEST_CASE("the logged learning rate follows the per-step cosine schedule") {
  const fs::path dir = fresh_dir("lrlog");
  Dataset ds = synth_dataset(3, 8, 8, 1, 25.0, 3);
  Supernet net = tiny_net(4);
  SearchConfig cfg = tiny_search_config();
  cfg.max_epochs = 5;
  cfg.warmup_epochs = 1;
  cfg.patience = 10;

  EvalFn eval = [](Supernet&, int epoch) { return std::make_pair(double(epoch), 0.5); };
  run_search(net, ds, cfg, dir.string(), eval);

  // one training batch per epoch here, so epoch e logs the lr of step e-1
  const auto rows = val_lrs(dir / "search_log.csv");
  REQUIRE(rows.size() == 5);
  for (const auto& [epoch, lr] : rows) {
    const double want = cosine_lr(epoch - 1, cfg.max_epochs, cfg.weight_lr_max, cfg.weight_lr_min);
    CHECK(std::abs(lr - want) < 1e-6 * std::max(1.0, std::abs(want)));
  }
  CHECK(rows.front().second > rows.back().second);
  fs::remove_all(dir);
}

TEST_CASE("identical seeds reproduce the search run exactly") {
  const fs::path dir1 = fresh_dir("repro1");
  const fs::path dir2 = fresh_dir("repro2");
  Dataset ds = synth_dataset(3, 8, 8, 1, 25.0, 3);
  SearchConfig cfg = tiny_search_config();
  cfg.max_epochs = 2;
  cfg.warmup_epochs = 1;
  cfg.patience = 10;

  Supernet n1 = tiny_net(9);
  Supernet n2 = tiny_net(9);
  const SearchResult r1 = run_search(n1, ds, cfg, dir1.string());
  const SearchResult r2 = run_search(n2, ds, cfg, dir2.string());

  REQUIRE(r1.history.size() == r2.history.size());
  for (std::size_t i = 0; i < r1.history.size(); ++i) {
    CHECK(r1.history[i].psnr == r2.history[i].psnr);
    CHECK(r1.history[i].ssim == r2.history[i].ssim);
  }
  CHECK(slurp(dir1 / "genotype.json") == slurp(dir2 / "genotype.json"));
  CHECK(serialize_genotype(r1.genotype) == serialize_genotype(r2.genotype));
  CHECK(n1.alpha().raw() == n2.alpha().raw());
  fs::remove_all(dir1);
  fs::remove_all(dir2);
}

TEST_CASE("tiled evaluation guards its index set") {
  Dataset ds = synth_dataset(1, 8, 8, 1, 25.0, 3);
  Supernet net = tiny_net(5);
  CHECK_THROWS_AS(evaluate_supernet(net, ds, {}), ConfigError);
  CHECK_THROWS_AS(evaluate_supernet(net, ds, {4}), ConfigError);
}
