#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "nlohmann/json.hpp"

#include "hinas/data.hpp"
#include "hinas/genotype.hpp"
#include "hinas/trainer.hpp"
#include "test_support.hpp"

#ifndef HINAS_CLI_PATH
#error "HINAS_CLI_PATH must point at the command line binary"
#endif

using namespace hinas;
using namespace hinas::testing;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch() {
  static const fs::path p = [] {
    fs::path d = fs::temp_directory_path() / "hinas_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return p;
}

// run the binary through the shell, capturing exit code and both streams
RunResult run_cli(const std::string& args, const std::string& env = "") {
  static int counter = 0;
  const fs::path out = scratch() / ("stdout_" + std::to_string(counter) + ".txt");
  const fs::path err = scratch() / ("stderr_" + std::to_string(counter) + ".txt");
  ++counter;
  const std::string cmd = env + (env.empty() ? "" : " ") + HINAS_CLI_PATH + " " + args + " > " +
                          out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = status < 0 ? status : WEXITSTATUS(status);
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

NetworkGenotype conv_heavy_genotype() {
  NetworkGenotype g;
  g.cell.nodes.resize(2);
  g.cell.nodes[0].inputs = {std::make_pair(0, OpKind::conv), std::make_pair(1, OpKind::dil)};
  g.cell.nodes[1].inputs = {std::make_pair(0, OpKind::skip), std::make_pair(2, OpKind::conv)};
  g.path.levels = {0, 1};
  g.base_width = 4;
  return g;
}

}  // namespace

TEST_CASE("help succeeds and unknown commands are configuration errors") {
  CHECK(run_cli("--help").exit_code == 0);
  CHECK(run_cli("frobnicate").exit_code == 2);
  CHECK(run_cli("").exit_code == 2);  // a subcommand is required
}

TEST_CASE("missing inputs name the offending field") {
  const RunResult r = run_cli("search --out " + (scratch() / "nodata").string());
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("dataset") != std::string::npos);

  const RunResult b = run_cli("build --genotype " + (scratch() / "absent.json").string() +
                              " --out " + (scratch() / "nob").string());
  CHECK(b.exit_code == 2);
  CHECK(b.err.find("genotype") != std::string::npos);

  const RunResult d = run_cli("derive --out " + (scratch() / "nod").string());
  CHECK(d.exit_code == 2);
  CHECK(d.err.find("checkpoint") != std::string::npos);
}

TEST_CASE("only the cpu device is accepted") {
  const fs::path out = scratch() / "dev";
  CHECK(run_cli("synth --count 1 --out " + out.string(), "HINAS_DEVICE=cuda").exit_code == 2);
  CHECK(run_cli("synth --count 1 --height 8 --width 8 --out " + out.string(),
                "HINAS_DEVICE=cpu")
            .exit_code == 0);
}

TEST_CASE("an unwritable output directory is a runtime failure") {
  const fs::path file = scratch() / "not_a_dir.txt";
  std::ofstream(file) << "x";
  const RunResult r = run_cli("bench-memory --layers 1 --nodes 1 --width 1 --image-size 8 --out " +
                              (file / "sub").string());
  CHECK(r.exit_code == 3);
}

TEST_CASE("the full pipeline runs end to end and reproduces itself") {
  const fs::path base = scratch() / "pipe";
  fs::create_directories(base);
  const std::string data_dir = (base / "data").string();
  const std::string manifest = data_dir + "/manifest.json";

  // shared tiny-scale config: 8x8 crops so 8x8 images are usable everywhere
  const fs::path cfg_path = base / "cfg.json";
  {
    nlohmann::json cfg;
    cfg["search"] = {{"crop", 8}, {"val_fraction", 0.34}, {"loss", {{"lambda", 0.0}}}};
    cfg["train"] = {{"crop", 8}, {"loss", {{"lambda", 0.0}}}};
    std::ofstream(cfg_path) << cfg.dump(2);
  }

  REQUIRE(run_cli("synth --count 3 --height 8 --width 8 --sigma 25 --seed 5 --out " + data_dir)
              .exit_code == 0);
  REQUIRE(fs::exists(manifest));
  CHECK(load_dataset(manifest).pairs.size() == 3);

  const std::string search_args =
      " --dataset " + manifest + " --config " + cfg_path.string() +
      " --layers 1 --nodes 1 --width 1 --epochs 2 --warmup 1 --patience 5 --batch 4"
      " --seed 3 --quiet";
  const fs::path s1 = base / "s1", s2 = base / "s2";
  REQUIRE(run_cli("search --out " + s1.string() + search_args).exit_code == 0);
  REQUIRE(run_cli("search --out " + s2.string() + search_args).exit_code == 0);
  for (const char* f : {"genotype.json", "best.ckpt", "search_log.csv", "resolved_config.json",
                        "search_curve.png"})
    CHECK(fs::exists(s1 / f));
  CHECK(slurp(s1 / "genotype.json") == slurp(s2 / "genotype.json"));

  // deriving from the checkpoint reproduces the searched genotype byte for byte
  const fs::path d1 = base / "d1";
  REQUIRE(run_cli("derive --checkpoint " + (s1 / "best.ckpt").string() + " --out " +
                  d1.string())
              .exit_code == 0);
  CHECK(slurp(d1 / "genotype.json") == slurp(s1 / "genotype.json"));

  const std::string genotype = (s1 / "genotype.json").string();
  const fs::path b1 = base / "b1";
  REQUIRE(run_cli("build --genotype " + genotype + " --widths wm --out " + b1.string())
              .exit_code == 0);
  CHECK(fs::exists(b1 / "built.ckpt"));
  {
    const nlohmann::json resolved = nlohmann::json::parse(slurp(b1 / "resolved_config.json"));
    CHECK(resolved.at("widths") == nlohmann::json::array({10}));
  }

  const fs::path t1 = base / "t1";
  REQUIRE(run_cli("train --genotype " + genotype + " --dataset " + manifest + " --config " +
                  cfg_path.string() +
                  " --widths ws --iterations 2 --batch 2 --eval-every 1 --seed 2 --quiet --out " +
                  t1.string())
              .exit_code == 0);
  CHECK(fs::exists(t1 / "best.ckpt"));
  CHECK(fs::exists(t1 / "train_log.csv"));
  CHECK(fs::exists(t1 / "train_curve.png"));

  const fs::path e1 = base / "e1";
  REQUIRE(run_cli("eval --checkpoint " + (t1 / "best.ckpt").string() + " --dataset " + manifest +
                  " --out " + e1.string())
              .exit_code == 0);
  REQUIRE(fs::exists(e1 / "eval_report.csv"));

  // the reported mean must match an in-process evaluation of the checkpoint
  double csv_psnr = -1.0, csv_ssim = -1.0;
  {
    std::ifstream f(e1 / "eval_report.csv");
    std::string line;
    while (std::getline(f, line))
      if (line.rfind("mean,", 0) == 0)
        REQUIRE(std::sscanf(line.c_str(), "mean,%lf,%lf", &csv_psnr, &csv_ssim) == 2);
  }
  const Checkpoint ck = Checkpoint::load((t1 / "best.ckpt").string());
  CompactNetwork net(spec_from_checkpoint(ck));
  ParamList params;
  net.collect_params(params);
  load_params(ck, params);
  const EvalReport rep = evaluate_final(net, load_dataset(manifest));
  CHECK(std::abs(rep.mean_psnr - csv_psnr) < 1e-5);
  CHECK(std::abs(rep.mean_ssim - csv_ssim) < 1e-5);
}

TEST_CASE("perturbations rewrite genotype files") {
  const fs::path base = scratch() / "perturb";
  fs::create_directories(base);
  const fs::path gpath = base / "g.json";
  const NetworkGenotype g = conv_heavy_genotype();
  std::ofstream(gpath) << serialize_genotype(g);

  const fs::path p1 = base / "r1";
  REQUIRE(run_cli("perturb --genotype " + gpath.string() + " --mode r1 --out " + p1.string())
              .exit_code == 0);
  const NetworkGenotype r1 = parse_genotype(slurp(p1 / "genotype_r1.json"));
  for (std::size_t n = 0; n < r1.cell.nodes.size(); ++n)
    for (std::size_t s = 0; s < r1.cell.nodes[n].inputs.size(); ++s) {
      const OpKind was = g.cell.nodes[n].inputs[s].second;
      const OpKind now = r1.cell.nodes[n].inputs[s].second;
      CHECK(now == (was == OpKind::conv ? OpKind::def : was));
    }

  const fs::path p2 = base / "r2";
  REQUIRE(run_cli("perturb --genotype " + gpath.string() + " --mode r2 --seed 4 --out " +
                  p2.string())
              .exit_code == 0);
  const NetworkGenotype r2 = parse_genotype(slurp(p2 / "genotype_r2.json"));
  r2.validate();
  CHECK(serialize_genotype(r2) != serialize_genotype(g));  // one edge rewired

  CHECK(run_cli("perturb --genotype " + gpath.string() + " --mode r9 --out " +
                (base / "bad").string())
            .exit_code == 2);
}

TEST_CASE("the memory bench reports shared and per-source costs") {
  const fs::path out = scratch() / "bench";
  // widths and image size large enough that retained activations, not the
  // constant parameter baseline, decide the peak ordering
  const RunResult r = run_cli(
      "bench-memory --layers 4 --nodes 2 --width 2 --image-size 32 --out " + out.string());
  REQUIRE(r.exit_code == 0);
  const nlohmann::json rep = nlohmann::json::parse(slurp(out / "bench_memory.json"));
  CHECK(rep.at("shared").at("cell_invocations").get<int>() == 12);       // 3L
  CHECK(rep.at("nonshared").at("cell_invocations").get<int>() == 24);    // 3 + 7(L-1)
  CHECK(rep.at("shared").at("peak_bytes").get<int64_t>() <
        rep.at("nonshared").at("peak_bytes").get<int64_t>());
}
