// Command-line front end: reproducible search / derive / build / train /
// eval / perturb / bench-memory / synth runs driven by a JSON config plus
// flag overrides. Exit codes: 0 success, 2 configuration error, 3 runtime
// failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nlohmann/json.hpp"

#include "hinas/checkpoint.hpp"
#include "hinas/data.hpp"
#include "hinas/genotype.hpp"
#include "hinas/plot.hpp"
#include "hinas/search.hpp"
#include "hinas/supernet.hpp"
#include "hinas/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hinas;

namespace {

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path);
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
}

const json* find_path(const json& root, const std::string& dotted) {
  const json* cur = &root;
  std::size_t pos = 0;
  while (pos < dotted.size()) {
    const std::size_t dot = dotted.find('.', pos);
    const std::string key = dotted.substr(pos, dot == std::string::npos ? dot : dot - pos);
    if (!cur->is_object() || !cur->contains(key)) return nullptr;
    cur = &(*cur)[key];
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  return cur;
}

template <typename T>
void from_config(const json& cfg, const std::string& dotted, T& dst) {
  if (const json* p = find_path(cfg, dotted)) {
    try {
      dst = p->get<T>();
    } catch (const json::exception&) {
      throw ConfigError(dotted + ": invalid value '" + p->dump() + "'");
    }
  }
}

void write_resolved(const json& resolved, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream f(out_dir + "/resolved_config.json", std::ios::trunc);
  f << resolved.dump(2) << "\n";
}

Dataset load_manifest_or_die(const std::string& path, const char* field) {
  if (path.empty())
    throw ConfigError(std::string(field) +
                      ": missing dataset manifest path (flag --" + field +
                      " or config field '" + field + "')");
  return load_dataset(path);
}

NetworkGenotype load_genotype_file(const std::string& path) {
  if (path.empty())
    throw ConfigError("genotype: missing genotype file path (flag --genotype)");
  std::ifstream f(path);
  if (!f) throw ConfigError("genotype: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_genotype(text);
}

std::vector<int> parse_widths_arg(const NetworkGenotype& g, const std::string& arg) {
  if (arg.empty() || arg == "ws" || arg == "w40" || arg == "wm")
    return preset_widths(g, arg.empty() ? "ws" : arg);
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos <= arg.size()) {
    const std::size_t comma = arg.find(',', pos);
    const std::string tok = arg.substr(pos, comma == std::string::npos ? comma : comma - pos);
    try {
      out.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw ConfigError("widths: expected ws, w40, wm or a comma-separated int list, got '" +
                        arg + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

json json_widths(const std::vector<int>& w) { return json(w); }

// ---------------------------------------------------------------------------
// subcommand state

struct CommonArgs {
  std::string config_path;
  std::string out = "run";
  uint64_t seed = 0;

  void attach(CLI::App* sc) {
    sc->add_option("--config", config_path, "JSON config file; flags override its fields");
    sc->add_option("--out", out, "output directory");
    sc->add_option("--seed", seed, "master seed");
  }
  // flag > config > default
  void resolve(const CLI::App& sc, const json& cfg) {
    if (!sc.count("--out")) from_config(cfg, "out", out);
    if (!sc.count("--seed")) from_config(cfg, "seed", seed);
  }
};

struct NetArgs {
  int L = 4, N = 5, W = 10, channels = 1;
  bool residual = false;

  void attach(CLI::App* sc) {
    sc->add_option("--layers", L, "supernet layer count");
    sc->add_option("--nodes", N, "nodes per cell");
    sc->add_option("--width", W, "base width W");
    sc->add_option("--channels", channels, "image channels (1 or 3)");
    sc->add_flag("--residual", residual, "add the input back onto the output");
  }
  void resolve(const CLI::App& sc, const json& cfg) {
    if (!sc.count("--layers")) from_config(cfg, "net.L", L);
    if (!sc.count("--nodes")) from_config(cfg, "net.N", N);
    if (!sc.count("--width")) from_config(cfg, "net.W", W);
    if (!sc.count("--channels")) from_config(cfg, "net.image_channels", channels);
    if (!sc.count("--residual")) from_config(cfg, "net.residual_output", residual);
  }
  SupernetConfig supernet(bool nonshared = false) const {
    SupernetConfig c;
    c.L = L, c.N = N, c.W = W, c.image_channels = channels;
    c.include_nonshared = nonshared;
    c.residual_output = residual;
    c.validate();
    return c;
  }
  json to_json() const {
    return {{"L", L}, {"N", N}, {"W", W}, {"image_channels", channels},
            {"residual_output", residual}};
  }
};

int cmd_search(const CommonArgs& common, const NetArgs& netargs, const SearchConfig& scfg,
               const std::string& dataset_path) {
  Dataset data = load_manifest_or_die(dataset_path, "dataset");
  SupernetConfig nc = netargs.supernet();
  nc.image_channels = data.channels;
  Supernet net(nc);
  Rng root(scfg.seed);
  Rng net_rng = root.fork("net");
  net.init(net_rng);

  json resolved;
  resolved["command"] = "search";
  resolved["dataset"] = dataset_path;
  resolved["out"] = common.out;
  resolved["seed"] = scfg.seed;
  resolved["net"] = {{"L", nc.L}, {"N", nc.N}, {"W", nc.W},
                     {"image_channels", nc.image_channels},
                     {"residual_output", nc.residual_output}};
  resolved["search"] = {{"max_epochs", scfg.max_epochs},
                        {"batch_size", scfg.batch_size},
                        {"weight_lr_max", scfg.weight_lr_max},
                        {"weight_lr_min", scfg.weight_lr_min},
                        {"momentum", scfg.momentum},
                        {"weight_decay", scfg.weight_decay},
                        {"arch_lr", scfg.arch_lr},
                        {"arch_weight_decay", scfg.arch_weight_decay},
                        {"warmup_epochs", scfg.warmup_epochs},
                        {"patience", scfg.patience},
                        {"grad_clip", scfg.grad_clip},
                        {"crop", scfg.crop},
                        {"val_fraction", scfg.val_fraction},
                        {"loss", {{"lambda", scfg.loss.lambda}}}};
  write_resolved(resolved, common.out);

  const SearchResult res = run_search(net, data, scfg, common.out);
  plot_history_png(res.history, common.out + "/search_curve.png", "architecture search");
  std::printf("best epoch %d  psnr %.3f  ssim %.4f%s\n", res.best_epoch, res.best_psnr,
              res.best_ssim, res.stopped_early ? "  (stopped early)" : "");
  std::printf("genotype: %s/genotype.json\ncheckpoint: %s\n", common.out.c_str(),
              res.checkpoint_path.c_str());
  return 0;
}

int cmd_derive(const CommonArgs& common, const std::string& checkpoint_path) {
  if (checkpoint_path.empty())
    throw ConfigError("checkpoint: missing search checkpoint path (flag --checkpoint)");
  const Checkpoint ck = Checkpoint::load(checkpoint_path);
  if (ck.kind != "supernet")
    throw ConfigError("checkpoint: expected kind 'supernet', got '" + ck.kind + "'");
  if (!ck.meta.contains("net")) throw ConfigError("checkpoint: missing net metadata");
  const json& nc = ck.meta["net"];
  const int N = nc.at("N").get<int>();
  const int L = nc.at("L").get<int>();
  const int W = nc.at("W").get<int>();

  AlphaTable alpha(N);
  const std::vector<double> a = ck.get_vector("alpha");
  if (a.size() != alpha.raw().size()) throw ConfigError("checkpoint: alpha size mismatch");
  std::copy(a.begin(), a.end(), alpha.raw().begin());
  BetaTable beta(L);
  if (!beta.raw().empty()) {
    const std::vector<double> b = ck.get_vector("beta");
    if (b.size() != beta.raw().size()) throw ConfigError("checkpoint: beta size mismatch");
    std::copy(b.begin(), b.end(), beta.raw().begin());
  }

  NetworkGenotype g;
  g.cell = derive_cell(alpha);
  g.path = derive_width_path(beta, L);
  g.base_width = W;
  g.validate();

  fs::create_directories(common.out);
  const std::string path = common.out + "/genotype.json";
  std::ofstream f(path, std::ios::trunc);
  f << serialize_genotype(g);
  std::printf("derived genotype from epoch %lld -> %s\n", (long long)ck.step, path.c_str());
  return 0;
}

int cmd_build(const CommonArgs& common, const std::string& genotype_path,
              const std::string& widths_arg, int channels, bool residual) {
  NetworkGenotype g = load_genotype_file(genotype_path);
  BuildSpec spec;
  spec.genotype = g;
  spec.widths = parse_widths_arg(g, widths_arg);
  spec.image_channels = channels;
  spec.residual_output = residual;
  CompactNetwork net(spec);
  Rng root(common.seed);
  Rng net_rng = root.fork("net");
  net.init(net_rng);

  json resolved = {{"command", "build"},
                   {"genotype", genotype_path},
                   {"widths", json_widths(net.widths())},
                   {"image_channels", channels},
                   {"residual_output", residual},
                   {"seed", common.seed},
                   {"out", common.out}};
  write_resolved(resolved, common.out);
  save_compact_checkpoint(common.out + "/built.ckpt", net, 0, {{"seed", common.seed}});

  std::string wtxt;
  for (std::size_t i = 0; i < net.widths().size(); ++i)
    wtxt += (i ? "," : "") + std::to_string(net.widths()[i]);
  std::printf("built compact network: %lld parameters, widths [%s]\n",
              (long long)net.param_count(), wtxt.c_str());
  std::printf("checkpoint: %s/built.ckpt\n", common.out.c_str());
  return 0;
}

int cmd_train(const CommonArgs& common, const std::string& genotype_path,
              const std::string& widths_arg, bool residual, const TrainConfig& tcfg,
              const std::string& dataset_path, const std::string& eval_dataset_path) {
  Dataset data = load_manifest_or_die(dataset_path, "dataset");
  Dataset eval_data;
  const bool have_eval = !eval_dataset_path.empty();
  if (have_eval) eval_data = load_dataset(eval_dataset_path);

  NetworkGenotype g = load_genotype_file(genotype_path);
  BuildSpec spec;
  spec.genotype = g;
  spec.widths = parse_widths_arg(g, widths_arg);
  spec.image_channels = data.channels;
  spec.residual_output = residual;
  CompactNetwork net(spec);
  Rng root(tcfg.seed);
  Rng net_rng = root.fork("net");
  net.init(net_rng);

  json resolved = {{"command", "train"},
                   {"genotype", genotype_path},
                   {"dataset", dataset_path},
                   {"eval_dataset", eval_dataset_path},
                   {"widths", json_widths(net.widths())},
                   {"image_channels", spec.image_channels},
                   {"residual_output", residual},
                   {"out", common.out},
                   {"train", {{"iterations", tcfg.iterations},
                              {"lr", tcfg.lr},
                              {"lr_min", tcfg.lr_min},
                              {"constant_lr", tcfg.constant_lr},
                              {"weight_decay", tcfg.weight_decay},
                              {"batch_size", tcfg.batch_size},
                              {"crop", tcfg.crop},
                              {"eval_every", tcfg.eval_every},
                              {"seed", tcfg.seed},
                              {"loss", {{"lambda", tcfg.loss.lambda}}}}}};
  write_resolved(resolved, common.out);

  const TrainResult res = train_final(net, data, tcfg, common.out,
                                      have_eval ? &eval_data : nullptr);
  std::vector<EvalRecord> hist;
  for (const TrainRecord& r : res.history)
    hist.push_back({int(r.iteration), r.psnr, r.ssim});
  plot_history_png(hist, common.out + "/train_curve.png", "compact training");
  std::printf("best iteration %lld  psnr %.3f  ssim %.4f\ncheckpoint: %s\n",
              (long long)res.best_iteration, res.best_psnr, res.best_ssim,
              res.checkpoint_path.c_str());
  return 0;
}

int cmd_eval(const CommonArgs& common, const std::string& checkpoint_path,
             const std::string& dataset_path, bool save_images) {
  if (checkpoint_path.empty())
    throw ConfigError("checkpoint: missing compact checkpoint path (flag --checkpoint)");
  Dataset data = load_manifest_or_die(dataset_path, "dataset");
  const Checkpoint ck = Checkpoint::load(checkpoint_path);
  BuildSpec spec = spec_from_checkpoint(ck);
  if (spec.image_channels != data.channels)
    throw ConfigError("dataset: channel count " + std::to_string(data.channels) +
                      " does not match checkpoint (" + std::to_string(spec.image_channels) + ")");
  CompactNetwork net(spec);
  ParamList params;
  net.collect_params(params);
  load_params(ck, params);

  const EvalReport rep = evaluate_final(net, data);
  fs::create_directories(common.out);
  write_eval_csv(rep, common.out + "/eval_report.csv");
  json resolved = {{"command", "eval"},
                   {"checkpoint", checkpoint_path},
                   {"dataset", dataset_path},
                   {"out", common.out}};
  write_resolved(resolved, common.out);

  if (save_images) {
    fs::create_directories(common.out + "/images");
    for (std::size_t i = 0; i < data.pairs.size(); ++i) {
      const ImagePair& p = data.pairs[i];
      auto [tiles, plan] = tile(p.noisy, 64);
      std::vector<Tensor> outs;
      for (Tensor& t : tiles)
        outs.push_back(net.forward(make_shared_tensor(std::move(t)), eval_ctx()));
      Tensor recon = untile(outs, plan);
      for (std::size_t k = 0; k < recon.numel(); ++k)
        recon[k] = std::clamp(recon[k], 0.0, 1.0);
      char name[64];
      std::snprintf(name, sizeof(name), "%s/images/%04zu.png", common.out.c_str(), i);
      save_comparison_png(p.clean, p.noisy, recon, name);
    }
  }
  std::printf("mean psnr %.4f  mean ssim %.5f  (%zu images, %.2fs inference)\n", rep.mean_psnr,
              rep.mean_ssim, rep.per_image.size(), rep.wallclock_seconds);
  std::printf("report: %s/eval_report.csv\n", common.out.c_str());
  return 0;
}

int cmd_perturb(const CommonArgs& common, const std::string& genotype_path,
                const std::string& mode_arg) {
  NetworkGenotype g = load_genotype_file(genotype_path);
  PerturbMode mode;
  if (mode_arg == "r1" || mode_arg == "R1")
    mode = PerturbMode::R1;
  else if (mode_arg == "r2" || mode_arg == "R2")
    mode = PerturbMode::R2;
  else
    throw ConfigError("mode: expected r1 or r2, got '" + mode_arg + "'");
  const NetworkGenotype p = perturb_genotype(g, mode, common.seed);

  fs::create_directories(common.out);
  const std::string path = common.out + "/genotype_" + mode_arg + ".json";
  std::ofstream f(path, std::ios::trunc);
  f << serialize_genotype(p);
  std::printf("%s perturbation %s -> %s\n", mode_arg.c_str(),
              p == g ? "left the genotype unchanged" : "applied", path.c_str());
  return 0;
}

int cmd_bench_memory(const CommonArgs& common, const NetArgs& netargs, int image_size) {
  SupernetConfig nc = netargs.supernet(true);
  Supernet net(nc);
  Rng root(common.seed);
  Rng net_rng = root.fork("net");
  net.init(net_rng);

  const int64_t shared_calls = net.count_cell_invocations(false);
  const int64_t nonshared_calls = net.count_cell_invocations(true);

  Tensor img(1, nc.image_channels, image_size, image_size);
  img.fill(0.5);

  net.release_activations();
  MemoryStats::reset_peak();
  { Tensor out = net.forward(make_shared_tensor(Tensor(img)), FwdCtx{Phase::train, true, false}); }
  const int64_t shared_peak = MemoryStats::peak_bytes();

  net.release_activations();
  MemoryStats::reset_peak();
  {
    Tensor out =
        net.forward_nonshared(make_shared_tensor(Tensor(img)), FwdCtx{Phase::train, true, false});
  }
  const int64_t nonshared_peak = MemoryStats::peak_bytes();
  net.release_activations();

  json report = {{"L", nc.L},
                 {"N", nc.N},
                 {"W", nc.W},
                 {"image_size", image_size},
                 {"shared", {{"cell_invocations", shared_calls}, {"peak_bytes", shared_peak}}},
                 {"nonshared",
                  {{"cell_invocations", nonshared_calls}, {"peak_bytes", nonshared_peak}}}};
  fs::create_directories(common.out);
  std::ofstream f(common.out + "/bench_memory.json", std::ios::trunc);
  f << report.dump(2) << "\n";

  std::printf("cell invocations per forward: shared %lld, per-source %lld\n",
              (long long)shared_calls, (long long)nonshared_calls);
  std::printf("peak activation bytes (train-phase forward, %dx%d): shared %lld, per-source %lld\n",
              image_size, image_size, (long long)shared_peak, (long long)nonshared_peak);
  std::printf("report: %s/bench_memory.json\n", common.out.c_str());
  return 0;
}

int cmd_synth(const CommonArgs& common, int count, int height, int width, int channels,
              double sigma) {
  Dataset ds = synth_dataset(count, height, width, channels, sigma, common.seed);
  save_dataset(ds, common.out, common.seed);
  json resolved = {{"command", "synth"}, {"count", count},   {"height", height},
                   {"width", width},     {"channels", channels}, {"sigma", sigma},
                   {"seed", common.seed}, {"out", common.out}};
  write_resolved(resolved, common.out);
  std::printf("wrote %d pairs (sigma %.1f) -> %s/manifest.json\n", count, sigma,
              common.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* dev = std::getenv("HINAS_DEVICE")) {
    if (std::string(dev) != "cpu" && std::string(dev) != "") {
      std::fprintf(stderr, "config error: HINAS_DEVICE: only 'cpu' is supported, got '%s'\n",
                   dev);
      return 2;
    }
  }

  CLI::App app{"hierarchical architecture search and compact training for image denoising"};
  app.require_subcommand(1);

  // search
  CLI::App* sc_search = app.add_subcommand("search", "bilevel architecture search");
  CommonArgs search_common;
  NetArgs search_net;
  search_common.attach(sc_search);
  search_net.attach(sc_search);
  std::string search_dataset;
  int search_epochs = 0, search_warmup = -1, search_patience = 0, search_batch = 0;
  double search_lambda = -1.0, search_valfrac = 0.0;
  bool search_quiet = false;
  sc_search->add_option("--dataset", search_dataset, "training dataset manifest");
  sc_search->add_option("--epochs", search_epochs, "maximum search epochs");
  sc_search->add_option("--warmup", search_warmup, "kernel-only warmup epochs");
  sc_search->add_option("--patience", search_patience, "evaluations without improvement");
  sc_search->add_option("--batch", search_batch, "batch size");
  sc_search->add_option("--lambda", search_lambda, "ssim loss weight");
  sc_search->add_option("--val-fraction", search_valfrac, "validation split fraction");
  sc_search->add_flag("--quiet", search_quiet, "suppress per-epoch progress");

  // derive
  CLI::App* sc_derive = app.add_subcommand("derive", "decode a genotype from a checkpoint");
  CommonArgs derive_common;
  derive_common.attach(sc_derive);
  std::string derive_ckpt;
  sc_derive->add_option("--checkpoint", derive_ckpt, "search checkpoint file");

  // build
  CLI::App* sc_build = app.add_subcommand("build", "instantiate a compact network");
  CommonArgs build_common;
  build_common.attach(sc_build);
  std::string build_genotype, build_widths;
  int build_channels = 1;
  bool build_residual = false;
  sc_build->add_option("--genotype", build_genotype, "genotype file");
  sc_build->add_option("--widths", build_widths, "ws | w40 | wm | comma-separated widths");
  sc_build->add_option("--channels", build_channels, "image channels");
  sc_build->add_flag("--residual", build_residual, "add the input back onto the output");

  // train
  CLI::App* sc_train = app.add_subcommand("train", "train a compact network");
  CommonArgs train_common;
  train_common.attach(sc_train);
  std::string train_genotype, train_widths, train_dataset, train_eval_dataset;
  int64_t train_iters = 0, train_eval_every = 0;
  int train_batch = 0;
  double train_lr = 0.0, train_lambda = -1.0;
  bool train_const_lr = false, train_residual = false, train_quiet = false;
  sc_train->add_option("--genotype", train_genotype, "genotype file");
  sc_train->add_option("--widths", train_widths, "ws | w40 | wm | comma-separated widths");
  sc_train->add_option("--dataset", train_dataset, "training dataset manifest");
  sc_train->add_option("--eval-dataset", train_eval_dataset, "held-out evaluation manifest");
  sc_train->add_option("--iterations", train_iters, "training iterations");
  sc_train->add_option("--batch", train_batch, "batch size");
  sc_train->add_option("--lr", train_lr, "initial Adam learning rate");
  sc_train->add_flag("--constant-lr", train_const_lr, "disable cosine decay");
  sc_train->add_option("--lambda", train_lambda, "ssim loss weight");
  sc_train->add_option("--eval-every", train_eval_every, "evaluation cadence (iterations)");
  sc_train->add_flag("--residual", train_residual, "add the input back onto the output");
  sc_train->add_flag("--quiet", train_quiet, "suppress progress lines");

  // eval
  CLI::App* sc_eval = app.add_subcommand("eval", "evaluate a compact checkpoint");
  CommonArgs eval_common;
  eval_common.attach(sc_eval);
  std::string eval_ckpt, eval_dataset;
  bool eval_save_images = false;
  sc_eval->add_option("--checkpoint", eval_ckpt, "compact checkpoint file");
  sc_eval->add_option("--dataset", eval_dataset, "evaluation dataset manifest");
  sc_eval->add_flag("--save-images", eval_save_images, "write clean|noisy|denoised PNGs");

  // perturb
  CLI::App* sc_perturb = app.add_subcommand("perturb", "apply an architecture perturbation");
  CommonArgs perturb_common;
  perturb_common.attach(sc_perturb);
  std::string perturb_genotype_path, perturb_mode = "r1";
  sc_perturb->add_option("--genotype", perturb_genotype_path, "genotype file");
  sc_perturb->add_option("--mode", perturb_mode, "r1 (conv->deform) or r2 (random edge swap)");

  // bench-memory
  CLI::App* sc_bench = app.add_subcommand("bench-memory", "shared vs per-source cell costs");
  CommonArgs bench_common;
  NetArgs bench_net;
  bench_common.attach(sc_bench);
  bench_net.attach(sc_bench);
  int bench_image = 64;
  sc_bench->add_option("--image-size", bench_image, "square input size for the measurement");

  // synth
  CLI::App* sc_synth = app.add_subcommand("synth", "generate a synthetic noisy dataset");
  CommonArgs synth_common;
  synth_common.attach(sc_synth);
  int synth_count = 20, synth_h = 64, synth_w = 64, synth_channels = 1;
  double synth_sigma = 30.0;
  sc_synth->add_option("--count", synth_count, "number of image pairs");
  sc_synth->add_option("--height", synth_h, "image height");
  sc_synth->add_option("--width", synth_w, "image width");
  sc_synth->add_option("--channels", synth_channels, "image channels (1 or 3)");
  sc_synth->add_option("--sigma", synth_sigma, "noise level on the 0-255 scale");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sc_search->parsed()) {
      const json cfg = load_config_file(search_common.config_path);
      search_common.resolve(*sc_search, cfg);
      search_net.resolve(*sc_search, cfg);
      if (!sc_search->count("--dataset")) from_config(cfg, "dataset", search_dataset);
      SearchConfig scfg;
      from_config(cfg, "search.max_epochs", scfg.max_epochs);
      from_config(cfg, "search.batch_size", scfg.batch_size);
      from_config(cfg, "search.weight_lr_max", scfg.weight_lr_max);
      from_config(cfg, "search.weight_lr_min", scfg.weight_lr_min);
      from_config(cfg, "search.momentum", scfg.momentum);
      from_config(cfg, "search.weight_decay", scfg.weight_decay);
      from_config(cfg, "search.arch_lr", scfg.arch_lr);
      from_config(cfg, "search.arch_weight_decay", scfg.arch_weight_decay);
      from_config(cfg, "search.warmup_epochs", scfg.warmup_epochs);
      from_config(cfg, "search.patience", scfg.patience);
      from_config(cfg, "search.grad_clip", scfg.grad_clip);
      from_config(cfg, "search.crop", scfg.crop);
      from_config(cfg, "search.val_fraction", scfg.val_fraction);
      from_config(cfg, "search.loss.lambda", scfg.loss.lambda);
      if (sc_search->count("--epochs")) scfg.max_epochs = search_epochs;
      if (sc_search->count("--warmup")) scfg.warmup_epochs = search_warmup;
      if (sc_search->count("--patience")) scfg.patience = search_patience;
      if (sc_search->count("--batch")) scfg.batch_size = search_batch;
      if (sc_search->count("--lambda")) scfg.loss.lambda = search_lambda;
      if (sc_search->count("--val-fraction")) scfg.val_fraction = search_valfrac;
      scfg.seed = search_common.seed;
      scfg.verbose = !search_quiet;
      scfg.validate();
      return cmd_search(search_common, search_net, scfg, search_dataset);
    }
    if (sc_derive->parsed()) {
      const json cfg = load_config_file(derive_common.config_path);
      derive_common.resolve(*sc_derive, cfg);
      if (!sc_derive->count("--checkpoint")) from_config(cfg, "checkpoint", derive_ckpt);
      return cmd_derive(derive_common, derive_ckpt);
    }
    if (sc_build->parsed()) {
      const json cfg = load_config_file(build_common.config_path);
      build_common.resolve(*sc_build, cfg);
      if (!sc_build->count("--genotype")) from_config(cfg, "genotype", build_genotype);
      if (!sc_build->count("--widths")) from_config(cfg, "widths", build_widths);
      if (!sc_build->count("--channels")) from_config(cfg, "image_channels", build_channels);
      if (!sc_build->count("--residual")) from_config(cfg, "residual_output", build_residual);
      return cmd_build(build_common, build_genotype, build_widths, build_channels,
                       build_residual);
    }
    if (sc_train->parsed()) {
      const json cfg = load_config_file(train_common.config_path);
      train_common.resolve(*sc_train, cfg);
      if (!sc_train->count("--genotype")) from_config(cfg, "genotype", train_genotype);
      if (!sc_train->count("--widths")) from_config(cfg, "widths", train_widths);
      if (!sc_train->count("--dataset")) from_config(cfg, "dataset", train_dataset);
      if (!sc_train->count("--eval-dataset"))
        from_config(cfg, "eval_dataset", train_eval_dataset);
      if (!sc_train->count("--residual")) from_config(cfg, "residual_output", train_residual);
      TrainConfig tcfg;
      from_config(cfg, "train.iterations", tcfg.iterations);
      from_config(cfg, "train.lr", tcfg.lr);
      from_config(cfg, "train.lr_min", tcfg.lr_min);
      from_config(cfg, "train.constant_lr", tcfg.constant_lr);
      from_config(cfg, "train.weight_decay", tcfg.weight_decay);
      from_config(cfg, "train.batch_size", tcfg.batch_size);
      from_config(cfg, "train.crop", tcfg.crop);
      from_config(cfg, "train.eval_every", tcfg.eval_every);
      from_config(cfg, "train.loss.lambda", tcfg.loss.lambda);
      if (sc_train->count("--iterations")) tcfg.iterations = train_iters;
      if (sc_train->count("--batch")) tcfg.batch_size = train_batch;
      if (sc_train->count("--lr")) tcfg.lr = train_lr;
      if (sc_train->count("--constant-lr")) tcfg.constant_lr = train_const_lr;
      if (sc_train->count("--lambda")) tcfg.loss.lambda = train_lambda;
      if (sc_train->count("--eval-every")) tcfg.eval_every = train_eval_every;
      tcfg.seed = train_common.seed;
      tcfg.verbose = !train_quiet;
      tcfg.validate();
      return cmd_train(train_common, train_genotype, train_widths, train_residual, tcfg,
                       train_dataset, train_eval_dataset);
    }
    if (sc_eval->parsed()) {
      const json cfg = load_config_file(eval_common.config_path);
      eval_common.resolve(*sc_eval, cfg);
      if (!sc_eval->count("--checkpoint")) from_config(cfg, "checkpoint", eval_ckpt);
      if (!sc_eval->count("--dataset")) from_config(cfg, "dataset", eval_dataset);
      return cmd_eval(eval_common, eval_ckpt, eval_dataset, eval_save_images);
    }
    if (sc_perturb->parsed()) {
      const json cfg = load_config_file(perturb_common.config_path);
      perturb_common.resolve(*sc_perturb, cfg);
      if (!sc_perturb->count("--genotype"))
        from_config(cfg, "genotype", perturb_genotype_path);
      if (!sc_perturb->count("--mode")) from_config(cfg, "mode", perturb_mode);
      return cmd_perturb(perturb_common, perturb_genotype_path, perturb_mode);
    }
    if (sc_bench->parsed()) {
      const json cfg = load_config_file(bench_common.config_path);
      bench_common.resolve(*sc_bench, cfg);
      bench_net.resolve(*sc_bench, cfg);
      if (!sc_bench->count("--image-size")) from_config(cfg, "image_size", bench_image);
      return cmd_bench_memory(bench_common, bench_net, bench_image);
    }
    if (sc_synth->parsed()) {
      const json cfg = load_config_file(synth_common.config_path);
      synth_common.resolve(*sc_synth, cfg);
      if (!sc_synth->count("--count")) from_config(cfg, "count", synth_count);
      if (!sc_synth->count("--height")) from_config(cfg, "height", synth_h);
      if (!sc_synth->count("--width")) from_config(cfg, "width", synth_w);
      if (!sc_synth->count("--channels")) from_config(cfg, "channels", synth_channels);
      if (!sc_synth->count("--sigma")) from_config(cfg, "sigma", synth_sigma);
      return cmd_synth(synth_common, synth_count, synth_h, synth_w, synth_channels, synth_sigma);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const GenotypeError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime failure: %s\n", e.what());
    return 3;
  }
  return 0;
}
