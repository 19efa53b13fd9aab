#include "hinas/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "hinas/optim.hpp"
#include "hinas/search.hpp"

namespace hinas {

namespace fs = std::filesystem;

void BuildSpec::validate() const {
  genotype.validate();
  if (image_channels != 1 && image_channels != 3)
    throw ConfigError("build: image_channels must be 1 or 3");
  if (!widths.empty()) {
    if (int(widths.size()) != genotype.path.layer_count())
      throw ConfigError("build: widths length " + std::to_string(widths.size()) +
                        " != layer count " + std::to_string(genotype.path.layer_count()));
    for (int w : widths)
      if (w < 1) throw ConfigError("build: widths must be >= 1");
  }
}

std::vector<int> BuildSpec::resolved_widths() const {
  validate();
  if (!widths.empty()) return widths;
  std::vector<int> out;
  out.reserve(genotype.path.levels.size());
  for (int lvl : genotype.path.levels) out.push_back((1 << lvl) * genotype.base_width);
  return out;
}

std::vector<int> preset_widths(const NetworkGenotype& g, const std::string& name) {
  const int L = g.path.layer_count();
  if (name == "ws") return BuildSpec{g, {}, 1, false}.resolved_widths();
  if (name == "w40") return std::vector<int>(size_t(L), 40);
  if (name == "wm") {
    std::vector<int> out;
    for (int l = 0; l < L; ++l) out.push_back(10 << l);
    return out;
  }
  throw ConfigError("build: unknown width preset '" + name + "' (want ws, w40 or wm)");
}

// ---------------------------------------------------------------------------
// CompactNetwork

CompactNetwork::CompactNetwork(const BuildSpec& spec) : spec_(spec) {
  widths_ = spec_.resolved_widths();
  const int N = spec_.genotype.cell.node_count();
  const int L = int(widths_.size());
  stem_ch_ = N * spec_.genotype.base_width;
  stem1_ = Conv2d(spec_.image_channels, stem_ch_, 3);
  stem2_ = Conv2d(stem_ch_, stem_ch_, 3);
  cells_.reserve(size_t(L));
  proj_prev_.reserve(size_t(L));
  proj_skip_.reserve(size_t(L));
  for (int l = 1; l <= L; ++l) {
    const int w = widths_[size_t(l - 1)];
    const int prev_ch = l == 1 ? stem_ch_ : N * widths_[size_t(l - 2)];
    const int skip_ch = l <= 2 ? stem_ch_ : N * widths_[size_t(l - 3)];
    proj_prev_.emplace_back(prev_ch, w, 1);
    proj_skip_.emplace_back(skip_ch, w, 1);
    cells_.emplace_back(spec_.genotype.cell, w);
  }
  head_ = Conv2d(N * widths_.back(), spec_.image_channels, 3);
}

void CompactNetwork::init(Rng& rng) {
  {
    Rng r = rng.fork("stem");
    stem1_.init_kaiming(r);
    stem2_.init_kaiming(r);
  }
  for (std::size_t l = 0; l < cells_.size(); ++l) {
    Rng rc = rng.fork("cell." + std::to_string(l + 1));
    cells_[l].init(rc);
    Rng rp = rng.fork("proj." + std::to_string(l + 1));
    proj_prev_[l].init_kaiming(rp);
    proj_skip_[l].init_kaiming(rp);
  }
  Rng rh = rng.fork("head");
  head_.init_kaiming(rh);
  // damped like the relaxed net's head: start near the identity mapping
  head_.weight *= 0.1;
  if (head_.bias.numel()) head_.bias *= 0.1;
}

Tensor CompactNetwork::forward(const TensorPtr& x, const FwdCtx& ctx) {
  if (x->c() != spec_.image_channels)
    throw ShapeError("compact: input " + x->shape_str() + " does not carry " +
                     std::to_string(spec_.image_channels) + " channels");
  const bool keep = ctx.phase == Phase::train && ctx.cache;
  x_in_ = keep ? x : nullptr;

  TensorPtr hm1 = make_shared_tensor(stem1_.forward(x, ctx));
  TensorPtr h0 = make_shared_tensor(stem2_.forward(hm1, ctx));
  TensorPtr prev = h0, skip = hm1;
  for (std::size_t l = 0; l < cells_.size(); ++l) {
    TensorPtr p = make_shared_tensor(proj_prev_[l].forward(prev, ctx));
    TensorPtr s = make_shared_tensor(proj_skip_[l].forward(skip, ctx));
    Tensor h = cells_[l].forward(p, s, ctx);
    if (!h.all_finite())
      throw NumericError("compact: non-finite activation at layer " + std::to_string(l + 1));
    skip = prev;
    prev = make_shared_tensor(std::move(h));
  }
  Tensor out = head_.forward(prev, ctx);
  if (spec_.residual_output) out += *x;
  have_state_ = keep;
  return out;
}

Tensor CompactNetwork::backward(const Tensor& gy) {
  if (!have_state_) throw std::logic_error("compact: backward without cached forward");
  const int L = int(cells_.size());
  Tensor gcell = head_.backward(gy);
  // gradient w.r.t. each feature: slot 0 = stem1 out, 1 = stem2 out, 1+l = cell l
  std::vector<Tensor> gfeat(size_t(L) + 2);  // lazily filled accumulators
  auto add = [&](std::size_t slot, Tensor&& g) {
    if (gfeat[slot].numel() == 0)
      gfeat[slot] = std::move(g);
    else
      gfeat[slot] += g;
  };
  add(size_t(L) + 1, std::move(gcell));

  for (int l = L; l >= 1; --l) {
    auto [gp, gs] = cells_[size_t(l - 1)].backward(gfeat[size_t(l) + 1]);
    add(size_t(l), proj_prev_[size_t(l - 1)].backward(gp));
    add(size_t(l) - 1, proj_skip_[size_t(l - 1)].backward(gs));
  }
  add(0, stem2_.backward(gfeat[1]));
  Tensor gx = stem1_.backward(gfeat[0]);
  if (spec_.residual_output) gx += gy;
  have_state_ = false;
  x_in_.reset();
  return gx;
}

void CompactNetwork::collect_params(ParamList& out) {
  stem1_.collect_params("stem1", out);
  stem2_.collect_params("stem2", out);
  for (std::size_t l = 0; l < cells_.size(); ++l) {
    const std::string tag = "l" + std::to_string(l + 1);
    cells_[l].collect_params("cell." + tag, out);
    proj_prev_[l].collect_params("proj." + tag + ".prev", out);
    proj_skip_[l].collect_params("proj." + tag + ".skip", out);
  }
  head_.collect_params("head", out);
}

void CompactNetwork::zero_grads() {
  ParamList params;
  collect_params(params);
  for (ParamRef& p : params)
    if (p.grad) p.grad->zero();
}

int64_t CompactNetwork::param_count() const {
  int64_t total = stem1_.param_count() + stem2_.param_count() + head_.param_count();
  for (const CompactCell& c : cells_) total += c.param_count();
  for (const Conv2d& c : proj_prev_) total += c.param_count();
  for (const Conv2d& c : proj_skip_) total += c.param_count();
  return total;
}

void CompactNetwork::release_activations() {
  stem1_.release();
  stem2_.release();
  head_.release();
  for (CompactCell& c : cells_) c.release();
  for (Conv2d& c : proj_prev_) c.release();
  for (Conv2d& c : proj_skip_) c.release();
  x_in_.reset();
  have_state_ = false;
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  if (iterations < 1) throw ConfigError("train: iterations must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("train: lr must be > 0");
  if (!constant_lr && (!(lr_min > 0.0) || lr_min > lr))
    throw ConfigError("train: lr_min must satisfy 0 < lr_min <= lr");
  if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (crop < 8) throw ConfigError("train: crop must be >= 8");
  if (eval_every < 1) throw ConfigError("train: eval_every must be >= 1");
  loss.validate();
}

void save_compact_checkpoint(const std::string& path, CompactNetwork& net, int64_t iteration,
                             const nlohmann::json& meta) {
  Checkpoint ck;
  ck.kind = "compact";
  ck.step = iteration;
  ck.meta = meta;
  ck.meta["genotype"] = serialize_genotype(net.spec().genotype);
  ck.meta["widths"] = net.widths();
  ck.meta["image_channels"] = net.spec().image_channels;
  ck.meta["residual_output"] = net.spec().residual_output;
  ParamList params;
  net.collect_params(params);
  put_params(ck, params);
  ck.save(path);
}

BuildSpec spec_from_checkpoint(const Checkpoint& ck) {
  if (ck.kind != "compact")
    throw ConfigError("checkpoint: expected kind 'compact', got '" + ck.kind + "'");
  BuildSpec spec;
  try {
    spec.genotype = parse_genotype(ck.meta.at("genotype").get<std::string>());
    spec.widths = ck.meta.at("widths").get<std::vector<int>>();
    spec.image_channels = ck.meta.at("image_channels").get<int>();
    spec.residual_output = ck.meta.at("residual_output").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint: malformed build metadata: ") + e.what());
  }
  spec.validate();
  return spec;
}

void load_compact_checkpoint(const std::string& path, CompactNetwork& net) {
  const Checkpoint ck = Checkpoint::load(path);
  if (ck.kind != "compact")
    throw ConfigError("checkpoint: expected kind 'compact', got '" + ck.kind + "'");
  ParamList params;
  net.collect_params(params);
  load_params(ck, params);
}

TrainResult train_final(CompactNetwork& net, const Dataset& data, const TrainConfig& cfg,
                        const std::string& out_dir, const Dataset* eval_data) {
  cfg.validate();
  if (data.pairs.empty()) throw ConfigError("train: dataset is empty");
  for (const ImagePair& p : data.pairs)
    if (p.clean.h() < cfg.crop || p.clean.w() < cfg.crop)
      throw ConfigError("train: image " + p.clean.shape_str() + " smaller than crop " +
                        std::to_string(cfg.crop));
  fs::create_directories(out_dir);

  ParamList params;
  net.collect_params(params);
  Adam adam(views_of(params), cfg.weight_decay);

  CsvLogger log(out_dir + "/train_log.csv");
  Rng root(cfg.seed);
  Rng data_rng = root.fork("data");
  const Dataset& eval_set = eval_data ? *eval_data : data;

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  TrainResult res;
  res.checkpoint_path = out_dir + "/best.ckpt";
  res.loss_curve.reserve(size_t(std::min<int64_t>(cfg.iterations, 1 << 20)));
  double best_psnr = -std::numeric_limits<double>::infinity();
  double best_ssim = -std::numeric_limits<double>::infinity();

  auto meta_for = [&](int64_t it) {
    nlohmann::json m;
    m["seed"] = cfg.seed;
    m["iterations"] = cfg.iterations;
    m["iteration"] = it;
    m["lr"] = cfg.lr;
    return m;
  };

  const int n = int(data.pairs.size());
  for (int64_t it = 1; it <= cfg.iterations; ++it) {
    std::vector<Tensor> clean, noisy;
    clean.reserve(size_t(cfg.batch_size));
    noisy.reserve(size_t(cfg.batch_size));
    for (int b = 0; b < cfg.batch_size; ++b) {
      const ImagePair& p = data.pairs[size_t(data_rng.uniform_int(0, n - 1))];
      auto [c, nz] = augment(p.clean, p.noisy, cfg.crop, data_rng);
      clean.push_back(std::move(c));
      noisy.push_back(std::move(nz));
    }
    std::vector<const Tensor*> cp, np;
    for (const Tensor& t : clean) cp.push_back(&t);
    for (const Tensor& t : noisy) np.push_back(&t);
    Tensor target = stack_batch(cp);

    net.zero_grads();
    LossResult L;
    try {
      Tensor pred =
          net.forward(make_shared_tensor(stack_batch(np)), FwdCtx{Phase::train, true, true});
      Tensor gpred = Tensor::zeros_like(pred);
      L = total_loss_with_grad(pred, target, cfg.loss, gpred);
      net.backward(gpred);
    } catch (const NumericError&) {
      save_compact_checkpoint(out_dir + "/diverged.ckpt", net, it, meta_for(it));
      throw;
    }
    res.loss_curve.push_back(L.total);

    const double lr =
        cfg.constant_lr ? cfg.lr : cosine_lr(it - 1, cfg.iterations, cfg.lr, cfg.lr_min);
    adam.step(lr);

    if (it % cfg.eval_every == 0 || it == cfg.iterations) {
      const EvalReport rep = evaluate_final(net, eval_set);
      res.history.push_back({it, rep.mean_psnr, rep.mean_ssim});
      log.row(int(it), "train", std::numeric_limits<double>::quiet_NaN(),
              std::numeric_limits<double>::quiet_NaN(), L.total, lr, elapsed());
      log.row(int(it), "val", rep.mean_psnr, rep.mean_ssim,
              std::numeric_limits<double>::quiet_NaN(), lr, elapsed());
      const bool improved = rep.mean_psnr > best_psnr ||
                            (rep.mean_psnr == best_psnr && rep.mean_ssim > best_ssim);
      if (improved) {
        best_psnr = rep.mean_psnr;
        best_ssim = rep.mean_ssim;
        res.best_iteration = it;
        save_compact_checkpoint(res.checkpoint_path, net, it, meta_for(it));
      }
      if (cfg.verbose)
        std::printf("train %8lld/%lld  loss %.5f  val psnr %.3f ssim %.4f  lr %.4g%s\n",
                    (long long)it, (long long)cfg.iterations, L.total, rep.mean_psnr,
                    rep.mean_ssim, lr, improved ? "  *" : "");
    }
  }
  res.best_psnr = best_psnr;
  res.best_ssim = best_ssim;
  load_compact_checkpoint(res.checkpoint_path, net);
  return res;
}

EvalReport evaluate_final(CompactNetwork& net, const Dataset& data, int tile_size) {
  if (data.pairs.empty()) throw ConfigError("evaluate: dataset is empty");
  std::vector<int> indices(data.pairs.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = int(i);
  EvalReport rep;
  const auto t0 = std::chrono::steady_clock::now();
  std::tie(rep.mean_psnr, rep.mean_ssim) = evaluate_tiled(
      [&](const TensorPtr& x) { return net.forward(x, eval_ctx()); }, data, indices, tile_size,
      &rep.per_image);
  rep.wallclock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

void write_eval_csv(const EvalReport& r, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  f << "image,psnr,ssim\n";
  char buf[64];
  for (std::size_t i = 0; i < r.per_image.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f\n", i, r.per_image[i].first,
                  r.per_image[i].second);
    f << buf;
  }
  std::snprintf(buf, sizeof(buf), "mean,%.6f,%.6f\n", r.mean_psnr, r.mean_ssim);
  f << buf;
}

void save_comparison_png(const Tensor& clean, const Tensor& noisy, const Tensor& denoised,
                         const std::string& path) {
  clean.require_same_shape(noisy, "comparison");
  clean.require_same_shape(denoised, "comparison");
  const int gap = 4;
  Tensor row(1, clean.c(), clean.h(), 3 * clean.w() + 2 * gap);
  row.fill(1.0);
  const Tensor* imgs[3] = {&clean, &noisy, &denoised};
  for (int k = 0; k < 3; ++k) {
    const int x0 = k * (clean.w() + gap);
    for (int c = 0; c < clean.c(); ++c)
      for (int y = 0; y < clean.h(); ++y)
        for (int x = 0; x < clean.w(); ++x) row(0, c, y, x0 + x) = (*imgs[k])(0, c, y, x);
  }
  save_image_png16(row, path);
}

}  // namespace hinas
