#include "hinas/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "hinas/checkpoint.hpp"
#include "hinas/optim.hpp"

namespace hinas {

namespace fs = std::filesystem;

void SearchConfig::validate() const {
  if (max_epochs < 1) throw ConfigError("search: max_epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("search: batch_size must be >= 1");
  if (warmup_epochs < 0 || warmup_epochs >= max_epochs)
    throw ConfigError("search: warmup_epochs must lie in [0, max_epochs)");
  if (patience < 1) throw ConfigError("search: patience must be >= 1");
  if (crop < 8) throw ConfigError("search: crop must be >= 8");
  if (!(val_fraction > 0.0) || val_fraction >= 1.0)
    throw ConfigError("search: val_fraction must lie in (0, 1)");
  if (!(weight_lr_min > 0.0) || weight_lr_max < weight_lr_min)
    throw ConfigError("search: weight lr range must satisfy 0 < min <= max");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("search: momentum must lie in [0, 1)");
  if (weight_decay < 0.0 || arch_weight_decay < 0.0)
    throw ConfigError("search: weight decay must be >= 0");
  if (!(arch_lr > 0.0)) throw ConfigError("search: arch_lr must be > 0");
  if (grad_clip < 0.0) throw ConfigError("search: grad_clip must be >= 0");
  loss.validate();
}

SplitIndices split_dataset(int sample_count, double val_fraction, uint64_t seed) {
  if (sample_count < 3)
    throw ConfigError("split: need at least 3 samples, got " + std::to_string(sample_count));
  if (!(val_fraction > 0.0) || val_fraction >= 1.0)
    throw ConfigError("split: val_fraction must lie in (0, 1)");
  int nv = std::max<int>(1, int(std::llround(val_fraction * sample_count)));
  if (sample_count - nv < 2) nv = sample_count - 2;  // keep one sample per training half

  std::vector<int> idx(sample_count);
  for (int i = 0; i < sample_count; ++i) idx[i] = i;
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng.engine());

  SplitIndices out;
  out.val.assign(idx.begin(), idx.begin() + nv);
  const int rest = sample_count - nv;
  const int nw = (rest + 1) / 2;  // weight half takes the odd sample
  out.train_w.assign(idx.begin() + nv, idx.begin() + nv + nw);
  out.train_a.assign(idx.begin() + nv + nw, idx.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.train_w.begin(), out.train_w.end());
  std::sort(out.train_a.begin(), out.train_a.end());
  return out;
}

std::pair<double, double> evaluate_tiled(const std::function<Tensor(const TensorPtr&)>& forward,
                                         const Dataset& data, const std::vector<int>& indices,
                                         int tile_size,
                                         std::vector<std::pair<double, double>>* per_image) {
  if (indices.empty()) throw ConfigError("evaluate: empty index set");
  double psum = 0.0, ssum = 0.0;
  for (int idx : indices) {
    if (idx < 0 || idx >= int(data.pairs.size()))
      throw ConfigError("evaluate: index " + std::to_string(idx) + " out of range");
    const ImagePair& pair = data.pairs[size_t(idx)];
    auto [tiles, plan] = tile(pair.noisy, tile_size);
    std::vector<Tensor> outs;
    outs.reserve(tiles.size());
    for (Tensor& t : tiles) outs.push_back(forward(make_shared_tensor(std::move(t))));
    Tensor recon = untile(outs, plan);
    for (std::size_t i = 0; i < recon.numel(); ++i) recon[i] = std::clamp(recon[i], 0.0, 1.0);
    const double p = psnr(recon, pair.clean);
    const double s = ssim(recon, pair.clean);
    if (per_image) per_image->push_back({p, s});
    psum += p;
    ssum += s;
  }
  return {psum / double(indices.size()), ssum / double(indices.size())};
}

std::pair<double, double> evaluate_supernet(Supernet& net, const Dataset& data,
                                            const std::vector<int>& indices, int tile_size) {
  return evaluate_tiled([&](const TensorPtr& x) { return net.forward(x, eval_ctx()); }, data,
                        indices, tile_size);
}

CsvLogger::CsvLogger(const std::string& path) : path_(path) {
  std::ofstream f(path_, std::ios::trunc);
  f << "epoch,split,psnr,ssim,loss,lr,wallclock\n";
}

void CsvLogger::row(int epoch, const std::string& split, double psnr, double ssim, double loss,
                    double lr, double wallclock) {
  auto cell = [](double v) {
    if (!std::isfinite(v)) return std::string();
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return std::string(buf);
  };
  std::ofstream f(path_, std::ios::app);
  f << epoch << ',' << split << ',' << cell(psnr) << ',' << cell(ssim) << ',' << cell(loss) << ','
    << cell(lr) << ',' << cell(wallclock) << '\n';
}

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

struct SearchState {
  Supernet* net = nullptr;
  ParamList wparams;
  SgdMomentum sgd;
  Adam adam;
};

void save_search_checkpoint(const std::string& path, SearchState& st, int epoch,
                            const SearchConfig& cfg, const std::vector<EvalRecord>& history) {
  Checkpoint ck;
  ck.kind = "supernet";
  ck.step = epoch;
  put_params(ck, st.wparams);
  ck.put_vector("alpha", st.net->alpha().raw());
  if (!st.net->beta().raw().empty()) ck.put_vector("beta", st.net->beta().raw());
  for (const auto& [name, vel] : st.sgd.state()) ck.put_vector("opt.sgd." + name, vel);
  const Adam::State as = st.adam.state();
  for (const auto& [name, m] : as.m) ck.put_vector("opt.adam.m." + name, m);
  for (const auto& [name, v] : as.v) ck.put_vector("opt.adam.v." + name, v);
  ck.meta["adam_t"] = as.t;
  ck.meta["seed"] = cfg.seed;
  ck.meta["max_epochs"] = cfg.max_epochs;
  ck.meta["warmup_epochs"] = cfg.warmup_epochs;
  ck.meta["batch_size"] = cfg.batch_size;
  const SupernetConfig& nc = st.net->config();
  ck.meta["net"] = {{"L", nc.L},
                    {"N", nc.N},
                    {"W", nc.W},
                    {"image_channels", nc.image_channels},
                    {"residual_output", nc.residual_output}};
  nlohmann::json hist = nlohmann::json::array();
  for (const EvalRecord& r : history)
    hist.push_back({{"epoch", r.epoch}, {"psnr", r.psnr}, {"ssim", r.ssim}});
  ck.meta["history"] = std::move(hist);
  ck.save(path);
}

void restore_arch(Supernet& net, const Checkpoint& ck) {
  const std::vector<double> a = ck.get_vector("alpha");
  if (a.size() != net.alpha().raw().size())
    throw ConfigError("checkpoint: alpha size mismatch");
  std::copy(a.begin(), a.end(), net.alpha().raw().begin());
  if (!net.beta().raw().empty()) {
    const std::vector<double> b = ck.get_vector("beta");
    if (b.size() != net.beta().raw().size())
      throw ConfigError("checkpoint: beta size mismatch");
    std::copy(b.begin(), b.end(), net.beta().raw().begin());
  }
}

}  // namespace

SearchResult run_search(Supernet& net, const Dataset& data, const SearchConfig& cfg,
                        const std::string& out_dir, const EvalFn& eval_override) {
  cfg.validate();
  if (data.pairs.empty()) throw ConfigError("search: dataset is empty");
  for (const ImagePair& p : data.pairs)
    if (p.clean.h() < cfg.crop || p.clean.w() < cfg.crop)
      throw ConfigError("search: image " + p.clean.shape_str() + " smaller than crop " +
                        std::to_string(cfg.crop));
  fs::create_directories(out_dir);

  const SplitIndices split = split_dataset(int(data.pairs.size()), cfg.val_fraction, cfg.seed);

  SearchState st;
  st.net = &net;
  net.collect_params(st.wparams);
  st.sgd = SgdMomentum(views_of(st.wparams), cfg.momentum, cfg.weight_decay);
  std::vector<ParamView> aviews;
  aviews.push_back({"alpha", net.alpha().raw().data(), net.alpha().raw_grads().data(),
                    net.alpha().raw().size()});
  if (!net.beta().raw().empty())
    aviews.push_back({"beta", net.beta().raw().data(), net.beta().raw_grads().data(),
                      net.beta().raw().size()});
  st.adam = Adam(aviews, cfg.arch_weight_decay);

  const int64_t wbatches =
      (int64_t(split.train_w.size()) + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t abatches =
      (int64_t(split.train_a.size()) + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t total_wsteps = int64_t(cfg.max_epochs) * wbatches;

  CsvLogger log(out_dir + "/search_log.csv");
  Rng root(cfg.seed);
  Rng aug_rng = root.fork("augment");
  Rng shuffle_rng = root.fork("shuffle");

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  SearchResult res;
  res.checkpoint_path = out_dir + "/best.ckpt";
  double best_psnr = -std::numeric_limits<double>::infinity();
  double best_ssim = -std::numeric_limits<double>::infinity();
  int bad_evals = 0;
  int64_t wstep = 0;
  double lr = cfg.weight_lr_max;

  auto make_batch = [&](const std::vector<int>& order, int64_t bi) {
    const std::size_t b0 = std::size_t(bi) * cfg.batch_size;
    const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
    std::vector<Tensor> clean, noisy;
    clean.reserve(b1 - b0);
    noisy.reserve(b1 - b0);
    for (std::size_t k = b0; k < b1; ++k) {
      const ImagePair& p = data.pairs[size_t(order[k])];
      auto [c, n] = augment(p.clean, p.noisy, cfg.crop, aug_rng);
      clean.push_back(std::move(c));
      noisy.push_back(std::move(n));
    }
    std::vector<const Tensor*> cp, np;
    for (const Tensor& t : clean) cp.push_back(&t);
    for (const Tensor& t : noisy) np.push_back(&t);
    return std::pair<Tensor, Tensor>(stack_batch(np), stack_batch(cp));
  };

  auto dump_diverged = [&](int epoch) {
    save_search_checkpoint(out_dir + "/diverged.ckpt", st, epoch, cfg, res.history);
  };

  // One optimization step on either the kernels or the architecture logits.
  auto train_step = [&](const std::vector<int>& order, int64_t bi, bool arch, int epoch) {
    auto [noisy, clean] = make_batch(order, bi);
    net.zero_weight_grads();
    net.alpha().zero_grads();
    net.beta().zero_grads();
    Tensor pred, gpred;
    LossResult L;
    try {
      pred = net.forward(make_shared_tensor(std::move(noisy)), FwdCtx{Phase::train, true, true});
      gpred = Tensor::zeros_like(pred);
      L = total_loss_with_grad(pred, clean, cfg.loss, gpred);
      net.backward(gpred);
    } catch (const NumericError&) {
      dump_diverged(epoch);
      throw;
    }
    if (arch) {
      st.adam.step(cfg.arch_lr);
    } else {
      if (cfg.grad_clip > 0.0) {
        double sq = 0.0;
        for (const auto& p : st.wparams)
          if (p.trainable && p.grad)
            for (std::size_t k = 0; k < p.grad->numel(); ++k) sq += (*p.grad)[k] * (*p.grad)[k];
        const double norm = std::sqrt(sq);
        if (norm > cfg.grad_clip) {
          const double s = cfg.grad_clip / norm;
          for (const auto& p : st.wparams)
            if (p.trainable && p.grad) *p.grad *= s;
        }
      }
      lr = cosine_lr(wstep, total_wsteps, cfg.weight_lr_max, cfg.weight_lr_min);
      st.sgd.step(lr);
      ++wstep;
    }
    return L.total;
  };

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::vector<int> worder = split.train_w;
    std::vector<int> aorder = split.train_a;
    std::shuffle(worder.begin(), worder.end(), shuffle_rng.engine());
    std::shuffle(aorder.begin(), aorder.end(), shuffle_rng.engine());

    const bool arch_on = epoch > cfg.warmup_epochs;
    double loss_sum = 0.0;
    int64_t loss_cnt = 0;
    const int64_t nb = arch_on ? std::max(wbatches, abatches) : wbatches;
    for (int64_t bi = 0; bi < nb; ++bi) {
      if (bi < wbatches) {
        loss_sum += train_step(worder, bi, false, epoch);
        ++loss_cnt;
      }
      if (arch_on && bi < abatches) train_step(aorder, bi, true, epoch);
    }

    double vp = 0.0, vs = 0.0;
    if (eval_override)
      std::tie(vp, vs) = eval_override(net, epoch);
    else
      std::tie(vp, vs) = evaluate_supernet(net, data, split.val, 64);
    res.history.push_back({epoch, vp, vs});

    const double mean_loss = loss_cnt ? loss_sum / double(loss_cnt) : kNan;
    log.row(epoch, "train", kNan, kNan, mean_loss, lr, elapsed());
    log.row(epoch, "val", vp, vs, kNan, lr, elapsed());

    const bool improved = vp > best_psnr || (vp == best_psnr && vs > best_ssim);
    if (cfg.verbose)
      std::printf("search epoch %3d/%d  %s  loss %.5f  val psnr %.3f ssim %.4f  lr %.4g%s\n",
                  epoch, cfg.max_epochs, arch_on ? "w+a" : "w  ", mean_loss, vp, vs, lr,
                  improved ? "  *" : "");
    if (improved) {
      best_psnr = vp;
      best_ssim = vs;
      bad_evals = 0;
      res.best_epoch = epoch;
      res.genotype.cell = derive_cell(net.alpha());
      res.genotype.path = derive_width_path(net.beta(), net.config().L);
      res.genotype.base_width = net.config().W;
      save_search_checkpoint(res.checkpoint_path, st, epoch, cfg, res.history);
    } else if (++bad_evals >= cfg.patience) {
      res.stopped_early = true;
      break;
    }
  }

  res.best_psnr = best_psnr;
  res.best_ssim = best_ssim;

  // leave the network at its best recorded state
  Checkpoint best = Checkpoint::load(res.checkpoint_path);
  load_params(best, st.wparams);
  restore_arch(net, best);

  std::ofstream gf(out_dir + "/genotype.json", std::ios::trunc);
  gf << serialize_genotype(res.genotype);
  return res;
}

}  // namespace hinas
