#include "hinas/supernet.hpp"

#include <stdexcept>

namespace hinas {

void SupernetConfig::validate() const {
  if (L < 1) throw ConfigError("config: L must be >= 1");
  if (N < 1) throw ConfigError("config: N must be >= 1");
  if (W < 1) throw ConfigError("config: W must be >= 1");
  if (image_channels < 1) throw ConfigError("config: image_channels must be >= 1");
}

Supernet::Supernet(const SupernetConfig& cfg) : cfg_(cfg), alpha_(cfg.N), beta_(cfg.L) {
  cfg_.validate();
  const int nw = cfg_.N * cfg_.W;
  stem1_ = Conv2d(cfg_.image_channels, nw, 3);
  stem2_ = Conv2d(nw, nw, 3);

  cells_.resize(cfg_.L);
  proj_prev_.resize(cfg_.L);
  proj_skip_.resize(cfg_.L);
  for (int l = 1; l <= cfg_.L; ++l) {
    for (int i = 0; i < 3; ++i) {
      const int wc = cfg_.level_width(i);
      cells_[l - 1][i] = SuperCell(cfg_.N, wc);
      if (l == 1) {
        proj_prev_[l - 1][i].emplace_back(source_channels(0, i), wc, 1);
      } else {
        for (int k : BetaTable::valid_sources(i))
          proj_prev_[l - 1][i].emplace_back(source_channels(l - 1, k), wc, 1);
      }
      proj_skip_[l - 1][i] = Conv2d(source_channels(l - 2, i), wc, 1);
    }
  }
  head_ = Conv2d(7 * nw, cfg_.image_channels, 3);

  if (cfg_.include_nonshared) {
    nscells_.resize(cfg_.L);
    for (int l = 1; l <= cfg_.L; ++l)
      for (int i = 0; i < 3; ++i) {
        const int sources = l == 1 ? 1 : int(BetaTable::valid_sources(i).size());
        for (int s = 0; s < sources; ++s)
          nscells_[l - 1][i].emplace_back(cfg_.N, cfg_.level_width(i));
      }
  }
  hs_.resize(cfg_.L);
  state_.resize(cfg_.L);
}

int Supernet::source_channels(int l, int i) const {
  if (l <= 0) return cfg_.N * cfg_.W;  // both stem outputs
  return cfg_.level_out_channels(i);
}

const TensorPtr& Supernet::source(int l, int i) const {
  if (l == -1) return h_stem1_;
  if (l == 0) return h_stem2_;
  return hs_[l - 1][i];
}

void Supernet::init(Rng& rng) {
  {
    Rng r = rng.fork("stem");
    stem1_.init_kaiming(r);
    stem2_.init_kaiming(r);
  }
  {
    Rng r = rng.fork("head");
    head_.init_kaiming(r);
    // the head regresses a residual at noise scale; damp it so the first
    // optimization steps start near the identity mapping rather than from an
    // off-scale output whose ssim term has a huge gradient
    head_.weight *= 0.1;
    if (head_.bias.numel()) head_.bias *= 0.1;
  }
  for (int l = 1; l <= cfg_.L; ++l)
    for (int i = 0; i < 3; ++i) {
      Rng rc = rng.fork("cell." + std::to_string(l) + "." + std::to_string(i));
      cells_[l - 1][i].init(rc);
      Rng rp = rng.fork("proj." + std::to_string(l) + "." + std::to_string(i));
      for (auto& p : proj_prev_[l - 1][i]) p.init_kaiming(rp);
      proj_skip_[l - 1][i].init_kaiming(rp);
    }
  if (cfg_.include_nonshared)
    for (int l = 1; l <= cfg_.L; ++l)
      for (int i = 0; i < 3; ++i) {
        Rng rc = rng.fork("nscell." + std::to_string(l) + "." + std::to_string(i));
        for (auto& c : nscells_[l - 1][i]) c.init(rc);
      }
  // architecture logits start near zero so every choice is initially live
  Rng ra = rng.fork("arch");
  for (double& v : alpha_.raw()) v = ra.normal(0.0, 1e-3);
  for (double& v : beta_.raw()) v = ra.normal(0.0, 1e-3);
}

Tensor Supernet::project_sources(int l, int i, LevelState* st, const FwdCtx& ctx) {
  auto& projs = proj_prev_[l - 1][i];
  if (l == 1) {
    if (st) st->probs = {1.0};
    return projs[0].forward(source(0, i), ctx);
  }
  const std::vector<int> srcs = BetaTable::valid_sources(i);
  const auto weighted = beta_.normalized_incoming(l, i);
  Tensor agg(source(l - 1, srcs[0])->n(), cfg_.level_width(i), source(l - 1, srcs[0])->h(),
             source(l - 1, srcs[0])->w());
  for (std::size_t s = 0; s < srcs.size(); ++s) {
    Tensor f = projs[s].forward(source(l - 1, srcs[s]), ctx);
    agg.add_scaled(f, weighted[s].second);
    if (st) {
      st->fprev.emplace_back(srcs[s], make_shared_tensor(std::move(f)));
      st->probs.push_back(weighted[s].second);
    }
  }
  return agg;
}

Tensor Supernet::head_forward(const FwdCtx& ctx) {
  std::vector<const Tensor*> parts;
  for (int i = 0; i < 3; ++i) parts.push_back(hs_[cfg_.L - 1][i].get());
  Tensor cat = concat_channels(parts);
  return head_.forward(make_shared_tensor(std::move(cat)), ctx);
}

Tensor Supernet::forward(const TensorPtr& x, const FwdCtx& ctx) {
  if (x->c() != cfg_.image_channels)
    throw ShapeError("supernet: expected " + std::to_string(cfg_.image_channels) +
                     " image channels, got " + x->shape_str());
  const bool train = ctx.phase == Phase::train;
  clear_state();

  h_stem1_ = make_shared_tensor(stem1_.forward(x, ctx));
  h_stem2_ = make_shared_tensor(stem2_.forward(h_stem1_, ctx));

  for (int l = 1; l <= cfg_.L; ++l) {
    for (int i = 0; i < 3; ++i) {
      LevelState st;
      Tensor agg = project_sources(l, i, train ? &st : nullptr, ctx);
      Tensor skip = proj_skip_[l - 1][i].forward(source(l - 2, i), ctx);
      Tensor out = cells_[l - 1][i].forward(make_shared_tensor(std::move(agg)),
                                            make_shared_tensor(std::move(skip)), alpha_, ctx);
      ++invocations_;
      if (!out.all_finite())
        throw NumericError("supernet: non-finite activation at layer " + std::to_string(l) +
                           ", level " + std::to_string(i));
      hs_[l - 1][i] = make_shared_tensor(std::move(out));
      state_[l - 1][i] = std::move(st);
    }
  }

  Tensor y = head_forward(ctx);
  if (!y.all_finite()) throw NumericError("supernet: non-finite activation at head");
  if (cfg_.residual_output) y += *x;
  have_state_ = train;
  if (!train) clear_state();
  return y;
}

Tensor Supernet::forward_nonshared(const TensorPtr& x, const FwdCtx& ctx) {
  if (!cfg_.include_nonshared)
    throw ConfigError("supernet: nonshared variant not built (include_nonshared unset)");
  clear_state();
  h_stem1_ = make_shared_tensor(stem1_.forward(x, ctx));
  h_stem2_ = make_shared_tensor(stem2_.forward(h_stem1_, ctx));

  for (int l = 1; l <= cfg_.L; ++l) {
    for (int i = 0; i < 3; ++i) {
      auto& projs = proj_prev_[l - 1][i];
      TensorPtr skip = make_shared_tensor(proj_skip_[l - 1][i].forward(source(l - 2, i), ctx));
      Tensor out;
      if (l == 1) {
        TensorPtr f = make_shared_tensor(projs[0].forward(source(0, i), ctx));
        out = nscells_[l - 1][i][0].forward(f, skip, alpha_, ctx);
        ++invocations_;
      } else {
        const std::vector<int> srcs = BetaTable::valid_sources(i);
        const auto weighted = beta_.normalized_incoming(l, i);
        out = Tensor(x->n(), cfg_.level_out_channels(i), source(l - 1, srcs[0])->h(),
                     source(l - 1, srcs[0])->w());
        for (std::size_t s = 0; s < srcs.size(); ++s) {
          TensorPtr f = make_shared_tensor(projs[s].forward(source(l - 1, srcs[s]), ctx));
          Tensor ys = nscells_[l - 1][i][s].forward(f, skip, alpha_, ctx);
          ++invocations_;
          out.add_scaled(ys, weighted[s].second);
        }
      }
      if (!out.all_finite())
        throw NumericError("supernet: non-finite activation at layer " + std::to_string(l) +
                           ", level " + std::to_string(i));
      hs_[l - 1][i] = make_shared_tensor(std::move(out));
    }
  }
  Tensor y = head_forward(ctx);
  if (cfg_.residual_output) y += *x;
  have_state_ = false;  // no backward for this variant
  if (ctx.phase != Phase::train) clear_state();
  return y;
}

Tensor Supernet::backward(const Tensor& gy) {
  if (!have_state_) throw std::logic_error("Supernet::backward without a shared training forward");

  std::vector<std::array<Tensor, 3>> ghl(cfg_.L);
  for (int l = 0; l < cfg_.L; ++l)
    for (int i = 0; i < 3; ++i) ghl[l][i] = Tensor::zeros_like(*hs_[l][i]);
  Tensor g_stem1 = Tensor::zeros_like(*h_stem1_);
  Tensor g_stem2 = Tensor::zeros_like(*h_stem2_);

  {
    Tensor gcat = head_.backward(gy);
    int c0 = 0;
    for (int i = 0; i < 3; ++i) {
      const int ci = cfg_.level_out_channels(i);
      ghl[cfg_.L - 1][i] += slice_channels(gcat, c0, c0 + ci);
      c0 += ci;
    }
  }

  for (int l = cfg_.L; l >= 1; --l) {
    for (int i = 2; i >= 0; --i) {
      auto [g_agg, g_skip] = cells_[l - 1][i].backward(ghl[l - 1][i], alpha_);
      {
        Tensor gsrc = proj_skip_[l - 1][i].backward(g_skip);
        if (l == 1)
          g_stem1 += gsrc;
        else if (l == 2)
          g_stem2 += gsrc;
        else
          ghl[l - 3][i] += gsrc;
      }
      auto& st = state_[l - 1][i];
      auto& projs = proj_prev_[l - 1][i];
      if (l == 1) {
        g_stem2 += projs[0].backward(g_agg);
        continue;
      }
      std::vector<double> s(st.fprev.size());
      for (std::size_t k = 0; k < st.fprev.size(); ++k) s[k] = g_agg.dot(*st.fprev[k].second);
      const std::vector<double> gb = softmax_backward(st.probs, s);
      for (std::size_t k = 0; k < st.fprev.size(); ++k) {
        beta_.grad_at(l, i, st.fprev[k].first) += gb[k];
        Tensor gf = g_agg;
        gf *= st.probs[k];
        ghl[l - 2][st.fprev[k].first] += projs[k].backward(gf);
      }
    }
  }

  g_stem1 += stem2_.backward(g_stem2);
  Tensor gx = stem1_.backward(g_stem1);
  if (cfg_.residual_output) gx += gy;
  clear_state();
  return gx;
}

int64_t Supernet::count_cell_invocations(bool nonshared) {
  Tensor probe(1, cfg_.image_channels, 8, 8);
  const TensorPtr p = make_shared_tensor(std::move(probe));
  const int64_t before = invocations_;
  if (nonshared)
    (void)forward_nonshared(p, eval_ctx());
  else
    (void)forward(p, eval_ctx());
  release_activations();
  return invocations_ - before;
}

void Supernet::collect_params(ParamList& out) {
  stem1_.collect_params("stem1", out);
  stem2_.collect_params("stem2", out);
  for (int l = 1; l <= cfg_.L; ++l)
    for (int i = 0; i < 3; ++i) {
      const std::string key = "l" + std::to_string(l) + ".v" + std::to_string(i);
      cells_[l - 1][i].collect_params("cell." + key, out);
      for (std::size_t s = 0; s < proj_prev_[l - 1][i].size(); ++s)
        proj_prev_[l - 1][i][s].collect_params("proj." + key + ".prev" + std::to_string(s), out);
      proj_skip_[l - 1][i].collect_params("proj." + key + ".skip", out);
    }
  head_.collect_params("head", out);
}

void Supernet::zero_weight_grads() {
  ParamList params;
  collect_params(params);
  for (auto& p : params)
    if (p.grad) p.grad->zero();
}

int64_t Supernet::param_count() const {
  ParamList params;
  const_cast<Supernet*>(this)->collect_params(params);
  int64_t c = 0;
  for (auto& p : params)
    if (p.trainable) c += int64_t(p.value->numel());
  return c;
}

void Supernet::release_activations() {
  clear_state();
  stem1_.release();
  stem2_.release();
  head_.release();
  for (int l = 1; l <= cfg_.L; ++l)
    for (int i = 0; i < 3; ++i) {
      cells_[l - 1][i].release();
      for (auto& p : proj_prev_[l - 1][i]) p.release();
      proj_skip_[l - 1][i].release();
      if (cfg_.include_nonshared)
        for (auto& c : nscells_[l - 1][i]) c.release();
    }
  have_state_ = false;
}

void Supernet::clear_state() {
  h_stem1_.reset();
  h_stem2_.reset();
  for (auto& layer : hs_)
    for (auto& h : layer) h.reset();
  for (auto& layer : state_)
    for (auto& st : layer) st = LevelState{};
  have_state_ = false;
}

}  // namespace hinas
