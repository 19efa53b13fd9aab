#include "hinas/ops.hpp"

#include <stdexcept>

namespace hinas {

namespace {

/// ReLU -> conv stage(s) -> BN. Subclasses supply the conv stage.
class ConvLikeOp : public OpInstance {
public:
  explicit ConvLikeOp(int channels) : bn_(channels) {}

  Tensor forward(const TensorPtr& x, const FwdCtx& ctx) final {
    if (ctx.phase == Phase::train) {
      x_ = x;
      warm_ = ctx.cache;
    } else {
      x_.reset();
    }
    Tensor a = relu(*x);
    Tensor b = stage_forward(make_shared_tensor(std::move(a)), ctx);
    return bn_.forward(make_shared_tensor(std::move(b)), ctx);
  }

  Tensor backward(const Tensor& gy) final {
    if (!x_) throw std::logic_error("op backward before forward");
    if (!warm_) {
      FwdCtx rc{Phase::train, true, false};
      Tensor a = relu(*x_);
      Tensor b = stage_forward(make_shared_tensor(std::move(a)), rc);
      (void)bn_.forward(make_shared_tensor(std::move(b)), rc);
    }
    Tensor gb = bn_.backward(gy);
    Tensor ga = stage_backward(gb);
    Tensor gx = relu_backward(ga, *x_);
    x_.reset();
    warm_ = false;
    return gx;
  }

  void collect_params(const std::string& prefix, ParamList& out) final {
    stage_collect(prefix, out);
    bn_.collect_params(prefix + ".bn", out);
  }

  void release() final {
    x_.reset();
    warm_ = false;
    bn_.release();
    stage_release();
  }

protected:
  virtual Tensor stage_forward(const TensorPtr& a, const FwdCtx& ctx) = 0;
  virtual Tensor stage_backward(const Tensor& gb) = 0;
  virtual void stage_collect(const std::string& prefix, ParamList& out) = 0;
  virtual void stage_release() = 0;

  BatchNorm2d bn_;

private:
  TensorPtr x_;
  bool warm_ = false;
};

class ConvOp final : public ConvLikeOp {
public:
  ConvOp(int channels, int dilation, OpKind kind)
      : ConvLikeOp(channels), conv_(channels, channels, 3, dilation, 1, false), kind_(kind) {}

  OpKind kind() const override { return kind_; }
  void init(Rng& rng) override { conv_.init_kaiming(rng); }
  int64_t param_count() const override { return conv_.param_count() + bn_.param_count(); }

protected:
  Tensor stage_forward(const TensorPtr& a, const FwdCtx& ctx) override {
    return conv_.forward(a, ctx);
  }
  Tensor stage_backward(const Tensor& gb) override { return conv_.backward(gb); }
  void stage_collect(const std::string& prefix, ParamList& out) override {
    conv_.collect_params(prefix + ".conv", out);
  }
  void stage_release() override { conv_.release(); }

private:
  Conv2d conv_;
  OpKind kind_;
};

class SepOp final : public ConvLikeOp {
public:
  explicit SepOp(int channels)
      : ConvLikeOp(channels),
        dw_(channels, channels, 3, 1, channels, false),
        pw_(channels, channels, 1, 1, 1, false) {}

  OpKind kind() const override { return OpKind::sep; }
  void init(Rng& rng) override {
    dw_.init_kaiming(rng);
    pw_.init_kaiming(rng);
  }
  int64_t param_count() const override {
    return dw_.param_count() + pw_.param_count() + bn_.param_count();
  }

protected:
  Tensor stage_forward(const TensorPtr& a, const FwdCtx& ctx) override {
    Tensor d = dw_.forward(a, ctx);
    return pw_.forward(make_shared_tensor(std::move(d)), ctx);
  }
  Tensor stage_backward(const Tensor& gb) override {
    Tensor gd = pw_.backward(gb);
    return dw_.backward(gd);
  }
  void stage_collect(const std::string& prefix, ParamList& out) override {
    dw_.collect_params(prefix + ".dw", out);
    pw_.collect_params(prefix + ".pw", out);
  }
  void stage_release() override {
    dw_.release();
    pw_.release();
  }

private:
  Conv2d dw_, pw_;
};

class DefOp final : public ConvLikeOp {
public:
  explicit DefOp(int channels) : ConvLikeOp(channels), deform_(channels, channels, 3) {}

  OpKind kind() const override { return OpKind::def; }
  void init(Rng& rng) override { deform_.init_kaiming(rng); }
  int64_t param_count() const override { return deform_.param_count() + bn_.param_count(); }

protected:
  Tensor stage_forward(const TensorPtr& a, const FwdCtx& ctx) override {
    return deform_.forward(a, ctx);
  }
  Tensor stage_backward(const Tensor& gb) override { return deform_.backward(gb); }
  void stage_collect(const std::string& prefix, ParamList& out) override {
    deform_.collect_params(prefix + ".def", out);
  }
  void stage_release() override { deform_.release(); }

private:
  DeformConv2d deform_;
};

class SkipOp final : public OpInstance {
public:
  OpKind kind() const override { return OpKind::skip; }
  Tensor forward(const TensorPtr& x, const FwdCtx&) override { return *x; }
  Tensor backward(const Tensor& gy) override { return gy; }
};

class NoneOp final : public OpInstance {
public:
  OpKind kind() const override { return OpKind::none; }
  Tensor forward(const TensorPtr& x, const FwdCtx&) override { return Tensor::zeros_like(*x); }
  Tensor backward(const Tensor& gy) override { return Tensor::zeros_like(gy); }
};

}  // namespace

std::unique_ptr<OpInstance> make_op(OpKind kind, int channels) {
  switch (kind) {
    case OpKind::conv: return std::make_unique<ConvOp>(channels, 1, OpKind::conv);
    case OpKind::dil: return std::make_unique<ConvOp>(channels, 2, OpKind::dil);
    case OpKind::sep: return std::make_unique<SepOp>(channels);
    case OpKind::def: return std::make_unique<DefOp>(channels);
    case OpKind::skip: return std::make_unique<SkipOp>();
    case OpKind::none: return std::make_unique<NoneOp>();
  }
  throw std::logic_error("make_op: bad kind");
}

// ---------------------------------------------------------------------------
// MixedOp

MixedOp::MixedOp(int channels) : channels_(channels) {
  for (int k = 0; k < kNumOps; ++k) ops_[k] = make_op(kAllOps[k], channels);
}

Tensor MixedOp::forward(const TensorPtr& x, const double* alpha_logits, const FwdCtx& ctx) {
  probs_ = softmax(std::vector<double>(alpha_logits, alpha_logits + kNumOps));
  x_ = ctx.phase == Phase::train ? x : nullptr;
  // sub-ops never cache here; backward warms them one at a time
  FwdCtx sub = ctx;
  sub.cache = false;
  Tensor y(x->n(), channels_, x->h(), x->w());
  for (int k = 0; k < kNumOps; ++k) {
    if (kAllOps[k] == OpKind::none) continue;  // zero contribution
    Tensor yk = ops_[k]->forward(x, sub);
    y.add_scaled(yk, probs_[k]);
  }
  return y;
}

Tensor MixedOp::backward(const Tensor& gy, double* alpha_grads) {
  if (!x_) throw std::logic_error("MixedOp: backward before forward");
  const FwdCtx rc{Phase::train, true, false};
  std::vector<double> s(kNumOps, 0.0);
  Tensor gx = Tensor::zeros_like(*x_);
  for (int k = 0; k < kNumOps; ++k) {
    if (kAllOps[k] == OpKind::none) continue;  // y_k = 0 and passes no gradient
    {
      Tensor yk = ops_[k]->forward(x_, rc);
      s[k] = gy.dot(yk);
    }
    Tensor gyk = gy;
    gyk *= probs_[k];
    gx += ops_[k]->backward(gyk);
  }
  std::vector<double> ga = softmax_backward(probs_, s);
  for (int k = 0; k < kNumOps; ++k) alpha_grads[k] += ga[k];
  x_.reset();
  return gx;
}

void MixedOp::init(Rng& rng) {
  for (auto& op : ops_) op->init(rng);
}

void MixedOp::collect_params(const std::string& prefix, ParamList& out) {
  for (int k = 0; k < kNumOps; ++k)
    ops_[k]->collect_params(prefix + "." + op_name(kAllOps[k]), out);
}

void MixedOp::release() {
  x_.reset();
  for (auto& op : ops_) op->release();
}

int64_t MixedOp::param_count() const {
  int64_t c = 0;
  for (const auto& op : ops_) c += op->param_count();
  return c;
}

}  // namespace hinas
