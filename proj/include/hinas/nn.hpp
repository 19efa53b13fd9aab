#pragma once

#include <string>
#include <vector>

#include "hinas/rng.hpp"
#include "hinas/tensor.hpp"

namespace hinas {

enum class Phase { train, eval };

/// Per-forward options. `cache` retains what backward() needs; recompute
/// passes inside backward run with update_bn=false so running statistics
/// are touched exactly once per training step.
struct FwdCtx {
  Phase phase = Phase::train;
  bool cache = false;
  bool update_bn = true;
};

inline FwdCtx eval_ctx() { return FwdCtx{Phase::eval, false, false}; }

struct ParamRef {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;  // null for buffers (running statistics)
  bool trainable = true;
  bool arch = false;
};
using ParamList = std::vector<ParamRef>;

/// 2-D convolution, stride 1, zero padding chosen to preserve H x W.
class Conv2d {
public:
  Conv2d() = default;
  Conv2d(int in_ch, int out_ch, int ksize, int dilation = 1, int groups = 1, bool with_bias = true);

  void init_kaiming(Rng& rng);
  void init_zero();

  Tensor forward(const TensorPtr& x, const FwdCtx& ctx);
  /// Accumulates weight/bias gradients, returns gradient w.r.t. the input.
  Tensor backward(const Tensor& gy);
  void release() { x_cache_.reset(); }

  void collect_params(const std::string& prefix, ParamList& out);
  int64_t param_count() const;

  int in_ch() const { return in_ch_; }
  int out_ch() const { return out_ch_; }
  int ksize() const { return ksize_; }
  int pad() const { return pad_; }

  Tensor weight;  // (out, in/groups, k, k)
  Tensor wgrad;
  Tensor bias;  // (1, out, 1, 1) when has_bias
  Tensor bgrad;

private:
  int in_ch_ = 0, out_ch_ = 0, ksize_ = 1, dilation_ = 1, groups_ = 1, pad_ = 0;
  bool has_bias_ = true;
  TensorPtr x_cache_;
};

/// Batch normalization over (N, H, W) per channel. Batch statistics in
/// Phase::train, running statistics in Phase::eval.
class BatchNorm2d {
public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels, double eps = 1e-5, double momentum = 0.1);

  Tensor forward(const TensorPtr& x, const FwdCtx& ctx);
  Tensor backward(const Tensor& gy);
  void release() {
    xhat_cache_ = Tensor();
    inv_std_cache_.clear();
  }

  void collect_params(const std::string& prefix, ParamList& out);
  int64_t param_count() const { return 2 * channels_; }

  Tensor gamma, beta;  // (1, C, 1, 1)
  Tensor ggrad, bgrad;
  Tensor running_mean, running_var;

private:
  int channels_ = 0;
  double eps_ = 1e-5, momentum_ = 0.1;
  Tensor xhat_cache_;
  std::vector<double> inv_std_cache_;
};

/// Modulated deformable convolution (v2). A standard 3x3 convolution on the
/// input predicts per-location sampling offsets (2 per kernel tap) and
/// modulation logits (1 per tap, passed through a sigmoid). The predictor is
/// zero-initialized so sampling starts on the regular grid.
class DeformConv2d {
public:
  DeformConv2d() = default;
  DeformConv2d(int in_ch, int out_ch, int ksize = 3);

  void init_kaiming(Rng& rng);

  Tensor forward(const TensorPtr& x, const FwdCtx& ctx);
  Tensor backward(const Tensor& gy);
  void release() {
    x_cache_.reset();
    predictor.release();
  }

  void collect_params(const std::string& prefix, ParamList& out);
  int64_t param_count() const;

  Tensor weight;  // (out, in, k, k)
  Tensor wgrad;
  Conv2d predictor;  // in -> 3*k*k channels: [2*k*k offsets | k*k mask logits]

private:
  // Fills `cols` (in*k*k rows x H*W columns) for one batch item given
  // offsets/masks; optionally returns raw (pre-mask) samples for backward.
  void build_columns(const Tensor& x, const Tensor& aux, int n, std::vector<double>& cols,
                     std::vector<double>* raw) const;

  int in_ch_ = 0, out_ch_ = 0, ksize_ = 3, pad_ = 1;
  TensorPtr x_cache_;
};

// Elementwise helpers used when staging composite operators.
Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& gy, const Tensor& x_pre);

/// softmax of a small logit vector; throws NumericError on non-finite input.
std::vector<double> softmax(const std::vector<double>& logits);
/// dL/dlogits given dL/dprobs-dot-products (s_k = <g, y_k>) and probs.
std::vector<double> softmax_backward(const std::vector<double>& probs, const std::vector<double>& s);

}  // namespace hinas
