#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "hinas/genotype.hpp"
#include "hinas/nn.hpp"

namespace hinas {

/// One candidate operator on a cell edge. Every kind preserves (C, H, W).
///
/// Memory protocol: in Phase::train the op keeps only its input pointer.
/// backward() re-runs the internal stages to rebuild their caches unless the
/// preceding forward() was called with ctx.cache set (then caches are warm
/// and the recompute is skipped). Either way backward() leaves the op clean.
class OpInstance {
public:
  virtual ~OpInstance() = default;
  virtual OpKind kind() const = 0;
  virtual Tensor forward(const TensorPtr& x, const FwdCtx& ctx) = 0;
  /// Accumulates parameter gradients, returns gradient w.r.t. the input.
  virtual Tensor backward(const Tensor& gy) = 0;
  virtual void init(Rng&) {}
  virtual void collect_params(const std::string&, ParamList&) {}
  virtual int64_t param_count() const { return 0; }
  /// Drops any retained activations without running backward.
  virtual void release() {}
};

std::unique_ptr<OpInstance> make_op(OpKind kind, int channels);

/// Relaxed edge operator: y = Σ_k softmax(α)_k · op_k(x), ops in kAllOps order.
class MixedOp {
public:
  MixedOp() = default;
  explicit MixedOp(int channels);

  /// `alpha_logits` points at the edge's kNumOps logits.
  Tensor forward(const TensorPtr& x, const double* alpha_logits, const FwdCtx& ctx);
  /// Accumulates parameter grads and adds dL/dα into `alpha_grads` (kNumOps
  /// entries); returns dL/dx.
  Tensor backward(const Tensor& gy, double* alpha_grads);

  void init(Rng& rng);
  void collect_params(const std::string& prefix, ParamList& out);
  int64_t param_count() const;
  void release();
  int channels() const { return channels_; }

private:
  int channels_ = 0;
  std::array<std::unique_ptr<OpInstance>, kNumOps> ops_;
  TensorPtr x_;
  std::vector<double> probs_;
};

}  // namespace hinas
