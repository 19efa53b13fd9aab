#pragma once

#include <array>
#include <memory>
#include <utility>
#include <vector>

#include "hinas/genotype.hpp"
#include "hinas/ops.hpp"

namespace hinas {

/// Candidate-input indexing shared by relaxed and compact cells:
/// 0 = previous layer's feature, 1 = the feature from two layers back,
/// 2+j = output of node j.
///
/// Relaxed cell DAG: node i combines all 2+i candidate inputs through mixed
/// ops; the cell output concatenates the N node outputs (N * width channels).
class SuperCell {
public:
  SuperCell() = default;
  SuperCell(int node_count, int width);

  /// Both inputs must carry `width` channels.
  Tensor forward(const TensorPtr& h_prev, const TensorPtr& h_prevprev, const AlphaTable& alpha,
                 const FwdCtx& ctx);
  /// Accumulates op-parameter and alpha gradients; returns gradients
  /// w.r.t. (h_prev, h_prevprev).
  std::pair<Tensor, Tensor> backward(const Tensor& gy, AlphaTable& alpha);

  void init(Rng& rng);
  void collect_params(const std::string& prefix, ParamList& out);
  int64_t param_count() const;
  void release();

  int node_count() const { return node_count_; }
  int width() const { return width_; }
  int out_channels() const { return node_count_ * width_; }

private:
  int node_count_ = 0, width_ = 0;
  std::vector<std::vector<MixedOp>> edges_;  // [node][input]
  int bn_ = 0, bh_ = 0, bw_ = 0;             // input dims noted during forward
};

/// Derived cell: each node applies its two selected ops to its two selected
/// inputs and sums them; output concatenates the N node outputs.
class CompactCell {
public:
  CompactCell() = default;
  CompactCell(const CellGenotype& g, int width);

  Tensor forward(const TensorPtr& h_prev, const TensorPtr& h_prevprev, const FwdCtx& ctx);
  std::pair<Tensor, Tensor> backward(const Tensor& gy);

  void init(Rng& rng);
  void collect_params(const std::string& prefix, ParamList& out);
  int64_t param_count() const;
  void release();

  int node_count() const { return int(nodes_.size()); }
  int width() const { return width_; }
  int out_channels() const { return node_count() * width_; }

private:
  struct Edge {
    int input = 0;
    std::unique_ptr<OpInstance> op;
  };
  int width_ = 0;
  std::vector<std::array<Edge, 2>> nodes_;
  int bn_ = 0, bh_ = 0, bw_ = 0;
};

}  // namespace hinas
