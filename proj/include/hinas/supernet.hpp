#pragma once

#include <array>
#include <memory>
#include <utility>
#include <vector>

#include "hinas/cell.hpp"
#include "hinas/genotype.hpp"
#include "hinas/nn.hpp"

namespace hinas {

struct SupernetConfig {
  int L = 4;  // layers
  int N = 5;  // nodes per cell
  int W = 10; // base width
  int image_channels = 1;
  bool include_nonshared = false;  // build the per-source-cell comparison variant
  bool residual_output = false;    // add the noisy input back onto the prediction

  void validate() const;
  int level_width(int level) const { return (1 << level) * W; }         // cell width 2^i W
  int level_out_channels(int level) const { return (1 << level) * N * W; }  // 2^i N W
};

/// The relaxed search network: two stem convolutions, L layers of three
/// width-level cells joined by 1x1 projections and softmax(beta)-weighted
/// sums, and a 3x3 output head over the concatenated level-L features.
///
/// The default forward shares one cell per (layer, level): the incoming
/// features are aggregated first and the cell runs once. forward_nonshared
/// runs one cell per valid incoming source instead and combines the outputs;
/// it exists for the memory/compute comparison and has no backward.
class Supernet {
public:
  explicit Supernet(const SupernetConfig& cfg);

  void init(Rng& rng);

  Tensor forward(const TensorPtr& x, const FwdCtx& ctx);
  Tensor forward_nonshared(const TensorPtr& x, const FwdCtx& ctx);
  /// Backprop through the last shared forward. Accumulates weight, alpha
  /// and beta gradients; returns dL/dx.
  Tensor backward(const Tensor& gy);

  /// Cell forward invocations for one supernet forward in the given mode,
  /// measured by instrumented dry run on a tiny input.
  int64_t count_cell_invocations(bool nonshared);
  int64_t cell_invocations() const { return invocations_; }
  void reset_invocations() { invocations_ = 0; }

  void collect_params(ParamList& out);  // weights only; alpha/beta live in the tables
  void zero_weight_grads();
  int64_t param_count() const;
  /// Drops every retained activation (cells, projections, stems, head).
  void release_activations();

  AlphaTable& alpha() { return alpha_; }
  const AlphaTable& alpha() const { return alpha_; }
  BetaTable& beta() { return beta_; }
  const BetaTable& beta() const { return beta_; }
  const SupernetConfig& config() const { return cfg_; }

private:
  struct LevelState {
    std::vector<std::pair<int, TensorPtr>> fprev;  // projected previous-layer features
    std::vector<double> probs;                     // softmax(beta) over fprev order
  };

  // raw (unprojected) source feature at layer l in {-1, 0, 1..L}, level i
  const TensorPtr& source(int l, int i) const;
  int source_channels(int l, int i) const;
  Tensor project_sources(int l, int i, LevelState* st, const FwdCtx& ctx);
  Tensor head_forward(const FwdCtx& ctx);
  void clear_state();

  SupernetConfig cfg_;
  AlphaTable alpha_;
  BetaTable beta_;
  Conv2d stem1_, stem2_;
  std::vector<std::array<SuperCell, 3>> cells_;  // [layer-1][level]
  // projections keyed [layer-1][level]: prev-layer sources in valid_sources
  // order (single stem entry for layer 1), plus the two-layers-back skip
  std::vector<std::array<std::vector<Conv2d>, 3>> proj_prev_;
  std::vector<std::array<Conv2d, 3>> proj_skip_;
  Conv2d head_;
  // per-source cells for the comparison variant, same keying as proj_prev_
  std::vector<std::array<std::vector<SuperCell>, 3>> nscells_;

  // retained forward state (train phase only)
  std::vector<std::array<TensorPtr, 3>> hs_;  // [layer-1][level]
  TensorPtr h_stem1_, h_stem2_;
  std::vector<std::array<LevelState, 3>> state_;
  int64_t invocations_ = 0;
  bool have_state_ = false;
};

}  // namespace hinas
