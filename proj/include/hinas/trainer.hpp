#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hinas/cell.hpp"
#include "hinas/checkpoint.hpp"
#include "hinas/data.hpp"
#include "hinas/genotype.hpp"
#include "hinas/losses.hpp"
#include "hinas/nn.hpp"

namespace hinas {

/// Recipe for the final compact network. `widths` gives each cell's channel
/// count; empty means follow the genotype's width path (2^{path[l]} * W).
struct BuildSpec {
  NetworkGenotype genotype;
  std::vector<int> widths;
  int image_channels = 1;
  bool residual_output = false;

  void validate() const;
  std::vector<int> resolved_widths() const;
};

/// Named width schedules: "ws" follows the searched path, "w40" fixes every
/// cell at 40 channels, "wm" starts at 10 and doubles per cell.
std::vector<int> preset_widths(const NetworkGenotype& g, const std::string& name);

/// The derived network: two stem convolutions, one compact cell per layer
/// fed by 1x1-projected h_{l-1} and h_{l-2}, and a 3x3 head back to image
/// channels. Every layer instantiates the same searched cell structure.
class CompactNetwork {
public:
  explicit CompactNetwork(const BuildSpec& spec);

  void init(Rng& rng);
  Tensor forward(const TensorPtr& x, const FwdCtx& ctx);
  Tensor backward(const Tensor& gy);

  void collect_params(ParamList& out);
  void zero_grads();
  int64_t param_count() const;
  void release_activations();

  const BuildSpec& spec() const { return spec_; }
  const std::vector<int>& widths() const { return widths_; }

private:
  BuildSpec spec_;
  std::vector<int> widths_;
  int stem_ch_ = 0;
  Conv2d stem1_, stem2_;
  std::vector<CompactCell> cells_;
  std::vector<Conv2d> proj_prev_, proj_skip_;
  Conv2d head_;

  TensorPtr x_in_;  // kept in train phase for the residual path
  bool have_state_ = false;
};

struct TrainConfig {
  int64_t iterations = 600000;
  double lr = 0.05;       // Adam
  double lr_min = 1e-5;   // cosine floor; ignored with constant_lr
  bool constant_lr = false;
  double weight_decay = 0.0;
  int batch_size = 12;
  int crop = 64;
  int64_t eval_every = 2000;
  uint64_t seed = 0;
  LossConfig loss;
  bool verbose = true;

  void validate() const;
};

struct TrainRecord {
  int64_t iteration = 0;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct TrainResult {
  std::vector<TrainRecord> history;
  std::vector<double> loss_curve;  // one entry per iteration
  int64_t best_iteration = 0;
  double best_psnr = 0.0, best_ssim = 0.0;
  std::string checkpoint_path;
};

/// Iteration-driven training with per-sample augmentation, periodic tiled
/// evaluation and best-PSNR checkpointing (train_log.csv + best.ckpt in
/// out_dir). Evaluation runs on eval_data when given, else on the training
/// set. The network is left at its best recorded state.
TrainResult train_final(CompactNetwork& net, const Dataset& data, const TrainConfig& cfg,
                        const std::string& out_dir, const Dataset* eval_data = nullptr);

struct EvalReport {
  double mean_psnr = 0.0, mean_ssim = 0.0;
  std::vector<std::pair<double, double>> per_image;  // (psnr, ssim)
  double wallclock_seconds = 0.0;
};

/// Tiled 64x64 inference over the whole dataset, outputs clamped to [0,1].
EvalReport evaluate_final(CompactNetwork& net, const Dataset& data, int tile_size = 64);

void write_eval_csv(const EvalReport& r, const std::string& path);

/// Clean | noisy | denoised side by side, for visual inspection.
void save_comparison_png(const Tensor& clean, const Tensor& noisy, const Tensor& denoised,
                         const std::string& path);

/// Compact-network checkpoint helpers shared by train_final and the CLI.
void save_compact_checkpoint(const std::string& path, CompactNetwork& net, int64_t iteration,
                             const nlohmann::json& meta);
void load_compact_checkpoint(const std::string& path, CompactNetwork& net);
/// Rebuilds the BuildSpec a compact checkpoint was saved with.
BuildSpec spec_from_checkpoint(const Checkpoint& ck);

}  // namespace hinas
