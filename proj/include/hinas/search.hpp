#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "hinas/data.hpp"
#include "hinas/genotype.hpp"
#include "hinas/losses.hpp"
#include "hinas/supernet.hpp"

namespace hinas {

struct SearchConfig {
  int max_epochs = 100;
  int batch_size = 12;
  double weight_lr_max = 0.025, weight_lr_min = 0.001;  // per-step cosine
  double momentum = 0.9;
  double weight_decay = 3e-4;
  double arch_lr = 1e-3, arch_weight_decay = 1e-3;
  int warmup_epochs = 20;  // kernels only; alpha/beta frozen
  int patience = 10;       // consecutive non-improving evaluations before stopping
  double grad_clip = 5.0;  // global norm bound on kernel grads per step; 0 disables
  int crop = 64;
  double val_fraction = 0.02;
  uint64_t seed = 0;
  LossConfig loss;
  bool verbose = true;  // per-epoch progress lines on stdout

  void validate() const;
};

struct EvalRecord {
  int epoch = 0;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct SearchResult {
  NetworkGenotype genotype;  // derived at the best-scoring epoch
  std::vector<EvalRecord> history;
  int best_epoch = 0;
  double best_psnr = 0.0, best_ssim = 0.0;
  std::string checkpoint_path;  // best-epoch checkpoint
  bool stopped_early = false;
};

struct SplitIndices {
  std::vector<int> train_w, train_a, val;
};

/// Disjoint, exhaustive shuffle split: |val| = max(1, round(f*n)), the rest
/// split as evenly as possible between the two training halves.
SplitIndices split_dataset(int sample_count, double val_fraction, uint64_t seed);

/// Tiled evaluation of an arbitrary forward function: each image is split
/// into size x size tiles, denoised tile by tile, reassembled, clamped to
/// [0,1], and scored; returns (mean psnr, mean ssim) over images. per_image,
/// when given, receives one (psnr, ssim) entry per image.
std::pair<double, double> evaluate_tiled(
    const std::function<Tensor(const TensorPtr&)>& forward, const Dataset& data,
    const std::vector<int>& indices, int tile_size = 64,
    std::vector<std::pair<double, double>>* per_image = nullptr);

std::pair<double, double> evaluate_supernet(Supernet& net, const Dataset& data,
                                            const std::vector<int>& indices, int tile_size = 64);

/// Injectable per-epoch scorer, for tests that steer early stopping.
using EvalFn = std::function<std::pair<double, double>(Supernet&, int epoch)>;

/// Bilevel search: warmup epochs update kernels only, then strict per-batch
/// alternation of one SGD weight step and one Adam alpha/beta step; per-epoch
/// validation, early stopping on `patience` non-improving evaluations, best
/// checkpoint kept. Writes best.ckpt, search_log.csv and the resolved history
/// into out_dir.
SearchResult run_search(Supernet& net, const Dataset& data, const SearchConfig& cfg,
                        const std::string& out_dir, const EvalFn& eval_override = nullptr);

/// Appends rows to a fixed-schema CSV. Unknown fields are left empty.
class CsvLogger {
public:
  explicit CsvLogger(const std::string& path);
  void row(int epoch, const std::string& split, double psnr, double ssim, double loss, double lr,
           double wallclock);

private:
  std::string path_;
};

}  // namespace hinas
