#pragma once

#include "hinas/tensor.hpp"

namespace hinas {

struct LossConfig {
  double lambda = 0.5;
  int ssim_window = 11;
  double ssim_sigma = 1.5;
  double k1 = 0.01, k2 = 0.03;  // peak-1 stability constants
  double ssim_floor = 1e-4;     // clamp before the log so the loss stays finite

  void validate() const;
};

/// Mean structural similarity over batch and channels, Gaussian-windowed
/// (valid mode). Windows wider than the image shrink to the largest odd size
/// that fits, sigma scaled proportionally.
double ssim(const Tensor& x, const Tensor& y, const LossConfig& cfg = {});
/// Same value; also writes d(ssim)/dx into gx (overwritten, same shape as x).
double ssim_with_grad(const Tensor& x, const Tensor& y, const LossConfig& cfg, Tensor& gx);

struct LossResult {
  double total = 0.0;
  double mse = 0.0;
  double ssim_value = 0.0;
  double lssim = 0.0;  // log10(1 / clamped ssim)
};

/// total = mean squared error + lambda * log10(1 / clamp(ssim, floor, 1)).
/// With lambda = 0 the similarity term is skipped entirely (ssim_value
/// reported as 1, lssim as 0) and total equals the MSE exactly.
LossResult total_loss(const Tensor& pred, const Tensor& target, const LossConfig& cfg = {});
LossResult total_loss_with_grad(const Tensor& pred, const Tensor& target, const LossConfig& cfg,
                                Tensor& gpred);

/// 10 log10(1 / MSE) at peak 1, computed per image then averaged; predictions
/// clamped to [0,1] first; exact matches capped at 100 dB.
double psnr(const Tensor& pred, const Tensor& target);

}  // namespace hinas
