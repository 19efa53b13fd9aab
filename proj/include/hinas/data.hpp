#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hinas/rng.hpp"
#include "hinas/tensor.hpp"

namespace hinas {

/// One clean/noisy pair, both (1, C, H, W) in [0,1]. sigma is on the 0-255
/// scale; the stored noisy image is clamp(clean + N(0, (sigma/255)^2), 0, 1).
struct ImagePair {
  Tensor clean;
  Tensor noisy;
  double sigma = 0.0;
};

struct Dataset {
  std::vector<ImagePair> pairs;
  double sigma = 0.0;
  int channels = 1;
};

Tensor add_gaussian_noise(const Tensor& clean, double sigma, uint64_t seed);

/// Disjoint 64x64 (by default) tiling after reflect-padding up to tile
/// multiples. untile crops back to the original size, exactly.
struct TilePlan {
  int tile = 64;
  int orig_h = 0, orig_w = 0;
  int pad_h = 0, pad_w = 0;
  int rows = 0, cols = 0;
};

std::pair<std::vector<Tensor>, TilePlan> tile(const Tensor& image, int size = 64);
Tensor untile(const std::vector<Tensor>& tiles, const TilePlan& plan);

Tensor crop_at(const Tensor& img, int y0, int x0, int crop);
/// Quarter-turn counterclockwise on a square image, applied k times.
Tensor rot90(const Tensor& img, int k);
Tensor flip(const Tensor& img, bool horizontal, bool vertical);

/// Random crop to crop x crop, then one of the four axis rotations, then
/// independent horizontal/vertical flips; the same spatial map is applied to
/// both images. Draw order: y0, x0, rotation, hflip, vflip.
std::pair<Tensor, Tensor> augment(const Tensor& clean, const Tensor& noisy, int crop, Rng& rng);

/// (B, C, H, W) batch from single-image tensors of identical shape.
Tensor stack_batch(const std::vector<const Tensor*>& items);

// ---------------------------------------------------------------------------
// Image and dataset I/O

Tensor load_image(const std::string& path, int channels);
void save_image_png16(const Tensor& image, const std::string& path);

/// Manifest-driven dataset storage: a JSON file listing paired PNG paths
/// (relative to the manifest) plus sigma/seed/channels.
Dataset load_dataset(const std::string& manifest_path);
void save_dataset(const Dataset& ds, const std::string& dir, uint64_t seed);

/// Procedural piecewise-smooth clean images (gratings plus soft shapes),
/// noised at `sigma`. Deterministic under seed.
Dataset synth_dataset(int count, int h, int w, int channels, double sigma, uint64_t seed);

}  // namespace hinas
