#include "hinas/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "nlohmann/json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hinas {

Tensor add_gaussian_noise(const Tensor& clean, double sigma, uint64_t seed) {
  if (sigma < 0.0) throw ConfigError("noise: sigma must be >= 0");
  Tensor noisy = clean;
  if (sigma == 0.0) return noisy;
  Rng rng(seed);
  const double s = sigma / 255.0;
  for (std::size_t i = 0; i < noisy.numel(); ++i)
    noisy[i] = std::clamp(noisy[i] + rng.normal(0.0, s), 0.0, 1.0);
  return noisy;
}

// ---------------------------------------------------------------------------
// Tiling

namespace {

// symmetric reflection with edge repeat (works down to 1-pixel sources)
int mirror_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

}  // namespace

std::pair<std::vector<Tensor>, TilePlan> tile(const Tensor& image, int size) {
  if (image.n() != 1) throw ShapeError("tile: expected a single image, got " + image.shape_str());
  if (size < 1) throw ConfigError("tile: size must be >= 1");
  TilePlan plan;
  plan.tile = size;
  plan.orig_h = image.h();
  plan.orig_w = image.w();
  plan.rows = (image.h() + size - 1) / size;
  plan.cols = (image.w() + size - 1) / size;
  plan.pad_h = plan.rows * size;
  plan.pad_w = plan.cols * size;

  Tensor padded(1, image.c(), plan.pad_h, plan.pad_w);
  for (int c = 0; c < image.c(); ++c) {
    const double* src = image.plane(0, c);
    double* dst = padded.plane(0, c);
    for (int y = 0; y < plan.pad_h; ++y) {
      const int sy = mirror_index(y, image.h());
      for (int x = 0; x < plan.pad_w; ++x)
        dst[std::size_t(y) * plan.pad_w + x] = src[std::size_t(sy) * image.w() + mirror_index(x, image.w())];
    }
  }

  std::vector<Tensor> tiles;
  tiles.reserve(std::size_t(plan.rows) * plan.cols);
  for (int r = 0; r < plan.rows; ++r)
    for (int col = 0; col < plan.cols; ++col) {
      Tensor t(1, image.c(), size, size);
      for (int c = 0; c < image.c(); ++c) {
        const double* src = padded.plane(0, c);
        double* dst = t.plane(0, c);
        for (int y = 0; y < size; ++y)
          std::memcpy(dst + std::size_t(y) * size,
                      src + (std::size_t(r) * size + y) * plan.pad_w + std::size_t(col) * size,
                      std::size_t(size) * sizeof(double));
      }
      tiles.push_back(std::move(t));
    }
  return {std::move(tiles), plan};
}

Tensor untile(const std::vector<Tensor>& tiles, const TilePlan& plan) {
  if (int(tiles.size()) != plan.rows * plan.cols)
    throw ShapeError("untile: expected " + std::to_string(plan.rows * plan.cols) + " tiles, got " +
                     std::to_string(tiles.size()));
  const int C = tiles.front().c(), size = plan.tile;
  Tensor out(1, C, plan.orig_h, plan.orig_w);
  for (int r = 0; r < plan.rows; ++r)
    for (int col = 0; col < plan.cols; ++col) {
      const Tensor& t = tiles[std::size_t(r) * plan.cols + col];
      if (t.h() != size || t.w() != size || t.c() != C)
        throw ShapeError("untile: tile shape mismatch " + t.shape_str());
      const int y1 = std::min(plan.orig_h, (r + 1) * size);
      const int x1 = std::min(plan.orig_w, (col + 1) * size);
      for (int c = 0; c < C; ++c) {
        const double* src = t.plane(0, c);
        double* dst = out.plane(0, c);
        for (int y = r * size; y < y1; ++y) {
          const int n = x1 - col * size;
          if (n > 0)
            std::memcpy(dst + std::size_t(y) * plan.orig_w + std::size_t(col) * size,
                        src + std::size_t(y - r * size) * size, std::size_t(n) * sizeof(double));
        }
      }
    }
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation

Tensor crop_at(const Tensor& img, int y0, int x0, int crop) {
  Tensor out(1, img.c(), crop, crop);
  for (int c = 0; c < img.c(); ++c)
    for (int y = 0; y < crop; ++y)
      std::memcpy(out.plane(0, c) + std::size_t(y) * crop,
                  img.plane(0, c) + std::size_t(y0 + y) * img.w() + x0,
                  std::size_t(crop) * sizeof(double));
  return out;
}

// quarter-turn counterclockwise on a square image, applied k times
Tensor rot90(const Tensor& img, int k) {
  k = ((k % 4) + 4) % 4;
  if (k == 0) return img;
  const int s = img.h();
  Tensor out(1, img.c(), s, s);
  for (int c = 0; c < img.c(); ++c) {
    const double* src = img.plane(0, c);
    double* dst = out.plane(0, c);
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        int sy = y, sx = x;
        switch (k) {
          case 1: sy = x; sx = s - 1 - y; break;
          case 2: sy = s - 1 - y; sx = s - 1 - x; break;
          case 3: sy = s - 1 - x; sx = y; break;
        }
        dst[std::size_t(y) * s + x] = src[std::size_t(sy) * s + sx];
      }
  }
  return out;
}

Tensor flip(const Tensor& img, bool horizontal, bool vertical) {
  if (!horizontal && !vertical) return img;
  Tensor out(1, img.c(), img.h(), img.w());
  for (int c = 0; c < img.c(); ++c) {
    const double* src = img.plane(0, c);
    double* dst = out.plane(0, c);
    for (int y = 0; y < img.h(); ++y) {
      const int sy = vertical ? img.h() - 1 - y : y;
      for (int x = 0; x < img.w(); ++x) {
        const int sx = horizontal ? img.w() - 1 - x : x;
        dst[std::size_t(y) * img.w() + x] = src[std::size_t(sy) * img.w() + sx];
      }
    }
  }
  return out;
}

std::pair<Tensor, Tensor> augment(const Tensor& clean, const Tensor& noisy, int crop, Rng& rng) {
  clean.require_same_shape(noisy, "augment");
  if (clean.h() < crop || clean.w() < crop)
    throw ShapeError("augment: patch " + clean.shape_str() + " smaller than crop " +
                     std::to_string(crop));
  const int y0 = rng.uniform_int(0, clean.h() - crop);
  const int x0 = rng.uniform_int(0, clean.w() - crop);
  const int k = rng.uniform_int(0, 3);
  const bool hf = rng.coin(), vf = rng.coin();
  auto apply = [&](const Tensor& img) { return flip(rot90(crop_at(img, y0, x0, crop), k), hf, vf); };
  return {apply(clean), apply(noisy)};
}

Tensor stack_batch(const std::vector<const Tensor*>& items) {
  if (items.empty()) throw ShapeError("stack_batch: empty batch");
  const Tensor& first = *items.front();
  Tensor out(int(items.size()), first.c(), first.h(), first.w());
  const std::size_t per = first.numel();
  for (std::size_t i = 0; i < items.size(); ++i) {
    items[i]->require_same_shape(first, "stack_batch");
    std::memcpy(out.data() + i * per, items[i]->data(), per * sizeof(double));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Image I/O (16-bit PNG via OpenCV)

Tensor load_image(const std::string& path, int channels) {
  if (channels != 1 && channels != 3) throw ConfigError("load_image: channels must be 1 or 3");
  cv::Mat m = cv::imread(path, (channels == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR) |
                                   cv::IMREAD_ANYDEPTH);
  if (m.empty()) throw ConfigError("load_image: cannot read " + path);
  double scale = 1.0;
  switch (m.depth()) {
    case CV_8U: scale = 1.0 / 255.0; break;
    case CV_16U: scale = 1.0 / 65535.0; break;
    default: throw ConfigError("load_image: unsupported bit depth in " + path);
  }
  Tensor out(1, channels, m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x)
      for (int c = 0; c < channels; ++c) {
        double v;
        if (m.depth() == CV_8U)
          v = channels == 1 ? m.at<uint8_t>(y, x) : m.at<cv::Vec3b>(y, x)[c];
        else
          v = channels == 1 ? m.at<uint16_t>(y, x) : m.at<cv::Vec3w>(y, x)[c];
        out(0, c, y, x) = v * scale;
      }
  return out;
}

void save_image_png16(const Tensor& image, const std::string& path) {
  if (image.n() != 1 || (image.c() != 1 && image.c() != 3))
    throw ShapeError("save_image_png16: expected (1,{1|3},H,W), got " + image.shape_str());
  const int type = image.c() == 1 ? CV_16UC1 : CV_16UC3;
  cv::Mat m(image.h(), image.w(), type);
  for (int y = 0; y < image.h(); ++y)
    for (int x = 0; x < image.w(); ++x)
      for (int c = 0; c < image.c(); ++c) {
        const double v = std::clamp(image(0, c, y, x), 0.0, 1.0);
        const auto q = uint16_t(std::lround(v * 65535.0));
        if (image.c() == 1)
          m.at<uint16_t>(y, x) = q;
        else
          m.at<cv::Vec3w>(y, x)[c] = q;
      }
  if (!cv::imwrite(path, m)) throw ConfigError("save_image_png16: cannot write " + path);
}

// ---------------------------------------------------------------------------
// Manifest-driven dataset storage

Dataset load_dataset(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw ConfigError("dataset: cannot open manifest " + manifest_path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("dataset: manifest parse error at byte " + std::to_string(e.byte) + ": " +
                      e.what());
  }
  Dataset ds;
  try {
    if (j.at("version").get<int>() != 1)
      throw ConfigError("dataset: unsupported manifest version");
    ds.sigma = j.at("sigma").get<double>();
    ds.channels = j.at("channels").get<int>();
    const fs::path base = fs::path(manifest_path).parent_path();
    for (const auto& p : j.at("pairs")) {
      ImagePair pair;
      pair.clean = load_image((base / p.at("clean").get<std::string>()).string(), ds.channels);
      pair.noisy = load_image((base / p.at("noisy").get<std::string>()).string(), ds.channels);
      pair.clean.require_same_shape(pair.noisy, "dataset pair");
      pair.sigma = ds.sigma;
      ds.pairs.push_back(std::move(pair));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("dataset: malformed manifest: ") + e.what());
  }
  if (ds.pairs.empty()) throw ConfigError("dataset: manifest lists no pairs");
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& dir, uint64_t seed) {
  const fs::path base(dir);
  fs::create_directories(base / "clean");
  fs::create_directories(base / "noisy");
  json j;
  j["version"] = 1;
  j["sigma"] = ds.sigma;
  j["seed"] = seed;
  j["channels"] = ds.channels;
  j["pairs"] = json::array();
  char name[32];
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
    std::snprintf(name, sizeof name, "%04zu.png", i);
    const std::string rel_clean = std::string("clean/") + name;
    const std::string rel_noisy = std::string("noisy/") + name;
    save_image_png16(ds.pairs[i].clean, (base / rel_clean).string());
    save_image_png16(ds.pairs[i].noisy, (base / rel_noisy).string());
    j["pairs"].push_back(json{{"clean", rel_clean}, {"noisy", rel_noisy}});
  }
  std::ofstream out(base / "manifest.json");
  if (!out) throw ConfigError("dataset: cannot write manifest in " + dir);
  out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Procedural clean images

namespace {

// piecewise-smooth scene: low-frequency gratings plus soft-edged ellipses
Tensor synth_clean(int h, int w, int channels, Rng& rng) {
  Tensor img(1, channels, h, w);
  for (int c = 0; c < channels; ++c) {
    double* p = img.plane(0, c);
    const int gratings = rng.uniform_int(2, 3);
    std::vector<std::array<double, 4>> gs;
    for (int g = 0; g < gratings; ++g)
      gs.push_back({rng.uniform(0.5, 3.0) / w, rng.uniform(0.5, 3.0) / h,
                    rng.uniform(0.0, 2.0 * M_PI), rng.uniform(0.1, 0.3)});
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double v = 0.5;
        for (const auto& g : gs) v += g[3] * std::cos(2.0 * M_PI * (g[0] * x + g[1] * y) + g[2]);
        p[std::size_t(y) * w + x] = v;
      }
    const int shapes = rng.uniform_int(2, 4);
    for (int s = 0; s < shapes; ++s) {
      const double cy = rng.uniform(0.15, 0.85) * h, cx = rng.uniform(0.15, 0.85) * w;
      const double ry = rng.uniform(0.08, 0.3) * h, rx = rng.uniform(0.08, 0.3) * w;
      const double level = rng.uniform(-0.35, 0.35);
      const double edge = rng.uniform(1.0, 3.0);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double dy = (y - cy) / ry, dx = (x - cx) / rx;
          const double d = std::sqrt(dy * dy + dx * dx);
          const double m = 1.0 / (1.0 + std::exp((d - 1.0) * edge * 8.0));
          p[std::size_t(y) * w + x] += level * m;
        }
    }
  }
  // squash into [0.2, 0.8]: the gratings pile density at their extremes, so
  // the boundary margin must stay >= ~1.7x the sigma=30 noise std or clamping
  // noticeably biases the noisy-input psnr
  double lo = img[0], hi = img[0];
  for (std::size_t i = 0; i < img.numel(); ++i) {
    lo = std::min(lo, img[i]);
    hi = std::max(hi, img[i]);
  }
  const double span = hi > lo ? hi - lo : 1.0;
  for (std::size_t i = 0; i < img.numel(); ++i)
    img[i] = 0.2 + 0.6 * (img[i] - lo) / span;
  return img;
}

}  // namespace

Dataset synth_dataset(int count, int h, int w, int channels, double sigma, uint64_t seed) {
  if (count < 1) throw ConfigError("synth: count must be >= 1");
  if (channels != 1 && channels != 3) throw ConfigError("synth: channels must be 1 or 3");
  Dataset ds;
  ds.sigma = sigma;
  ds.channels = channels;
  Rng root(seed);
  for (int i = 0; i < count; ++i) {
    Rng ri = root.fork(uint64_t(i));
    ImagePair p;
    p.clean = synth_clean(h, w, channels, ri);
    p.noisy = add_gaussian_noise(p.clean, sigma, ri.fork("noise").seed());
    p.sigma = sigma;
    ds.pairs.push_back(std::move(p));
  }
  return ds;
}

}  // namespace hinas
