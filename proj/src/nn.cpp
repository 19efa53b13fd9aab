#include "hinas/nn.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>

namespace hinas {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

std::atomic<int64_t> MemoryStats::live_{0};
std::atomic<int64_t> MemoryStats::peak_{0};

bool Tensor::all_finite() const {
  for (std::size_t i = 0; i < numel(); ++i)
    if (!std::isfinite(data()[i])) return false;
  return true;
}

double Tensor::dot(const Tensor& o) const {
  require_same_shape(o, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < numel(); ++i) s += data()[i] * o.data()[i];
  return s;
}

std::string Tensor::shape_str() const {
  return "(" + std::to_string(n()) + "," + std::to_string(c()) + "," + std::to_string(h()) + "," +
         std::to_string(w()) + ")";
}

Tensor concat_channels(const std::vector<const Tensor*>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no parts");
  int ctotal = 0;
  for (const Tensor* p : parts) {
    if (p->n() != parts[0]->n() || p->h() != parts[0]->h() || p->w() != parts[0]->w())
      throw ShapeError("concat_channels: parts disagree in N/H/W");
    ctotal += p->c();
  }
  Tensor out(parts[0]->n(), ctotal, parts[0]->h(), parts[0]->w());
  const std::size_t plane = std::size_t(out.h()) * out.w();
  for (int n = 0; n < out.n(); ++n) {
    int co = 0;
    for (const Tensor* p : parts)
      for (int c = 0; c < p->c(); ++c, ++co)
        std::memcpy(out.plane(n, co), p->plane(n, c), plane * sizeof(double));
  }
  return out;
}

Tensor slice_channels(const Tensor& t, int c0, int c1) {
  if (c0 < 0 || c1 > t.c() || c0 >= c1) throw ShapeError("slice_channels: bad range");
  Tensor out(t.n(), c1 - c0, t.h(), t.w());
  const std::size_t plane = std::size_t(t.h()) * t.w();
  for (int n = 0; n < t.n(); ++n)
    for (int c = c0; c < c1; ++c)
      std::memcpy(out.plane(n, c - c0), t.plane(n, c), plane * sizeof(double));
  return out;
}

// ---------------------------------------------------------------------------
// im2col / col2im

namespace {

// cols has (C*K*K) rows and (H*W) columns, row-major.
void im2col(const double* src, int C, int H, int W, int K, int dil, int pad, double* cols) {
  const int HW = H * W;
  for (int c = 0; c < C; ++c) {
    for (int kh = 0; kh < K; ++kh) {
      for (int kw = 0; kw < K; ++kw) {
        double* row = cols + (std::size_t((c * K + kh) * K + kw)) * HW;
        const int oy = kh * dil - pad, ox = kw * dil - pad;
        for (int h = 0; h < H; ++h) {
          const int ih = h + oy;
          double* dst = row + std::size_t(h) * W;
          if (ih < 0 || ih >= H) {
            std::fill(dst, dst + W, 0.0);
            continue;
          }
          const double* s = src + (std::size_t(c) * H + ih) * W;
          const int w0 = std::max(0, -ox), w1 = std::min(W, W - ox);
          if (w0 > 0) std::fill(dst, dst + w0, 0.0);
          if (w1 > w0) std::memcpy(dst + w0, s + w0 + ox, std::size_t(w1 - w0) * sizeof(double));
          if (w1 < W) std::fill(dst + std::max(w0, w1), dst + W, 0.0);
        }
      }
    }
  }
}

void col2im(const double* cols, int C, int H, int W, int K, int dil, int pad, double* dst) {
  const int HW = H * W;
  for (int c = 0; c < C; ++c) {
    for (int kh = 0; kh < K; ++kh) {
      for (int kw = 0; kw < K; ++kw) {
        const double* row = cols + (std::size_t((c * K + kh) * K + kw)) * HW;
        const int oy = kh * dil - pad, ox = kw * dil - pad;
        for (int h = 0; h < H; ++h) {
          const int ih = h + oy;
          if (ih < 0 || ih >= H) continue;
          double* d = dst + (std::size_t(c) * H + ih) * W;
          const double* s = row + std::size_t(h) * W;
          const int w0 = std::max(0, -ox), w1 = std::min(W, W - ox);
          for (int w = w0; w < w1; ++w) d[w + ox] += s[w];
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(int in_ch, int out_ch, int ksize, int dilation, int groups, bool with_bias)
    : in_ch_(in_ch), out_ch_(out_ch), ksize_(ksize), dilation_(dilation), groups_(groups), has_bias_(with_bias) {
  if (in_ch % groups != 0 || out_ch % groups != 0)
    throw ShapeError("Conv2d: channels not divisible by groups");
  pad_ = dilation * (ksize - 1) / 2;
  weight = Tensor(out_ch, in_ch / groups, ksize, ksize);
  wgrad = Tensor::zeros_like(weight);
  if (has_bias_) {
    bias = Tensor(1, out_ch, 1, 1);
    bgrad = Tensor::zeros_like(bias);
  }
}

void Conv2d::init_kaiming(Rng& rng) {
  const double fan_in = double(in_ch_ / groups_) * ksize_ * ksize_;
  const double std = std::sqrt(2.0 / fan_in);
  for (std::size_t i = 0; i < weight.numel(); ++i) weight[i] = rng.normal(0.0, std);
  if (has_bias_) bias.zero();
}

void Conv2d::init_zero() {
  weight.zero();
  if (has_bias_) bias.zero();
}

Tensor Conv2d::forward(const TensorPtr& x, const FwdCtx& ctx) {
  if (x->c() != in_ch_)
    throw ShapeError("Conv2d: input has " + std::to_string(x->c()) + " channels, expected " +
                     std::to_string(in_ch_));
  const int N = x->n(), H = x->h(), W = x->w(), HW = H * W;
  const int icg = in_ch_ / groups_, ocg = out_ch_ / groups_;
  Tensor y(N, out_ch_, H, W);

  const int krows = icg * ksize_ * ksize_;
  std::vector<double> cols;
  if (ksize_ > 1) cols.resize(std::size_t(in_ch_) * ksize_ * ksize_ * HW);
  for (int n = 0; n < N; ++n) {
    const double* xr = ksize_ > 1 ? cols.data() : x->plane(n, 0);
    if (ksize_ > 1) im2col(x->plane(n, 0), in_ch_, H, W, ksize_, dilation_, pad_, cols.data());
    for (int g = 0; g < groups_; ++g) {
      MapC wm(weight.data() + std::size_t(g) * ocg * krows, ocg, krows);
      MapC cm(xr + std::size_t(g) * krows * HW, krows, HW);
      MapM ym(y.plane(n, g * ocg), ocg, HW);
      ym.noalias() = wm * cm;
    }
    if (has_bias_) {
      for (int c = 0; c < out_ch_; ++c) {
        double* p = y.plane(n, c);
        const double b = bias[c];
        for (int i = 0; i < HW; ++i) p[i] += b;
      }
    }
  }
  x_cache_ = ctx.cache ? x : nullptr;
  return y;
}

Tensor Conv2d::backward(const Tensor& gy) {
  if (!x_cache_) throw std::logic_error("Conv2d::backward without cached forward");
  const Tensor& x = *x_cache_;
  const int N = x.n(), H = x.h(), W = x.w(), HW = H * W;
  const int icg = in_ch_ / groups_, ocg = out_ch_ / groups_;
  const int krows = icg * ksize_ * ksize_;
  Tensor gx = Tensor::zeros_like(x);

  std::vector<double> cols, gcols;
  if (ksize_ > 1) {
    cols.resize(std::size_t(in_ch_) * ksize_ * ksize_ * HW);
    gcols.resize(cols.size());
  }
  for (int n = 0; n < N; ++n) {
    const double* xr = ksize_ > 1 ? cols.data() : x.plane(n, 0);
    if (ksize_ > 1) im2col(x.plane(n, 0), in_ch_, H, W, ksize_, dilation_, pad_, cols.data());
    double* gxr = ksize_ > 1 ? gcols.data() : gx.plane(n, 0);
    for (int g = 0; g < groups_; ++g) {
      MapC gym(gy.plane(n, g * ocg), ocg, HW);
      MapC cm(xr + std::size_t(g) * krows * HW, krows, HW);
      MapM gwm(wgrad.data() + std::size_t(g) * ocg * krows, ocg, krows);
      gwm.noalias() += gym * cm.transpose();
      MapC wm(weight.data() + std::size_t(g) * ocg * krows, ocg, krows);
      MapM gcm(gxr + std::size_t(g) * krows * HW, krows, HW);
      if (ksize_ > 1)
        gcm.noalias() = wm.transpose() * gym;
      else
        gcm.noalias() += wm.transpose() * gym;
    }
    if (ksize_ > 1) col2im(gcols.data(), in_ch_, H, W, ksize_, dilation_, pad_, gx.plane(n, 0));
    if (has_bias_) {
      for (int c = 0; c < out_ch_; ++c) {
        const double* p = gy.plane(n, c);
        double s = 0.0;
        for (int i = 0; i < HW; ++i) s += p[i];
        bgrad[c] += s;
      }
    }
  }
  x_cache_.reset();
  return gx;
}

void Conv2d::collect_params(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".w", &weight, &wgrad, true, false});
  if (has_bias_) out.push_back({prefix + ".b", &bias, &bgrad, true, false});
}

int64_t Conv2d::param_count() const {
  return int64_t(weight.numel()) + (has_bias_ ? int64_t(bias.numel()) : 0);
}

// ---------------------------------------------------------------------------
// BatchNorm2d

BatchNorm2d::BatchNorm2d(int channels, double eps, double momentum)
    : channels_(channels), eps_(eps), momentum_(momentum) {
  gamma = Tensor(1, channels, 1, 1);
  gamma.fill(1.0);
  beta = Tensor(1, channels, 1, 1);
  ggrad = Tensor::zeros_like(gamma);
  bgrad = Tensor::zeros_like(beta);
  running_mean = Tensor(1, channels, 1, 1);
  running_var = Tensor(1, channels, 1, 1);
  running_var.fill(1.0);
}

Tensor BatchNorm2d::forward(const TensorPtr& x, const FwdCtx& ctx) {
  if (x->c() != channels_) throw ShapeError("BatchNorm2d: channel mismatch");
  const int N = x->n(), C = channels_, H = x->h(), W = x->w();
  const std::size_t plane = std::size_t(H) * W;
  const double cnt = double(N) * plane;
  Tensor y(N, C, H, W);

  if (ctx.phase == Phase::train) {
    Tensor xhat(N, C, H, W);
    std::vector<double> inv_std(C);
    for (int c = 0; c < C; ++c) {
      double mean = 0.0;
      for (int n = 0; n < N; ++n) {
        const double* p = x->plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) mean += p[i];
      }
      mean /= cnt;
      double var = 0.0;
      for (int n = 0; n < N; ++n) {
        const double* p = x->plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - mean;
          var += d * d;
        }
      }
      var /= cnt;
      const double is = 1.0 / std::sqrt(var + eps_);
      inv_std[c] = is;
      const double g = gamma[c], b = beta[c];
      for (int n = 0; n < N; ++n) {
        const double* p = x->plane(n, c);
        double* xh = xhat.plane(n, c);
        double* yo = y.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) {
          xh[i] = (p[i] - mean) * is;
          yo[i] = g * xh[i] + b;
        }
      }
      if (ctx.update_bn) {
        const double unbiased = cnt > 1.0 ? var * cnt / (cnt - 1.0) : var;
        running_mean[c] = (1.0 - momentum_) * running_mean[c] + momentum_ * mean;
        running_var[c] = (1.0 - momentum_) * running_var[c] + momentum_ * unbiased;
      }
    }
    if (ctx.cache) {
      xhat_cache_ = std::move(xhat);
      inv_std_cache_ = std::move(inv_std);
    }
  } else {
    for (int c = 0; c < C; ++c) {
      const double is = 1.0 / std::sqrt(running_var[c] + eps_);
      const double g = gamma[c], b = beta[c], m = running_mean[c];
      for (int n = 0; n < N; ++n) {
        const double* p = x->plane(n, c);
        double* yo = y.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) yo[i] = g * (p[i] - m) * is + b;
      }
    }
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& gy) {
  if (inv_std_cache_.empty()) throw std::logic_error("BatchNorm2d::backward without cached forward");
  const int N = gy.n(), C = channels_, H = gy.h(), W = gy.w();
  const std::size_t plane = std::size_t(H) * W;
  const double cnt = double(N) * plane;
  Tensor gx(N, C, H, W);
  for (int c = 0; c < C; ++c) {
    double sum_gy = 0.0, sum_gy_xhat = 0.0;
    for (int n = 0; n < N; ++n) {
      const double* g = gy.plane(n, c);
      const double* xh = xhat_cache_.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        sum_gy += g[i];
        sum_gy_xhat += g[i] * xh[i];
      }
    }
    ggrad[c] += sum_gy_xhat;
    bgrad[c] += sum_gy;
    const double scale = gamma[c] * inv_std_cache_[c] / cnt;
    for (int n = 0; n < N; ++n) {
      const double* g = gy.plane(n, c);
      const double* xh = xhat_cache_.plane(n, c);
      double* o = gx.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i)
        o[i] = scale * (cnt * g[i] - sum_gy - xh[i] * sum_gy_xhat);
    }
  }
  xhat_cache_ = Tensor();
  inv_std_cache_.clear();
  return gx;
}

void BatchNorm2d::collect_params(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".gamma", &gamma, &ggrad, true, false});
  out.push_back({prefix + ".beta", &beta, &bgrad, true, false});
  out.push_back({prefix + ".rmean", &running_mean, nullptr, false, false});
  out.push_back({prefix + ".rvar", &running_var, nullptr, false, false});
}

// ---------------------------------------------------------------------------
// DeformConv2d

DeformConv2d::DeformConv2d(int in_ch, int out_ch, int ksize)
    : in_ch_(in_ch), out_ch_(out_ch), ksize_(ksize), pad_((ksize - 1) / 2) {
  weight = Tensor(out_ch, in_ch, ksize, ksize);
  wgrad = Tensor::zeros_like(weight);
  predictor = Conv2d(in_ch, 3 * ksize * ksize, ksize, 1, 1, true);
  predictor.init_zero();
}

void DeformConv2d::init_kaiming(Rng& rng) {
  const double std = std::sqrt(2.0 / (double(in_ch_) * ksize_ * ksize_));
  for (std::size_t i = 0; i < weight.numel(); ++i) weight[i] = rng.normal(0.0, std);
  predictor.init_zero();  // sampling starts on the regular grid
}

namespace {
inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }
}  // namespace

void DeformConv2d::build_columns(const Tensor& x, const Tensor& aux, int n, std::vector<double>& cols,
                                 std::vector<double>* raw) const {
  const int C = in_ch_, H = x.h(), W = x.w(), K = ksize_, KK = K * K, HW = H * W;
  for (int kk = 0; kk < KK; ++kk) {
    const double* off_y = aux.plane(n, 2 * kk);
    const double* off_x = aux.plane(n, 2 * kk + 1);
    const double* mlogit = aux.plane(n, 2 * KK + kk);
    const int base_y = (kk / K) - pad_, base_x = (kk % K) - pad_;
    for (int oh = 0; oh < H; ++oh) {
      for (int ow = 0; ow < W; ++ow) {
        const int sp = oh * W + ow;
        const double py = oh + base_y + off_y[sp];
        const double px = ow + base_x + off_x[sp];
        const double m = sigmoid(mlogit[sp]);
        // inverted test so nan offsets fall into the zero branch instead of
        // reaching the index arithmetic
        const bool inside = py > -1.0 && py < double(H) && px > -1.0 && px < double(W);
        if (!inside) {
          for (int c = 0; c < C; ++c) {
            cols[(std::size_t(c) * KK + kk) * HW + sp] = 0.0;
            if (raw) (*raw)[(std::size_t(c) * KK + kk) * HW + sp] = 0.0;
          }
          continue;
        }
        const int h0 = int(std::floor(py)), w0 = int(std::floor(px));
        const double ah = py - h0, aw = px - w0;
        const bool v00 = h0 >= 0 && w0 >= 0, v01 = h0 >= 0 && w0 + 1 < W;
        const bool v10 = h0 + 1 < H && w0 >= 0, v11 = h0 + 1 < H && w0 + 1 < W;
        const double w00 = (1 - ah) * (1 - aw), w01 = (1 - ah) * aw;
        const double w10 = ah * (1 - aw), w11 = ah * aw;
        for (int c = 0; c < C; ++c) {
          const double* pl = x.plane(n, c);
          double v = 0.0;
          if (v00) v += w00 * pl[h0 * W + w0];
          if (v01) v += w01 * pl[h0 * W + w0 + 1];
          if (v10) v += w10 * pl[(h0 + 1) * W + w0];
          if (v11) v += w11 * pl[(h0 + 1) * W + w0 + 1];
          cols[(std::size_t(c) * KK + kk) * HW + sp] = m * v;
          if (raw) (*raw)[(std::size_t(c) * KK + kk) * HW + sp] = v;
        }
      }
    }
  }
}

Tensor DeformConv2d::forward(const TensorPtr& x, const FwdCtx& ctx) {
  if (x->c() != in_ch_) throw ShapeError("DeformConv2d: channel mismatch");
  const int N = x->n(), H = x->h(), W = x->w(), HW = H * W;
  const int krows = in_ch_ * ksize_ * ksize_;
  FwdCtx aux_ctx = ctx;
  aux_ctx.cache = false;
  Tensor aux = predictor.forward(x, aux_ctx);
  Tensor y(N, out_ch_, H, W);
  std::vector<double> cols(std::size_t(krows) * HW);
  for (int n = 0; n < N; ++n) {
    build_columns(*x, aux, n, cols, nullptr);
    MapC wm(weight.data(), out_ch_, krows);
    MapC cm(cols.data(), krows, HW);
    MapM ym(y.plane(n, 0), out_ch_, HW);
    ym.noalias() = wm * cm;
  }
  x_cache_ = ctx.cache ? x : nullptr;
  return y;
}

Tensor DeformConv2d::backward(const Tensor& gy) {
  if (!x_cache_) throw std::logic_error("DeformConv2d::backward without cached forward");
  const TensorPtr xp = x_cache_;
  const Tensor& x = *xp;
  const int N = x.n(), C = in_ch_, H = x.h(), W = x.w(), HW = H * W;
  const int K = ksize_, KK = K * K, krows = C * KK;

  FwdCtx re{Phase::train, true, false};
  Tensor aux = predictor.forward(xp, re);

  Tensor gx = Tensor::zeros_like(x);
  Tensor gaux = Tensor::zeros_like(aux);
  std::vector<double> cols(std::size_t(krows) * HW), raw(cols.size()), gcols(cols.size());

  for (int n = 0; n < N; ++n) {
    build_columns(x, aux, n, cols, &raw);
    MapC gym(gy.plane(n, 0), out_ch_, HW);
    MapC cm(cols.data(), krows, HW);
    MapM gwm(wgrad.data(), out_ch_, krows);
    gwm.noalias() += gym * cm.transpose();
    MapC wm(weight.data(), out_ch_, krows);
    MapM gcm(gcols.data(), krows, HW);
    gcm.noalias() = wm.transpose() * gym;

    for (int kk = 0; kk < KK; ++kk) {
      const double* off_y = aux.plane(n, 2 * kk);
      const double* off_x = aux.plane(n, 2 * kk + 1);
      const double* mlogit = aux.plane(n, 2 * KK + kk);
      double* g_off_y = gaux.plane(n, 2 * kk);
      double* g_off_x = gaux.plane(n, 2 * kk + 1);
      double* g_mlogit = gaux.plane(n, 2 * KK + kk);
      const int base_y = (kk / K) - pad_, base_x = (kk % K) - pad_;
      for (int oh = 0; oh < H; ++oh) {
        for (int ow = 0; ow < W; ++ow) {
          const int sp = oh * W + ow;
          const double py = oh + base_y + off_y[sp];
          const double px = ow + base_x + off_x[sp];
          const bool inside = py > -1.0 && py < double(H) && px > -1.0 && px < double(W);
          if (!inside) continue;  // nan-safe, mirrors build_columns
          const double m = sigmoid(mlogit[sp]);
          const int h0 = int(std::floor(py)), w0 = int(std::floor(px));
          const double ah = py - h0, aw = px - w0;
          const bool v00 = h0 >= 0 && w0 >= 0, v01 = h0 >= 0 && w0 + 1 < W;
          const bool v10 = h0 + 1 < H && w0 >= 0, v11 = h0 + 1 < H && w0 + 1 < W;
          const double w00 = (1 - ah) * (1 - aw), w01 = (1 - ah) * aw;
          const double w10 = ah * (1 - aw), w11 = ah * aw;
          double gmask = 0.0, gpy = 0.0, gpx = 0.0;
          for (int c = 0; c < C; ++c) {
            const double gcol = gcols[(std::size_t(c) * KK + kk) * HW + sp];
            if (gcol == 0.0) continue;
            gmask += gcol * raw[(std::size_t(c) * KK + kk) * HW + sp];
            const double gv = gcol * m;
            const double* pl = x.plane(n, c);
            double* gpl = gx.plane(n, c);
            double x00 = 0, x01 = 0, x10 = 0, x11 = 0;
            if (v00) {
              x00 = pl[h0 * W + w0];
              gpl[h0 * W + w0] += gv * w00;
            }
            if (v01) {
              x01 = pl[h0 * W + w0 + 1];
              gpl[h0 * W + w0 + 1] += gv * w01;
            }
            if (v10) {
              x10 = pl[(h0 + 1) * W + w0];
              gpl[(h0 + 1) * W + w0] += gv * w10;
            }
            if (v11) {
              x11 = pl[(h0 + 1) * W + w0 + 1];
              gpl[(h0 + 1) * W + w0 + 1] += gv * w11;
            }
            gpy += gv * (-(1 - aw) * x00 - aw * x01 + (1 - aw) * x10 + aw * x11);
            gpx += gv * (-(1 - ah) * x00 + (1 - ah) * x01 - ah * x10 + ah * x11);
          }
          g_off_y[sp] += gpy;
          g_off_x[sp] += gpx;
          g_mlogit[sp] += gmask * m * (1.0 - m);
        }
      }
    }
  }
  gx += predictor.backward(gaux);
  x_cache_.reset();
  return gx;
}

void DeformConv2d::collect_params(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".w", &weight, &wgrad, true, false});
  predictor.collect_params(prefix + ".pred", out);
}

int64_t DeformConv2d::param_count() const {
  return int64_t(weight.numel()) + predictor.param_count();
}

// ---------------------------------------------------------------------------
// elementwise / softmax

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (std::size_t i = 0; i < y.numel(); ++i)
    if (y[i] < 0.0) y[i] = 0.0;
  return y;
}

Tensor relu_backward(const Tensor& gy, const Tensor& x_pre) {
  Tensor gx = gy;
  for (std::size_t i = 0; i < gx.numel(); ++i)
    if (x_pre[i] <= 0.0) gx[i] = 0.0;
  return gx;
}

std::vector<double> softmax(const std::vector<double>& logits) {
  double mx = -1e300;
  for (double v : logits) {
    if (!std::isfinite(v)) throw NumericError("softmax: non-finite logit");
    mx = std::max(mx, v);
  }
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (auto& v : p) v /= z;
  return p;
}

std::vector<double> softmax_backward(const std::vector<double>& probs, const std::vector<double>& s) {
  double mean = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) mean += probs[i] * s[i];
  std::vector<double> g(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) g[i] = probs[i] * (s[i] - mean);
  return g;
}

}  // namespace hinas
