#include "hinas/losses.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace hinas {

void LossConfig::validate() const {
  if (lambda < 0.0) throw ConfigError("loss: lambda must be >= 0");
  if (ssim_floor <= 0.0 || ssim_floor >= 1.0) throw ConfigError("loss: ssim floor must be in (0,1)");
  if (ssim_window < 1 || ssim_window % 2 == 0) throw ConfigError("loss: ssim window must be odd and >= 1");
  if (ssim_sigma <= 0.0) throw ConfigError("loss: ssim sigma must be > 0");
}

namespace {

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(size);
  const double c = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    k[i] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// valid-mode separable filter of one (H x W) plane; dst is (H-w+1) x (W-w+1)
void filter_valid(const double* src, int H, int W, const std::vector<double>& k, double* dst,
                  std::vector<double>& tmp) {
  const int w = int(k.size());
  const int Wv = W - w + 1, Hv = H - w + 1;
  tmp.resize(std::size_t(H) * Wv);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < Wv; ++x) {
      double s = 0.0;
      for (int t = 0; t < w; ++t) s += k[t] * src[y * W + x + t];
      tmp[std::size_t(y) * Wv + x] = s;
    }
  for (int y = 0; y < Hv; ++y)
    for (int x = 0; x < Wv; ++x) {
      double s = 0.0;
      for (int t = 0; t < w; ++t) s += k[t] * tmp[std::size_t(y + t) * Wv + x];
      dst[std::size_t(y) * Wv + x] = s;
    }
}

// adjoint of filter_valid: scatters (Hv x Wv) grads back onto (H x W), adding
void filter_valid_adjoint(const double* g, int H, int W, const std::vector<double>& k, double* dst,
                          std::vector<double>& tmp) {
  const int w = int(k.size());
  const int Wv = W - w + 1, Hv = H - w + 1;
  tmp.assign(std::size_t(H) * Wv, 0.0);
  for (int y = 0; y < Hv; ++y)
    for (int x = 0; x < Wv; ++x) {
      const double gv = g[std::size_t(y) * Wv + x];
      for (int t = 0; t < w; ++t) tmp[std::size_t(y + t) * Wv + x] += k[t] * gv;
    }
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < Wv; ++x) {
      const double gv = tmp[std::size_t(y) * Wv + x];
      for (int t = 0; t < w; ++t) dst[y * W + x + t] += k[t] * gv;
    }
}

struct SsimWindow {
  std::vector<double> kernel;
  int Hv = 0, Wv = 0;
};

SsimWindow make_window(int H, int W, const LossConfig& cfg) {
  int w = cfg.ssim_window;
  const int limit = std::min(H, W);
  if (w > limit) w = limit % 2 == 1 ? limit : limit - 1;  // largest odd fit
  const double sigma = cfg.ssim_sigma * double(w) / cfg.ssim_window;
  SsimWindow sw;
  sw.kernel = gaussian_kernel(w, sigma);
  sw.Hv = H - w + 1;
  sw.Wv = W - w + 1;
  return sw;
}

double ssim_impl(const Tensor& x, const Tensor& y, const LossConfig& cfg, Tensor* gx) {
  x.require_same_shape(y, "ssim");
  cfg.validate();
  if (x.h() < 1 || x.w() < 1) throw ShapeError("ssim: empty image");
  const int H = x.h(), W = x.w();
  const SsimWindow sw = make_window(H, W, cfg);
  const int Hv = sw.Hv, Wv = sw.Wv;
  const std::size_t M = std::size_t(Hv) * Wv;
  const double C1 = cfg.k1 * cfg.k1, C2 = cfg.k2 * cfg.k2;

  if (gx) {
    gx->require_same_shape(x, "ssim grad");
    gx->zero();
  }

  std::vector<double> u(M), v(M), p(M), q(M), r(M), tmp;
  std::vector<double> x2(std::size_t(H) * W), y2(x2.size()), xy(x2.size());
  std::vector<double> gu, gp, gr;
  double total = 0.0;
  const double planes = double(x.n()) * x.c();

  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c) {
      const double* xp = x.plane(n, c);
      const double* yp = y.plane(n, c);
      for (std::size_t i = 0; i < x2.size(); ++i) {
        x2[i] = xp[i] * xp[i];
        y2[i] = yp[i] * yp[i];
        xy[i] = xp[i] * yp[i];
      }
      filter_valid(xp, H, W, sw.kernel, u.data(), tmp);
      filter_valid(yp, H, W, sw.kernel, v.data(), tmp);
      filter_valid(x2.data(), H, W, sw.kernel, p.data(), tmp);
      filter_valid(y2.data(), H, W, sw.kernel, q.data(), tmp);
      filter_valid(xy.data(), H, W, sw.kernel, r.data(), tmp);

      if (gx) {
        gu.assign(M, 0.0);
        gp.assign(M, 0.0);
        gr.assign(M, 0.0);
      }
      double plane_sum = 0.0;
      for (std::size_t j = 0; j < M; ++j) {
        const double A1 = 2.0 * u[j] * v[j] + C1;
        const double A2 = 2.0 * (r[j] - u[j] * v[j]) + C2;
        const double B1 = u[j] * u[j] + v[j] * v[j] + C1;
        const double B2 = (p[j] - u[j] * u[j]) + (q[j] - v[j] * v[j]) + C2;
        const double S = (A1 * A2) / (B1 * B2);
        plane_sum += S;
        if (gx) {
          // partials w.r.t. the x-dependent maps u, p, r
          gu[j] = (2.0 * v[j] * (A2 - A1)) / (B1 * B2) - S * (2.0 * u[j] / B1 - 2.0 * u[j] / B2);
          gp[j] = -S / B2;
          gr[j] = 2.0 * A1 / (B1 * B2);
        }
      }
      total += plane_sum / double(M);

      if (gx) {
        const double scale = 1.0 / (double(M) * planes);
        for (std::size_t j = 0; j < M; ++j) {
          gu[j] *= scale;
          gp[j] *= scale;
          gr[j] *= scale;
        }
        // u = G*x, p = G*x^2, r = G*(x y)
        std::vector<double> acc(x2.size(), 0.0);
        filter_valid_adjoint(gu.data(), H, W, sw.kernel, acc.data(), tmp);
        std::vector<double> accp(x2.size(), 0.0);
        filter_valid_adjoint(gp.data(), H, W, sw.kernel, accp.data(), tmp);
        std::vector<double> accr(x2.size(), 0.0);
        filter_valid_adjoint(gr.data(), H, W, sw.kernel, accr.data(), tmp);
        double* gxp = gx->plane(n, c);
        for (std::size_t i = 0; i < x2.size(); ++i)
          gxp[i] += acc[i] + 2.0 * xp[i] * accp[i] + yp[i] * accr[i];
      }
    }
  return total / planes;
}

}  // namespace

double ssim(const Tensor& x, const Tensor& y, const LossConfig& cfg) {
  return ssim_impl(x, y, cfg, nullptr);
}

double ssim_with_grad(const Tensor& x, const Tensor& y, const LossConfig& cfg, Tensor& gx) {
  return ssim_impl(x, y, cfg, &gx);
}

namespace {

LossResult loss_impl(const Tensor& pred, const Tensor& target, const LossConfig& cfg,
                     Tensor* gpred) {
  pred.require_same_shape(target, "total_loss");
  cfg.validate();
  if (!pred.all_finite() || !target.all_finite())
    throw NumericError("total_loss: non-finite input");

  LossResult r;
  const double inv_n = 1.0 / double(pred.numel());
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const double d = pred[i] - target[i];
    r.mse += d * d;
  }
  r.mse *= inv_n;

  // lambda = 0 degenerates to plain MSE; the similarity term is skipped
  double clamped = 1.0;
  Tensor gs;
  if (cfg.lambda > 0.0) {
    if (gpred) {
      gs = Tensor::zeros_like(pred);
      r.ssim_value = ssim_with_grad(pred, target, cfg, gs);
    } else {
      r.ssim_value = ssim(pred, target, cfg);
    }
    clamped = std::clamp(r.ssim_value, cfg.ssim_floor, 1.0);
  } else {
    r.ssim_value = 1.0;
  }
  r.lssim = -std::log10(clamped);
  r.total = r.mse + cfg.lambda * r.lssim;

  if (gpred) {
    gpred->require_same_shape(pred, "total_loss grad");
    for (std::size_t i = 0; i < pred.numel(); ++i)
      (*gpred)[i] = 2.0 * (pred[i] - target[i]) * inv_n;
    if (cfg.lambda > 0.0 && r.ssim_value > cfg.ssim_floor && r.ssim_value < 1.0) {
      const double dl = -cfg.lambda / (clamped * std::log(10.0));
      gpred->add_scaled(gs, dl);
    }
  }
  return r;
}

}  // namespace

LossResult total_loss(const Tensor& pred, const Tensor& target, const LossConfig& cfg) {
  return loss_impl(pred, target, cfg, nullptr);
}

LossResult total_loss_with_grad(const Tensor& pred, const Tensor& target, const LossConfig& cfg,
                                Tensor& gpred) {
  return loss_impl(pred, target, cfg, &gpred);
}

double psnr(const Tensor& pred, const Tensor& target) {
  pred.require_same_shape(target, "psnr");
  const std::size_t per = pred.numel() / std::max(1, pred.n());
  double sum = 0.0;
  for (int n = 0; n < pred.n(); ++n) {
    double mse = 0.0;
    const double* pp = pred.data() + std::size_t(n) * per;
    const double* tp = target.data() + std::size_t(n) * per;
    for (std::size_t i = 0; i < per; ++i) {
      const double d = std::clamp(pp[i], 0.0, 1.0) - tp[i];
      mse += d * d;
    }
    mse /= double(per);
    sum += mse <= 0.0 ? 100.0 : std::min(100.0, 10.0 * std::log10(1.0 / mse));
  }
  return sum / std::max(1, pred.n());
}

}  // namespace hinas
