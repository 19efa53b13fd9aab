#include "hinas/plot.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgproc.hpp>
#include <opencv2/imgcodecs.hpp>

#include "hinas/tensor.hpp"

namespace hinas {

namespace {

// map a value into plot-area pixel coordinates, y inverted
cv::Point map_pt(double x, double y, double x0, double x1, double y0, double y1,
                 const cv::Rect& area) {
  const double fx = x1 > x0 ? (x - x0) / (x1 - x0) : 0.5;
  const double fy = y1 > y0 ? (y - y0) / (y1 - y0) : 0.5;
  return {area.x + int(std::lround(fx * (area.width - 1))),
          area.y + area.height - 1 - int(std::lround(fy * (area.height - 1)))};
}

}  // namespace

void plot_history_png(const std::vector<EvalRecord>& history, const std::string& path,
                      const std::string& title) {
  if (history.empty()) throw ConfigError("plot: empty history");
  const int W = 720, H = 480;
  cv::Mat img(H, W, CV_8UC3, cv::Scalar(255, 255, 255));
  const cv::Rect area(70, 40, W - 100, H - 90);

  double pmin = history[0].psnr, pmax = history[0].psnr;
  double smin = history[0].ssim, smax = history[0].ssim;
  for (const EvalRecord& r : history) {
    pmin = std::min(pmin, r.psnr);
    pmax = std::max(pmax, r.psnr);
    smin = std::min(smin, r.ssim);
    smax = std::max(smax, r.ssim);
  }
  const double ppad = std::max(0.1, 0.05 * (pmax - pmin));
  const double spad = std::max(0.005, 0.05 * (smax - smin));
  pmin -= ppad, pmax += ppad, smin -= spad, smax += spad;
  const double e0 = history.front().epoch, e1 = std::max<double>(history.back().epoch, e0 + 1);

  cv::rectangle(img, area, cv::Scalar(60, 60, 60));
  const cv::Scalar psnr_color(180, 90, 20), ssim_color(40, 140, 40), grey(150, 150, 150);

  // horizontal grid with PSNR labels on the left, SSIM labels on the right
  char buf[48];
  for (int g = 0; g <= 4; ++g) {
    const double f = g / 4.0;
    const int y = area.y + area.height - 1 - int(std::lround(f * (area.height - 1)));
    cv::line(img, {area.x, y}, {area.x + area.width - 1, y}, grey, 1, cv::LINE_AA);
    std::snprintf(buf, sizeof(buf), "%.2f", pmin + f * (pmax - pmin));
    cv::putText(img, buf, {6, y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.38, psnr_color, 1, cv::LINE_AA);
    std::snprintf(buf, sizeof(buf), "%.3f", smin + f * (smax - smin));
    cv::putText(img, buf, {area.x + area.width + 4, y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.33,
                ssim_color, 1, cv::LINE_AA);
  }
  for (const EvalRecord& r : history) {
    const cv::Point t = map_pt(r.epoch, pmin, e0, e1, pmin, pmax, area);
    std::snprintf(buf, sizeof(buf), "%d", r.epoch);
    if (history.size() <= 25 || r.epoch % 10 == 0)
      cv::putText(img, buf, {t.x - 6, area.y + area.height + 16}, cv::FONT_HERSHEY_SIMPLEX, 0.35,
                  cv::Scalar(60, 60, 60), 1, cv::LINE_AA);
  }

  auto draw_series = [&](auto get, double lo, double hi, const cv::Scalar& color) {
    cv::Point prev;
    for (std::size_t i = 0; i < history.size(); ++i) {
      const cv::Point p = map_pt(history[i].epoch, get(history[i]), e0, e1, lo, hi, area);
      cv::circle(img, p, 2, color, cv::FILLED, cv::LINE_AA);
      if (i) cv::line(img, prev, p, color, 1, cv::LINE_AA);
      prev = p;
    }
  };
  draw_series([](const EvalRecord& r) { return r.psnr; }, pmin, pmax, psnr_color);
  draw_series([](const EvalRecord& r) { return r.ssim; }, smin, smax, ssim_color);

  cv::putText(img, title + "  (psnr left, ssim right, x = epoch)", {area.x, 24},
              cv::FONT_HERSHEY_SIMPLEX, 0.5, cv::Scalar(30, 30, 30), 1, cv::LINE_AA);
  if (!cv::imwrite(path, img)) throw ConfigError("plot: cannot write " + path);
}

}  // namespace hinas
