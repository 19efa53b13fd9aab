#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "hinas/rng.hpp"
#include "hinas/tensor.hpp"

namespace hinas::testing {

inline void fill_uniform(Tensor& t, Rng& rng, double lo = 0.0, double hi = 1.0) {
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
}

inline Tensor random_tensor(int n, int c, int h, int w, uint64_t seed, double lo = 0.0,
                            double hi = 1.0) {
  Tensor t(n, c, h, w);
  Rng rng(seed);
  fill_uniform(t, rng, lo, hi);
  return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  a.require_same_shape(b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double rel_err(double got, double want) {
  const double scale = std::max({std::abs(got), std::abs(want), 1e-8});
  return std::abs(got - want) / scale;
}

/// Central finite difference of eval() w.r.t. *coord.
template <typename F>
double fd_grad(double* coord, F&& eval, double eps = 1e-4) {
  const double orig = *coord;
  *coord = orig + eps;
  const double hi = eval();
  *coord = orig - eps;
  const double lo = eval();
  *coord = orig;
  return (hi - lo) / (2.0 * eps);
}

/// Largest relative FD error over every element of a parameter tensor.
template <typename F>
double fd_check_tensor(Tensor& param, const Tensor& analytic, F&& eval, double eps = 1e-4) {
  double worst = 0.0;
  for (std::size_t i = 0; i < param.numel(); ++i) {
    const double fd = fd_grad(&param[i], eval, eps);
    worst = std::max(worst, rel_err(analytic[i], fd));
  }
  return worst;
}

}  // namespace hinas::testing
