#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hinas/nn.hpp"

namespace hinas {

/// Flat view of one optimizable parameter block. Tensors and raw logit
/// vectors (alpha/beta) go through the same interface.
struct ParamView {
  std::string name;
  double* value = nullptr;
  double* grad = nullptr;
  std::size_t size = 0;
};

std::vector<ParamView> views_of(ParamList& params, bool trainable_only = true);

/// SGD with classic momentum and decoupled-from-nothing L2 weight decay
/// folded into the gradient (grad + wd * value).
class SgdMomentum {
public:
  SgdMomentum() = default;
  SgdMomentum(std::vector<ParamView> params, double momentum, double weight_decay);

  void step(double lr);
  void zero_grads();

  std::vector<std::pair<std::string, std::vector<double>>> state() const;  // velocity per param
  void load_state(const std::vector<std::pair<std::string, std::vector<double>>>& st);

private:
  std::vector<ParamView> params_;
  std::vector<std::vector<double>> velocity_;
  double momentum_ = 0.9, weight_decay_ = 0.0;
};

/// Adam with L2 regularization folded into the gradient.
class Adam {
public:
  Adam() = default;
  Adam(std::vector<ParamView> params, double weight_decay, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);

  void step(double lr);
  void zero_grads();
  int64_t step_count() const { return t_; }

  struct State {
    int64_t t = 0;
    std::vector<std::pair<std::string, std::vector<double>>> m, v;
  };
  State state() const;
  void load_state(const State& st);

private:
  std::vector<ParamView> params_;
  std::vector<std::vector<double>> m_, v_;
  double weight_decay_ = 0.0, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  int64_t t_ = 0;
};

/// Per-step cosine annealing from lr_max at step 0 to lr_min at total_steps.
double cosine_lr(int64_t step, int64_t total_steps, double lr_max, double lr_min);

}  // namespace hinas
