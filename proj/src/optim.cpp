#include "hinas/optim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace hinas {

std::vector<ParamView> views_of(ParamList& params, bool trainable_only) {
  std::vector<ParamView> out;
  for (auto& p : params) {
    if (trainable_only && (!p.trainable || !p.grad)) continue;
    out.push_back({p.name, p.value->data(), p.grad ? p.grad->data() : nullptr, p.value->numel()});
  }
  return out;
}

// ---------------------------------------------------------------------------
// SGD with momentum

SgdMomentum::SgdMomentum(std::vector<ParamView> params, double momentum, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
  velocity_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) velocity_[i].assign(params_[i].size, 0.0);
}

void SgdMomentum::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    auto& vel = velocity_[i];
    for (std::size_t j = 0; j < p.size; ++j) {
      const double g = p.grad[j] + weight_decay_ * p.value[j];
      vel[j] = momentum_ * vel[j] + g;
      p.value[j] -= lr * vel[j];
    }
  }
}

void SgdMomentum::zero_grads() {
  for (auto& p : params_) std::fill(p.grad, p.grad + p.size, 0.0);
}

std::vector<std::pair<std::string, std::vector<double>>> SgdMomentum::state() const {
  std::vector<std::pair<std::string, std::vector<double>>> st;
  for (std::size_t i = 0; i < params_.size(); ++i) st.emplace_back(params_[i].name, velocity_[i]);
  return st;
}

void SgdMomentum::load_state(const std::vector<std::pair<std::string, std::vector<double>>>& st) {
  for (const auto& [name, vel] : st) {
    bool found = false;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].name != name) continue;
      if (vel.size() != params_[i].size)
        throw ConfigError("optimizer state: size mismatch for " + name);
      velocity_[i] = vel;
      found = true;
      break;
    }
    if (!found) throw ConfigError("optimizer state: unknown parameter " + name);
  }
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(std::vector<ParamView> params, double weight_decay, double beta1, double beta2,
           double eps)
    : params_(std::move(params)), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2),
      eps_(eps) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i].size, 0.0);
    v_[i].assign(params_[i].size, 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, double(t_));
  const double bc2 = 1.0 - std::pow(beta2_, double(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    for (std::size_t j = 0; j < p.size; ++j) {
      const double g = p.grad[j] + weight_decay_ * p.value[j];
      m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
      v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
      const double mhat = m_[i][j] / bc1;
      const double vhat = v_[i][j] / bc2;
      p.value[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void Adam::zero_grads() {
  for (auto& p : params_) std::fill(p.grad, p.grad + p.size, 0.0);
}

Adam::State Adam::state() const {
  State st;
  st.t = t_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    st.m.emplace_back(params_[i].name, m_[i]);
    st.v.emplace_back(params_[i].name, v_[i]);
  }
  return st;
}

void Adam::load_state(const State& st) {
  t_ = st.t;
  auto apply = [&](const std::vector<std::pair<std::string, std::vector<double>>>& src,
                   std::vector<std::vector<double>>& dst) {
    for (const auto& [name, vec] : src) {
      bool found = false;
      for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].name != name) continue;
        if (vec.size() != params_[i].size)
          throw ConfigError("optimizer state: size mismatch for " + name);
        dst[i] = vec;
        found = true;
        break;
      }
      if (!found) throw ConfigError("optimizer state: unknown parameter " + name);
    }
  };
  apply(st.m, m_);
  apply(st.v, v_);
}

// ---------------------------------------------------------------------------

double cosine_lr(int64_t step, int64_t total_steps, double lr_max, double lr_min) {
  if (total_steps <= 0) throw ConfigError("cosine_lr: total_steps must be > 0");
  const double s = std::clamp(double(step) / double(total_steps), 0.0, 1.0);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(s * M_PI));
}

}  // namespace hinas
