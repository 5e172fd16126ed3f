#include "advgen/nn/optim.hpp"

#include <cmath>

namespace advgen::nn {

Adam::Adam(NamedParams params, float lr, float beta1, float beta2, float eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i].second.numel(), 0.0f);
    v_[i].assign(params_[i].second.numel(), 0.0f);
  }
}

void Adam::step() {
  ++t_;
  float bc1 = 1.0f - std::pow(beta1_, float(t_));
  float bc2 = 1.0f - std::pow(beta2_, float(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].second;
    auto pi = p.impl();
    if (pi->g.empty()) continue;  // param untouched this step
    float* w = pi->v.data();
    const float* g = pi->g.data();
    float* m = m_[i].data();
    float* v = v_[i].data();
    size_t n = pi->v.size();
    for (size_t j = 0; j < n; ++j) {
      m[j] = beta1_ * m[j] + (1.0f - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0f - beta2_) * g[j] * g[j];
      float mhat = m[j] / bc1;
      float vhat = v[j] / bc2;
      w[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void Adam::zero_grad() { zero_grads(params_); }

}  // namespace advgen::nn
