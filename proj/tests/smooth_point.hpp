#pragma once

// Helpers that pin networks to a smooth operating point for finite-difference
// gradient checks.
//
// The conv nets here are piecewise linear: every leaky-relu sits right at an
// activation the preceding instance norm re-centers onto the kink, and L1
// penalties add a kink wherever a residual crosses zero. A finite-difference
// stencil is only meaningful while the function stays on a single smooth
// piece, so the checks doctor the evaluation point instead of loosening the
// tolerance:
//   * shifting every normalization offset well positive moves all leaky-relu
//     inputs onto one linear piece (the backward graph is unchanged);
//   * giving generator heads a small constant output shift keeps round-trip
//     residuals away from both the L1 kink and the value clamp;
//   * a conv -> tanh -> pooled-projection embedding stub replaces leaky-relu
//     embedders where a kink-free map with a well-conditioned cosine is
//     needed.
// For losses whose input-space gradient is structurally tiny (an L1 penalty
// on a near-identity map: the direct and identity paths cancel), the check
// probes a parameter tensor instead — that is the gradient the optimizer
// consumes, and its backward pass still traverses the full composite.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "advgen/models.hpp"
#include "advgen/nn/layers.hpp"
#include "fd_check.hpp"

namespace smoothpt {

inline bool ends_with(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

inline void fill_tensor(advgen::nn::Tensor& t, float v) {
  for (int i = 0; i < t.numel(); ++i) t.data()[i] = v;
}

// Shift all normalization offsets positive; `first_bias` additionally sets
// conv0.b for nets whose first layer has no norm (patch discriminators).
inline void shift_smooth(advgen::nn::NamedParams params, float first_bias = -1.0f) {
  for (auto& [name, t] : params) {
    if (ends_with(name, ".beta"))
      fill_tensor(t, 4.0f);
    else if (first_bias > 0.0f && name == "conv0.b")
      fill_tensor(t, first_bias);
  }
}

// Replace a generator-style head: weights drawn at `w_scale`, bias set so
// the residual sits near tanh(bias) everywhere. Suffix matching lets this
// reach heads behind a prefix (e.g. a wrapped trace net).
inline void set_head(advgen::nn::NamedParams params, uint64_t seed, float w_scale, float bias) {
  advgen::Rng rng(seed);
  for (auto& [name, t] : params) {
    if (ends_with(name, "head.b"))
      fill_tensor(t, bias);
    else if (ends_with(name, "head.w"))
      for (int i = 0; i < t.numel(); ++i) t.data()[i] = w_scale * float(rng.normal());
  }
}

inline void set_head(advgen::Generator& g, uint64_t seed, float w_scale, float bias) {
  set_head(g.params(), seed, w_scale, bias);
}

// Kink-free embedding stub: conv -> tanh -> global pool -> linear -> unit
// norm. Smooth everywhere and sensitive enough that cosines between related
// images land well inside (0, 1).
inline std::function<advgen::nn::Tensor(const advgen::nn::Tensor&)> stub_embedder(uint64_t seed) {
  advgen::Rng rng(seed);
  advgen::nn::Conv2d conv(3, 8, 3, 1, 1, rng, 0.4f);
  advgen::nn::Linear proj(8, 8, rng, 0.5f);
  return [conv, proj](const advgen::nn::Tensor& t) {
    return advgen::nn::l2_normalize(proj(advgen::nn::global_avg_pool(advgen::nn::tanh_t(conv(t)))));
  };
}

inline advgen::nn::Tensor named_param(advgen::nn::NamedParams params, const std::string& name) {
  for (auto& [n, t] : params)
    if (n == name) return t;
  throw std::runtime_error("no parameter named " + name);
}

// Finite differences with respect to a live parameter tensor. The numeric
// passes copy perturbed values into the parameter's storage; the analytic
// pass hands the parameter itself to check_grad, so backward reaches the
// same node. Restores the original values afterwards.
inline double param_fd(advgen::nn::Tensor w, const std::function<advgen::nn::Tensor()>& loss,
                       double h) {
  std::vector<float> keep = w.values();
  double err = fdcheck::check_grad(
      [&](const advgen::nn::Tensor& t) {
        if (t.data() != w.data()) {
          std::vector<float> v = t.values();
          std::copy(v.begin(), v.end(), w.data());
        }
        return loss();
      },
      w, h);
  std::copy(keep.begin(), keep.end(), w.data());
  w.zero_grad();
  return err;
}

}  // namespace smoothpt
