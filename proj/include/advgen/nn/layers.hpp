#pragma once

#include <string>
#include <utility>
#include <vector>

#include "advgen/nn/tensor.hpp"

namespace advgen::nn {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

struct Conv2d {
  Tensor w, b;
  int stride = 1, pad = 0;
  bool has_bias = true;

  Conv2d() = default;
  // stddev < 0 selects He init (sqrt(2 / fan_in)); pass e.g. 0.02f for the
  // DCGAN-style init used in the generators/discriminators.
  Conv2d(int cin, int cout, int k, int stride, int pad, Rng& rng, float stddev = -1.0f,
         bool bias = true);

  Tensor operator()(const Tensor& x) const;
  void zero_weights();  // exact-identity trick for residual heads
  void collect(NamedParams& out, const std::string& prefix) const;
};

struct InstanceNorm2d {
  Tensor gamma, beta;

  InstanceNorm2d() = default;
  explicit InstanceNorm2d(int c);

  Tensor operator()(const Tensor& x) const { return instance_norm(x, gamma, beta); }
  void collect(NamedParams& out, const std::string& prefix) const;
};

struct Linear {
  Tensor w, b;

  Linear() = default;
  Linear(int cin, int cout, Rng& rng, float stddev = -1.0f);

  Tensor operator()(const Tensor& x) const { return linear(x, w, b); }
  void collect(NamedParams& out, const std::string& prefix) const;
};

void set_requires_grad(NamedParams& params, bool rg);
void zero_grads(NamedParams& params);

// FNV-1a over the raw float bytes of every parameter, in collection order.
uint64_t params_hash(const NamedParams& params);

// Checkpoints: magic line, JSON header (arch id + tensor directory + caller
// metadata), then raw float32 blobs. Loading refuses a mismatched arch id or
// any shape drift.
void save_checkpoint(const std::string& path, const std::string& arch,
                     const NamedParams& params, const std::string& meta_json = "{}");
std::string load_checkpoint(const std::string& path, const std::string& arch,
                            NamedParams& params);  // returns the meta JSON

// Reads only the header, so a caller can construct the right architecture
// before pulling weights: returns {arch id, meta JSON}.
std::pair<std::string, std::string> peek_checkpoint(const std::string& path);

}  // namespace advgen::nn
