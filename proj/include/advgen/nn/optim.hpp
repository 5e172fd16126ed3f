#pragma once

#include <vector>

#include "advgen/nn/layers.hpp"

namespace advgen::nn {

// Adam with the GAN-training moment defaults used across the pipeline.
class Adam {
 public:
  explicit Adam(NamedParams params, float lr = 2e-4f, float beta1 = 0.5f,
                float beta2 = 0.9f, float eps = 1e-8f);

  void step();
  void zero_grad();
  float lr() const { return lr_; }
  void set_lr(float lr) { lr_ = lr; }

 private:
  NamedParams params_;
  std::vector<std::vector<float>> m_, v_;
  float lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace advgen::nn
