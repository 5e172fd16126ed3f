#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "advgen/common.hpp"

namespace advgen::nn {

// All tensors are dense float32 NCHW. Vectors use (N, C, 1, 1), scalars
// (1, 1, 1, 1).
struct Shape {
  int n = 1, c = 1, h = 1, w = 1;

  size_t numel() const { return size_t(n) * c * h * w; }
  bool operator==(const Shape& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }
  std::string str() const;
};

struct TensorImpl {
  Shape shape;
  std::vector<float> v;
  std::vector<float> g;  // allocated on first use
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> backward_fn;

  void ensure_grad() {
    if (g.size() != v.size()) g.assign(v.size(), 0.0f);
  }
};

// Reverse-mode autodiff tape. Ops build the graph only while GradMode is on
// and at least one input requires grad; backward() walks the tape once.
struct GradMode {
  static thread_local bool enabled;
};

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(GradMode::enabled) { GradMode::enabled = false; }
  ~NoGradGuard() { GradMode::enabled = prev; }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape s, bool requires_grad = false);
  static Tensor full(Shape s, float value, bool requires_grad = false);
  static Tensor from_vector(Shape s, std::vector<float> v, bool requires_grad = false);
  static Tensor scalar(float v);
  static Tensor randn(Shape s, Rng& rng, float stddev, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  size_t numel() const { return impl_->v.size(); }
  float* data() { return impl_->v.data(); }
  const float* data() const { return impl_->v.data(); }
  std::vector<float>& values() { return impl_->v; }
  const std::vector<float>& values() const { return impl_->v; }
  float item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool rg) { impl_->requires_grad = rg; }
  std::vector<float>& grad() {
    impl_->ensure_grad();
    return impl_->g;
  }
  void zero_grad() {
    if (!impl_->g.empty()) std::fill(impl_->g.begin(), impl_->g.end(), 0.0f);
  }

  Tensor detach() const;  // copies values, drops the tape
  void backward();        // root must be scalar

  std::shared_ptr<TensorImpl> impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, float s);
Tensor mul_scalar(const Tensor& a, float s);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, float slope);
Tensor tanh_t(const Tensor& a);
Tensor sigmoid_t(const Tensor& a);
Tensor softplus_t(const Tensor& a);  // log(1 + e^x), stable
Tensor square(const Tensor& a);
Tensor abs_t(const Tensor& a);
Tensor sqrt_t(const Tensor& a);  // grad guarded at 0
Tensor clamp_t(const Tensor& a, float lo, float hi);

// scalar-tensor broadcast (s has numel 1)
Tensor mul_scalar_tensor(const Tensor& a, const Tensor& s);
Tensor reciprocal_scalar(const Tensor& s);

// reductions / contractions
Tensor sum_t(const Tensor& a);
Tensor mean_t(const Tensor& a);
Tensor dot(const Tensor& a, const Tensor& b);
Tensor norm_lp(const Tensor& a, int p);       // p in {1, 2}; p = 0 means inf
Tensor hinge_l2(const Tensor& a, float eps);  // max(eps, ||a||_2), exact floor
Tensor l2_normalize(const Tensor& a);

// network primitives
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                     float eps = 1e-5f);
Tensor upsample_nearest2(const Tensor& x);
Tensor concat_c(const Tensor& a, const Tensor& b);
Tensor global_avg_pool(const Tensor& x);  // (N,C,H,W) -> (N,C,1,1)
Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int>& targets);
Tensor log_sigmoid(const Tensor& a);

// Bilinear resampling on a fixed source-coordinate grid (2 floats per output
// pixel, x then y). Differentiable w.r.t. the image only; out-of-frame
// samples take `fill`.
Tensor warp_bilinear(const Tensor& x, const std::vector<float>& grid, float fill);

// Margin-softmax head for embedder training: logits_k = s*(cos(x, w_k) - m*[k==y]).
// x must be unit-norm (1, d); w is (K, d) and is normalized internally.
Tensor cosine_margin_logits(const Tensor& x, const Tensor& w, float scale,
                            float margin, int target);

}  // namespace advgen::nn
