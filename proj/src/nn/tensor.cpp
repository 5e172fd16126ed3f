#include "advgen/nn/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

namespace advgen::nn {

thread_local bool GradMode::enabled = true;

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) +
         "," + std::to_string(w) + ")";
}

Tensor Tensor::zeros(Shape s, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = s;
  impl->v.assign(s.numel(), 0.0f);
  impl->requires_grad = requires_grad;
  return Tensor(impl);
}

Tensor Tensor::full(Shape s, float value, bool requires_grad) {
  Tensor t = zeros(s, requires_grad);
  std::fill(t.values().begin(), t.values().end(), value);
  return t;
}

Tensor Tensor::from_vector(Shape s, std::vector<float> v, bool requires_grad) {
  if (v.size() != s.numel())
    throw ParamError("tensor data size " + std::to_string(v.size()) +
                     " does not match shape " + s.str());
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = s;
  impl->v = std::move(v);
  impl->requires_grad = requires_grad;
  return Tensor(impl);
}

Tensor Tensor::scalar(float v) { return from_vector(Shape{1, 1, 1, 1}, {v}); }

Tensor Tensor::randn(Shape s, Rng& rng, float stddev, bool requires_grad) {
  Tensor t = zeros(s, requires_grad);
  for (auto& x : t.values()) x = float(rng.normal()) * stddev;
  return t;
}

float Tensor::item() const {
  if (numel() != 1) throw ParamError("item() on tensor of shape " + shape().str());
  return impl_->v[0];
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->v = impl_->v;
  impl->requires_grad = false;
  return Tensor(impl);
}

void Tensor::backward() {
  if (numel() != 1) throw ParamError("backward() requires a scalar root");
  // topological order over the tape
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<TensorImpl*, size_t>> stack;
  stack.push_back({impl_.get(), 0});
  seen.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorImpl* p = node->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  impl_->ensure_grad();
  impl_->g[0] = 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = *it;
    if (node->backward_fn) node->backward_fn(*node);
  }
}

namespace {

Tensor make_op(Shape s, std::vector<Tensor> inputs,
               std::function<void(TensorImpl&)> backward) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = s;
  impl->v.resize(s.numel());
  bool rg = false;
  for (auto& in : inputs) rg = rg || in.requires_grad();
  if (GradMode::enabled && rg) {
    impl->requires_grad = true;
    for (auto& in : inputs) impl->parents.push_back(in.impl());
    impl->backward_fn = std::move(backward);
  }
  return Tensor(impl);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ParamError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
}

void acc(std::shared_ptr<TensorImpl>& t, size_t i, float v) {
  if (t->requires_grad) {
    t->ensure_grad();
    t->g[i] += v;
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  auto ai = a.impl(), bi = b.impl();
  Tensor out = make_op(a.shape(), {a, b}, [ai, bi](TensorImpl& o) mutable {
    if (ai->requires_grad) {
      ai->ensure_grad();
      for (size_t i = 0; i < o.g.size(); ++i) ai->g[i] += o.g[i];
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      for (size_t i = 0; i < o.g.size(); ++i) bi->g[i] += o.g[i];
    }
  });
  for (size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  auto ai = a.impl(), bi = b.impl();
  Tensor out = make_op(a.shape(), {a, b}, [ai, bi](TensorImpl& o) mutable {
    if (ai->requires_grad) {
      ai->ensure_grad();
      for (size_t i = 0; i < o.g.size(); ++i) ai->g[i] += o.g[i];
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      for (size_t i = 0; i < o.g.size(); ++i) bi->g[i] -= o.g[i];
    }
  });
  for (size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  auto ai = a.impl(), bi = b.impl();
  Tensor out = make_op(a.shape(), {a, b}, [ai, bi](TensorImpl& o) mutable {
    if (ai->requires_grad) {
      ai->ensure_grad();
      for (size_t i = 0; i < o.g.size(); ++i) ai->g[i] += o.g[i] * bi->v[i];
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      for (size_t i = 0; i < o.g.size(); ++i) bi->g[i] += o.g[i] * ai->v[i];
    }
  });
  for (size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  return out;
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0f); }

Tensor add_scalar(const Tensor& a, float s) {
  auto ai = a.impl();
  Tensor out = make_op(a.shape(), {a}, [ai](TensorImpl& o) mutable {
    ai->ensure_grad();
    for (size_t i = 0; i < o.g.size(); ++i) ai->g[i] += o.g[i];
  });
  for (size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] + s;
  return out;
}

Tensor mul_scalar(const Tensor& a, float s) {
  auto ai = a.impl();
  Tensor out = make_op(a.shape(), {a}, [ai, s](TensorImpl& o) mutable {
    ai->ensure_grad();
    for (size_t i = 0; i < o.g.size(); ++i) ai->g[i] += o.g[i] * s;
  });
  for (size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] * s;
  return out;
}

namespace {

template <typename F, typename DF>
Tensor unary_op(const Tensor& a, F f, DF df_from_in_out) {
  auto ai = a.impl();
  Tensor out = make_op(a.shape(), {a}, nullptr);
  for (size_t i = 0; i < out.numel(); ++i) out.data()[i] = f(a.data()[i]);
  if (out.requires_grad()) {
    auto oi = out.impl();
    std::vector<float> saved_out = out.values();
    oi->backward_fn = [ai, df_from_in_out, saved_out](TensorImpl& o) mutable {
      ai->ensure_grad();
      for (size_t i = 0; i < o.g.size(); ++i)
        ai->g[i] += o.g[i] * df_from_in_out(ai->v[i], saved_out[i]);
    };
  }
  return out;
}

}  // namespace

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](float x) { return x > 0 ? x : 0.0f; },
      [](float x, float) { return x > 0 ? 1.0f : 0.0f; });
}

Tensor leaky_relu(const Tensor& a, float slope) {
  return unary_op(
      a, [slope](float x) { return x > 0 ? x : slope * x; },
      [slope](float x, float) { return x > 0 ? 1.0f : slope; });
}

Tensor tanh_t(const Tensor& a) {
  return unary_op(
      a, [](float x) { return std::tanh(x); },
      [](float, float y) { return 1.0f - y * y; });
}

Tensor sigmoid_t(const Tensor& a) {
  return unary_op(
      a,
      [](float x) {
        if (x >= 0) return 1.0f / (1.0f + std::exp(-x));
        float e = std::exp(x);
        return e / (1.0f + e);
      },
      [](float, float y) { return y * (1.0f - y); });
}

Tensor softplus_t(const Tensor& a) {
  return unary_op(
      a,
      [](float x) {
        if (x > 20.0f) return x;
        if (x < -20.0f) return std::exp(x);
        return std::log1p(std::exp(x));
      },
      [](float x, float) {
        if (x >= 0) return 1.0f / (1.0f + std::exp(-x));
        float e = std::exp(x);
        return e / (1.0f + e);
      });
}

Tensor log_sigmoid(const Tensor& a) { return neg(softplus_t(neg(a))); }

Tensor square(const Tensor& a) {
  return unary_op(
      a, [](float x) { return x * x; }, [](float x, float) { return 2.0f * x; });
}

Tensor abs_t(const Tensor& a) {
  return unary_op(
      a, [](float x) { return std::fabs(x); },
      [](float x, float) { return x > 0 ? 1.0f : (x < 0 ? -1.0f : 0.0f); });
}

Tensor sqrt_t(const Tensor& a) {
  return unary_op(
      a, [](float x) { return std::sqrt(x); },
      [](float, float y) { return y > 0 ? 0.5f / y : 0.0f; });
}

Tensor clamp_t(const Tensor& a, float lo, float hi) {
  return unary_op(
      a, [lo, hi](float x) { return std::min(hi, std::max(lo, x)); },
      [lo, hi](float x, float) { return (x >= lo && x <= hi) ? 1.0f : 0.0f; });
}

Tensor mul_scalar_tensor(const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) throw ParamError("mul_scalar_tensor: scalar operand required");
  auto ai = a.impl(), si = s.impl();
  Tensor out = make_op(a.shape(), {a, s}, [ai, si](TensorImpl& o) mutable {
    if (ai->requires_grad) {
      ai->ensure_grad();
      for (size_t i = 0; i < o.g.size(); ++i) ai->g[i] += o.g[i] * si->v[0];
    }
    if (si->requires_grad) {
      si->ensure_grad();
      float acc_g = 0.0f;
      for (size_t i = 0; i < o.g.size(); ++i) acc_g += o.g[i] * ai->v[i];
      si->g[0] += acc_g;
    }
  });
  for (size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] * s.data()[0];
  return out;
}

Tensor reciprocal_scalar(const Tensor& s) {
  if (s.numel() != 1) throw ParamError("reciprocal_scalar: scalar operand required");
  auto si = s.impl();
  Tensor out = make_op(s.shape(), {s}, nullptr);
  out.data()[0] = 1.0f / s.data()[0];
  if (out.requires_grad()) {
    float y = out.data()[0];
    out.impl()->backward_fn = [si, y](TensorImpl& o) mutable {
      si->ensure_grad();
      si->g[0] += -y * y * o.g[0];
    };
  }
  return out;
}

Tensor sum_t(const Tensor& a) {
  auto ai = a.impl();
  Tensor out = make_op(Shape{1, 1, 1, 1}, {a}, [ai](TensorImpl& o) mutable {
    ai->ensure_grad();
    for (size_t i = 0; i < ai->g.size(); ++i) ai->g[i] += o.g[0];
  });
  double s = 0.0;
  for (size_t i = 0; i < a.numel(); ++i) s += a.data()[i];
  out.data()[0] = float(s);
  return out;
}

Tensor mean_t(const Tensor& a) {
  float inv = 1.0f / float(a.numel());
  return mul_scalar(sum_t(a), inv);
}

Tensor dot(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "dot");
  return sum_t(mul(a, b));
}

Tensor norm_lp(const Tensor& a, int p) {
  auto ai = a.impl();
  if (p == 1) {
    Tensor out = make_op(Shape{1, 1, 1, 1}, {a}, [ai](TensorImpl& o) mutable {
      ai->ensure_grad();
      for (size_t i = 0; i < ai->v.size(); ++i) {
        float x = ai->v[i];
        ai->g[i] += o.g[0] * (x > 0 ? 1.0f : (x < 0 ? -1.0f : 0.0f));
      }
    });
    double s = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) s += std::fabs(a.data()[i]);
    out.data()[0] = float(s);
    return out;
  }
  if (p == 2) {
    double s = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) s += double(a.data()[i]) * a.data()[i];
    float norm = float(std::sqrt(s));
    Tensor out = make_op(Shape{1, 1, 1, 1}, {a}, [ai, norm](TensorImpl& o) mutable {
      if (norm <= 0) return;  // subgradient 0 at the origin
      ai->ensure_grad();
      for (size_t i = 0; i < ai->v.size(); ++i)
        ai->g[i] += o.g[0] * ai->v[i] / norm;
    });
    out.data()[0] = norm;
    return out;
  }
  if (p == 0) {  // infinity norm
    size_t arg = 0;
    float best = 0.0f;
    for (size_t i = 0; i < a.numel(); ++i) {
      float m = std::fabs(a.data()[i]);
      if (m > best) {
        best = m;
        arg = i;
      }
    }
    Tensor out = make_op(Shape{1, 1, 1, 1}, {a}, [ai, arg](TensorImpl& o) mutable {
      ai->ensure_grad();
      float x = ai->v[arg];
      ai->g[arg] += o.g[0] * (x > 0 ? 1.0f : (x < 0 ? -1.0f : 0.0f));
    });
    out.data()[0] = best;
    return out;
  }
  throw ParamError("norm_lp: unsupported order " + std::to_string(p));
}

Tensor hinge_l2(const Tensor& a, float eps) {
  if (eps <= 0) throw ParamError("hinge_l2: eps must be positive");
  auto ai = a.impl();
  double s = 0.0;
  for (size_t i = 0; i < a.numel(); ++i) s += double(a.data()[i]) * a.data()[i];
  float norm = float(std::sqrt(s));
  bool active = norm > eps;
  Tensor out = make_op(Shape{1, 1, 1, 1}, {a}, [ai, norm, active](TensorImpl& o) mutable {
    if (!active) return;  // below the floor the loss is the constant eps
    ai->ensure_grad();
    for (size_t i = 0; i < ai->v.size(); ++i) ai->g[i] += o.g[0] * ai->v[i] / norm;
  });
  out.data()[0] = active ? norm : eps;
  return out;
}

Tensor l2_normalize(const Tensor& a) {
  Tensor n = sqrt_t(add_scalar(sum_t(square(a)), 1e-12f));
  return mul_scalar_tensor(a, reciprocal_scalar(n));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  // x: (N, Cin), w: (Cout, Cin), b: (Cout)
  int N = x.shape().n, Cin = x.shape().c;
  int Cout = w.shape().n;
  if (w.shape().c != Cin) throw ParamError("linear: weight/input mismatch");
  auto xi = x.impl(), wi = w.impl(), bi = b.impl();
  Tensor out = make_op(Shape{N, Cout, 1, 1}, {x, w, b}, [xi, wi, bi, N, Cin,
                                                         Cout](TensorImpl& o) mutable {
    CMapRM do_(o.g.data(), N, Cout);
    if (xi->requires_grad) {
      xi->ensure_grad();
      MapRM dx(xi->g.data(), N, Cin);
      CMapRM wm(wi->v.data(), Cout, Cin);
      dx.noalias() += do_ * wm;
    }
    if (wi->requires_grad) {
      wi->ensure_grad();
      MapRM dw(wi->g.data(), Cout, Cin);
      CMapRM xm(xi->v.data(), N, Cin);
      dw.noalias() += do_.transpose() * xm;
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < Cout; ++c) bi->g[c] += o.g[size_t(n) * Cout + c];
    }
  });
  CMapRM xm(x.data(), N, Cin);
  CMapRM wm(w.data(), Cout, Cin);
  MapRM om(out.data(), N, Cout);
  om.noalias() = xm * wm.transpose();
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < Cout; ++c) om(n, c) += b.data()[c];
  return out;
}

namespace {

// im2col: (Cin*kh*kw) x (Ho*Wo) for one image, zero padding
void im2col(const float* x, int Cin, int H, int W, int kh, int kw, int stride, int pad,
            int Ho, int Wo, float* col) {
  int L = Ho * Wo;
  for (int ci = 0; ci < Cin; ++ci) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        float* row = col + (size_t(ci) * kh * kw + size_t(ki) * kw + kj) * L;
        for (int oh = 0; oh < Ho; ++oh) {
          int ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= H) {
            std::fill(row + size_t(oh) * Wo, row + size_t(oh + 1) * Wo, 0.0f);
            continue;
          }
          const float* xrow = x + (size_t(ci) * H + ih) * W;
          for (int ow = 0; ow < Wo; ++ow) {
            int iw = ow * stride - pad + kj;
            row[size_t(oh) * Wo + ow] = (iw >= 0 && iw < W) ? xrow[iw] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_acc(const float* col, int Cin, int H, int W, int kh, int kw, int stride,
                int pad, int Ho, int Wo, float* dx) {
  int L = Ho * Wo;
  for (int ci = 0; ci < Cin; ++ci) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const float* row = col + (size_t(ci) * kh * kw + size_t(ki) * kw + kj) * L;
        for (int oh = 0; oh < Ho; ++oh) {
          int ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= H) continue;
          float* dxrow = dx + (size_t(ci) * H + ih) * W;
          for (int ow = 0; ow < Wo; ++ow) {
            int iw = ow * stride - pad + kj;
            if (iw >= 0 && iw < W) dxrow[iw] += row[size_t(oh) * Wo + ow];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  int N = x.shape().n, Cin = x.shape().c, H = x.shape().h, W = x.shape().w;
  int Cout = w.shape().n, kh = w.shape().h, kw = w.shape().w;
  if (w.shape().c != Cin) throw ParamError("conv2d: channel mismatch");
  int Ho = (H + 2 * pad - kh) / stride + 1;
  int Wo = (W + 2 * pad - kw) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw ParamError("conv2d: output would be empty");
  int K = Cin * kh * kw, L = Ho * Wo;

  auto xi = x.impl(), wi = w.impl(), bi = b.impl();
  bool has_bias = b.defined();
  Tensor out = make_op(
      Shape{N, Cout, Ho, Wo}, has_bias ? std::vector<Tensor>{x, w, b} : std::vector<Tensor>{x, w},
      [xi, wi, bi, has_bias, N, Cin, H, W, Cout, kh, kw, stride, pad, Ho, Wo, K,
       L](TensorImpl& o) mutable {
        std::vector<float> col(size_t(K) * L);
        CMapRM wm(wi->v.data(), Cout, K);
        for (int n = 0; n < N; ++n) {
          const float* xn = xi->v.data() + size_t(n) * Cin * H * W;
          const float* don = o.g.data() + size_t(n) * Cout * L;
          CMapRM dom(don, Cout, L);
          if (wi->requires_grad) {
            im2col(xn, Cin, H, W, kh, kw, stride, pad, Ho, Wo, col.data());
            wi->ensure_grad();
            MapRM dwm(wi->g.data(), Cout, K);
            CMapRM colm(col.data(), K, L);
            dwm.noalias() += dom * colm.transpose();
          }
          if (has_bias && bi->requires_grad) {
            bi->ensure_grad();
            for (int co = 0; co < Cout; ++co) {
              double s = 0.0;
              for (int l = 0; l < L; ++l) s += don[size_t(co) * L + l];
              bi->g[co] += float(s);
            }
          }
          if (xi->requires_grad) {
            MapRM dcol(col.data(), K, L);
            dcol.noalias() = wm.transpose() * dom;
            xi->ensure_grad();
            col2im_acc(col.data(), Cin, H, W, kh, kw, stride, pad, Ho, Wo,
                       xi->g.data() + size_t(n) * Cin * H * W);
          }
        }
      });

  std::vector<float> col(size_t(K) * L);
  CMapRM wm(w.data(), Cout, K);
  for (int n = 0; n < N; ++n) {
    im2col(x.data() + size_t(n) * Cin * H * W, Cin, H, W, kh, kw, stride, pad, Ho, Wo,
           col.data());
    CMapRM colm(col.data(), K, L);
    MapRM om(out.data() + size_t(n) * Cout * L, Cout, L);
    om.noalias() = wm * colm;
    if (has_bias)
      for (int co = 0; co < Cout; ++co) om.row(co).array() += b.data()[co];
  }
  return out;
}

Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  int N = x.shape().n, C = x.shape().c, H = x.shape().h, W = x.shape().w;
  int m = H * W;
  if (gamma.numel() != size_t(C) || beta.numel() != size_t(C))
    throw ParamError("instance_norm: affine parameter size mismatch");

  std::vector<float> xhat(x.numel());
  std::vector<float> inv_s(size_t(N) * C);
  Tensor out_holder = Tensor::zeros(x.shape());
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const float* xp = x.data() + (size_t(n) * C + c) * m;
      double mu = 0.0;
      for (int i = 0; i < m; ++i) mu += xp[i];
      mu /= m;
      double var = 0.0;
      for (int i = 0; i < m; ++i) {
        double d = xp[i] - mu;
        var += d * d;
      }
      var /= m;
      float is = float(1.0 / std::sqrt(var + eps));
      inv_s[size_t(n) * C + c] = is;
      float* xh = xhat.data() + (size_t(n) * C + c) * m;
      for (int i = 0; i < m; ++i) xh[i] = (xp[i] - float(mu)) * is;
    }
  }

  auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl();
  Tensor out = make_op(
      x.shape(), {x, gamma, beta},
      [xi, gi, bi, xhat, inv_s, N, C, m](TensorImpl& o) mutable {
        for (int n = 0; n < N; ++n) {
          for (int c = 0; c < C; ++c) {
            const float* dy = o.g.data() + (size_t(n) * C + c) * m;
            const float* xh = xhat.data() + (size_t(n) * C + c) * m;
            double sum_dy = 0.0, sum_dy_xh = 0.0;
            for (int i = 0; i < m; ++i) {
              sum_dy += dy[i];
              sum_dy_xh += double(dy[i]) * xh[i];
            }
            if (gi->requires_grad) {
              gi->ensure_grad();
              gi->g[c] += float(sum_dy_xh);
            }
            if (bi->requires_grad) {
              bi->ensure_grad();
              bi->g[c] += float(sum_dy);
            }
            if (xi->requires_grad) {
              xi->ensure_grad();
              float* dx = xi->g.data() + (size_t(n) * C + c) * m;
              float k = gi->v[c] * inv_s[size_t(n) * C + c];
              float mean_dy = float(sum_dy / m);
              float mean_dy_xh = float(sum_dy_xh / m);
              for (int i = 0; i < m; ++i)
                dx[i] += k * (dy[i] - mean_dy - xh[i] * mean_dy_xh);
            }
          }
        }
      });
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const float* xh = xhat.data() + (size_t(n) * C + c) * m;
      float* op = out.data() + (size_t(n) * C + c) * m;
      float g = gamma.data()[c], bt = beta.data()[c];
      for (int i = 0; i < m; ++i) op[i] = g * xh[i] + bt;
    }
  return out;
}

Tensor upsample_nearest2(const Tensor& x) {
  int N = x.shape().n, C = x.shape().c, H = x.shape().h, W = x.shape().w;
  auto xi = x.impl();
  Tensor out = make_op(Shape{N, C, 2 * H, 2 * W}, {x}, [xi, N, C, H, W](TensorImpl& o) mutable {
    xi->ensure_grad();
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const float* dy = o.g.data() + (size_t(n) * C + c) * 4 * H * W;
        float* dx = xi->g.data() + (size_t(n) * C + c) * H * W;
        for (int i = 0; i < H; ++i)
          for (int j = 0; j < W; ++j) {
            const float* r0 = dy + size_t(2 * i) * 2 * W + 2 * j;
            const float* r1 = dy + size_t(2 * i + 1) * 2 * W + 2 * j;
            dx[size_t(i) * W + j] += r0[0] + r0[1] + r1[0] + r1[1];
          }
      }
  });
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const float* xp = x.data() + (size_t(n) * C + c) * H * W;
      float* op = out.data() + (size_t(n) * C + c) * 4 * H * W;
      for (int i = 0; i < 2 * H; ++i)
        for (int j = 0; j < 2 * W; ++j)
          op[size_t(i) * 2 * W + j] = xp[size_t(i / 2) * W + j / 2];
    }
  return out;
}

Tensor concat_c(const Tensor& a, const Tensor& b) {
  if (a.shape().n != b.shape().n || a.shape().h != b.shape().h ||
      a.shape().w != b.shape().w)
    throw ParamError("concat_c: spatial/batch mismatch");
  int N = a.shape().n, Ca = a.shape().c, Cb = b.shape().c;
  int H = a.shape().h, W = a.shape().w;
  int m = H * W;
  auto ai = a.impl(), bi = b.impl();
  Tensor out = make_op(Shape{N, Ca + Cb, H, W}, {a, b},
                       [ai, bi, N, Ca, Cb, m](TensorImpl& o) mutable {
                         for (int n = 0; n < N; ++n) {
                           const float* dy = o.g.data() + size_t(n) * (Ca + Cb) * m;
                           if (ai->requires_grad) {
                             ai->ensure_grad();
                             float* da = ai->g.data() + size_t(n) * Ca * m;
                             for (size_t i = 0; i < size_t(Ca) * m; ++i) da[i] += dy[i];
                           }
                           if (bi->requires_grad) {
                             bi->ensure_grad();
                             float* db = bi->g.data() + size_t(n) * Cb * m;
                             const float* dyb = dy + size_t(Ca) * m;
                             for (size_t i = 0; i < size_t(Cb) * m; ++i) db[i] += dyb[i];
                           }
                         }
                       });
  for (int n = 0; n < N; ++n) {
    float* op = out.data() + size_t(n) * (Ca + Cb) * m;
    std::memcpy(op, a.data() + size_t(n) * Ca * m, sizeof(float) * Ca * m);
    std::memcpy(op + size_t(Ca) * m, b.data() + size_t(n) * Cb * m, sizeof(float) * Cb * m);
  }
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  int N = x.shape().n, C = x.shape().c, m = x.shape().h * x.shape().w;
  auto xi = x.impl();
  Tensor out = make_op(Shape{N, C, 1, 1}, {x}, [xi, N, C, m](TensorImpl& o) mutable {
    xi->ensure_grad();
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        float g = o.g[size_t(n) * C + c] / float(m);
        float* dx = xi->g.data() + (size_t(n) * C + c) * m;
        for (int i = 0; i < m; ++i) dx[i] += g;
      }
  });
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const float* xp = x.data() + (size_t(n) * C + c) * m;
      double s = 0.0;
      for (int i = 0; i < m; ++i) s += xp[i];
      out.data()[size_t(n) * C + c] = float(s / m);
    }
  return out;
}

Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int>& targets) {
  int N = logits.shape().n, K = logits.shape().c;
  if (int(targets.size()) != N) throw ParamError("cross_entropy: target count mismatch");
  std::vector<float> probs(size_t(N) * K);
  double loss = 0.0;
  for (int n = 0; n < N; ++n) {
    const float* z = logits.data() + size_t(n) * K;
    float zmax = z[0];
    for (int k = 1; k < K; ++k) zmax = std::max(zmax, z[k]);
    double denom = 0.0;
    for (int k = 0; k < K; ++k) denom += std::exp(double(z[k]) - zmax);
    double log_denom = std::log(denom);
    for (int k = 0; k < K; ++k)
      probs[size_t(n) * K + k] = float(std::exp(double(z[k]) - zmax) / denom);
    loss += log_denom - (double(z[targets[size_t(n)]]) - zmax);
  }
  auto li = logits.impl();
  Tensor out = make_op(Shape{1, 1, 1, 1}, {logits},
                       [li, probs, targets, N, K](TensorImpl& o) mutable {
                         li->ensure_grad();
                         float scale = o.g[0] / float(N);
                         for (int n = 0; n < N; ++n)
                           for (int k = 0; k < K; ++k) {
                             float p = probs[size_t(n) * K + k];
                             float y = (k == targets[size_t(n)]) ? 1.0f : 0.0f;
                             li->g[size_t(n) * K + k] += scale * (p - y);
                           }
                       });
  out.data()[0] = float(loss / N);
  return out;
}

Tensor warp_bilinear(const Tensor& x, const std::vector<float>& grid, float fill) {
  int N = x.shape().n, C = x.shape().c, H = x.shape().h, W = x.shape().w;
  if (N != 1) throw ParamError("warp_bilinear: single-image tensors only");
  if (grid.size() != size_t(H) * W * 2) throw ParamError("warp_bilinear: grid size mismatch");
  auto xi = x.impl();
  Tensor out = make_op(x.shape(), {x}, [xi, grid, C, H, W](TensorImpl& o) mutable {
    xi->ensure_grad();
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        float sx = grid[(size_t(i) * W + j) * 2];
        float sy = grid[(size_t(i) * W + j) * 2 + 1];
        if (sx < 0.0f || sx > float(W - 1) || sy < 0.0f || sy > float(H - 1)) continue;
        int x0 = int(std::floor(sx)), y0 = int(std::floor(sy));
        int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
        float wx = sx - float(x0), wy = sy - float(y0);
        for (int c = 0; c < C; ++c) {
          float g = o.g[(size_t(c) * H + i) * W + j];
          float* dx = xi->g.data() + size_t(c) * H * W;
          dx[size_t(y0) * W + x0] += g * (1 - wx) * (1 - wy);
          dx[size_t(y0) * W + x1] += g * wx * (1 - wy);
          dx[size_t(y1) * W + x0] += g * (1 - wx) * wy;
          dx[size_t(y1) * W + x1] += g * wx * wy;
        }
      }
  });
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      float sx = grid[(size_t(i) * W + j) * 2];
      float sy = grid[(size_t(i) * W + j) * 2 + 1];
      bool inside = !(sx < 0.0f || sx > float(W - 1) || sy < 0.0f || sy > float(H - 1));
      if (!inside) {
        for (int c = 0; c < C; ++c) out.data()[(size_t(c) * H + i) * W + j] = fill;
        continue;
      }
      int x0 = int(std::floor(sx)), y0 = int(std::floor(sy));
      int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
      float wx = sx - float(x0), wy = sy - float(y0);
      for (int c = 0; c < C; ++c) {
        const float* xp = x.data() + size_t(c) * H * W;
        float v = xp[size_t(y0) * W + x0] * (1 - wx) * (1 - wy) +
                  xp[size_t(y0) * W + x1] * wx * (1 - wy) +
                  xp[size_t(y1) * W + x0] * (1 - wx) * wy +
                  xp[size_t(y1) * W + x1] * wx * wy;
        out.data()[(size_t(c) * H + i) * W + j] = v;
      }
    }
  return out;
}

Tensor cosine_margin_logits(const Tensor& x, const Tensor& w, float scale, float margin,
                            int target) {
  int d = x.shape().c;
  int K = w.shape().n;
  if (x.shape().n != 1 || w.shape().c != d)
    throw ParamError("cosine_margin_logits: shape mismatch");

  std::vector<float> wnorm(K);
  std::vector<float> cosv(K);
  for (int k = 0; k < K; ++k) {
    const float* wk = w.data() + size_t(k) * d;
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += double(wk[i]) * wk[i];
    wnorm[k] = float(std::sqrt(s) + 1e-12);
    double c = 0.0;
    for (int i = 0; i < d; ++i) c += double(x.data()[i]) * wk[i];
    cosv[k] = float(c) / wnorm[k];
  }
  auto xi = x.impl(), wi = w.impl();
  Tensor out = make_op(
      Shape{1, K, 1, 1}, {x, w},
      [xi, wi, wnorm, cosv, scale, d, K](TensorImpl& o) mutable {
        for (int k = 0; k < K; ++k) {
          float dz = o.g[k] * scale;
          if (dz == 0.0f) continue;
          const float* wk = wi->v.data() + size_t(k) * d;
          float inv_n = 1.0f / wnorm[k];
          if (xi->requires_grad) {
            xi->ensure_grad();
            for (int i = 0; i < d; ++i) xi->g[i] += dz * wk[i] * inv_n;
          }
          if (wi->requires_grad) {
            wi->ensure_grad();
            float* dwk = wi->g.data() + size_t(k) * d;
            for (int i = 0; i < d; ++i)
              dwk[i] += dz * (xi->v[i] - cosv[k] * wk[i] * inv_n) * inv_n;
          }
        }
      });
  for (int k = 0; k < K; ++k)
    out.data()[k] = scale * (cosv[k] - (k == target ? margin : 0.0f));
  return out;
}

}  // namespace advgen::nn
