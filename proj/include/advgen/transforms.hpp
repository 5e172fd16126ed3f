#pragma once

#include <functional>
#include <vector>

#include "advgen/image.hpp"
#include "advgen/nn/tensor.hpp"

namespace advgen {

enum class TransformKind {
  rotation,      // params: {angle_deg}
  scale,         // params: {factor}
  translation,   // params: {tx_frac, ty_frac} of W/H
  perspective,   // params: {8 corner offsets, fractions of W/H}
  brightness,    // params: {delta} in symmetric-range units
  contrast,      // params: {factor}, centered at 0
  fold_shade     // params: {amplitude, crease_pos_frac, shear_frac}
};

// One sampled primitive. Offsets are stored as fractions of the image
// dimension so a sampled spec is resolution-independent.
struct TransformSpec {
  TransformKind kind;
  std::vector<double> params;

  static TransformSpec make(TransformKind kind, std::vector<double> params);
};

// A sampled composite; applied in the order listed (which sample_transform
// fixes to: geometric kinds first, then photometric).
using TransformList = std::vector<TransformSpec>;

struct KindRange {
  bool enabled = false;
  double lo = 0.0, hi = 0.0;
};

struct TransformDistribution {
  KindRange rotation, scale, translation, perspective, brightness, contrast, fold_shade;
  double fill_value = 0.0;  // symmetric-range out-of-frame fill (mid-gray)

  bool all_disabled() const;
  static TransformDistribution disabled();
  static TransformDistribution defaults();  // attack-time EOT ranges
};

// Per-kind params i.i.d. uniform in the configured ranges. All kinds disabled
// gives the identity (empty) composite.
TransformList sample_transform(const TransformDistribution& dist, Rng& rng);

// Differentiable w.r.t. x (single bilinear resampling for the whole
// geometric chain, then photometric ops). x is (1,3,H,W), symmetric range.
// The identity (empty) composite returns x itself, bit-exact.
nn::Tensor apply_transform(const TransformList& t, const nn::Tensor& x,
                           double fill = 0.0);
ImageTensor apply_transform(const TransformList& t, const ImageTensor& x);

// t(x) - x, the image-space residual the geometric hinge penalizes.
nn::Tensor geometric_residual(const TransformList& t, const nn::Tensor& x,
                              double fill = 0.0);

using LogitsFn = std::function<nn::Tensor(const nn::Tensor&)>;

inline constexpr int kInfNorm = 0;  // norm order encoding for p = infinity

// (1/n) sum_i CE(pad(t_i(x) + rho), target) + lambda * ||rho||_p.
// Gradient flows to rho and to x (hence to any generator upstream of either).
nn::Tensor eot_loss(const LogitsFn& pad, const nn::Tensor& x, const nn::Tensor& rho,
                    int target_class, const TransformDistribution& dist, int n_samples,
                    Rng& rng, double lambda = 0.0, int p = 2);

}  // namespace advgen
